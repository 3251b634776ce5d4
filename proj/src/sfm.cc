#include "dynpose/sfm.h"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "dynpose/error.h"

namespace dynpose {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Matrix3d ExpSO3(const Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-15) return Matrix3d::Identity() + Skew(w);
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Vector3d LogSO3(const Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

double AngleBetween(const Vector3d& a, const Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t PairSeed(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  return SplitMix64(seed ^ SplitMix64(static_cast<std::uint64_t>(i) * 1000003ULL +
                                      static_cast<std::uint64_t>(j)));
}

// Rotation minimizing sum |b - R a|^2 over paired unit vectors.
Matrix3d KabschRotation(std::span<const Vector3d> a, std::span<const Vector3d> b) {
  Matrix3d h = Matrix3d::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) h += b[i] * a[i].transpose();
  const Eigen::JacobiSVD<Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3d d = Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2) = -1.0;
  return svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
}

struct DecomposedEssential {
  Matrix3d rotation;
  Vector3d translation;
  std::size_t in_front = 0;
};

// Depth of a two-view point along ray x1, and its depth in camera 2.
std::pair<double, double> TwoViewDepths(const Matrix3d& r, const Vector3d& t,
                                        const Vector3d& x1, const Vector3d& x2) {
  const Vector3d rx1 = r * x1;
  const Vector3d a = x2.cross(rx1);
  const double denom = a.squaredNorm();
  if (denom < 1e-24) return {0.0, 0.0};
  const double d1 = -x2.cross(t).dot(a) / denom;
  const Vector3d p2 = d1 * rx1 + t;
  return {d1, p2.z()};
}

DecomposedEssential DecomposeEssential(const Matrix3d& e,
                                       std::span<const Vector3d> x1,
                                       std::span<const Vector3d> x2) {
  Eigen::JacobiSVD<Matrix3d> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d u = svd.matrixU();
  Matrix3d v = svd.matrixV();
  if (u.determinant() < 0.0) u.col(2) = -u.col(2);
  if (v.determinant() < 0.0) v.col(2) = -v.col(2);
  Matrix3d w;
  w << 0, -1, 0,
       1, 0, 0,
       0, 0, 1;
  const Matrix3d rotations[2] = {u * w * v.transpose(),
                                 u * w.transpose() * v.transpose()};
  const Vector3d t = u.col(2);
  DecomposedEssential best{Matrix3d::Identity(), t, 0};
  bool first = true;
  for (const auto& r : rotations) {
    for (double sign : {1.0, -1.0}) {
      std::size_t count = 0;
      for (std::size_t k = 0; k < x1.size(); ++k) {
        const auto [d1, d2] = TwoViewDepths(r, sign * t, x1[k], x2[k]);
        if (d1 > 0.0 && d2 > 0.0) ++count;
      }
      if (first || count > best.in_front) {
        best = {r, sign * t, count};
        first = false;
      }
    }
  }
  return best;
}

double HuberWeight(double residual_norm, double delta) {
  return residual_norm <= delta ? 1.0 : delta / residual_norm;
}

double HuberCost(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - delta * delta;
}

double SampsonResidual(const Matrix3d& e, const Vector3d& x1, const Vector3d& x2) {
  const Vector3d a = e * x1;
  const Vector3d b = e.transpose() * x2;
  const double denom = a.x() * a.x() + a.y() * a.y() + b.x() * b.x() + b.y() * b.y();
  if (denom < 1e-30) return 0.0;
  return x2.dot(a) / std::sqrt(denom);
}

// Levenberg-Marquardt on the robust Sampson cost over (R, unit t).
void RefineRelativePose(Matrix3d& r, Vector3d& t, std::span<const Vector3d> x1,
                        std::span<const Vector3d> x2, double delta) {
  const std::size_t m = x1.size();
  auto apply = [](const Matrix3d& r0, const Vector3d& t0,
                  const Eigen::Matrix<double, 5, 1>& p, Matrix3d& r1, Vector3d& t1) {
    Vector3d u1 = t0.unitOrthogonal();
    Vector3d u2 = t0.cross(u1);
    r1 = ExpSO3(p.head<3>()) * r0;
    t1 = (ExpSO3(p(3) * u1 + p(4) * u2) * t0).normalized();
  };
  auto residuals = [&](const Matrix3d& rr, const Vector3d& tt, Eigen::VectorXd& out) {
    const Matrix3d e = Skew(tt) * rr;
    out.resize(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) out(k) = SampsonResidual(e, x1[k], x2[k]);
  };
  auto cost = [&](const Eigen::VectorXd& res) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < res.size(); ++k) total += HuberCost(res(k) * res(k), delta);
    return total;
  };
  Eigen::VectorXd res;
  residuals(r, t, res);
  double current = cost(res);
  double lambda = 1e-3;
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), 5);
  Eigen::VectorXd plus;
  Eigen::VectorXd minus;
  for (int iter = 0; iter < 20; ++iter) {
    const double h = 1e-7;
    for (int c = 0; c < 5; ++c) {
      Eigen::Matrix<double, 5, 1> p = Eigen::Matrix<double, 5, 1>::Zero();
      Matrix3d r1;
      Vector3d t1;
      p(c) = h;
      apply(r, t, p, r1, t1);
      residuals(r1, t1, plus);
      p(c) = -h;
      apply(r, t, p, r1, t1);
      residuals(r1, t1, minus);
      jac.col(c) = (plus - minus) / (2.0 * h);
    }
    Eigen::VectorXd w(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) w(k) = HuberWeight(std::abs(res(k)), delta);
    const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * w.asDiagonal() * jac;
    const Eigen::Matrix<double, 5, 1> g = jac.transpose() * w.asDiagonal() * res;
    bool accepted = false;
    for (int retry = 0; retry < 8 && !accepted; ++retry) {
      Eigen::Matrix<double, 5, 5> damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 5, 1> step = damped.ldlt().solve(-g);
      if (!step.allFinite()) break;
      Matrix3d r1;
      Vector3d t1;
      apply(r, t, step, r1, t1);
      Eigen::VectorXd trial;
      residuals(r1, t1, trial);
      const double next = cost(trial);
      if (next < current) {
        const bool converged = current - next < 1e-10 * current;
        r = r1;
        t = t1;
        res = std::move(trial);
        current = next;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (converged) return;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) return;
  }
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::size_t Find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void Unite(std::size_t a, std::size_t b) {
    a = Find(a);
    b = Find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<std::int64_t> LargestComponentOf(
    const std::vector<std::int64_t>& nodes,
    const std::vector<const ViewGraphEdge*>& edges) {
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;
  UnionFind uf(nodes.size());
  for (const auto* e : edges) {
    auto a = index.find(e->i);
    auto b = index.find(e->j);
    if (a == index.end() || b == index.end()) continue;
    uf.Unite(a->second, b->second);
  }
  std::map<std::size_t, std::vector<std::int64_t>> groups;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    groups[uf.Find(i)].push_back(nodes[i]);
  }
  std::vector<std::int64_t> best;
  for (auto& [root, members] : groups) {
    // Ties go to the component holding the smaller frame index.
    if (members.size() > best.size()) best = members;
  }
  std::sort(best.begin(), best.end());
  return best;
}

// World-frame unit direction from camera i to camera j.
Vector3d WorldDirection(const ViewGraphEdge& e, const Matrix3d& r_j) {
  return -(r_j.transpose() * e.direction);
}

struct TrackObservations {
  // frame -> tracklet -> pixel
  std::map<std::int64_t, std::map<std::int64_t, Vector2d>> by_frame;
};

TrackObservations CollectObservations(const ViewGraph& graph) {
  TrackObservations obs;
  for (const auto& e : graph.edges) {
    for (const auto& c : e.inliers) {
      obs.by_frame[e.i].emplace(c.tracklet_id, c.a);
      obs.by_frame[e.j].emplace(c.tracklet_id, c.b);
    }
  }
  return obs;
}

// Places cameras along a BFS tree, recovering each edge's length from tracks
// already triangulated by placed cameras.
std::map<std::int64_t, Vector3d> ChainScales(
    const ViewGraph& graph, const std::vector<const ViewGraphEdge*>& edges,
    const std::vector<std::int64_t>& component,
    const std::map<std::int64_t, Matrix3d>& rotations) {
  const TrackObservations obs = CollectObservations(graph);
  std::map<std::int64_t, std::vector<const ViewGraphEdge*>> adjacency;
  for (const auto* e : edges) {
    adjacency[e->i].push_back(e);
    adjacency[e->j].push_back(e);
  }
  const Matrix3d k_inv = graph.intrinsics.KInverse();
  std::map<std::int64_t, Vector3d> centers;
  std::map<std::int64_t, Pose> poses;
  const std::int64_t root = component.front();
  centers[root] = Vector3d::Zero();
  poses[root] = Pose::FromCenter(rotations.at(root).transpose(), Vector3d::Zero());
  std::deque<std::int64_t> queue = {root};
  std::set<std::int64_t> visited = {root};

  while (!queue.empty()) {
    const std::int64_t p = queue.front();
    queue.pop_front();
    for (const auto* e : adjacency[p]) {
      const std::int64_t q = e->i == p ? e->j : e->i;
      if (visited.count(q) != 0) continue;
      visited.insert(q);
      const Vector3d v_ij = WorldDirection(*e, rotations.at(e->j));
      const Vector3d d = e->i == p ? v_ij : Vector3d(-v_ij);

      std::vector<double> scales;
      auto q_obs = obs.by_frame.find(q);
      if (q_obs != obs.by_frame.end()) {
        for (const auto& [track, pixel] : q_obs->second) {
          std::vector<Observation> placed;
          for (const auto& [frame, pose] : poses) {
            auto f_obs = obs.by_frame.find(frame);
            if (f_obs == obs.by_frame.end()) continue;
            auto hit = f_obs->second.find(track);
            if (hit != f_obs->second.end()) placed.push_back({&pose, hit->second});
          }
          if (placed.size() < 2) continue;
          const Triangulation x = TriangulateMultiView(placed, graph.intrinsics);
          if (!x.in_front) continue;
          const Vector3d ray =
              rotations.at(q).transpose() * (k_inv * pixel.homogeneous());
          const Vector3d dr = d.cross(ray);
          if (dr.squaredNorm() < 1e-18) continue;
          const double s = (x.point - centers[p]).cross(ray).dot(dr) / dr.squaredNorm();
          if (std::isfinite(s) && s > 0.0) scales.push_back(s);
        }
      }
      const double s = scales.empty() ? 1.0 : Median(scales);
      centers[q] = centers[p] + s * d;
      poses[q] = Pose::FromCenter(rotations.at(q).transpose(), centers[q]);
      queue.push_back(q);
    }
  }
  return centers;
}

}  // namespace

ViewGraph BuildViewGraph(const CorrespondenceSet& correspondences,
                         const CameraIntrinsics& k, const SfmConfig& config,
                         std::uint64_t seed) {
  ViewGraph graph;
  graph.intrinsics = k;
  const Matrix3d k_inv = k.KInverse();
  const double focal = 0.5 * (k.fx + k.fy);
  std::set<std::int64_t> nodes;
  RansacOptions ransac;
  ransac.max_iterations = config.ransac_max_iterations;
  ransac.confidence = config.ransac_confidence;

  std::vector<PointMatch> normalized;
  std::vector<Vector3d> x1;
  std::vector<Vector3d> x2;
  for (const auto& [key, matches] : correspondences.pairs) {
    nodes.insert(key.first);
    nodes.insert(key.second);
    if (matches.size() < config.min_matches) continue;
    normalized.clear();
    for (const auto& c : matches) {
      normalized.push_back({(k_inv * c.a.homogeneous()).hnormalized(),
                            (k_inv * c.b.homogeneous()).hnormalized()});
    }
    FundamentalEstimate fit;
    try {
      fit = EstimateFundamentalRansac(normalized,
                                      config.ransac_threshold_px / focal,
                                      PairSeed(seed, key.first, key.second),
                                      ransac);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::kNoConsensus ||
          err.code() == ErrorCode::kTooFewMatches) {
        continue;
      }
      throw;
    }
    if (fit.num_inliers < config.min_matches) continue;

    ViewGraphEdge edge;
    edge.i = key.first;
    edge.j = key.second;
    edge.match_count = matches.size();
    x1.clear();
    x2.clear();
    std::vector<double> e_residuals;
    for (std::size_t m = 0; m < matches.size(); ++m) {
      if (!fit.inliers[m]) continue;
      edge.inliers.push_back(matches[m]);
      x1.push_back(normalized[m].a.homogeneous());
      x2.push_back(normalized[m].b.homogeneous());
      e_residuals.push_back(
          std::sqrt(TrySampsonError(fit.f.matrix, normalized[m].a,
                                    normalized[m].b)
                        .value_or(0.0)) *
          focal);
    }

    // Closest essential matrix: equal non-zero singular values.
    Eigen::JacobiSVD<Matrix3d> svd(fit.f.matrix,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix3d essential = svd.matrixU() * Vector3d(1, 1, 0).asDiagonal() *
                               svd.matrixV().transpose();
    const DecomposedEssential pose = DecomposeEssential(essential, x1, x2);

    std::vector<Vector3d> b1(x1.size());
    std::vector<Vector3d> b2(x2.size());
    for (std::size_t m = 0; m < x1.size(); ++m) {
      b1[m] = x1[m].normalized();
      b2[m] = x2[m].normalized();
    }
    const Matrix3d pure = KabschRotation(b1, b2);
    std::vector<double> rot_residuals(b1.size());
    for (std::size_t m = 0; m < b1.size(); ++m) {
      rot_residuals[m] = AngleBetween(b2[m], pure * b1[m]) * focal;
    }
    const double med_rot = Median(rot_residuals);
    const double med_e = Median(e_residuals);
    edge.degenerate_translation =
        med_rot <= config.pure_rotation_ratio * med_e + 1e-9;
    if (edge.degenerate_translation) {
      edge.rotation = RotationAngleDeg(pose.rotation, pure) < 1.0 ? pose.rotation : pure;
      edge.direction = pose.translation.normalized();
    } else {
      Matrix3d r = pose.rotation;
      Vector3d t = pose.translation.normalized();
      RefineRelativePose(r, t, x1, x2, config.ransac_threshold_px / focal);
      edge.rotation = r;
      edge.direction = t;
    }
    std::vector<double> parallax(b1.size());
    for (std::size_t m = 0; m < b1.size(); ++m) {
      parallax[m] = AngleBetween(b2[m], edge.rotation * b1[m]) / kDegToRad;
    }
    edge.parallax_deg = Median(parallax);
    graph.edges.push_back(std::move(edge));
  }
  graph.nodes.assign(nodes.begin(), nodes.end());
  if (graph.edges.empty()) {
    throw Error(ErrorCode::kEmptyGraph, "no frame pair produced a view-graph edge");
  }
  return graph;
}

std::vector<std::int64_t> LargestComponent(const ViewGraph& graph,
                                           bool skip_degenerate_translation) {
  std::vector<const ViewGraphEdge*> edges;
  for (const auto& e : graph.edges) {
    if (skip_degenerate_translation && e.degenerate_translation) continue;
    edges.push_back(&e);
  }
  return LargestComponentOf(graph.nodes, edges);
}

std::map<std::int64_t, Matrix3d> RotationAveraging(const ViewGraph& graph,
                                                   int max_iterations) {
  if (graph.edges.empty()) {
    throw Error(ErrorCode::kEmptyGraph, "view graph has no edges");
  }
  const std::vector<std::int64_t> nodes = LargestComponent(graph, false);
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;

  std::vector<const ViewGraphEdge*> edges;
  for (const auto& e : graph.edges) {
    if (index.count(e.i) != 0 && index.count(e.j) != 0) edges.push_back(&e);
  }

  // Maximum spanning tree on inlier counts.
  std::vector<const ViewGraphEdge*> by_support = edges;
  std::stable_sort(by_support.begin(), by_support.end(),
                   [](const ViewGraphEdge* a, const ViewGraphEdge* b) {
                     return a->inliers.size() > b->inliers.size();
                   });
  UnionFind uf(nodes.size());
  std::map<std::int64_t, std::vector<const ViewGraphEdge*>> tree;
  for (const auto* e : by_support) {
    const std::size_t a = index[e->i];
    const std::size_t b = index[e->j];
    if (uf.Find(a) == uf.Find(b)) continue;
    uf.Unite(a, b);
    tree[e->i].push_back(e);
    tree[e->j].push_back(e);
  }
  std::vector<Matrix3d> rot(nodes.size(), Matrix3d::Identity());
  std::vector<bool> done(nodes.size(), false);
  std::deque<std::int64_t> queue = {nodes.front()};
  done[0] = true;
  while (!queue.empty()) {
    const std::int64_t p = queue.front();
    queue.pop_front();
    for (const auto* e : tree[p]) {
      const std::int64_t q = e->i == p ? e->j : e->i;
      const std::size_t qi = index[q];
      if (done[qi]) continue;
      rot[qi] = e->i == p ? Matrix3d(e->rotation * rot[index[p]])
                          : Matrix3d(e->rotation.transpose() * rot[index[p]]);
      done[qi] = true;
      queue.push_back(q);
    }
  }

  // Iterative least squares on so(3) increments; node 0 is the gauge.
  const std::size_t n = nodes.size();
  const double delta = 2.0 * kDegToRad;
  for (int iter = 0; iter < max_iterations && n > 1; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * (n - 1), 3 * (n - 1));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(3 * (n - 1));
    for (const auto* e : edges) {
      const std::size_t i = index[e->i];
      const std::size_t j = index[e->j];
      const Matrix3d rel = rot[j] * rot[i].transpose();
      const Vector3d err = LogSO3(rel * e->rotation.transpose());
      const double w = HuberWeight(err.norm(), delta);
      // d err / d w_i = -rel, d err / d w_j = I
      const Matrix3d ji = -rel;
      if (i > 0) {
        const std::size_t oi = 3 * (i - 1);
        h.block<3, 3>(oi, oi) += w * ji.transpose() * ji;
        b.segment<3>(oi) -= w * ji.transpose() * err;
      }
      if (j > 0) {
        const std::size_t oj = 3 * (j - 1);
        h.block<3, 3>(oj, oj) += w * Matrix3d::Identity();
        b.segment<3>(oj) -= w * err;
      }
      if (i > 0 && j > 0) {
        const std::size_t oi = 3 * (i - 1);
        const std::size_t oj = 3 * (j - 1);
        h.block<3, 3>(oi, oj) += w * ji.transpose();
        h.block<3, 3>(oj, oi) += w * ji;
      }
    }
    const Eigen::VectorXd step = h.ldlt().solve(b);
    if (!step.allFinite()) break;
    for (std::size_t k = 1; k < n; ++k) {
      rot[k] = ExpSO3(step.segment<3>(3 * (k - 1))) * rot[k];
    }
    if (step.lpNorm<Eigen::Infinity>() < 1e-14) break;
  }

  std::map<std::int64_t, Matrix3d> out;
  for (std::size_t k = 0; k < n; ++k) out[nodes[k]] = rot[k];
  return out;
}

namespace {

// Directions from pairs with at least this much parallax get full weight.
constexpr double kFullWeightParallaxDeg = 5.0;
// Edges disagreeing with the averaged rotations by more than this carry an
// unreliable direction as well.
constexpr double kMaxRotationResidualDeg = 5.0;
// Directions further than this from the linear solution are dropped.
constexpr double kMaxDirectionResidualDeg = 15.0;

double DirectionWeight(const ViewGraphEdge& e) {
  if (!(e.parallax_deg > 0.0)) return 1.0;
  const double ratio = e.parallax_deg / kFullWeightParallaxDeg;
  return std::clamp(ratio * ratio, 1e-4, 1.0);
}

struct LinearPositions {
  std::vector<Vector3d> centers;
  bool rank_deficient = false;
};

// Minimizes sum w |(I - v v^T)(c_j - c_i)|^2 with c_0 = 0 and |c| = 1.
LinearPositions SolveLinearPositions(std::size_t n,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& ends,
                                     const std::vector<Vector3d>& dirs,
                                     const std::vector<double>& weights) {
  const std::size_t dim = 3 * (n - 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t k = 0; k < ends.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    const Matrix3d m = weights[k] * (Matrix3d::Identity() - dirs[k] * dirs[k].transpose());
    const auto [i, j] = ends[k];
    if (i > 0) h.block<3, 3>(3 * (i - 1), 3 * (i - 1)) += m;
    if (j > 0) h.block<3, 3>(3 * (j - 1), 3 * (j - 1)) += m;
    if (i > 0 && j > 0) {
      h.block<3, 3>(3 * (i - 1), 3 * (j - 1)) -= m;
      h.block<3, 3>(3 * (j - 1), 3 * (i - 1)) -= m;
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double largest = values(static_cast<Eigen::Index>(dim) - 1);
  LinearPositions out;
  out.rank_deficient = dim > 1 && values(1) <= 1e-9 * largest;
  out.centers.assign(n, Vector3d::Zero());
  const Eigen::VectorXd x = eig.eigenvectors().col(0);
  for (std::size_t k = 1; k < n; ++k) out.centers[k] = x.segment<3>(3 * (k - 1));
  double agreement = 0.0;
  for (std::size_t k = 0; k < ends.size(); ++k) {
    agreement += weights[k] * dirs[k].dot(out.centers[ends[k].second] - out.centers[ends[k].first]);
  }
  if (agreement < 0.0) {
    for (auto& c : out.centers) c = -c;
  }
  return out;
}

}  // namespace

PositionEstimate PositionAveraging(
    const ViewGraph& graph, const std::map<std::int64_t, Matrix3d>& rotations) {
  std::vector<std::int64_t> candidates;
  for (const auto& [frame, r] : rotations) candidates.push_back(frame);
  std::vector<const ViewGraphEdge*> usable;
  for (const auto& e : graph.edges) {
    if (e.degenerate_translation) continue;
    auto ri = rotations.find(e.i);
    auto rj = rotations.find(e.j);
    if (ri == rotations.end() || rj == rotations.end()) continue;
    const Matrix3d rel = rj->second * ri->second.transpose();
    if (RotationAngleDeg(rel, e.rotation) > kMaxRotationResidualDeg) continue;
    usable.push_back(&e);
  }
  PositionEstimate out;
  if (candidates.size() == 1) {
    out.centers[candidates.front()] = Vector3d::Zero();
    return out;
  }
  const std::vector<std::int64_t> nodes = LargestComponentOf(candidates, usable);
  if (nodes.size() < 2) {
    throw Error(ErrorCode::kInsufficientParallax,
                "no translating pair connects the cameras");
  }
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;
  std::vector<const ViewGraphEdge*> edges;
  std::vector<std::pair<std::size_t, std::size_t>> ends;
  std::vector<Vector3d> dirs;
  std::vector<double> weights;
  for (const auto* e : usable) {
    if (index.count(e->i) == 0 || index.count(e->j) == 0) continue;
    edges.push_back(e);
    ends.emplace_back(index[e->i], index[e->j]);
    dirs.push_back(WorldDirection(*e, rotations.at(e->j)));
    weights.push_back(DirectionWeight(*e));
  }
  const std::size_t n = nodes.size();
  const std::size_t dim = 3 * (n - 1);

  LinearPositions linear = SolveLinearPositions(n, ends, dirs, weights);
  std::vector<Vector3d> c;
  if (linear.rank_deficient) {
    out.collinear = true;
    c.assign(n, Vector3d::Zero());
    const auto chained = ChainScales(graph, edges, nodes, rotations);
    for (const auto& [frame, center] : chained) c[index[frame]] = center;
  } else {
    // Drop directions the linear solution disagrees with, then solve again.
    std::vector<double> trimmed = weights;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const Vector3d u = linear.centers[ends[k].second] - linear.centers[ends[k].first];
      if (u.norm() < 1e-15 || AngleBetween(u, dirs[k]) > kMaxDirectionResidualDeg * kDegToRad) {
        trimmed[k] = 0.0;
      }
    }
    const LinearPositions second = SolveLinearPositions(n, ends, dirs, trimmed);
    if (!second.rank_deficient) {
      linear = second;
      weights = std::move(trimmed);
    }
    c = linear.centers;

    // Robust refinement of the chordal direction residual.
    const double delta = 0.1;
    auto cost = [&](const std::vector<Vector3d>& cs) {
      double total = 0.0;
      for (std::size_t k = 0; k < edges.size(); ++k) {
        if (weights[k] <= 0.0) continue;
        const Vector3d u = cs[ends[k].second] - cs[ends[k].first];
        const double len = u.norm();
        if (len < 1e-15) return std::numeric_limits<double>::infinity();
        total += weights[k] * HuberCost((u / len - dirs[k]).squaredNorm(), delta);
      }
      return total;
    };
    double current = cost(c);
    double lambda = 1e-4;
    for (int iter = 0; iter < 50 && dim > 0; ++iter) {
      Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
      for (std::size_t k = 0; k < edges.size(); ++k) {
        if (weights[k] <= 0.0) continue;
        const auto [i, j] = ends[k];
        const Vector3d u = c[j] - c[i];
        const double len = u.norm();
        const Vector3d uh = u / len;
        const Vector3d r = uh - dirs[k];
        const double w = weights[k] * HuberWeight(r.norm(), delta);
        const Matrix3d ju = (Matrix3d::Identity() - uh * uh.transpose()) / len;
        const Matrix3d jj = w * ju.transpose() * ju;
        const Vector3d gj = w * ju.transpose() * r;
        if (j > 0) {
          jtj.block<3, 3>(3 * (j - 1), 3 * (j - 1)) += jj;
          g.segment<3>(3 * (j - 1)) += gj;
        }
        if (i > 0) {
          jtj.block<3, 3>(3 * (i - 1), 3 * (i - 1)) += jj;
          g.segment<3>(3 * (i - 1)) -= gj;
        }
        if (i > 0 && j > 0) {
          jtj.block<3, 3>(3 * (i - 1), 3 * (j - 1)) -= jj;
          jtj.block<3, 3>(3 * (j - 1), 3 * (i - 1)) -= jj;
        }
      }
      if (g.lpNorm<Eigen::Infinity>() < 1e-14) break;
      bool accepted = false;
      for (int retry = 0; retry < 10 && !accepted; ++retry) {
        Eigen::MatrixXd damped = jtj;
        damped.diagonal() += lambda * (jtj.diagonal().array().max(1e-9)).matrix();
        const Eigen::VectorXd step = damped.ldlt().solve(-g);
        std::vector<Vector3d> trial = c;
        for (std::size_t k = 1; k < n; ++k) trial[k] += step.segment<3>(3 * (k - 1));
        const double next = cost(trial);
        if (next < current) {
          const bool tiny = current - next < 1e-15 * (1.0 + current);
          c = std::move(trial);
          current = next;
          lambda = std::max(lambda * 0.1, 1e-12);
          accepted = true;
          if (tiny) iter = 50;
        } else {
          lambda *= 10.0;
        }
      }
      if (!accepted) break;
    }
  }

  double mean_baseline = 0.0;
  for (const auto& [i, j] : ends) mean_baseline += (c[j] - c[i]).norm();
  mean_baseline /= static_cast<double>(ends.size());
  if (!(mean_baseline > 0.0) || !std::isfinite(mean_baseline)) {
    throw Error(ErrorCode::kInsufficientParallax, "camera centers collapsed");
  }
  for (std::size_t k = 0; k < n; ++k) out.centers[nodes[k]] = c[k] / mean_baseline;
  return out;
}

Vector2d ReprojectionResidual(const CameraIntrinsics& k, const Pose& pose,
                              const Vector3d& point, const Vector2d& observed,
                              ReprojectionJacobians* jacobians) {
  const Matrix3d r = pose.R();
  const Vector3d rx = r * point;
  const Vector3d pc = rx + pose.translation();
  const double inv_z = 1.0 / pc.z();
  const double xn = pc.x() * inv_z;
  const double yn = pc.y() * inv_z;
  const Vector2d residual(k.fx * xn + k.cx - observed.x(),
                          k.fy * yn + k.cy - observed.y());
  if (jacobians != nullptr) {
    Eigen::Matrix<double, 2, 3> d_proj;
    d_proj << k.fx * inv_z, 0, -k.fx * xn * inv_z,
              0, k.fy * inv_z, -k.fy * yn * inv_z;
    jacobians->pose.leftCols<3>() = -d_proj * Skew(rx);
    jacobians->pose.rightCols<3>() = d_proj;
    jacobians->point = d_proj * r;
    jacobians->focal << k.fx * xn, k.fy * yn;
  }
  return residual;
}

double MeanReprojectionError(const SceneModel& model) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& lm : model.landmarks) {
    for (const auto& [frame, pixel] : lm.observations) {
      const TrajectoryFrame* f = model.trajectory.Find(frame);
      if (f == nullptr || !f->pose) continue;
      total += ReprojectionResidual(model.intrinsics, *f->pose, lm.point, pixel).norm();
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

namespace {

struct BaObservation {
  std::size_t landmark;
  std::size_t camera;
  Vector2d pixel;
};

struct BaState {
  std::vector<Pose> poses;
  std::vector<Vector3d> points;
  double focal_scale = 1.0;
};

CameraIntrinsics ScaledFocal(const CameraIntrinsics& k, double s) {
  CameraIntrinsics out = k;
  out.fx *= s;
  out.fy *= s;
  return out;
}

double RobustCost(const BaState& state, const std::vector<BaObservation>& obs,
                  const CameraIntrinsics& k, double delta) {
  const CameraIntrinsics kk = ScaledFocal(k, state.focal_scale);
  double total = 0.0;
  for (const auto& o : obs) {
    const Vector3d pc = state.poses[o.camera].Transform(state.points[o.landmark]);
    if (!(pc.z() > 0.0)) return std::numeric_limits<double>::infinity();
    const Vector2d r =
        ReprojectionResidual(kk, state.poses[o.camera], state.points[o.landmark], o.pixel);
    total += HuberCost(r.squaredNorm(), delta);
  }
  return 0.5 * total;
}

}  // namespace

BundleAdjustResult BundleAdjust(const SceneModel& model,
                                const BundleAdjustOptions& options) {
  BundleAdjustResult result;
  result.model = model;

  // Parameter blocks.
  std::vector<std::int64_t> frames;
  std::map<std::int64_t, std::size_t> cam_index;
  BaState state;
  for (const auto& f : model.trajectory.frames()) {
    if (!f.pose) continue;
    cam_index[f.index] = frames.size();
    frames.push_back(f.index);
    state.poses.push_back(*f.pose);
  }
  std::vector<BaObservation> obs;
  std::vector<std::vector<std::size_t>> landmark_obs(model.landmarks.size());
  for (std::size_t l = 0; l < model.landmarks.size(); ++l) {
    state.points.push_back(model.landmarks[l].point);
    for (const auto& [frame, pixel] : model.landmarks[l].observations) {
      auto it = cam_index.find(frame);
      if (it == cam_index.end()) continue;
      landmark_obs[l].push_back(obs.size());
      obs.push_back({l, it->second, pixel});
    }
  }
  if (frames.empty() || obs.empty()) {
    result.cost_history.push_back(0.0);
    result.model.mean_reprojection_error = MeanReprojectionError(model);
    return result;
  }

  // Camera 0 is the gauge; variables are cameras 1..n-1 and optionally focal.
  const std::size_t n_cam = frames.size();
  const std::size_t cam_dim = 6 * (n_cam - 1);
  const std::size_t dim = cam_dim + (options.refine_focal ? 1 : 0);
  const std::size_t focal_col = cam_dim;
  auto cam_offset = [](std::size_t c) { return 6 * (c - 1); };

  const double delta = options.huber_delta_px;
  double cost = RobustCost(state, obs, model.intrinsics, delta);
  if (!std::isfinite(cost)) {
    throw Error(ErrorCode::kDiverged, "initial cost is not finite");
  }
  result.cost_history.push_back(cost);
  double lambda = 1e-4;
  // Residuals at rounding level: nothing left to fit.
  const double negligible_cost = 1e-24 * static_cast<double>(obs.size());

  std::vector<ReprojectionJacobians> jac(obs.size());
  std::vector<Vector2d> res(obs.size());
  std::vector<double> weight(obs.size());

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (cost < negligible_cost) break;
    const CameraIntrinsics kk = ScaledFocal(model.intrinsics, state.focal_scale);
    for (std::size_t o = 0; o < obs.size(); ++o) {
      res[o] = ReprojectionResidual(kk, state.poses[obs[o].camera],
                                    state.points[obs[o].landmark], obs[o].pixel,
                                    &jac[o]);
      weight[o] = HuberWeight(res[o].norm(), delta);
    }

    // Camera-side normal equations and the per-landmark blocks.
    Eigen::MatrixXd h_cc = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g_c = Eigen::VectorXd::Zero(dim);
    std::vector<Matrix3d> v(model.landmarks.size(), Matrix3d::Zero());
    std::vector<Vector3d> g_p(model.landmarks.size(), Vector3d::Zero());
    // W blocks (dim-side rows x 3) stored per observation; the focal row is
    // accumulated per landmark.
    std::vector<Eigen::Matrix<double, 6, 3>> w_cp(obs.size());
    std::vector<Eigen::Matrix<double, 1, 3>> w_fp(model.landmarks.size(),
                                                  Eigen::Matrix<double, 1, 3>::Zero());
    for (std::size_t o = 0; o < obs.size(); ++o) {
      const auto& J = jac[o];
      const double w = weight[o];
      const std::size_t c = obs[o].camera;
      const std::size_t l = obs[o].landmark;
      v[l] += w * J.point.transpose() * J.point;
      g_p[l] -= w * J.point.transpose() * res[o];
      if (c > 0) {
        const std::size_t oc = cam_offset(c);
        h_cc.block<6, 6>(oc, oc) += w * J.pose.transpose() * J.pose;
        g_c.segment<6>(oc) -= w * J.pose.transpose() * res[o];
        w_cp[o] = w * J.pose.transpose() * J.point;
      }
      if (options.refine_focal) {
        h_cc(focal_col, focal_col) += w * J.focal.squaredNorm();
        g_c(focal_col) -= w * J.focal.dot(res[o]);
        w_fp[l] += w * J.focal.transpose() * J.point;
        if (c > 0) {
          const Eigen::Matrix<double, 1, 6> fc = w * J.focal.transpose() * J.pose;
          h_cc.block<1, 6>(focal_col, cam_offset(c)) += fc;
          h_cc.block<6, 1>(cam_offset(c), focal_col) += fc.transpose();
        }
      }
    }
    const double grad_norm =
        std::max(g_c.size() > 0 ? g_c.lpNorm<Eigen::Infinity>() : 0.0,
                 std::accumulate(g_p.begin(), g_p.end(), 0.0,
                                 [](double m, const Vector3d& g) {
                                   return std::max(m, g.lpNorm<Eigen::Infinity>());
                                 }));
    if (grad_norm < 1e-14) break;

    bool accepted = false;
    bool any_finite = false;
    for (int retry = 0; retry <= options.max_damping_retries && !accepted; ++retry) {
      Eigen::MatrixXd s = h_cc;
      s.diagonal() += lambda * h_cc.diagonal().cwiseMax(1e-9);
      Eigen::VectorXd rhs = g_c;
      std::vector<Matrix3d> v_inv(model.landmarks.size());
      for (std::size_t l = 0; l < model.landmarks.size(); ++l) {
        Matrix3d vd = v[l];
        vd.diagonal() += lambda * v[l].diagonal().cwiseMax(1e-9);
        v_inv[l] = vd.inverse();
        const auto& lo = landmark_obs[l];
        for (std::size_t a = 0; a < lo.size(); ++a) {
          const std::size_t ca = obs[lo[a]].camera;
          if (ca == 0) continue;
          const Eigen::Matrix<double, 6, 3> wv = w_cp[lo[a]] * v_inv[l];
          const std::size_t oa = cam_offset(ca);
          rhs.segment<6>(oa) -= wv * g_p[l];
          for (std::size_t b = 0; b < lo.size(); ++b) {
            const std::size_t cb = obs[lo[b]].camera;
            if (cb == 0) continue;
            s.block<6, 6>(oa, cam_offset(cb)) -= wv * w_cp[lo[b]].transpose();
          }
          if (options.refine_focal) {
            const Eigen::Matrix<double, 6, 1> cross = wv * w_fp[l].transpose();
            s.block<6, 1>(oa, focal_col) -= cross;
            s.block<1, 6>(focal_col, oa) -= cross.transpose();
          }
        }
        if (options.refine_focal) {
          s(focal_col, focal_col) -= (w_fp[l] * v_inv[l] * w_fp[l].transpose())(0, 0);
          rhs(focal_col) -= (w_fp[l] * v_inv[l] * g_p[l])(0, 0);
        }
      }
      const Eigen::VectorXd dc =
          dim > 0 ? Eigen::VectorXd(s.ldlt().solve(rhs)) : Eigen::VectorXd();

      BaState trial = state;
      for (std::size_t c = 1; c < n_cam; ++c) {
        const auto step = dc.segment<6>(cam_offset(c));
        const Pose& p = state.poses[c];
        trial.poses[c] = Pose(ExpSO3(step.head<3>()) * p.R(),
                              p.translation() + step.tail<3>());
      }
      if (options.refine_focal) trial.focal_scale *= 1.0 + dc(focal_col);
      for (std::size_t l = 0; l < model.landmarks.size(); ++l) {
        Vector3d rhs_p = g_p[l];
        for (std::size_t idx : landmark_obs[l]) {
          const std::size_t c = obs[idx].camera;
          if (c > 0) rhs_p -= w_cp[idx].transpose() * dc.segment<6>(cam_offset(c));
        }
        if (options.refine_focal) rhs_p -= w_fp[l].transpose() * dc(focal_col);
        trial.points[l] += v_inv[l] * rhs_p;
      }

      const double next = RobustCost(trial, obs, model.intrinsics, delta);
      if (std::isfinite(next)) any_finite = true;
      if (std::isfinite(next) && next < cost) {
        const double decrease = cost - next;
        state = std::move(trial);
        result.cost_history.push_back(next);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        const bool converged =
            decrease <= options.function_tolerance * cost || next < negligible_cost;
        cost = next;
        if (converged) iter = options.max_iterations;
      } else {
        lambda *= 10.0;
      }
    }
    ++result.iterations;
    if (!accepted) {
      if (iter == 0 && !any_finite) {
        throw Error(ErrorCode::kDiverged,
                    "no damping level produced a finite cost");
      }
      break;
    }
  }

  // Write back.
  SceneModel& out = result.model;
  out.intrinsics = ScaledFocal(model.intrinsics, state.focal_scale);
  Trajectory trajectory(model.trajectory.fps());
  for (const auto& f : model.trajectory.frames()) {
    auto it = cam_index.find(f.index);
    trajectory.Append(f.index, it == cam_index.end()
                                   ? std::optional<Pose>()
                                   : std::optional<Pose>(state.poses[it->second]));
  }
  out.trajectory = std::move(trajectory);
  for (std::size_t l = 0; l < out.landmarks.size(); ++l) {
    out.landmarks[l].point = state.points[l];
  }
  out.mean_reprojection_error = MeanReprojectionError(out);
  return result;
}

namespace {

constexpr int kRetriangulationRounds = 3;
// A pose seen by fewer landmarks than this is not constrained by them.
constexpr std::size_t kMinFrameObservations = 8;

std::vector<Landmark> TriangulateLandmarks(const ViewGraph& graph,
                                           const CameraIntrinsics& k,
                                           const std::map<std::int64_t, Pose>& poses,
                                           const SfmConfig& config) {
  std::map<std::int64_t, std::map<std::int64_t, Vector2d>> tracks;
  for (const auto& e : graph.edges) {
    if (poses.count(e.i) == 0 || poses.count(e.j) == 0) continue;
    for (const auto& c : e.inliers) {
      tracks[c.tracklet_id].emplace(e.i, c.a);
      tracks[c.tracklet_id].emplace(e.j, c.b);
    }
  }
  const double min_angle = config.min_triangulation_angle_deg * kDegToRad;
  std::vector<Landmark> out;
  std::vector<Observation> views;
  std::vector<std::pair<std::int64_t, Vector2d>> kept;
  for (const auto& [id, frames] : tracks) {
    if (frames.size() < 2) continue;
    // Views over the reprojection gate are dropped worst first.
    kept.assign(frames.begin(), frames.end());
    Triangulation x;
    bool ok = false;
    while (kept.size() >= 2) {
      views.clear();
      for (const auto& [frame, pixel] : kept) views.push_back({&poses.at(frame), pixel});
      x = TriangulateMultiView(views, k);
      if (!x.in_front || !x.point.allFinite()) break;
      std::size_t worst = 0;
      double worst_error = -1.0;
      for (std::size_t v = 0; v < views.size(); ++v) {
        const double err = (Project(k, *views[v].pose, x.point) - views[v].point).norm();
        if (err > worst_error) {
          worst_error = err;
          worst = v;
        }
      }
      if (worst_error <= config.max_triangulation_error_px) {
        ok = true;
        break;
      }
      kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    if (!ok) continue;
    double max_angle = 0.0;
    for (std::size_t a = 0; a < views.size() && max_angle <= min_angle; ++a) {
      for (std::size_t b = a + 1; b < views.size(); ++b) {
        max_angle = std::max(max_angle,
                             AngleBetween(x.point - views[a].pose->Center(),
                                          x.point - views[b].pose->Center()));
      }
    }
    if (max_angle <= min_angle) continue;
    Landmark lm;
    lm.tracklet_id = id;
    lm.point = x.point;
    lm.observations = kept;
    out.push_back(std::move(lm));
  }
  return out;
}

// Pose-only Levenberg-Marquardt against fixed points.
Pose RefinePose(const CameraIntrinsics& k, Pose pose,
                const std::vector<std::pair<Vector3d, Vector2d>>& points, double delta) {
  auto cost = [&](const Pose& p) {
    double total = 0.0;
    for (const auto& [x, pixel] : points) {
      if (!(p.Transform(x).z() > 0.0)) return std::numeric_limits<double>::infinity();
      total += HuberCost(ReprojectionResidual(k, p, x, pixel).squaredNorm(), delta);
    }
    return total;
  };
  double current = cost(pose);
  if (!std::isfinite(current)) return pose;
  double lambda = 1e-4;
  ReprojectionJacobians jac;
  for (int iter = 0; iter < 30; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& [x, pixel] : points) {
      const Vector2d r = ReprojectionResidual(k, pose, x, pixel, &jac);
      const double w = HuberWeight(r.norm(), delta);
      jtj += w * jac.pose.transpose() * jac.pose;
      g += w * jac.pose.transpose() * r;
    }
    bool accepted = false;
    for (int retry = 0; retry < 10 && !accepted; ++retry) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-9);
      const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(-g);
      if (!step.allFinite()) break;
      const Pose trial(Matrix3d(ExpSO3(step.head<3>()) * pose.R()),
                       Vector3d(pose.translation() + step.tail<3>()));
      const double next = cost(trial);
      if (next < current) {
        const bool converged = current - next < 1e-12 * current;
        pose = trial;
        current = next;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (converged) return pose;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return pose;
}

// Re-estimates every pose from the landmarks its tracks observe, including
// observations the triangulation gate rejected for that frame.
void ResectPoses(const ViewGraph& graph, const CameraIntrinsics& k,
                 const std::vector<Landmark>& landmarks,
                 std::map<std::int64_t, Pose>& poses, double delta) {
  const TrackObservations obs = CollectObservations(graph);
  std::map<std::int64_t, const Vector3d*> points;
  for (const auto& lm : landmarks) points[lm.tracklet_id] = &lm.point;
  std::vector<std::pair<Vector3d, Vector2d>> matched;
  for (auto& [frame, pose] : poses) {
    auto it = obs.by_frame.find(frame);
    if (it == obs.by_frame.end()) continue;
    matched.clear();
    for (const auto& [track, pixel] : it->second) {
      auto p = points.find(track);
      if (p != points.end()) matched.emplace_back(*p->second, pixel);
    }
    if (matched.size() < kMinFrameObservations) continue;
    pose = RefinePose(k, pose, matched, delta);
  }
}

// Unregisters frames observed by too few landmarks, repeating until every
// remaining frame is constrained.
void DropWeakFrames(SceneModel& model) {
  for (bool changed = true; changed;) {
    changed = false;
    std::map<std::int64_t, std::size_t> counts;
    for (const auto& lm : model.landmarks) {
      for (const auto& [frame, pixel] : lm.observations) ++counts[frame];
    }
    std::set<std::int64_t> weak;
    for (auto& f : model.trajectory.frames()) {
      if (f.pose && counts[f.index] < kMinFrameObservations) weak.insert(f.index);
    }
    if (weak.empty()) break;
    changed = true;
    Trajectory kept(model.trajectory.fps());
    for (const auto& f : model.trajectory.frames()) {
      kept.Append(f.index, weak.count(f.index) != 0 ? std::nullopt : f.pose);
    }
    model.trajectory = std::move(kept);
    std::vector<Landmark> landmarks;
    for (auto& lm : model.landmarks) {
      std::erase_if(lm.observations,
                    [&](const auto& o) { return weak.count(o.first) != 0; });
      if (lm.observations.size() >= 2) landmarks.push_back(std::move(lm));
    }
    model.landmarks = std::move(landmarks);
  }
  model.mean_reprojection_error = MeanReprojectionError(model);
}

SceneModel EmptyModel(const CameraIntrinsics& k, std::int64_t num_frames,
                      double fps) {
  SceneModel m;
  m.intrinsics = k;
  m.trajectory = Trajectory(fps);
  for (std::int64_t f = 0; f < num_frames; ++f) m.trajectory.Append(f, std::nullopt);
  return m;
}

SceneModel Attempt(const CorrespondenceSet& correspondences,
                   const CameraIntrinsics& k, std::int64_t num_frames,
                   const SfmConfig& config, std::uint64_t seed, double fps) {
  SceneModel model = EmptyModel(k, num_frames, fps);
  try {
    const ViewGraph graph = BuildViewGraph(correspondences, k, config, seed);
    const auto rotations = RotationAveraging(graph);
    const PositionEstimate positions = PositionAveraging(graph, rotations);
    std::map<std::int64_t, Pose> poses;
    for (const auto& [frame, center] : positions.centers) {
      if (frame < 0 || frame >= num_frames) continue;
      poses[frame] = Pose::FromCenter(rotations.at(frame).transpose(), center);
    }
    ResectPoses(graph, k, TriangulateLandmarks(graph, k, poses, config), poses,
                config.huber_delta_px);
    SceneModel init = EmptyModel(k, 0, fps);
    for (std::int64_t f = 0; f < num_frames; ++f) {
      auto it = poses.find(f);
      init.trajectory.Append(f, it == poses.end() ? std::optional<Pose>()
                                                  : std::optional<Pose>(it->second));
    }
    init.landmarks = TriangulateLandmarks(graph, k, poses, config);
    if (init.landmarks.empty()) {
      throw Error(ErrorCode::kInsufficientParallax, "no landmark survived triangulation");
    }
    BundleAdjustOptions ba;
    ba.huber_delta_px = config.huber_delta_px;
    ba.refine_focal = config.refine_focal;
    ba.max_iterations = config.max_ba_iterations;
    model = BundleAdjust(init, ba).model;
    // Landmarks rejected against the initial poses often pass once the poses
    // are refined, so triangulate and adjust again until the set settles.
    for (int round = 0; round < kRetriangulationRounds; ++round) {
      std::map<std::int64_t, Pose> refined;
      for (const auto& f : model.trajectory.frames()) {
        if (f.pose) refined[f.index] = *f.pose;
      }
      std::vector<Landmark> landmarks =
          TriangulateLandmarks(graph, model.intrinsics, refined, config);
      if (landmarks.size() <= model.landmarks.size()) break;
      model.landmarks = std::move(landmarks);
      model = BundleAdjust(model, ba).model;
    }
    DropWeakFrames(model);
  } catch (const Error& e) {
    model = EmptyModel(k, num_frames, fps);
    model.failed = true;
    model.failure_reason = e.what();
    return model;
  }
  const double fraction = model.trajectory.RegisteredFraction();
  if (fraction < config.min_registered_fraction) {
    model.failed = true;
    model.failure_reason = "less than " +
                           std::to_string(static_cast<int>(
                               std::lround(config.min_registered_fraction * 100))) +
                           "% of frames registered (" +
                           std::to_string(model.trajectory.NumRegistered()) + "/" +
                           std::to_string(model.trajectory.size()) + ")";
  }
  return model;
}

}  // namespace

SceneModel RunPipelineFromCorrespondences(const CorrespondenceSet& correspondences,
                                          const CameraIntrinsics& k,
                                          std::int64_t num_frames,
                                          const SfmConfig& config,
                                          std::uint64_t seed) {
  SceneModel model;
  const int attempts = std::max(1, config.max_attempts);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    model = Attempt(correspondences, k, num_frames, config,
                    attempt == 0 ? seed : SplitMix64(seed + attempt), config.fps);
    model.attempts = attempt + 1;
    if (!model.failed) break;
  }
  return model;
}

SceneModel RunPipeline(std::span<const Tracklet> tracklets,
                       const std::map<std::int64_t, DynamicMask>& masks,
                       const CameraIntrinsics& k, std::int64_t num_frames,
                       const SfmConfig& config, std::uint64_t seed) {
  const CorrespondenceSet correspondences =
      ExtractCorrespondences(tracklets, masks, config.deduplicate_correspondences);
  return RunPipelineFromCorrespondences(correspondences, k, num_frames, config, seed);
}

std::vector<std::size_t> QualityFilter(std::span<const SceneModel> models,
                                       const QualityFilterOptions& options) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const SceneModel& m = models[i];
    if (m.failed) continue;
    if (!(m.mean_reprojection_error < options.max_reprojection_error)) continue;
    if (options.require_full_registration &&
        m.trajectory.RegisteredFraction() < 1.0) {
      continue;
    }
    keep.push_back(i);
  }
  return keep;
}

}  // namespace dynpose
