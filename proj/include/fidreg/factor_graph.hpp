#pragma once

// Second-level factor graph over scan poses, marker poses and marker corner
// positions, solved with Levenberg-Marquardt. Pose residuals use the SE(3)
// ominus, point residuals plain subtraction; all covariances are diagonal.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fidreg/error.hpp"
#include "fidreg/geom.hpp"
#include "fidreg/graph.hpp"
#include "fidreg/marker.hpp"

namespace fidreg {

struct FactorGraphOptions {
  double sigma_rot = 0.02;        // rad, marker pose measurements
  double sigma_trans = 0.02;      // m
  double sigma_corner = 0.01;     // m, both corner factor types
  double sigma_prior = 1e-4;      // rad and m, anchor prior
  double sigma_rel_rot = 0.03;    // rad, anchor <-> scan relative factors
  double sigma_rel_trans = 0.03;  // m
  bool relative_factors = true;
  bool numeric_pose_jacobians = false;
  int max_iterations = 100;
  double initial_damping = 1e-4;
  double relative_decrease_tol = 1e-9;
  double step_tol = 1e-10;
};

enum class FactorKind { kPrior, kPoseMeasurement, kCornerLocal, kCornerScan, kRelativePose };

/// Pose factors: residual (T_a^-1 T_b) (-) z, or T_b (-) z for the prior
/// (pose_a < 0). Point factors: residual T_a^-1 p - z.
struct Factor {
  FactorKind kind = FactorKind::kPrior;
  int pose_a = -1;
  int pose_b = -1;
  int point = -1;
  Pose measured_pose;
  Eigen::Vector3d measured_point = Eigen::Vector3d::Zero();
  Eigen::VectorXd sigma;  // standard deviation per residual component

  bool is_point_factor() const { return point >= 0; }
  int dim() const { return is_point_factor() ? 3 : 6; }
};

struct FactorGraphSpec {
  std::vector<Pose> poses;             // variable values
  std::vector<Eigen::Vector3d> points;
  std::vector<Factor> factors;
  std::size_t anchor = 0;
  std::vector<std::optional<int>> scan_var;  // per input scan
  std::map<int, int> marker_var;             // marker id -> pose variable
  std::map<int, std::array<int, 4>> corner_var;
  std::vector<std::size_t> unreachable;

  std::size_t dimension() const { return 6 * poses.size() + 3 * points.size(); }
  std::size_t pose_offset(int k) const { return 6 * static_cast<std::size_t>(k); }
  std::size_t point_offset(int k) const {
    return 6 * poses.size() + 3 * static_cast<std::size_t>(k);
  }
  std::size_t count(FactorKind kind) const {
    std::size_t n = 0;
    for (const auto& f : factors) n += f.kind == kind ? 1 : 0;
    return n;
  }
};

namespace detail {

inline Eigen::VectorXd sigma6(double rot, double trans) {
  Eigen::VectorXd s(6);
  s << rot, rot, rot, trans, trans, trans;
  return s;
}

inline Pose predicted_pose(const Factor& f, const std::vector<Pose>& poses) {
  const Pose& b = poses[static_cast<std::size_t>(f.pose_b)];
  if (f.pose_a < 0) return b;
  return poses[static_cast<std::size_t>(f.pose_a)].inverse() * b;
}

}  // namespace detail

/// Unwhitened residual of one factor.
inline Eigen::VectorXd factor_residual(const Factor& f, const std::vector<Pose>& poses,
                                       const std::vector<Eigen::Vector3d>& points) {
  if (f.is_point_factor()) {
    const Pose& a = poses[static_cast<std::size_t>(f.pose_a)];
    return a.inverse() * points[static_cast<std::size_t>(f.point)] - f.measured_point;
  }
  return se3_ominus(detail::predicted_pose(f, poses), f.measured_pose);
}

/// Derivative of a residual with respect to one variable's local
/// coordinates: [rotation, translation] for poses, xyz for points.
struct JacobianBlock {
  bool point = false;
  int index = 0;
  Eigen::MatrixXd block;
};

inline std::vector<JacobianBlock> numeric_jacobian(const Factor& f, const std::vector<Pose>& poses,
                                                   const std::vector<Eigen::Vector3d>& points,
                                                   double step = 1e-6) {
  std::vector<JacobianBlock> out;
  std::vector<Pose> ps = poses;
  std::vector<Eigen::Vector3d> qs = points;
  const auto pose_block = [&](int k) {
    JacobianBlock b{false, k, Eigen::MatrixXd(f.dim(), 6)};
    const auto idx = static_cast<std::size_t>(k);
    for (int c = 0; c < 6; ++c) {
      Vector6d d = Vector6d::Zero();
      d(c) = step;
      ps[idx] = se3_oplus(poses[idx], d);
      const Eigen::VectorXd plus = factor_residual(f, ps, qs);
      ps[idx] = se3_oplus(poses[idx], -d);
      const Eigen::VectorXd minus = factor_residual(f, ps, qs);
      ps[idx] = poses[idx];
      b.block.col(c) = (plus - minus) / (2.0 * step);
    }
    out.push_back(std::move(b));
  };
  if (f.pose_a >= 0) pose_block(f.pose_a);
  if (f.pose_b >= 0) pose_block(f.pose_b);
  if (f.point >= 0) {
    JacobianBlock b{true, f.point, Eigen::MatrixXd(3, 3)};
    const auto idx = static_cast<std::size_t>(f.point);
    for (int c = 0; c < 3; ++c) {
      qs[idx] = points[idx] + step * Eigen::Vector3d::Unit(c);
      const Eigen::VectorXd plus = factor_residual(f, ps, qs);
      qs[idx] = points[idx] - step * Eigen::Vector3d::Unit(c);
      const Eigen::VectorXd minus = factor_residual(f, ps, qs);
      qs[idx] = points[idx];
      b.block.col(c) = (plus - minus) / (2.0 * step);
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline std::vector<JacobianBlock> analytic_jacobian(const Factor& f, const std::vector<Pose>& poses,
                                                    const std::vector<Eigen::Vector3d>& points) {
  std::vector<JacobianBlock> out;
  if (f.is_point_factor()) {
    // q = R^T (p - t): dq/dp = R^T, dq/d(omega) = hat(q), dq/dv = -I.
    const Pose& a = poses[static_cast<std::size_t>(f.pose_a)];
    const Eigen::Vector3d q = a.inverse() * points[static_cast<std::size_t>(f.point)];
    Eigen::MatrixXd jp(3, 6);
    jp.leftCols<3>() = hat(q);
    jp.rightCols<3>() = -Eigen::Matrix3d::Identity();
    out.push_back({false, f.pose_a, jp});
    out.push_back({true, f.point, a.rotation.transpose()});
    return out;
  }
  // H = T_a^-1 T_b, r = [log(R_z^T R_H), R_z^T (t_H - t_z)].
  const Pose h = detail::predicted_pose(f, poses);
  const Eigen::Matrix3d rz_t = f.measured_pose.rotation.transpose();
  const Eigen::Vector3d r_rot = so3_log(rz_t * h.rotation);
  const Eigen::Matrix3d jr_inv = so3_right_jacobian_inverse(r_rot);
  if (f.pose_a >= 0) {
    Eigen::MatrixXd ja = Eigen::MatrixXd::Zero(6, 6);
    ja.topLeftCorner<3, 3>() = -jr_inv * h.rotation.transpose();
    ja.bottomLeftCorner<3, 3>() = rz_t * hat(h.translation);
    ja.bottomRightCorner<3, 3>() = -rz_t;
    out.push_back({false, f.pose_a, ja});
  }
  Eigen::MatrixXd jb = Eigen::MatrixXd::Zero(6, 6);
  jb.topLeftCorner<3, 3>() = jr_inv;
  jb.bottomRightCorner<3, 3>() = rz_t * h.rotation;
  out.push_back({false, f.pose_b, jb});
  return out;
}

inline std::vector<JacobianBlock> factor_jacobian(const Factor& f, const std::vector<Pose>& poses,
                                                  const std::vector<Eigen::Vector3d>& points,
                                                  bool numeric_pose = false) {
  if (numeric_pose && !f.is_point_factor()) return numeric_jacobian(f, poses, points);
  return analytic_jacobian(f, poses, points);
}

/// 1/2 sum of squared Mahalanobis norms of all residuals.
inline double total_cost(const std::vector<Factor>& factors, const std::vector<Pose>& poses,
                         const std::vector<Eigen::Vector3d>& points) {
  double cost = 0.0;
  for (const auto& f : factors) {
    cost += 0.5 * factor_residual(f, poses, points).cwiseQuotient(f.sigma).squaredNorm();
  }
  return cost;
}

inline double total_cost(const FactorGraphSpec& fg) {
  return total_cost(fg.factors, fg.poses, fg.points);
}

/// Exactly one prior and every variable constrained by some factor.
inline void validate_graph(const FactorGraphSpec& fg) {
  if (fg.count(FactorKind::kPrior) != 1) {
    fail(ErrorCode::kIllPosedGraph, "factor graph needs exactly one prior");
  }
  std::vector<char> pose_used(fg.poses.size(), 0);
  std::vector<char> point_used(fg.points.size(), 0);
  for (const auto& f : fg.factors) {
    if (f.sigma.size() != f.dim() || !(f.sigma.minCoeff() > 0.0)) {
      fail(ErrorCode::kIllPosedGraph, "factor standard deviations must be positive");
    }
    const auto check = [](int k, std::size_t n) {
      if (k >= static_cast<int>(n)) {
        fail(ErrorCode::kIllPosedGraph, "factor references a missing variable");
      }
    };
    check(f.pose_a, fg.poses.size());
    check(f.pose_b, fg.poses.size());
    check(f.point, fg.points.size());
    if (f.pose_a >= 0) pose_used[static_cast<std::size_t>(f.pose_a)] = 1;
    if (f.pose_b >= 0) pose_used[static_cast<std::size_t>(f.pose_b)] = 1;
    if (f.point >= 0) point_used[static_cast<std::size_t>(f.point)] = 1;
  }
  for (char u : pose_used) {
    if (!u) fail(ErrorCode::kIllPosedGraph, "a pose variable has no factor");
  }
  for (char u : point_used) {
    if (!u) fail(ErrorCode::kIllPosedGraph, "a point variable has no factor");
  }
}

/// Variables and factors for the observations of every reachable scan.
/// Marker poses start from the lowest-e_pp observation, corners from the
/// marker pose applied to the canonical square.
inline FactorGraphSpec build_factor_graph(
    const std::vector<std::vector<MarkerObservation>>& observations, const InitialPoses& initials,
    const MarkerSpec& spec, const FactorGraphOptions& opts = {}) {
  if (initials.poses.size() != observations.size()) {
    fail(ErrorCode::kMissingInitial, "initial poses do not cover the scans");
  }
  if (!initials.poses[initials.anchor]) {
    fail(ErrorCode::kMissingInitial, "anchor has no initial pose");
  }
  FactorGraphSpec fg;
  fg.anchor = initials.anchor;
  fg.unreachable = initials.unreachable;
  fg.scan_var.assign(observations.size(), std::nullopt);

  const auto is_unreachable = [&](std::size_t i) {
    return std::find(initials.unreachable.begin(), initials.unreachable.end(), i) !=
           initials.unreachable.end();
  };
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (!initials.poses[i]) {
      if (!observations[i].empty() && !is_unreachable(i)) {
        fail(ErrorCode::kMissingInitial, "scan " + std::to_string(i) + " has no initial pose");
      }
      continue;
    }
    fg.scan_var[i] = static_cast<int>(fg.poses.size());
    fg.poses.push_back(*initials.poses[i]);
  }

  // Best observation per (scan, marker), and per marker across scans.
  std::map<std::pair<std::size_t, int>, const MarkerObservation*> kept;
  std::map<int, std::pair<std::size_t, const MarkerObservation*>> best;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (!fg.scan_var[i]) continue;
    for (const auto& o : observations[i]) {
      auto it = kept.find({i, o.id});
      if (it == kept.end() || o.e_pp < it->second->e_pp) kept[{i, o.id}] = &o;
      auto bt = best.find(o.id);
      if (bt == best.end() || o.e_pp < bt->second.second->e_pp) best[o.id] = {i, &o};
    }
  }
  const auto canonical = spec.canonical_corners();
  for (const auto& [id, src] : best) {
    const Pose& scan = fg.poses[static_cast<std::size_t>(*fg.scan_var[src.first])];
    const Pose marker = scan * src.second->pose;
    fg.marker_var[id] = static_cast<int>(fg.poses.size());
    fg.poses.push_back(marker);
    std::array<int, 4> corners{};
    for (int s = 0; s < 4; ++s) {
      corners[s] = static_cast<int>(fg.points.size());
      fg.points.push_back(marker * canonical[s]);
    }
    fg.corner_var[id] = corners;
  }

  const int anchor_var = *fg.scan_var[fg.anchor];
  Factor prior;
  prior.kind = FactorKind::kPrior;
  prior.pose_b = anchor_var;
  prior.measured_pose = Pose::identity();
  prior.sigma = detail::sigma6(opts.sigma_prior, opts.sigma_prior);
  fg.factors.push_back(prior);

  const Eigen::Vector3d corner_sigma = Eigen::Vector3d::Constant(opts.sigma_corner);
  for (const auto& [key, o] : kept) {
    const int scan = *fg.scan_var[key.first];
    const int marker = fg.marker_var.at(key.second);
    Factor meas;
    meas.kind = FactorKind::kPoseMeasurement;
    meas.pose_a = scan;
    meas.pose_b = marker;
    meas.measured_pose = o->pose;
    meas.sigma = detail::sigma6(opts.sigma_rot, opts.sigma_trans);
    fg.factors.push_back(meas);
    for (int s = 0; s < 4; ++s) {
      Factor c;
      c.kind = FactorKind::kCornerScan;
      c.pose_a = scan;
      c.point = fg.corner_var.at(key.second)[s];
      c.measured_point = o->corners_3d[s];
      c.sigma = corner_sigma;
      fg.factors.push_back(c);
    }
  }
  for (const auto& [id, corners] : fg.corner_var) {
    for (int s = 0; s < 4; ++s) {
      Factor c;
      c.kind = FactorKind::kCornerLocal;
      c.pose_a = fg.marker_var.at(id);
      c.point = corners[s];
      c.measured_point = canonical[s];
      c.sigma = corner_sigma;
      fg.factors.push_back(c);
    }
  }
  if (opts.relative_factors) {
    const Pose anchor_inv = initials.poses[fg.anchor]->inverse();
    for (std::size_t i = 0; i < observations.size(); ++i) {
      if (i == fg.anchor || !fg.scan_var[i]) continue;
      Factor rel;
      rel.kind = FactorKind::kRelativePose;
      rel.pose_a = anchor_var;
      rel.pose_b = *fg.scan_var[i];
      rel.measured_pose = anchor_inv * *initials.poses[i];
      rel.sigma = detail::sigma6(opts.sigma_rel_rot, opts.sigma_rel_trans);
      fg.factors.push_back(rel);
    }
  }
  return fg;
}

struct RegistrationResult {
  std::vector<std::optional<Pose>> scan_poses;  // scan -> anchor frame
  std::map<int, Pose> marker_poses;             // marker -> anchor frame
  std::map<int, std::array<Eigen::Vector3d, 4>> corners;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;  // initial cost, then every accepted step
  std::vector<std::size_t> unreachable;
};

/// Copies the variable values of `fg` into a result.
inline RegistrationResult extract_result(const FactorGraphSpec& fg) {
  RegistrationResult r;
  r.scan_poses.assign(fg.scan_var.size(), std::nullopt);
  for (std::size_t i = 0; i < fg.scan_var.size(); ++i) {
    if (fg.scan_var[i]) r.scan_poses[i] = fg.poses[static_cast<std::size_t>(*fg.scan_var[i])];
  }
  for (const auto& [id, k] : fg.marker_var) {
    r.marker_poses[id] = fg.poses[static_cast<std::size_t>(k)];
  }
  for (const auto& [id, ks] : fg.corner_var) {
    std::array<Eigen::Vector3d, 4> c;
    for (int s = 0; s < 4; ++s) c[s] = fg.points[static_cast<std::size_t>(ks[s])];
    r.corners[id] = c;
  }
  r.unreachable = fg.unreachable;
  r.initial_cost = r.final_cost = total_cost(fg);
  r.cost_history = {r.initial_cost};
  return r;
}

/// Levenberg-Marquardt with Marquardt scaling of the damping. Accepted steps
/// strictly decrease the cost.
inline RegistrationResult optimize(FactorGraphSpec fg, const FactorGraphOptions& opts = {}) {
  validate_graph(fg);
  const auto n = static_cast<Eigen::Index>(fg.dimension());
  Eigen::Index m = 0;
  for (const auto& f : fg.factors) m += f.dim();

  double cost = total_cost(fg);
  if (!std::isfinite(cost)) fail(ErrorCode::kNonFiniteCost, "initial cost is not finite");
  std::vector<double> history = {cost};
  const double initial_cost = cost;
  double mu = opts.initial_damping;
  int iter = 0;

  Eigen::MatrixXd jac(m, n);
  Eigen::VectorXd res(m);
  while (iter < opts.max_iterations && cost > 0.0) {
    ++iter;
    jac.setZero();
    Eigen::Index row = 0;
    for (const auto& f : fg.factors) {
      const Eigen::VectorXd w = f.sigma.cwiseInverse();
      res.segment(row, f.dim()) = factor_residual(f, fg.poses, fg.points).cwiseProduct(w);
      for (const auto& b : factor_jacobian(f, fg.poses, fg.points, opts.numeric_pose_jacobians)) {
        const auto col = static_cast<Eigen::Index>(b.point ? fg.point_offset(b.index)
                                                           : fg.pose_offset(b.index));
        jac.block(row, col, f.dim(), b.block.cols()) = w.asDiagonal() * b.block;
      }
      row += f.dim();
    }
    const Eigen::MatrixXd hess = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * res;

    bool accepted = false;
    bool converged = false;
    while (!accepted) {
      Eigen::MatrixXd damped = hess;
      damped.diagonal() += mu * hess.diagonal();
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      const Eigen::VectorXd step = ldlt.solve(-grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        mu *= 10.0;
        if (mu > 1e16) break;
        continue;
      }
      if (step.norm() < opts.step_tol) {
        converged = true;
        break;
      }
      std::vector<Pose> poses = fg.poses;
      std::vector<Eigen::Vector3d> points = fg.points;
      for (std::size_t k = 0; k < poses.size(); ++k) {
        poses[k] = se3_oplus(poses[k], step.segment<6>(static_cast<Eigen::Index>(6 * k)));
      }
      const auto point_base = static_cast<Eigen::Index>(6 * poses.size());
      for (std::size_t k = 0; k < points.size(); ++k) {
        points[k] += step.segment<3>(point_base + static_cast<Eigen::Index>(3 * k));
      }
      const double trial = total_cost(fg.factors, poses, points);
      if (std::isfinite(trial) && trial < cost) {
        const double decrease = (cost - trial) / cost;
        fg.poses = std::move(poses);
        fg.points = std::move(points);
        cost = trial;
        history.push_back(cost);
        mu = std::max(mu / 10.0, 1e-12);
        accepted = true;
        converged = decrease < opts.relative_decrease_tol;
      } else {
        mu *= 10.0;
        if (mu > 1e16) break;
        // A rejected trial counts as an iteration.
        if (++iter > opts.max_iterations) break;
      }
    }
    if (converged || !accepted) break;
  }

  RegistrationResult r = extract_result(fg);
  r.initial_cost = initial_cost;
  r.final_cost = cost;
  r.iterations = std::min(iter, opts.max_iterations);
  r.cost_history = std::move(history);
  return r;
}

}  // namespace fidreg
