#include "ncmap/geometry/pnp.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "ncmap/util/error.h"

namespace ncmap {
namespace {

void RequireCount(size_t n, const char* what) {
  if (n < kPnpMinimalSample) {
    throw InvalidArgument(std::string(what) + ": need >= 6 correspondences, got " +
                          std::to_string(n));
  }
}

double SquaredCost(const Pose& pose, const Intrinsics& K,
                   std::span<const Correspondence> corrs) {
  double cost = 0.0;
  for (const Correspondence& c : corrs) {
    const Eigen::Vector3d x = pose.ToCamera(c.world);
    const double u = K.fx * x.x() / x.z() + K.cx;
    const double v = K.fy * x.y() / x.z() + K.cy;
    cost += (u - c.pixel.x()) * (u - c.pixel.x()) +
            (v - c.pixel.y()) * (v - c.pixel.y());
  }
  return cost;
}

}  // namespace

double ReprojectionError(const Pose& pose, const Intrinsics& K,
                         const Correspondence& c) {
  const auto px = Project(pose, K, c.world);
  if (!px) return std::numeric_limits<double>::infinity();
  return (*px - c.pixel).norm();
}

Pose PnpDlt(std::span<const Correspondence> corrs, const Intrinsics& K) {
  RequireCount(corrs.size(), "pnp_dlt");
  const size_t n = corrs.size();

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const Correspondence& c : corrs) centroid += c.world;
  centroid /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (const Correspondence& c : corrs) mean_dist += (c.world - centroid).norm();
  mean_dist /= static_cast<double>(n);
  if (!(mean_dist > 0.0)) {
    throw DegenerateError("pnp_dlt: all world points coincide");
  }
  const double s = std::sqrt(3.0) / mean_dist;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (size_t i = 0; i < n; ++i) {
    const Correspondence& c = corrs[i];
    Eigen::Vector4d xh;
    xh.head<3>() = (c.world - centroid) * s;
    xh(3) = 1.0;
    const double x = (c.pixel.x() - K.cx) / K.fx;
    const double y = (c.pixel.y() - K.cy) / K.fy;
    a.block<1, 4>(2 * i, 0) = xh.transpose();
    a.block<1, 4>(2 * i, 8) = -x * xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -y * xh.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  // A unique solution needs a one-dimensional null space.
  if (sv.size() < 11 || sv(10) <= 1e-9 * sv(0)) {
    throw DegenerateError("pnp_dlt: rank-deficient design matrix "
                          "(degenerate configuration)");
  }
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p_norm;
  p_norm.row(0) = h.segment<4>(0).transpose();
  p_norm.row(1) = h.segment<4>(4).transpose();
  p_norm.row(2) = h.segment<4>(8).transpose();

  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() *= s;
  t.block<3, 1>(0, 3) = -s * centroid;
  Eigen::Matrix<double, 3, 4> p = p_norm * t;

  Eigen::Matrix3d m = p.leftCols<3>();
  if (m.determinant() < 0.0) {
    p = -p;
    m = -m;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> msvd(m);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0)) {
    throw DegenerateError("pnp_dlt: zero-scale camera matrix");
  }
  Pose pose;
  pose.rotation = NearestRotation(m);
  pose.translation = p.col(3) / scale;
  return pose;
}

Pose PnpSolve(std::span<const Correspondence> corrs, const Intrinsics& K,
              const PnpOptions& options) {
  Pose pose = PnpDlt(corrs, K);
  double cost = SquaredCost(pose, K, corrs);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const Correspondence& c : corrs) {
      const Eigen::Vector3d x = pose.ToCamera(c.world);
      const double iz = 1.0 / x.z();
      Eigen::Matrix<double, 2, 3> jp;
      jp << K.fx * iz, 0.0, -K.fx * x.x() * iz * iz, 0.0, K.fy * iz,
          -K.fy * x.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> jx;
      jx.leftCols<3>() = -Skew(x);
      jx.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = jp * jx;
      const Eigen::Vector2d r(K.fx * x.x() * iz + K.cx - c.pixel.x(),
                              K.fy * x.y() * iz + K.cy - c.pixel.y());
      jtj.noalias() += j.transpose() * j;
      jtr.noalias() += j.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> delta = jtj.ldlt().solve(-jtr);
    if (!delta.allFinite()) break;

    // Backtrack if the full step increases the cost.
    double step = 1.0;
    Pose next;
    double next_cost = std::numeric_limits<double>::infinity();
    for (int tries = 0; tries < 8; ++tries) {
      const Eigen::Matrix3d dr = ExpSO3(step * delta.head<3>());
      next.rotation = NearestRotation(dr * pose.rotation);
      next.translation = dr * pose.translation + step * delta.tail<3>();
      next_cost = SquaredCost(next, K, corrs);
      if (next_cost <= cost) break;
      step *= 0.5;
    }
    if (!(next_cost <= cost)) break;
    pose = next;
    cost = next_cost;
    if ((step * delta).norm() < options.step_tolerance) break;
  }
  return pose;
}

RansacResult RansacPnp(std::span<const Correspondence> corrs,
                       const Intrinsics& K, const RansacOptions& options) {
  RequireCount(corrs.size(), "ransac_pnp");
  const size_t n = corrs.size();
  const double tol = options.inlier_tolerance;

  auto count_inliers = [&](const Pose& pose, std::vector<bool>* mask) {
    size_t count = 0;
    if (mask) mask->assign(n, false);
    for (size_t i = 0; i < n; ++i) {
      if (ReprojectionError(pose, K, corrs[i]) <= tol) {
        ++count;
        if (mask) (*mask)[i] = true;
      }
    }
    return count;
  };

  std::mt19937_64 rng(options.seed);
  std::vector<size_t> indices(n);
  std::iota(indices.begin(), indices.end(), size_t{0});
  std::vector<Correspondence> sample(kPnpMinimalSample);

  RansacResult result;
  std::vector<bool> mask;
  std::optional<Pose> best_pose;
  size_t best_count = 0;
  long needed = options.max_iterations;
  int iter = 0;
  for (; iter < options.max_iterations && iter < needed; ++iter) {
    for (size_t k = 0; k < kPnpMinimalSample; ++k) {
      std::uniform_int_distribution<size_t> pick(k, n - 1);
      std::swap(indices[k], indices[pick(rng)]);
      sample[k] = corrs[indices[k]];
    }
    Pose hypothesis;
    try {
      hypothesis = PnpSolve(sample, K, {.max_iterations = 10});
    } catch (const DegenerateError&) {
      continue;
    }
    size_t count = count_inliers(hypothesis, &mask);
    // Local optimization: refit a promising hypothesis on its own support.
    if (count > best_count && count > kPnpMinimalSample) {
      std::vector<Correspondence> support;
      for (size_t i = 0; i < n; ++i) {
        if (mask[i]) support.push_back(corrs[i]);
      }
      try {
        const Pose refit = PnpSolve(support, K, {.max_iterations = 10});
        const size_t refit_count = count_inliers(refit, nullptr);
        if (refit_count > count) {
          hypothesis = refit;
          count = refit_count;
        }
      } catch (const DegenerateError&) {
      }
    }
    if (count > best_count) {
      best_count = count;
      best_pose = hypothesis;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_good = std::pow(w, static_cast<double>(kPnpMinimalSample));
      if (p_good >= 1.0) {
        needed = iter + 1;
      } else if (p_good > 0.0) {
        const double est =
            std::log(1.0 - options.confidence) / std::log(1.0 - p_good);
        needed = static_cast<long>(std::min<double>(std::ceil(est),
                                                    options.max_iterations));
      }
    }
  }
  result.iterations = iter;
  if (!best_pose || best_count < kPnpMinimalSample) {
    result.inliers.assign(n, false);
    return result;
  }

  Pose pose = *best_pose;
  size_t count = count_inliers(pose, &mask);
  for (int round = 0; round < 10; ++round) {
    std::vector<Correspondence> support;
    for (size_t i = 0; i < n; ++i) {
      if (mask[i]) support.push_back(corrs[i]);
    }
    if (support.size() < kPnpMinimalSample) break;
    Pose refined;
    try {
      refined = PnpSolve(support, K);
    } catch (const DegenerateError&) {
      break;
    }
    std::vector<bool> refined_mask;
    const size_t refined_count = count_inliers(refined, &refined_mask);
    if (refined_count < count) break;
    const bool same = refined_mask == mask;
    pose = refined;
    mask = std::move(refined_mask);
    count = refined_count;
    if (same) break;
  }
  if (count < kPnpMinimalSample) {
    result.inliers.assign(n, false);
    return result;
  }
  result.pose = pose;
  result.inliers = std::move(mask);
  result.num_inliers = count;
  return result;
}

}  // namespace ncmap
