#include "ncmap/geometry/triangulation.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/SVD>

#include "ncmap/util/error.h"

namespace ncmap {

Point3D TriangulateDlt(std::span<const Observation> observations,
                       const TriangulationOptions& options) {
  std::set<int> views;
  for (const Observation& obs : observations) views.insert(obs.view_id);
  if (observations.size() < 2 || views.size() < 2) {
    throw InvalidArgument("triangulate_dlt: need >= 2 observations from "
                          "distinct views, got " +
                          std::to_string(views.size()));
  }

  // Rows in normalized image coordinates for conditioning.
  Eigen::MatrixXd a(2 * observations.size(), 4);
  for (size_t i = 0; i < observations.size(); ++i) {
    const Observation& obs = observations[i];
    const Intrinsics& k = *obs.intrinsics;
    const double x = (obs.pixel.x() - k.cx) / k.fx;
    const double y = (obs.pixel.y() - k.cy) / k.fy;
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = obs.pose->rotation;
    p.col(3) = obs.pose->translation;
    a.row(2 * i) = x * p.row(2) - p.row(0);
    a.row(2 * i + 1) = y * p.row(2) - p.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);

  Point3D point;
  if (std::abs(h(3)) < 1e-14) return point;
  point.position = h.head<3>() / h(3);

  double max_err = 0.0;
  for (const Observation& obs : observations) {
    const auto px = Project(*obs.pose, *obs.intrinsics, point.position);
    if (!px) return point;
    max_err = std::max(max_err, (*px - obs.pixel).norm());
  }
  const double min_angle = options.min_angle_deg * std::numbers::pi / 180.0;
  double max_angle = 0.0;
  for (size_t i = 0; i < observations.size() && max_angle < min_angle; ++i) {
    const Eigen::Vector3d ri =
        (point.position - observations[i].pose->Center()).normalized();
    for (size_t j = i + 1; j < observations.size(); ++j) {
      const Eigen::Vector3d rj =
          (point.position - observations[j].pose->Center()).normalized();
      const double c = std::clamp(ri.dot(rj), -1.0, 1.0);
      max_angle = std::max(max_angle, std::acos(c));
    }
  }
  point.valid = max_err <= options.max_reprojection_error &&
                max_angle >= min_angle;
  return point;
}

}  // namespace ncmap
