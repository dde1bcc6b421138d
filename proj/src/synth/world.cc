#include "ncmap/synth/world.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/QR>

#include "ncmap/util/error.h"
#include "ncmap/util/random.h"

namespace ncmap {
namespace {

constexpr uint64_t kPointStream = 1;
constexpr uint64_t kRefCameraStream = 2;
constexpr uint64_t kQueryCameraStream = 3;

Eigen::MatrixXd RandomOrthonormal(int n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = Gaussian(rng, 1.0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q;
}

}  // namespace

void WorldConfig::Validate() const {
  NCMAP_CHECK(num_points >= 1, InvalidArgument, "num_points must be >= 1");
  NCMAP_CHECK(num_ref_views >= 1, InvalidArgument,
              "num_ref_views must be >= 1");
  NCMAP_CHECK(num_query_views >= 1, InvalidArgument,
              "num_query_views must be >= 1");
  NCMAP_CHECK(extent.minCoeff() > 0.0, InvalidArgument,
              "degenerate extent: every axis must be > 0");
  NCMAP_CHECK(pixel_noise >= 0.0 && descriptor_noise >= 0.0 &&
                  illumination_shift >= 0.0,
              InvalidArgument, "noise levels must be >= 0");
  NCMAP_CHECK(descriptor_dim >= 4, InvalidArgument,
              "descriptor_dim must be >= 4");
  NCMAP_CHECK(appearance_min_wavelength > 0.0 &&
                  appearance_max_wavelength >= appearance_min_wavelength,
              InvalidArgument, "invalid appearance wavelength range");
  NCMAP_CHECK(min_depth > 0.0 && max_depth > min_depth, InvalidArgument,
              "invalid depth window");
  NCMAP_CHECK(intrinsics.IsValid(), InvalidArgument, "invalid intrinsics");
  NCMAP_CHECK(query_radius_max >= query_radius_min && query_radius_min > 0.0,
              InvalidArgument, "invalid query radius range");
  NCMAP_CHECK(query_height_max >= query_height_min, InvalidArgument,
              "invalid query height range");
}

AppearanceModel AppearanceModel::Create(int descriptor_dim,
                                        double min_wavelength,
                                        double max_wavelength, uint64_t seed) {
  Rng rng = MakeRng(seed, 0xA11CE);
  const int illum_dims = std::max(1, std::min(4, descriptor_dim / 4));
  const int waves = (descriptor_dim - illum_dims) / 2;

  AppearanceModel model;
  model.frequencies.resize(waves, 3);
  model.phases.resize(waves);
  const double log_lo = std::log(min_wavelength);
  const double log_hi = std::log(max_wavelength);
  for (int j = 0; j < waves; ++j) {
    const double wavelength = std::exp(Uniform(rng, log_lo, log_hi));
    model.frequencies.row(j) =
        UnitVector3(rng).transpose() * (2.0 * std::numbers::pi / wavelength);
    model.phases(j) = Uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  const Eigen::MatrixXd q = RandomOrthonormal(descriptor_dim, rng);
  model.field_basis = q.leftCols(2 * waves);
  model.illumination_basis = q.middleCols(2 * waves, illum_dims);
  return model;
}

Eigen::VectorXd AppearanceModel::Descriptor(
    const Eigen::Vector3d& position) const {
  const Eigen::Index waves = phases.size();
  Eigen::VectorXd field(2 * waves);
  const double amp = 1.0 / std::sqrt(static_cast<double>(waves));
  for (Eigen::Index j = 0; j < waves; ++j) {
    const double arg = frequencies.row(j).dot(position) + phases(j);
    field(2 * j) = amp * std::cos(arg);
    field(2 * j + 1) = amp * std::sin(arg);
  }
  return field_basis * field;
}

World GenerateWorld(const WorldConfig& config) {
  config.Validate();
  World world;
  world.appearance = AppearanceModel::Create(
      config.descriptor_dim, config.appearance_min_wavelength,
      config.appearance_max_wavelength, config.appearance_seed);

  Rng point_rng = MakeRng(config.seed, kPointStream);
  world.points.reserve(config.num_points);
  world.descriptors.resize(config.num_points, config.descriptor_dim);
  for (int i = 0; i < config.num_points; ++i) {
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) {
      p(a) = config.box_min(a) + Uniform(point_rng, 0.0, config.extent(a));
    }
    world.points.push_back(p);
    world.descriptors.row(i) =
        world.appearance.Descriptor(p).normalized().transpose();
  }

  const Eigen::Vector3d center = config.BoxCenter();
  Rng ref_rng = MakeRng(config.seed, kRefCameraStream);
  for (int i = 0; i < config.num_ref_views; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / config.num_ref_views;
    Eigen::Vector3d eye = center + Eigen::Vector3d(
                                       config.ref_orbit_radius * std::cos(angle),
                                       config.ref_orbit_radius * std::sin(angle),
                                       config.ref_orbit_height);
    Eigen::Vector3d target = center;
    for (int a = 0; a < 3; ++a) {
      eye(a) += Uniform(ref_rng, -config.ref_jitter, config.ref_jitter);
      target(a) += Uniform(ref_rng, -config.ref_jitter, config.ref_jitter);
    }
    world.ref_poses.push_back(Pose::LookAt(eye, target));
  }

  Rng query_rng = MakeRng(config.seed, kQueryCameraStream);
  for (int i = 0; i < config.num_query_views; ++i) {
    Pose pose;
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      const double angle = Uniform(query_rng, 0.0, 2.0 * std::numbers::pi);
      const double radius = Uniform(query_rng, config.query_radius_min,
                                    config.query_radius_max);
      const double height = Uniform(query_rng, config.query_height_min,
                                    config.query_height_max);
      const Eigen::Vector3d eye =
          center + Eigen::Vector3d(radius * std::cos(angle),
                                   radius * std::sin(angle), height);
      Eigen::Vector3d target = center;
      for (int a = 0; a < 3; ++a) {
        target(a) += Uniform(query_rng, -0.15 * config.extent(a),
                             0.15 * config.extent(a));
      }
      accepted = true;
      for (const Pose& ref : world.ref_poses) {
        if ((ref.Center() - eye).norm() < config.query_min_baseline) {
          accepted = false;
          break;
        }
      }
      if (accepted) pose = Pose::LookAt(eye, target);
    }
    if (!accepted) {
      throw InvalidArgument("generate_world: could not place query camera " +
                            std::to_string(i) + " at the required baseline");
    }
    world.query_poses.push_back(pose);
  }
  return world;
}

Keypoints Observe(const Pose& pose, const Intrinsics& intrinsics,
                  const World& world, const WorldConfig& config,
                  uint64_t stream) {
  Rng rng = MakeRng(config.seed, stream);
  const int dim = config.descriptor_dim;
  const Eigen::Index illum_dims = world.appearance.illumination_basis.cols();
  const Eigen::VectorXd coeffs = GaussianVector(
      rng, illum_dims,
      config.illumination_shift / std::sqrt(static_cast<double>(illum_dims)));
  const Eigen::VectorXd shift = world.appearance.illumination_basis * coeffs;
  const double per_dim_noise =
      config.descriptor_noise / std::sqrt(static_cast<double>(dim));

  Keypoints kps;
  std::vector<Eigen::VectorXd> rows;
  for (size_t i = 0; i < world.points.size(); ++i) {
    const Eigen::Vector3d cam = pose.ToCamera(world.points[i]);
    if (cam.z() < config.min_depth || cam.z() > config.max_depth) continue;
    const auto px = Project(pose, intrinsics, world.points[i]);
    if (!px || !intrinsics.InImage(*px, config.frustum_margin)) continue;
    Eigen::Vector2d noisy = *px;
    noisy.x() += Gaussian(rng, config.pixel_noise);
    noisy.y() += Gaussian(rng, config.pixel_noise);
    Eigen::VectorXd d = world.descriptors.row(static_cast<Eigen::Index>(i))
                            .transpose() +
                        shift + GaussianVector(rng, dim, per_dim_noise);
    kps.pixels.push_back(noisy);
    kps.point_ids.push_back(static_cast<int>(i));
    rows.push_back(d.normalized());
  }
  kps.descriptors.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t r = 0; r < rows.size(); ++r) {
    kps.descriptors.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  }
  return kps;
}

SyntheticData BuildDataset(const World& world, const WorldConfig& config,
                           const TriangulationOptions& tri) {
  SyntheticData data;
  ReferenceDataset& ref = data.reference;
  ref.descriptor_dim = config.descriptor_dim;
  for (size_t v = 0; v < world.ref_poses.size(); ++v) {
    ReferenceView view;
    view.id = static_cast<int>(v);
    view.pose = world.ref_poses[v];
    view.intrinsics = config.intrinsics;
    view.keypoints = Observe(view.pose, view.intrinsics, world, config,
                             ReferenceStream(view.id));
    ref.views.push_back(std::move(view));
  }

  // Tracks by shared point id, in view order.
  std::vector<std::vector<Observation>> tracks(world.points.size());
  for (const ReferenceView& view : ref.views) {
    for (size_t k = 0; k < view.keypoints.size(); ++k) {
      Observation obs;
      obs.pose = &view.pose;
      obs.intrinsics = &view.intrinsics;
      obs.view_id = view.id;
      obs.pixel = view.keypoints.pixels[k];
      tracks[view.keypoints.point_ids[k]].push_back(obs);
    }
  }
  ref.points.resize(world.points.size());
  for (size_t i = 0; i < tracks.size(); ++i) {
    Point3D& point = ref.points[i];
    point.id = static_cast<int>(i);
    if (tracks[i].size() >= 2) {
      point = TriangulateDlt(tracks[i], tri);
      point.id = static_cast<int>(i);
    }
    if (!point.valid) point.position.setZero();
  }

  for (size_t q = 0; q < world.query_poses.size(); ++q) {
    QueryView view;
    view.id = static_cast<int>(q);
    view.intrinsics = config.intrinsics;
    view.keypoints = Observe(world.query_poses[q], view.intrinsics, world,
                             config, QueryStream(view.id));
    data.truth.query_point_ids.push_back(view.keypoints.point_ids);
    std::fill(view.keypoints.point_ids.begin(), view.keypoints.point_ids.end(),
              -1);
    data.queries.push_back(std::move(view));
  }
  data.truth.point_positions = world.points;
  data.truth.query_poses = world.query_poses;
  return data;
}

}  // namespace ncmap
