#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "ncmap/decoder/params.h"
#include "ncmap/scene/scene.h"
#include "ncmap/synth/dataset.h"
#include "ncmap/synth/world.h"

namespace ncmap::testing {

// Small random reference dataset: `num_points` points in [0, extent)^3 and
// `num_views` views, each observing a random subset of the valid points with
// random unit descriptors. Poses are identity; only the bookkeeping matters.
inline ReferenceDataset RandomDataset(int num_points, int num_views,
                                      double extent, double observe_prob,
                                      int descriptor_dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  ReferenceDataset ds;
  ds.descriptor_dim = descriptor_dim;
  for (int i = 0; i < num_points; ++i) {
    Point3D p;
    p.id = i;
    p.position = Eigen::Vector3d(u(rng), u(rng), u(rng)) * extent;
    p.valid = u(rng) > 0.1;
    ds.points.push_back(p);
  }
  for (int v = 0; v < num_views; ++v) {
    ReferenceView view;
    view.id = v;
    std::vector<int> ids;
    for (int i = 0; i < num_points; ++i) {
      if (u(rng) < observe_prob) ids.push_back(i);
    }
    view.keypoints.descriptors.resize(static_cast<Eigen::Index>(ids.size()),
                                      descriptor_dim);
    for (size_t k = 0; k < ids.size(); ++k) {
      view.keypoints.pixels.emplace_back(640 * u(rng), 480 * u(rng));
      view.keypoints.point_ids.push_back(ids[k]);
      Eigen::RowVectorXd d(descriptor_dim);
      for (int c = 0; c < descriptor_dim; ++c) d(c) = n(rng);
      view.keypoints.descriptors.row(static_cast<Eigen::Index>(k)) = d.normalized();
    }
    ds.views.push_back(std::move(view));
  }
  return ds;
}

// A reduced synthetic world that builds and trains in seconds.
inline WorldConfig SmallWorldConfig() {
  WorldConfig c;
  c.num_points = 400;
  c.num_ref_views = 12;
  c.num_query_views = 3;
  c.descriptor_dim = 16;
  return c;
}

// Small world, scene and decoder sized for quick training runs.
struct ToyProblem {
  WorldConfig world_config;
  SyntheticData data;
  SceneRepresentation scene;
  DecoderParams params;
};

inline ToyProblem MakeToyProblem(uint64_t seed = 1) {
  ToyProblem toy;
  toy.world_config = SmallWorldConfig();
  toy.world_config.seed = seed;
  toy.data = BuildDataset(GenerateWorld(toy.world_config), toy.world_config);
  SceneBuildOptions opt;
  opt.dims = {2, 4, 8};
  opt.min_points = 10;
  opt.seed = seed;
  opt.drop_uncovered = true;
  toy.scene = BuildScene(toy.data.reference, opt);
  DecoderDims dims;
  dims.raw_dim = toy.world_config.descriptor_dim;
  dims.dim = 8;
  dims.blocks = 2;
  dims.encoder_hidden = dims.block_hidden = dims.head_hidden = 12;
  toy.params = DecoderParams(dims, seed);
  return toy;
}

}  // namespace ncmap::testing
