// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "ncmap/decoder/decoder.h"
#include "ncmap/decoder/params.h"
#include "ncmap/diff/tape.h"
#include "ncmap/geometry/camera.h"
#include "ncmap/geometry/pnp.h"
#include "ncmap/geometry/pose_error.h"
#include "ncmap/geometry/triangulation.h"
#include "ncmap/pipeline/config.h"
#include "ncmap/pipeline/evaluation.h"
#include "ncmap/pipeline/localizer.h"
#include "ncmap/scene/scene.h"
#include "ncmap/scene/scene_io.h"
#include "ncmap/scene/voxel_grid.h"
#include "ncmap/synth/dataset_io.h"
#include "ncmap/synth/world.h"
#include "ncmap/training/trainer.h"
#include "ncmap/util/binary_io.h"
#include "ncmap/util/error.h"

namespace ncmap {
namespace {

using diff::Matrix;
using diff::Tape;
using diff::Tensor;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void Report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient soundness

Outcome GradientSoundness() {
  const auto start = Clock::now();
  WorldConfig wc;
  wc.num_points = 300;
  wc.num_ref_views = 10;
  wc.num_query_views = 1;
  wc.descriptor_dim = 8;
  wc.seed = 5;
  const SyntheticData data = BuildDataset(GenerateWorld(wc), wc);
  SceneBuildOptions so;
  so.dims = {2, 3, 8};
  so.min_points = 5;
  so.seed = 5;
  so.drop_uncovered = true;
  SceneRepresentation scene = BuildScene(data.reference, so);
  if (scene.voxels.size() < 2) return {false, "fewer than two voxels"};

  DecoderDims dims;
  dims.raw_dim = 8;
  dims.dim = 8;
  dims.blocks = 2;
  dims.encoder_hidden = dims.block_hidden = dims.head_hidden = 8;
  DecoderParams params(dims, 5);
  params.SetRequiresGrad(true);
  std::vector<Tensor> tensors = params.Tensors();

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Sample> samples;
  for (auto& [id, voxel] : scene.voxels) {
    if (samples.size() == 2) break;
    // Codes and scales away from zero so the |w| term is differentiable.
    for (int t = 0; t < 2; ++t) {
      for (Eigen::Index i = 0; i < 3; ++i) {
        voxel.bank.mutable_scales(t).mutable_value()(i, 0) = (i % 2 ? -1.0 : 1.0) * (0.5 + 0.5 * std::abs(u(rng)));
        for (Eigen::Index c = 0; c < 8; ++c) voxel.bank.mutable_codes(t).mutable_value()(i, c) = u(rng);
      }
    }
    voxel.bank.SetRequiresGrad(true);
    for (const Tensor& t : voxel.bank.Tensors()) tensors.push_back(t);
    Sample s = MakeSample(scene, voxel, data.reference, voxel.covering_views.front());
    const int n = static_cast<int>(std::min<Eigen::Index>(8, s.descriptors.rows()));
    s.descriptors = s.descriptors.topRows(n).eval();
    s.targets = s.targets.topRows(n).eval();
    s.labels = s.labels.topRows(n).eval();
    std::vector<int> kept;
    for (int r : s.in_voxel)
      if (r < n) kept.push_back(r);
    s.in_voxel = kept;
    samples.push_back(std::move(s));
  }
  const std::vector<const Sample*> ptrs = {&samples[0], &samples[1]};
  const auto result = diff::CheckGradients(
      [&](Tape& t) { return BatchLoss(t, params, scene, ptrs, 1.0, 1.0, 1.0).total; }, tensors,
      1e-5, 1e-4, 1e-7);
  const double elapsed = Seconds(start);
  Outcome o;
  o.pass = result.failed == 0 && elapsed < 60.0;
  o.detail = Fmt("%zu slots checked, %zu failed, max abs err %.1e, max rel err above the "
                 "1e-7 floor %.1e, %.1f s (< 60 s)",
                 result.checked, result.failed, result.max_abs_error, result.max_rel_error, elapsed);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Geometric exactness

Pose CameraAround(std::mt19937_64& rng, double depth) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d dir(n(rng), n(rng), n(rng));
  dir.normalize();
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  if (std::abs(dir.dot(up)) > 0.9) up = Eigen::Vector3d::UnitX();
  return Pose::LookAt(depth * dir, Eigen::Vector3d::Zero(), up);
}

std::vector<Eigen::Vector3d> Cloud(std::mt19937_64& rng, int n, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return pts;
}

Outcome GeometricExactness() {
  const Intrinsics K;
  std::mt19937_64 rng(2);
  double pnp_t = 0.0, pnp_r = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Pose truth = CameraAround(rng, 5.0);
    std::vector<Correspondence> corrs;
    for (const auto& x : Cloud(rng, 12, 1.5)) corrs.push_back({*Project(truth, K, x), x, 1.0});
    const Pose est = PnpSolve(corrs, K);
    pnp_t = std::max(pnp_t, (est.Center() - truth.Center()).norm());
    pnp_r = std::max(pnp_r, Eigen::AngleAxisd(est.rotation.transpose() * truth.rotation).angle());
  }

  double tri = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d x = Cloud(rng, 1, 1.0).front();
    std::vector<Pose> poses;
    for (int v = 0; v < 4; ++v) poses.push_back(CameraAround(rng, 5.0));
    std::vector<Observation> obs;
    for (int v = 0; v < 4; ++v) obs.push_back({&poses[v], &K, v, *Project(poses[v], K, x)});
    const Point3D p = TriangulateDlt(obs);
    tri = std::max(tri, p.valid ? (p.position - x).norm() : 1e300);
  }

  int good = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 r(1000 + seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Pose truth = CameraAround(r, 5.0);
    const auto pts = Cloud(r, 200, 1.5);
    std::vector<Correspondence> corrs;
    for (int i = 0; i < 200; ++i) {
      Correspondence c{*Project(truth, K, pts[i]), pts[i], 1.0};
      if (i < 140) {
        c.pixel += Eigen::Vector2d(noise(r), noise(r));
      } else {
        c.pixel = Eigen::Vector2d(u(r) * K.width, u(r) * K.height);
      }
      corrs.push_back(c);
    }
    const RansacResult res = RansacPnp(corrs, K, {.inlier_tolerance = 3.0, .seed = seed});
    if (res.pose && (res.pose->Center() - truth.Center()).norm() < 0.05) ++good;
  }

  Outcome o;
  o.pass = pnp_t < 1e-6 && pnp_r < 1e-6 && tri < 1e-8 && good >= 95;
  o.detail = Fmt("pnp max err %.1e m / %.1e rad (< 1e-6), triangulation max err %.1e m (< 1e-8), "
                 "ransac 30%% outliers %d/100 within 0.05 m (>= 95)",
                 pnp_t, pnp_r, tri, good);
  return o;
}

// ---------------------------------------------------------------------------
// Shared desk-scale experiment for criteria 3-6 and 8.

struct DeskRun {
  RunConfig config;
  SyntheticData data;
  SceneRepresentation scene_initial;
  SceneRepresentation scene_unpruned;
  SceneRepresentation scene_pruned;
  DecoderParams params_unpruned;
  DecoderParams params_pruned;
  EvalReport eval_unpruned;
  EvalReport eval_pruned;
  double final_coord_loss = 0.0;
  double prune_threshold = 0.0;
  double retained_fraction = 0.0;
  double seconds_unpruned = 0.0;
};

EvalReport LocalizeAndEvaluate(const SceneRepresentation& scene, const DecoderParams& params,
                               const SyntheticData& data, const LocalizeOptions& options) {
  const auto results = LocalizeAll(data.queries, scene, params, data.reference, options);
  return Evaluate(results, data.truth.query_poses, kDefaultThresholds, SizeBytes(scene));
}

// Smallest threshold that retains at most half of the codes.
double HalvingThreshold(const SceneRepresentation& scene) {
  std::vector<double> w;
  for (const auto& [id, v] : scene.voxels)
    for (int t = 0; t < scene.dims.blocks; ++t)
      for (int j = 0; j < scene.dims.codes; ++j) w.push_back(std::abs(v.bank.scales(t).value()(j, 0)));
  std::sort(w.begin(), w.end());
  return w[(w.size() + 1) / 2];
}

DeskRun RunDesk() {
  DeskRun run;
  run.config = DefaultRunConfig();
  const RunConfig& c = run.config;
  auto start = Clock::now();
  run.data = BuildDataset(GenerateWorld(c.world), c.world);
  run.scene_initial = BuildScene(run.data.reference, c.scene);
  std::printf("desk: %zu voxels, %zu reference views, %zu queries\n", run.scene_initial.voxels.size(),
              run.data.reference.views.size(), run.data.queries.size());

  SceneRepresentation scene = run.scene_initial;
  DecoderParams params(c.decoder, c.decoder_seed);
  TrainStage1(params, scene, run.data.reference, c.train);
  std::printf("desk: stage 1 done in %.0f s\n", Seconds(start));
  std::fflush(stdout);

  // Unpruned branch.
  run.scene_unpruned = scene;
  run.params_unpruned = params;
  const TrainingLog log = TrainStage2(run.params_unpruned, run.scene_unpruned, run.data.reference,
                                      c.train, c.train.epochs_stage1);
  run.final_coord_loss = log.epochs.empty() ? 0.0 : log.epochs.back().coord;
  run.eval_unpruned = LocalizeAndEvaluate(run.scene_unpruned, run.params_unpruned, run.data, c.localize);
  run.seconds_unpruned = Seconds(start);

  // Pruned branch.
  const auto pruned_start = Clock::now();
  run.scene_pruned = scene;
  run.params_pruned = params;
  run.prune_threshold = std::max(c.train.prune_threshold, HalvingThreshold(scene));
  Prune(run.scene_pruned, run.prune_threshold);
  run.retained_fraction =
      static_cast<double>(run.scene_pruned.RetainedCodes()) / run.scene_pruned.TotalCodes();
  TrainStage2(run.params_pruned, run.scene_pruned, run.data.reference, c.train, c.train.epochs_stage1);
  run.eval_pruned = LocalizeAndEvaluate(run.scene_pruned, run.params_pruned, run.data, c.localize);
  std::printf("desk: pruned branch done in %.0f s\n", Seconds(pruned_start));
  std::fflush(stdout);
  return run;
}

Outcome DeskLocalization(const DeskRun& run) {
  const EvalReport& r = run.eval_unpruned;
  const double l = run.config.scene.side_length;
  Outcome o;
  o.pass = r.accuracy[0] >= 0.90 && r.median_translation_m < 0.05 && run.seconds_unpruned < 900.0;
  o.detail = Fmt("acc@(0.25 m, 2 deg) %.1f%% (>= 90%%), median %.3f m / %.2f deg (< 0.05 m), "
                 "failures %d, final L_x %.3f (0.05 l = %.2f), %.0f s (< 900 s)",
                 100.0 * r.accuracy[0], r.median_translation_m, r.median_rotation_deg, r.failures,
                 run.final_coord_loss, 0.05 * l, run.seconds_unpruned);
  return o;
}

Outcome PruningEconomy(const DeskRun& run) {
  const double drop = run.eval_unpruned.accuracy[0] - run.eval_pruned.accuracy[0];
  const double size_drop = 1.0 - static_cast<double>(run.eval_pruned.map_size_bytes) /
                                     static_cast<double>(run.eval_unpruned.map_size_bytes);
  Outcome o;
  o.pass = run.retained_fraction <= 0.5 && drop <= 0.10 && size_drop >= 0.45;
  o.detail = Fmt("threshold %.4f retains %.1f%% of codes (<= 50%%), acc %.1f%% -> %.1f%% "
                 "(drop %.1f pp <= 10), size %llu -> %llu bytes (-%.1f%% >= 45%%)",
                 run.prune_threshold, 100.0 * run.retained_fraction,
                 100.0 * run.eval_unpruned.accuracy[0], 100.0 * run.eval_pruned.accuracy[0],
                 100.0 * drop, static_cast<unsigned long long>(run.eval_unpruned.map_size_bytes),
                 static_cast<unsigned long long>(run.eval_pruned.map_size_bytes), 100.0 * size_drop);
  return o;
}

struct AdaptRun {
  Outcome outcome;
  bool params_frozen = false;
};

AdaptRun SceneAdaptation(const DeskRun& run) {
  const auto start = Clock::now();
  RunConfig c = run.config;
  c.world.seed = run.config.world.seed + 1000;
  c.scene.seed = run.config.scene.seed + 1000;
  const SyntheticData data = BuildDataset(GenerateWorld(c.world), c.world);
  const SceneRepresentation fresh = BuildScene(data.reference, c.scene);
  const std::string before = SerializeParams(run.params_unpruned);
  const SceneRepresentation adapted =
      AdaptScene(fresh, data.reference, run.params_unpruned, c.train);
  AdaptRun out;
  out.params_frozen = SerializeParams(run.params_unpruned) == before;
  const EvalReport r = LocalizeAndEvaluate(adapted, run.params_unpruned, data, c.localize);
  out.outcome.pass = out.params_frozen && r.accuracy[0] >= 0.80;
  out.outcome.detail =
      Fmt("world seed %llu, %zu voxels, %d epochs codes-only, decoder bytes %s, "
          "acc@(0.25 m, 2 deg) %.1f%% (>= 80%%), median %.3f m, %.0f s",
          static_cast<unsigned long long>(c.world.seed), adapted.voxels.size(), c.train.epochs_adapt,
          out.params_frozen ? "unchanged" : "CHANGED", 100.0 * r.accuracy[0],
          r.median_translation_m, Seconds(start));
  return out;
}

Outcome ConfidenceClassification(const DeskRun& run) {
  const SceneRepresentation& scene = run.scene_unpruned;
  const DecoderParams& params = run.params_unpruned;
  const ReferenceDataset& ref = run.data.reference;
  long tp = 0, fn = 0, tn = 0, fp = 0;
  for (size_t q = 0; q < run.data.queries.size(); ++q) {
    const Keypoints& kp = run.data.queries[q].keypoints;
    const std::vector<int>& ids = run.data.truth.query_point_ids[q];
    const Matrix features = EncodeFeatures(params, kp.descriptors);
    for (const auto& [id, voxel] : scene.voxels) {
      const auto preds = Decode(params, features, voxel.bank, id, voxel.origin);
      for (size_t i = 0; i < preds.size(); ++i) {
        const Point3D* p = ref.FindPoint(ids[i]);
        const bool member = p != nullptr && p->valid &&
                            std::binary_search(voxel.members.begin(), voxel.members.end(), p->id);
        const bool predicted = preds[i].confidence >= 0.5;
        if (member) {
          (predicted ? tp : fn) += 1;
        } else {
          (predicted ? fp : tn) += 1;
        }
      }
    }
  }
  const double tpr = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double tnr = tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
  const double balanced = 0.5 * (tpr + tnr);
  Outcome o;
  o.pass = balanced >= 0.90;
  o.detail = Fmt("held-out query views, %ld members / %ld non-members: TPR %.3f, TNR %.3f, "
                 "balanced accuracy %.3f (>= 0.90)",
                 tp + fn, tn + fp, tpr, tnr, balanced);
  return o;
}

// ---------------------------------------------------------------------------
// 7. Oracle equivalence

struct OracleCheck {
  std::string name;
  double deviation = 0.0;
  double tolerance = 0.0;
};

double VoxelizeDeviation() {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back({i, Eigen::Vector3d(u(rng), u(rng), u(rng)), i % 11 != 0});
  const double l = 4.0;
  std::map<VoxelId, std::vector<int>> expected;
  for (const Point3D& p : pts) {
    if (!p.valid) continue;
    const VoxelId id{static_cast<int>(std::floor(p.position.x() / l)),
                     static_cast<int>(std::floor(p.position.y() / l)),
                     static_cast<int>(std::floor(p.position.z() / l))};
    expected[id].push_back(p.id);
  }
  const auto cells = Voxelize(pts, l);
  if (cells.size() != expected.size()) return 1.0;
  for (const auto& [id, members] : expected) {
    auto it = cells.find(id);
    if (it == cells.end() || it->second != members) return 1.0;
  }
  return 0.0;
}

double CoverageDeviation(const SyntheticData& data) {
  SceneBuildOptions so;
  so.dims = {1, 2, 4};
  so.min_points = 1;
  so.drop_uncovered = true;
  SceneRepresentation scene = BuildScene(data.reference, so);
  for (int min_points : {1, 7, 20, 40}) {
    AssignCoverage(scene, data.reference, min_points);
    for (const auto& [id, voxel] : scene.voxels) {
      std::vector<int> expected;
      for (const ReferenceView& v : data.reference.views) {
        int count = 0;
        for (int pid : v.keypoints.point_ids) {
          const Point3D& p = data.reference.points[pid];
          if (p.valid && VoxelOf(p.position, scene.side_length) == id) ++count;
        }
        if (count >= min_points) expected.push_back(v.id);
      }
      if (voxel.covering_views != expected) return 1.0;
    }
  }
  return 0.0;
}

double RetrievalDeviation(const SyntheticData& data) {
  const RetrievalIndex index(data.reference);
  double worst = 0.0;
  for (const QueryView& q : data.queries) {
    const Eigen::RowVectorXd qm = q.keypoints.descriptors.colwise().mean();
    std::vector<std::pair<double, int>> scored;
    for (const ReferenceView& v : data.reference.views) {
      const Eigen::RowVectorXd vm = v.keypoints.descriptors.colwise().mean();
      scored.emplace_back(qm.dot(vm) / (qm.norm() * vm.norm()), v.id);
    }
    const auto sims = index.Similarities(q.keypoints);
    for (size_t i = 0; i < scored.size(); ++i) worst = std::max(worst, std::abs(sims[i] - scored[i].first));
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const auto ranked = index.Retrieve(q.keypoints, static_cast<int>(scored.size()));
    for (size_t i = 0; i < ranked.size(); ++i)
      if (ranked[i] != scored[i].second) return 1.0;
  }
  return worst;
}

std::vector<double> OracleLayerNorm(std::vector<double> x, const LayerNormParams& n) {
  const double d = static_cast<double>(x.size());
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v;
  mean /= d;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= d;
  for (size_t c = 0; c < x.size(); ++c) {
    x[c] = (x[c] - mean) / std::sqrt(var + 1e-6) * n.gain.value()(0, c) + n.bias.value()(0, c);
  }
  return x;
}

double AttentionDeviation() {
  DecoderDims dims;
  dims.raw_dim = 6;
  dims.dim = 8;
  dims.blocks = 1;
  dims.encoder_hidden = dims.block_hidden = dims.head_hidden = 7;
  const DecoderParams params(dims, 72);
  CodeBank bank({1, 3, 8}, 73);
  std::mt19937_64 rng(74);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int j = 0; j < 3; ++j) {
    bank.mutable_scales(0).mutable_value()(j, 0) = 0.5 + std::abs(u(rng));
    for (int c = 0; c < 8; ++c) bank.mutable_codes(0).mutable_value()(j, c) = u(rng);
  }
  Matrix f(6, 8);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = 2.0 * u(rng);
  Tape tape;
  tape.set_recording(false);
  const Tensor out = CrossAttentionBlock(tape, params.blocks[0], Tensor::Leaf(f), bank, 0);
  const BlockParams& p = params.blocks[0];
  double worst = 0.0;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> q(8, 0.0);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) q[r] += p.wq.value()(r, c) * f(i, c);
    std::vector<double> logits(3, 0.0);
    std::vector<std::vector<double>> values(3, std::vector<double>(8, 0.0));
    for (int j = 0; j < 3; ++j) {
      const double w = bank.scales(0).value()(j, 0);
      for (int r = 0; r < 8; ++r) {
        double k = 0.0;
        for (int c = 0; c < 8; ++c) {
          k += p.wk.value()(r, c) * w * bank.codes(0).value()(j, c);
          values[j][r] += p.wv.value()(r, c) * w * bank.codes(0).value()(j, c);
        }
        logits[j] += q[r] * k;
      }
      logits[j] /= std::sqrt(8.0);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& s : logits) z += (s = std::exp(s - mx));
    std::vector<double> h(8);
    for (int c = 0; c < 8; ++c) {
      h[c] = f(i, c);
      for (int j = 0; j < 3; ++j) h[c] += logits[j] / z * values[j][c];
    }
    h = OracleLayerNorm(h, p.norm_attention);
    std::vector<double> m = h;
    for (size_t l = 0; l < p.mlp.layers.size(); ++l) {
      const Linear& layer = p.mlp.layers[l];
      std::vector<double> next(layer.weight.rows());
      for (int r = 0; r < layer.weight.rows(); ++r) {
        next[r] = layer.bias.value()(0, r);
        for (int c = 0; c < layer.weight.cols(); ++c) next[r] += layer.weight.value()(r, c) * m[c];
        if (l + 1 < p.mlp.layers.size()) next[r] = std::max(0.0, next[r]);
      }
      m = next;
    }
    for (int c = 0; c < 8; ++c) m[c] += h[c];
    m = OracleLayerNorm(m, p.norm_mlp);
    for (int c = 0; c < 8; ++c) worst = std::max(worst, std::abs(out.value()(i, c) - m[c]));
  }
  return worst;
}

struct LossDeviations {
  double coord = 0.0;
  double conf = 0.0;
  double sparsity = 0.0;
};

LossDeviations LossDeviation() {
  std::mt19937_64 rng(75);
  std::uniform_real_distribution<double> u(-3.0, 3.0), p01(0.0, 1.0);
  std::vector<Sample> samples;
  std::vector<Tensor> local, conf;
  double coord_sum = 0.0, bce_sum = 0.0;
  int coord_n = 0, bce_n = 0;
  for (int s = 0; s < 5; ++s) {
    const int n = 7 + s;
    Sample smp;
    smp.origin = Eigen::Vector3d(u(rng), u(rng), u(rng));
    smp.targets = Matrix(n, 3);
    smp.labels = Matrix::Zero(n, 1);
    Matrix pred(n, 3), c(n, 1);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) {
        pred(i, k) = u(rng);
        smp.targets(i, k) = u(rng);
      }
      c(i, 0) = i == 0 ? 1.0 : p01(rng);
      if (p01(rng) < 0.4) {
        smp.labels(i, 0) = 1.0;
        smp.in_voxel.push_back(i);
        double sq = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double d = pred(i, k) + smp.origin(k) - smp.targets(i, k);
          sq += d * d;
        }
        coord_sum += std::sqrt(sq);
        ++coord_n;
      }
      const double pc = std::clamp(c(i, 0), 1e-7, 1.0 - 1e-7);
      const double y = smp.labels(i, 0);
      bce_sum += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
      ++bce_n;
    }
    samples.push_back(smp);
    local.push_back(Tensor::Leaf(pred));
    conf.push_back(Tensor::Leaf(c));
  }
  std::vector<const Sample*> ptrs;
  for (const Sample& s : samples) ptrs.push_back(&s);

  std::vector<CodeBank> banks;
  double l1_sum = 0.0;
  for (int b = 0; b < 3; ++b) {
    CodeBank bank({2, 4, 4}, 76 + b);
    for (int t = 0; t < 2; ++t)
      for (int j = 0; j < 4; ++j) {
        const double w = u(rng);
        bank.mutable_scales(t).mutable_value()(j, 0) = w;
        l1_sum += std::abs(w);
      }
    banks.push_back(bank);
  }
  std::vector<const CodeBank*> bank_ptrs;
  for (const CodeBank& b : banks) bank_ptrs.push_back(&b);

  Tape tape;
  LossDeviations d;
  d.coord = std::abs(CoordinateLoss(tape, local, ptrs).item() - coord_sum / coord_n);
  d.conf = std::abs(ConfidenceLoss(tape, conf, ptrs).item() - bce_sum / bce_n);
  d.sparsity = std::abs(SparsityLoss(tape, bank_ptrs).item() - l1_sum / 3.0);
  return d;
}

double EvaluateDeviation() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Pose> truth;
  std::vector<std::optional<Pose>> est;
  std::vector<double> t_err, r_err;
  for (int i = 0; i < 101; ++i) {
    const Pose p = Pose::LookAt({6 + u(rng), 3 * u(rng), 1 + u(rng)}, {0, 0, 0});
    truth.push_back(p);
    if (u(rng) < 0.1) {
      est.emplace_back();
      continue;
    }
    const Eigen::Vector3d axis = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    const double angle_deg = 0.5 + 11.5 * u(rng);
    const Eigen::Vector3d offset = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized() * u(rng);
    Pose e;
    e.rotation = Eigen::AngleAxisd(angle_deg * std::numbers::pi / 180.0, axis).toRotationMatrix() *
                 p.rotation;
    const Eigen::Vector3d center = -p.rotation.transpose() * p.translation + offset;
    e.translation = -e.rotation * center;
    est.push_back(e);
    // Independent error oracle: camera centers and the quaternion half-angle.
    const Eigen::Vector3d c_est = -e.rotation.transpose() * e.translation;
    const Eigen::Vector3d c_true = -p.rotation.transpose() * p.translation;
    t_err.push_back((c_est - c_true).norm());
    const Eigen::Quaterniond dq(e.rotation * p.rotation.transpose());
    r_err.push_back(2.0 * std::atan2(dq.vec().norm(), std::abs(dq.w())) * 180.0 / std::numbers::pi);
  }
  const EvalReport report = EvaluatePoses(est, truth);
  double worst = 0.0;
  for (size_t k = 0; k < kDefaultThresholds.size(); ++k) {
    int hits = 0;
    for (size_t i = 0; i < t_err.size(); ++i) {
      hits += t_err[i] <= kDefaultThresholds[k].translation_m &&
              r_err[i] <= kDefaultThresholds[k].rotation_deg;
    }
    worst = std::max(worst, std::abs(report.accuracy[k] - hits / 101.0));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  };
  worst = std::max(worst, std::abs(report.median_translation_m - median(t_err)));
  worst = std::max(worst, std::abs(report.median_rotation_deg - median(r_err)));
  if (report.failures != 101 - static_cast<int>(t_err.size())) return 1.0;
  return worst;
}

Outcome OracleEquivalence() {
  WorldConfig wc;
  wc.num_points = 600;
  wc.num_ref_views = 20;
  wc.num_query_views = 5;
  wc.descriptor_dim = 16;
  wc.seed = 70;
  const SyntheticData data = BuildDataset(GenerateWorld(wc), wc);
  const LossDeviations loss = LossDeviation();
  const std::vector<OracleCheck> checks = {
      {"voxelize", VoxelizeDeviation(), 0.0},
      {"coverage", CoverageDeviation(data), 0.0},
      {"retrieval", RetrievalDeviation(data), 1e-12},
      {"attention", AttentionDeviation(), 1e-10},
      {"coord_loss", loss.coord, 1e-12},
      {"conf_loss", loss.conf, 1e-10},
      {"l1_loss", loss.sparsity, 1e-12},
      {"evaluate", EvaluateDeviation(), 1e-10},
  };
  Outcome o;
  o.pass = true;
  for (const OracleCheck& c : checks) {
    o.pass = o.pass && c.deviation <= c.tolerance;
    if (!o.detail.empty()) o.detail += ", ";
    o.detail += Fmt("%s %.1e (<= %.0e)", c.name.c_str(), c.deviation, c.tolerance);
  }
  return o;
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence

struct PipelineBytes {
  std::string dataset, scene, weights, log, poses, eval;
};

PipelineBytes SmallPipeline() {
  RunConfig c = DefaultRunConfig();
  c.world.num_points = 500;
  c.world.num_ref_views = 16;
  c.world.num_query_views = 4;
  c.world.descriptor_dim = 16;
  c.scene.dims = {2, 4, 8};
  c.scene.min_points = 10;
  c.decoder.raw_dim = 16;
  c.decoder.dim = 8;
  c.decoder.blocks = 2;
  c.decoder.encoder_hidden = c.decoder.block_hidden = c.decoder.head_hidden = 16;
  c.train.epochs_stage1 = 3;
  c.train.epochs_stage2 = 2;
  c.train.prune_threshold = 0.9;
  const SyntheticData data = BuildDataset(GenerateWorld(c.world), c.world);
  SceneRepresentation scene = BuildScene(data.reference, c.scene);
  DecoderParams params(c.decoder, c.decoder_seed);
  const TrainingResult trained = RunTraining(params, scene, data.reference, c.train);
  const auto results = LocalizeAll(data.queries, scene, params, data.reference, c.localize);
  PipelineBytes out;
  out.dataset = SerializeDataset(data.reference, data.queries) + SerializeGroundTruth(data.truth);
  out.scene = SerializeScene(scene);
  out.weights = SerializeParams(params);
  out.log = trained.log.ToCsv();
  out.poses = PosesCsv(data.queries, results);
  out.eval = Evaluate(results, data.truth.query_poses, kDefaultThresholds, SizeBytes(scene)).ToCsv();
  return out;
}

// Same structure and pruning, values equal after rounding to the stored float32.
bool MatchesAtFilePrecision(const SceneRepresentation& loaded, const SceneRepresentation& scene) {
  if (loaded.side_length != scene.side_length || !(loaded.dims == scene.dims) ||
      loaded.voxels.size() != scene.voxels.size()) {
    return false;
  }
  for (const auto& [id, v] : scene.voxels) {
    const auto it = loaded.voxels.find(id);
    if (it == loaded.voxels.end()) return false;
    const Voxel& l = it->second;
    if (l.origin != v.origin || l.members != v.members || l.covering_views != v.covering_views) {
      return false;
    }
    for (int t = 0; t < scene.dims.blocks; ++t) {
      for (int j = 0; j < scene.dims.codes; ++j) {
        if (l.bank.pruned(t, j) != v.bank.pruned(t, j)) return false;
        if (l.bank.scales(t).value()(j, 0) != static_cast<float>(v.bank.scales(t).value()(j, 0))) {
          return false;
        }
        if (v.bank.pruned(t, j)) continue;
        const Eigen::RowVectorXd stored = v.bank.codes(t).value().row(j).cast<float>().cast<double>();
        if (l.bank.codes(t).value().row(j) != stored) return false;
      }
    }
  }
  return true;
}

Outcome DeterminismAndPersistence(const DeskRun& run, bool adaptation_frozen) {
  const PipelineBytes a = SmallPipeline();
  const PipelineBytes b = SmallPipeline();
  const bool identical = a.dataset == b.dataset && a.scene == b.scene && a.weights == b.weights &&
                         a.log == b.log && a.poses == b.poses && a.eval == b.eval;

  const auto dir = std::filesystem::temp_directory_path() / "ncmap_acceptance";
  std::filesystem::create_directories(dir);
  const std::string scene_path = (dir / "scene.nmap").string();
  const std::string weights_path = (dir / "weights.nmwt").string();
  const std::string data_path = (dir / "data.nmds").string();
  const std::string truth_path = (dir / "truth.nmds").string();
  SaveScene(run.scene_pruned, scene_path);
  SaveParams(run.params_pruned, weights_path);
  SaveDataset(run.data.reference, run.data.queries, data_path);
  SaveGroundTruth(run.data.truth, truth_path);
  const LocalizationData loaded = LoadDataset(data_path);
  const bool round_trips =
      SerializeScene(LoadScene(scene_path)) == ReadFileBytes(scene_path) &&
      SerializeParams(LoadParams(weights_path)) == ReadFileBytes(weights_path) &&
      SerializeDataset(loaded.reference, loaded.queries) == ReadFileBytes(data_path) &&
      SerializeGroundTruth(LoadGroundTruth(truth_path)) == ReadFileBytes(truth_path) &&
      MatchesAtFilePrecision(LoadScene(scene_path), run.scene_pruned);
  std::filesystem::remove_all(dir);

  Outcome o;
  o.pass = identical && round_trips && adaptation_frozen;
  o.detail = Fmt("repeat runs byte-identical (dataset, scene, weights, log, poses, eval): %s; "
                 "save/load round trips byte-identical: %s; decoder bytes frozen through adaptation: %s",
                 identical ? "yes" : "NO", round_trips ? "yes" : "NO",
                 adaptation_frozen ? "yes" : "NO");
  return o;
}

int Run() {
  const auto start = Clock::now();
  Report(1, "gradient soundness", GradientSoundness());
  Report(2, "geometric exactness", GeometricExactness());
  Report(7, "oracle equivalence", OracleEquivalence());
  const DeskRun desk = RunDesk();
  Report(3, "desk localization", DeskLocalization(desk));
  Report(4, "pruning economy", PruningEconomy(desk));
  const AdaptRun adapt = SceneAdaptation(desk);
  Report(5, "scene adaptation", adapt.outcome);
  Report(6, "confidence classification", ConfidenceClassification(desk));
  Report(8, "determinism and persistence", DeterminismAndPersistence(desk, adapt.params_frozen));
  std::printf("%d of 8 criteria failed, total %.0f s\n", g_failures, Seconds(start));
  return g_failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace ncmap

int main() {
  try {
    return ncmap::Run();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
}
