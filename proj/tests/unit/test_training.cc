#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.h"
#include "ncmap/decoder/params.h"
#include "ncmap/scene/scene_io.h"
#include "ncmap/training/trainer.h"
#include "ncmap/util/error.h"

namespace ncmap {
namespace {

using diff::Matrix;
using diff::Tape;
using diff::Tensor;

Sample MakeManualSample(const Matrix& targets, const std::vector<int>& in_voxel,
                        const Eigen::Vector3d& origin) {
  Sample s;
  s.origin = origin;
  s.targets = targets;
  s.labels = Matrix::Zero(targets.rows(), 1);
  s.in_voxel = in_voxel;
  for (int r : in_voxel) s.labels(r, 0) = 1.0;
  return s;
}

double CoordLoss(const std::vector<Matrix>& local, const std::vector<Sample>& samples) {
  Tape tape;
  std::vector<Tensor> tensors;
  std::vector<const Sample*> ptrs;
  for (size_t i = 0; i < local.size(); ++i) {
    tensors.push_back(Tensor::Leaf(local[i]));
    ptrs.push_back(&samples[i]);
  }
  return CoordinateLoss(tape, tensors, ptrs).item();
}

double ConfLoss(const std::vector<Matrix>& conf, const std::vector<Sample>& samples) {
  Tape tape;
  std::vector<Tensor> tensors;
  std::vector<const Sample*> ptrs;
  for (size_t i = 0; i < conf.size(); ++i) {
    tensors.push_back(Tensor::Leaf(conf[i]));
    ptrs.push_back(&samples[i]);
  }
  return ConfidenceLoss(tape, tensors, ptrs).item();
}

TEST(CoordinateLoss, ExactPredictionIsZero) {
  const Eigen::Vector3d origin(1, 2, 3);
  const Matrix targets = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  const Matrix local = targets.rowwise() - origin.transpose();
  EXPECT_EQ(CoordLoss({local}, {MakeManualSample(targets, {0, 1}, origin)}), 0.0);
}

TEST(CoordinateLoss, UnitNormExample) {
  const Matrix targets = Matrix::Zero(1, 3);
  const Matrix local = (Matrix(1, 3) << 1, 0, 0).finished();
  EXPECT_EQ(CoordLoss({local}, {MakeManualSample(targets, {0}, Eigen::Vector3d::Zero())}),
            1.0);
}

TEST(CoordinateLoss, NoInVoxelPointsIsZero) {
  const Matrix targets = Matrix::Ones(3, 3);
  EXPECT_EQ(CoordLoss({Matrix::Zero(3, 3)}, {MakeManualSample(targets, {}, Eigen::Vector3d::Zero())}),
            0.0);
}

TEST(CoordinateLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<Matrix> local;
  std::vector<Sample> samples;
  double sum = 0.0;
  int count = 0;
  for (int s = 0; s < 4; ++s) {
    const int n = 5 + s;
    Matrix pred(n, 3), targets(n, 3);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        pred(i, c) = u(rng);
        targets(i, c) = u(rng);
      }
    const Eigen::Vector3d origin(u(rng), u(rng), u(rng));
    std::vector<int> in_voxel;
    for (int i = 0; i < n; ++i) {
      if ((i + s) % 3 == 0) continue;
      in_voxel.push_back(i);
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = pred(i, c) + origin(c) - targets(i, c);
        sq += d * d;
      }
      sum += std::sqrt(sq);
      ++count;
    }
    local.push_back(pred);
    samples.push_back(MakeManualSample(targets, in_voxel, origin));
  }
  EXPECT_NEAR(CoordLoss(local, samples), sum / count, 1e-12);
}

TEST(ConfidenceLoss, HalfIsLnTwo) {
  const Matrix targets = Matrix::Zero(4, 3);
  const Sample s = MakeManualSample(targets, {0, 2}, Eigen::Vector3d::Zero());
  EXPECT_NEAR(ConfLoss({Matrix::Constant(4, 1, 0.5)}, {s}), std::numbers::ln2, 1e-15);
}

TEST(ConfidenceLoss, ConfidentAndCorrectTendsToZero) {
  const Sample s = MakeManualSample(Matrix::Zero(2, 3), {0, 1}, Eigen::Vector3d::Zero());
  const double loss = ConfLoss({Matrix::Constant(2, 1, 1.0)}, {s});
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 2e-7);
}

TEST(ConfidenceLoss, MatchesScalarOracleWithClamp) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Matrix> conf;
  std::vector<Sample> samples;
  double sum = 0.0;
  int count = 0;
  for (int s = 0; s < 3; ++s) {
    const int n = 6 + 2 * s;
    Matrix c(n, 1);
    std::vector<int> in_voxel;
    for (int i = 0; i < n; ++i) {
      c(i, 0) = i == 0 ? 0.0 : (i == 1 ? 1.0 : u(rng));
      if (u(rng) < 0.5) in_voxel.push_back(i);
    }
    const Sample sample = MakeManualSample(Matrix::Zero(n, 3), in_voxel, Eigen::Vector3d::Zero());
    for (int i = 0; i < n; ++i) {
      const double p = std::clamp(c(i, 0), 1e-7, 1.0 - 1e-7);
      const double y = sample.labels(i, 0);
      sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      ++count;
    }
    conf.push_back(c);
    samples.push_back(sample);
  }
  EXPECT_NEAR(ConfLoss(conf, samples), sum / count, 1e-10);
}

CodeBank BankWithScales(const std::vector<double>& w, int blocks) {
  CodeBank bank({blocks, static_cast<int>(w.size()), 4}, 1);
  for (int t = 0; t < blocks; ++t)
    for (size_t j = 0; j < w.size(); ++j) bank.mutable_scales(t).mutable_value()(j, 0) = w[j];
  return bank;
}

double L1(const std::vector<const CodeBank*>& banks) {
  Tape tape;
  return SparsityLoss(tape, banks).item();
}

TEST(SparsityLoss, CountsUnitScales) {
  const CodeBank bank = BankWithScales({1, 1, 1}, 2);
  EXPECT_EQ(L1({&bank}), 6.0);
}

TEST(SparsityLoss, ZeroScalesGiveZero) {
  const CodeBank bank = BankWithScales({0, 0, 0}, 2);
  EXPECT_EQ(L1({&bank}), 0.0);
}

TEST(SparsityLoss, MixedSignsAveragedOverBanks) {
  const CodeBank a = BankWithScales({0.5, -0.25, 2.0}, 2);
  const CodeBank b = BankWithScales({-1.0, 0.125, 0.0}, 2);
  const double oracle = (2 * (0.5 + 0.25 + 2.0) + 2 * (1.0 + 0.125)) / 2.0;
  EXPECT_NEAR(L1({&a, &b}), oracle, 1e-15);
  EXPECT_EQ(L1({}), 0.0);
}

TEST(TotalLoss, WeightedSum) {
  Tape tape;
  const Tensor x = Tensor::Scalar(0.5), c = Tensor::Scalar(0.2), l1 = Tensor::Scalar(0.1);
  EXPECT_NEAR(TotalLoss(tape, x, c, l1, 1, 1, 1).item(), 0.8, 1e-15);
  EXPECT_NEAR(TotalLoss(tape, x, c, l1, 1, 1, 0).item(), 0.7, 1e-15);
  EXPECT_NEAR(TotalLoss(tape, x, c, l1, 2, 3, 4).item(), 1.0 + 0.6 + 0.4, 1e-15);
}

TEST(TotalLoss, GradientCheckThroughBatchLoss) {
  testing::ToyProblem toy = testing::MakeToyProblem(3);
  ASSERT_GE(toy.scene.voxels.size(), 2u);
  toy.params.SetRequiresGrad(true);
  std::vector<Tensor> tensors = toy.params.Tensors();
  std::vector<Sample> samples;
  for (auto& [id, voxel] : toy.scene.voxels) {
    if (samples.size() == 2) break;
    voxel.bank.SetRequiresGrad(true);
    // Move scales away from the |w| kink.
    for (int t = 0; t < 2; ++t) voxel.bank.mutable_scales(t).mutable_value()(1, 0) = -0.7;
    for (const Tensor& t : voxel.bank.Tensors()) tensors.push_back(t);
    Sample s = MakeSample(toy.scene, voxel, toy.data.reference, voxel.covering_views.front());
    // Few rows keep the check fast.
    const int n = 6;
    s.descriptors = s.descriptors.topRows(n).eval();
    s.targets = s.targets.topRows(n).eval();
    s.labels = s.labels.topRows(n).eval();
    std::vector<int> kept;
    for (int r : s.in_voxel) if (r < n) kept.push_back(r);
    s.in_voxel = kept;
    samples.push_back(s);
  }
  std::vector<const Sample*> ptrs = {&samples[0], &samples[1]};
  const auto r = diff::CheckGradients(
      [&](Tape& t) { return BatchLoss(t, toy.params, toy.scene, ptrs, 1, 1, 1).total; }, tensors,
      1e-5, 1e-4, 1e-7);
  EXPECT_EQ(r.failed, 0u) << r.worst_slot << " " << r.max_rel_error;
  EXPECT_EQ(r.checked, toy.params.NumScalars() + 2u * 2u * 4u * 9u);
}

SceneRepresentation FiveVoxelScene(int views_per_voxel) {
  SceneRepresentation scene;
  scene.dims = {1, 2, 4};
  for (int i = 0; i < 5; ++i) {
    Voxel v;
    v.id = {i, 0, 0};
    v.members = {i};
    for (int k = 0; k < views_per_voxel; ++k) v.covering_views.push_back(10 * i + k);
    v.bank = CodeBank(scene.dims, i);
    scene.voxels[v.id] = v;
  }
  return scene;
}

TEST(SampleEpoch, PartitionIntoBatches) {
  const SceneRepresentation scene = FiveVoxelScene(3);
  Rng rng = MakeRng(1);
  const auto batches = SampleEpoch(scene, 2, rng);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 2u);
  EXPECT_EQ(batches[1].size(), 2u);
  EXPECT_EQ(batches[2].size(), 1u);
  std::set<VoxelId> seen;
  for (const auto& batch : batches) {
    for (const SampleRef& ref : batch) {
      EXPECT_TRUE(seen.insert(ref.voxel).second);
      const auto& views = scene.at(ref.voxel).covering_views;
      EXPECT_TRUE(std::find(views.begin(), views.end(), ref.view_id) != views.end());
    }
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(SampleEpoch, SameSeedSameSequence) {
  const SceneRepresentation scene = FiveVoxelScene(4);
  Rng a = MakeRng(7), b = MakeRng(7);
  for (int e = 0; e < 20; ++e) {
    const auto x = SampleEpoch(scene, 2, a);
    const auto y = SampleEpoch(scene, 2, b);
    ASSERT_EQ(x.size(), y.size());
    for (size_t i = 0; i < x.size(); ++i) {
      ASSERT_EQ(x[i].size(), y[i].size());
      for (size_t k = 0; k < x[i].size(); ++k) {
        EXPECT_EQ(x[i][k].voxel, y[i][k].voxel);
        EXPECT_EQ(x[i][k].view_id, y[i][k].view_id);
      }
    }
  }
}

TEST(SampleEpoch, ViewFrequenciesWithinBinomialBounds) {
  const SceneRepresentation scene = FiveVoxelScene(4);
  Rng rng = MakeRng(11);
  std::map<int, int> counts;
  const int epochs = 10000;
  for (int e = 0; e < epochs; ++e) {
    for (const auto& batch : SampleEpoch(scene, 3, rng))
      for (const SampleRef& ref : batch) ++counts[ref.view_id];
  }
  const double p = 0.25;
  const double mean = epochs * p;
  const double sigma = std::sqrt(epochs * p * (1 - p));
  ASSERT_EQ(counts.size(), 20u);
  for (const auto& [view, count] : counts) {
    EXPECT_LE(std::abs(count - mean), 3 * sigma) << "view " << view;
  }
}

TEST(SampleEpoch, UncoveredVoxelIsDataError) {
  SceneRepresentation scene = FiveVoxelScene(2);
  scene.at({3, 0, 0}).covering_views.clear();
  Rng rng = MakeRng(1);
  EXPECT_THROW(SampleEpoch(scene, 2, rng), DataError);
  EXPECT_THROW(SampleEpoch(FiveVoxelScene(2), 0, rng), InvalidArgument);
}

TEST(MakeSample, LabelsFollowMembership) {
  const testing::ToyProblem toy = testing::MakeToyProblem(4);
  const Voxel& voxel = toy.scene.voxels.begin()->second;
  const int view_id = voxel.covering_views.front();
  const Sample s = MakeSample(toy.scene, voxel, toy.data.reference, view_id);
  const ReferenceView* view = nullptr;
  for (const ReferenceView& v : toy.data.reference.views)
    if (v.id == view_id) view = &v;
  ASSERT_NE(view, nullptr);
  ASSERT_EQ(s.labels.rows(), static_cast<Eigen::Index>(view->keypoints.size()));
  const std::set<int> members(voxel.members.begin(), voxel.members.end());
  int positives = 0;
  for (size_t i = 0; i < view->keypoints.size(); ++i) {
    const Point3D& p = toy.data.reference.points[view->keypoints.point_ids[i]];
    const bool in = p.valid && members.count(p.id) > 0;
    EXPECT_EQ(s.labels(i, 0), in ? 1.0 : 0.0);
    if (p.valid) {
      EXPECT_EQ(s.targets.row(i), p.position.transpose());
    } else {
      EXPECT_EQ(s.targets.row(i), Matrix::Zero(1, 3));
    }
    positives += in ? 1 : 0;
  }
  EXPECT_EQ(static_cast<int>(s.in_voxel.size()), positives);
  EXPECT_GE(positives, 10);
}

TrainConfig QuickConfig(int epochs1, int epochs2) {
  TrainConfig c;
  c.epochs_stage1 = epochs1;
  c.epochs_stage2 = epochs2;
  c.epochs_adapt = epochs1;
  c.batch_voxels = 2;
  c.lr_codes = 0.005;
  c.lr_agnostic = 0.005;
  c.lr_halving_period = 2;
  return c;
}

TEST(Training, EachVoxelUpdatedOncePerEpoch) {
  testing::ToyProblem toy = testing::MakeToyProblem(5);
  const TrainConfig config = QuickConfig(3, 2);
  const TrainingResult result = RunTraining(toy.params, toy.scene, toy.data.reference, config);
  ASSERT_EQ(result.log.epochs.size(), 5u);
  for (const EpochLog& e : result.log.epochs) {
    EXPECT_EQ(e.min_voxel_updates, 1) << e.epoch;
    EXPECT_EQ(e.max_voxel_updates, 1) << e.epoch;
  }
  TrainingLog adapt_log;
  AdaptScene(toy.scene, toy.data.reference, toy.params, config, &adapt_log);
  for (const EpochLog& e : adapt_log.epochs) {
    EXPECT_EQ(e.min_voxel_updates, 1);
    EXPECT_EQ(e.max_voxel_updates, 1);
  }
}

TEST(Training, LogRecordsScheduleAndStages) {
  testing::ToyProblem toy = testing::MakeToyProblem(6);
  TrainConfig config = QuickConfig(3, 2);
  config.prune_threshold = 0.0;
  int callbacks = 0;
  const TrainingResult result = RunTraining(toy.params, toy.scene, toy.data.reference, config,
                                            [&](const EpochLog&) { ++callbacks; });
  EXPECT_EQ(callbacks, 5);
  const auto& e = result.log.epochs;
  ASSERT_EQ(e.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(e[i].epoch, i);
    EXPECT_EQ(e[i].stage, i < 3 ? 1 : 2);
    EXPECT_EQ(e[i].lr_agnostic, 0.005 * std::pow(0.5, i / 2));
    EXPECT_EQ(e[i].lr_codes, 0.005 * std::pow(0.5, i / 2));
    EXPECT_NEAR(e[i].total, e[i].coord + e[i].conf + (i < 3 ? e[i].sparsity : 0.0), 1e-12);
    EXPECT_EQ(e[i].retained_codes, toy.scene.TotalCodes());
  }
  const std::string csv = result.log.ToCsv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,stage,L_x,L_c,L_L1,total,lr_agnostic,lr_codes,retained_codes");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Training, SameSeedIsByteIdentical) {
  testing::ToyProblem a = testing::MakeToyProblem(7);
  testing::ToyProblem b = testing::MakeToyProblem(7);
  const TrainConfig config = QuickConfig(2, 1);
  const TrainingResult ra = RunTraining(a.params, a.scene, a.data.reference, config);
  const TrainingResult rb = RunTraining(b.params, b.scene, b.data.reference, config);
  EXPECT_EQ(SerializeScene(a.scene), SerializeScene(b.scene));
  EXPECT_EQ(SerializeParams(a.params), SerializeParams(b.params));
  EXPECT_EQ(ra.log.ToCsv(), rb.log.ToCsv());
}

double MeanAbsScale(const SceneRepresentation& scene) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [id, v] : scene.voxels)
    for (int t = 0; t < scene.dims.blocks; ++t) {
      sum += v.bank.scales(t).value().cwiseAbs().sum();
      n += scene.dims.codes;
    }
  return sum / n;
}

TEST(Training, SparsityTermShrinksScales) {
  testing::ToyProblem with = testing::MakeToyProblem(8);
  testing::ToyProblem without = testing::MakeToyProblem(8);
  TrainConfig config = QuickConfig(4, 0);
  TrainStage1(with.params, with.scene, with.data.reference, config);
  config.lambda_l1 = 0.0;
  TrainStage1(without.params, without.scene, without.data.reference, config);
  EXPECT_LT(MeanAbsScale(with.scene), MeanAbsScale(without.scene));
}

TEST(Training, PrunedCodesStayInertThroughStageTwo) {
  testing::ToyProblem toy = testing::MakeToyProblem(9);
  const TrainConfig config = QuickConfig(2, 3);
  TrainStage1(toy.params, toy.scene, toy.data.reference, config);
  Voxel& voxel = toy.scene.voxels.begin()->second;
  voxel.bank.PruneCode(0, 1);
  voxel.bank.PruneCode(1, 3);
  const SceneRepresentation before = toy.scene;
  TrainStage2(toy.params, toy.scene, toy.data.reference, config, 2);
  for (const auto& [id, v] : toy.scene.voxels) {
    const CodeBank& old = before.at(id).bank;
    for (int t = 0; t < 2; ++t) {
      EXPECT_EQ(v.bank.scales(t).value(), old.scales(t).value());
      for (int j = 0; j < 4; ++j) {
        if (old.pruned(t, j)) {
          EXPECT_TRUE(v.bank.pruned(t, j));
          EXPECT_EQ(v.bank.codes(t).value().row(j), old.codes(t).value().row(j));
          EXPECT_EQ(v.bank.codes(t).grad().row(j).cwiseAbs().maxCoeff(), 0.0);
        } else {
          EXPECT_NE(v.bank.codes(t).value().row(j), old.codes(t).value().row(j));
        }
      }
    }
  }
}

TEST(Training, StageTwoRejectsFullyPrunedScene) {
  testing::ToyProblem toy = testing::MakeToyProblem(10);
  TrainConfig config = QuickConfig(1, 1);
  config.prune_threshold = 1e9;
  EXPECT_THROW(RunTraining(toy.params, toy.scene, toy.data.reference, config), InvalidArgument);
}

TEST(Training, NonFiniteLossNamesEpochAndBatch) {
  testing::ToyProblem toy = testing::MakeToyProblem(11);
  for (ReferenceView& v : toy.data.reference.views) {
    v.keypoints.descriptors(0, 0) = std::numeric_limits<double>::quiet_NaN();
  }
  try {
    TrainStage1(toy.params, toy.scene, toy.data.reference, QuickConfig(1, 0));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  }
}

TEST(Adaptation, ZeroEpochsLeavesCodesUnchanged) {
  const testing::ToyProblem toy = testing::MakeToyProblem(12);
  TrainConfig config = QuickConfig(0, 0);
  config.epochs_adapt = 0;
  const SceneRepresentation adapted =
      AdaptScene(toy.scene, toy.data.reference, toy.params, config);
  EXPECT_EQ(SerializeScene(adapted), SerializeScene(toy.scene));
}

TEST(Adaptation, DecoderBytesFrozenAndOnlyCodesMove) {
  testing::ToyProblem toy = testing::MakeToyProblem(13);
  const std::string params_before = SerializeParams(toy.params);
  const SceneRepresentation scene_before = toy.scene;
  TrainConfig config = QuickConfig(2, 0);
  const SceneRepresentation adapted =
      AdaptScene(toy.scene, toy.data.reference, toy.params, config);
  EXPECT_EQ(SerializeParams(toy.params), params_before);
  EXPECT_TRUE(toy.scene == scene_before);
  for (const auto& [id, v] : adapted.voxels) {
    for (int t = 0; t < 2; ++t) {
      EXPECT_EQ(v.bank.scales(t).value(), scene_before.at(id).bank.scales(t).value());
      EXPECT_NE(v.bank.codes(t).value(), scene_before.at(id).bank.codes(t).value());
    }
  }
}

TEST(Adaptation, DimensionMismatchIsError) {
  const testing::ToyProblem toy = testing::MakeToyProblem(14);
  DecoderDims dims = toy.params.dims();
  dims.dim = 6;
  const DecoderParams other(dims, 1);
  EXPECT_THROW(AdaptScene(toy.scene, toy.data.reference, other, QuickConfig(1, 0)),
               DimensionError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.batch_voxels = 0;
  EXPECT_THROW(c.Validate(), InvalidArgument);
  c = TrainConfig{};
  c.lr_codes = -1;
  EXPECT_THROW(c.Validate(), InvalidArgument);
  c = TrainConfig{};
  c.prune_threshold = -0.1;
  EXPECT_THROW(c.Validate(), InvalidArgument);
  EXPECT_NO_THROW(TrainConfig{}.Validate());
}

}  // namespace
}  // namespace ncmap
