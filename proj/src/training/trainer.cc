#include "ncmap/training/trainer.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ncmap/util/error.h"

namespace ncmap {
namespace {

const ReferenceView& FindView(const ReferenceDataset& dataset, int view_id) {
  if (view_id >= 0 && view_id < static_cast<int>(dataset.views.size()) &&
      dataset.views[view_id].id == view_id) {
    return dataset.views[view_id];
  }
  for (const ReferenceView& v : dataset.views) {
    if (v.id == view_id) return v;
  }
  throw DataError("unknown reference view " + std::to_string(view_id));
}

double Halved(double base, int epoch, int period) {
  return diff::StepSchedule{base, period, 0.5}.At(epoch);
}

std::vector<diff::Tensor> BankTensors(const SceneRepresentation& scene,
                                      std::span<const SampleRef> batch) {
  std::vector<diff::Tensor> out;
  for (const SampleRef& ref : batch) {
    for (const diff::Tensor& t : scene.at(ref.voxel).bank.Tensors()) {
      out.push_back(t);
    }
  }
  return out;
}

struct LoopSpec {
  int stage = 1;
  int first_epoch = 0;
  int epochs = 0;
  double lambda_l1 = 0.0;
  bool train_agnostic = true;
  uint64_t stream = 0;
};

// Shared epoch loop. `agnostic` may be empty when the decoder is frozen.
TrainingLog RunLoop(const DecoderParams& params, SceneRepresentation& scene,
                    const ReferenceDataset& dataset, const TrainConfig& config,
                    diff::Optimizer& optimizer,
                    const std::vector<diff::Tensor>& agnostic,
                    const LoopSpec& spec, const EpochCallback& callback) {
  TrainingLog log;
  Rng rng = MakeRng(config.seed, 0x7A11, spec.stream);
  for (int e = 0; e < spec.epochs; ++e) {
    const int epoch = spec.first_epoch + e;
    const double lr_agnostic =
        Halved(config.lr_agnostic, epoch, config.lr_halving_period);
    const double lr_codes =
        Halved(config.lr_codes, epoch, config.lr_halving_period);
    if (spec.train_agnostic) optimizer.SetLearningRate("agnostic", lr_agnostic);
    optimizer.SetLearningRate("codes", lr_codes);

    EpochLog entry;
    entry.epoch = epoch;
    entry.stage = spec.stage;
    entry.lr_agnostic = spec.train_agnostic ? lr_agnostic : 0.0;
    entry.lr_codes = lr_codes;

    std::map<VoxelId, long> touches_before;
    for (const auto& [id, voxel] : scene.voxels) {
      touches_before[id] = optimizer.Touches(voxel.bank.codes(0));
    }

    const auto batches = SampleEpoch(scene, config.batch_voxels, rng);
    for (size_t b = 0; b < batches.size(); ++b) {
      try {
        std::vector<Sample> samples;
        samples.reserve(batches[b].size());
        for (const SampleRef& ref : batches[b]) {
          samples.push_back(
              MakeSample(scene, scene.at(ref.voxel), dataset, ref.view_id));
        }
        std::vector<const Sample*> ptrs;
        for (const Sample& s : samples) ptrs.push_back(&s);

        diff::Tape tape;
        const LossTerms loss = BatchLoss(tape, params, scene, ptrs,
                                         config.lambda_x, config.lambda_c,
                                         spec.lambda_l1);
        tape.Backward(loss.total);
        std::vector<diff::Tensor> active = BankTensors(scene, batches[b]);
        active.insert(active.end(), agnostic.begin(), agnostic.end());
        optimizer.Step(active);

        entry.coord += loss.coord.item();
        entry.conf += loss.conf.item();
        entry.sparsity += loss.sparsity.item();
        entry.total += loss.total.item();
      } catch (const NumericError& err) {
        throw NumericError("stage " + std::to_string(spec.stage) + " epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(b) + ": " + err.what());
      }
    }
    const double n = static_cast<double>(std::max<size_t>(batches.size(), 1));
    entry.coord /= n;
    entry.conf /= n;
    entry.sparsity /= n;
    entry.total /= n;
    entry.retained_codes = scene.RetainedCodes();
    bool first = true;
    for (const auto& [id, voxel] : scene.voxels) {
      const long updates =
          optimizer.Touches(voxel.bank.codes(0)) - touches_before[id];
      entry.min_voxel_updates = first ? updates : std::min(entry.min_voxel_updates, updates);
      entry.max_voxel_updates = first ? updates : std::max(entry.max_voxel_updates, updates);
      first = false;
    }
    log.epochs.push_back(entry);
    if (callback) callback(entry);
  }
  return log;
}

std::vector<diff::Tensor> AllCodeTensors(const SceneRepresentation& scene) {
  std::vector<diff::Tensor> out;
  for (const auto& [id, voxel] : scene.voxels) {
    for (const diff::Tensor& t : voxel.bank.Tensors()) out.push_back(t);
  }
  return out;
}

void FreezePrunedRows(diff::Optimizer& optimizer,
                      const SceneRepresentation& scene) {
  for (const auto& [id, voxel] : scene.voxels) {
    for (int t = 0; t < scene.dims.blocks; ++t) {
      std::vector<int> rows;
      for (int j = 0; j < scene.dims.codes; ++j) {
        if (voxel.bank.pruned(t, j)) rows.push_back(j);
      }
      if (!rows.empty()) optimizer.FreezeRows(voxel.bank.codes(t), rows);
    }
  }
}

}  // namespace

void TrainConfig::Validate() const {
  if (lambda_x < 0 || lambda_c < 0 || lambda_l1 < 0) {
    throw InvalidArgument("loss weights must be >= 0");
  }
  if (!(lr_agnostic >= 0) || !(lr_codes >= 0)) {
    throw InvalidArgument("learning rates must be >= 0");
  }
  if (epochs_stage1 < 0 || epochs_stage2 < 0 || epochs_adapt < 0) {
    throw InvalidArgument("epoch counts must be >= 0");
  }
  if (batch_voxels < 1) throw InvalidArgument("batch_voxels must be >= 1");
  if (lr_halving_period < 1) {
    throw InvalidArgument("lr_halving_period must be >= 1");
  }
  if (!(prune_threshold >= 0)) {
    throw InvalidArgument("prune_threshold must be >= 0");
  }
  if (min_points < 1) throw InvalidArgument("min_points must be >= 1");
}

diff::Tensor CoordinateLoss(diff::Tape& tape, std::span<const diff::Tensor> local,
                            std::span<const Sample* const> samples) {
  NCMAP_CHECK(local.size() == samples.size(), DimensionError,
              "coordinate loss: prediction/sample count mismatch");
  diff::Tensor sum;
  size_t count = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    if (s.in_voxel.empty()) continue;
    NCMAP_CHECK(local[i].rows() == s.targets.rows() && local[i].cols() == 3,
                DimensionError, "coordinate loss: prediction shape mismatch");
    const diff::Tensor pred = tape.GatherRows(local[i], s.in_voxel);
    diff::Matrix target(static_cast<Eigen::Index>(s.in_voxel.size()), 3);
    for (size_t r = 0; r < s.in_voxel.size(); ++r) {
      target.row(static_cast<Eigen::Index>(r)) = s.targets.row(s.in_voxel[r]);
    }
    const diff::Tensor world =
        tape.AddRow(pred, diff::Tensor::Leaf(s.origin.transpose()));
    const diff::Tensor term = tape.Sum(
        tape.RowNorms(tape.Sub(world, diff::Tensor::Leaf(std::move(target)))));
    sum = sum.defined() ? tape.Add(sum, term) : term;
    count += s.in_voxel.size();
  }
  if (count == 0) return diff::Tensor::Scalar(0.0);
  return tape.Scale(sum, 1.0 / static_cast<double>(count));
}

diff::Tensor ConfidenceLoss(diff::Tape& tape,
                            std::span<const diff::Tensor> confidence,
                            std::span<const Sample* const> samples) {
  NCMAP_CHECK(confidence.size() == samples.size(), DimensionError,
              "confidence loss: prediction/sample count mismatch");
  diff::Tensor sum;
  Eigen::Index count = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->labels.rows() == 0) continue;
    const diff::Tensor term = tape.BceSum(confidence[i], samples[i]->labels);
    sum = sum.defined() ? tape.Add(sum, term) : term;
    count += samples[i]->labels.rows();
  }
  if (count == 0) return diff::Tensor::Scalar(0.0);
  return tape.Scale(sum, 1.0 / static_cast<double>(count));
}

diff::Tensor SparsityLoss(diff::Tape& tape,
                          std::span<const CodeBank* const> banks) {
  if (banks.empty()) return diff::Tensor::Scalar(0.0);
  diff::Tensor sum;
  for (const CodeBank* bank : banks) {
    for (const diff::Tensor& w : bank->ScaleTensors()) {
      const diff::Tensor term = tape.AbsSum(w);
      sum = sum.defined() ? tape.Add(sum, term) : term;
    }
  }
  return tape.Scale(sum, 1.0 / static_cast<double>(banks.size()));
}

diff::Tensor TotalLoss(diff::Tape& tape, const diff::Tensor& coord,
                       const diff::Tensor& conf, const diff::Tensor& sparsity,
                       double lambda_x, double lambda_c, double lambda_l1) {
  diff::Tensor total = tape.Add(tape.Scale(coord, lambda_x),
                                tape.Scale(conf, lambda_c));
  return tape.Add(total, tape.Scale(sparsity, lambda_l1));
}

Sample MakeSample(const SceneRepresentation& scene, const Voxel& voxel,
                  const ReferenceDataset& dataset, int view_id) {
  (void)scene;
  const ReferenceView& view = FindView(dataset, view_id);
  const Keypoints& kp = view.keypoints;
  const Eigen::Index n = static_cast<Eigen::Index>(kp.size());
  Sample s;
  s.voxel = voxel.id;
  s.view_id = view_id;
  s.origin = voxel.origin;
  s.descriptors = kp.descriptors;
  s.targets = diff::Matrix::Zero(n, 3);
  s.labels = diff::Matrix::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point3D* p = dataset.FindPoint(kp.point_ids[static_cast<size_t>(i)]);
    if (p == nullptr || !p->valid) continue;
    s.targets.row(i) = p->position.transpose();
    if (std::binary_search(voxel.members.begin(), voxel.members.end(), p->id)) {
      s.labels(i, 0) = 1.0;
      s.in_voxel.push_back(static_cast<int>(i));
    }
  }
  return s;
}

std::vector<std::vector<SampleRef>> SampleEpoch(const SceneRepresentation& scene,
                                                int batch_voxels, Rng& rng) {
  if (batch_voxels < 1) throw InvalidArgument("batch size must be >= 1");
  std::vector<VoxelId> order;
  for (const auto& [id, voxel] : scene.voxels) {
    if (voxel.covering_views.empty()) {
      throw DataError("voxel " + id.ToString() + " has no covering view");
    }
    order.push_back(id);
  }
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<SampleRef>> batches;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch_voxels)) {
    std::vector<SampleRef> batch;
    const size_t end = std::min(order.size(), i + static_cast<size_t>(batch_voxels));
    for (size_t k = i; k < end; ++k) {
      const std::vector<int>& views = scene.at(order[k]).covering_views;
      std::uniform_int_distribution<size_t> pick(0, views.size() - 1);
      batch.push_back(SampleRef{order[k], views[pick(rng)]});
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

LossTerms BatchLoss(diff::Tape& tape, const DecoderParams& params,
                    const SceneRepresentation& scene,
                    std::span<const Sample* const> samples, double lambda_x,
                    double lambda_c, double lambda_l1) {
  std::vector<diff::Tensor> local;
  std::vector<diff::Tensor> confidence;
  std::vector<const CodeBank*> banks;
  for (const Sample* s : samples) {
    const CodeBank& bank = scene.at(s->voxel).bank;
    const diff::Tensor features =
        EncodeFeatures(tape, params, diff::Tensor::Leaf(s->descriptors));
    const DecoderOutput out = DecodeFeatures(tape, params, features, bank);
    local.push_back(out.local);
    confidence.push_back(out.confidence);
    banks.push_back(&bank);
  }
  LossTerms terms;
  terms.coord = CoordinateLoss(tape, local, samples);
  terms.conf = ConfidenceLoss(tape, confidence, samples);
  terms.sparsity = SparsityLoss(tape, banks);
  terms.total = TotalLoss(tape, terms.coord, terms.conf, terms.sparsity,
                          lambda_x, lambda_c, lambda_l1);
  return terms;
}

std::string TrainingLog::ToCsv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,stage,L_x,L_c,L_L1,total,lr_agnostic,lr_codes,retained_codes\n";
  for (const EpochLog& e : epochs) {
    out << e.epoch << ',' << e.stage << ',' << e.coord << ',' << e.conf << ','
        << e.sparsity << ',' << e.total << ',' << e.lr_agnostic << ','
        << e.lr_codes << ',' << e.retained_codes << '\n';
  }
  return out.str();
}

TrainingLog TrainStage1(DecoderParams& params, SceneRepresentation& scene,
                        const ReferenceDataset& dataset, const TrainConfig& config,
                        const EpochCallback& callback) {
  config.Validate();
  CheckCompatible(params, scene.dims);
  params.SetRequiresGrad(true);
  for (auto& [id, voxel] : scene.voxels) voxel.bank.SetRequiresGrad(true);

  diff::Optimizer optimizer({.kind = config.optimizer});
  const std::vector<diff::Tensor> agnostic = params.Tensors();
  const std::vector<diff::Tensor> codes = AllCodeTensors(scene);
  optimizer.AddGroup("agnostic", agnostic, config.lr_agnostic);
  optimizer.AddGroup("codes", codes, config.lr_codes);
  FreezePrunedRows(optimizer, scene);

  LoopSpec spec{.stage = 1,
                .first_epoch = 0,
                .epochs = config.epochs_stage1,
                .lambda_l1 = config.lambda_l1,
                .train_agnostic = true,
                .stream = 1};
  return RunLoop(params, scene, dataset, config, optimizer, agnostic, spec,
                 callback);
}

TrainingLog TrainStage2(DecoderParams& params, SceneRepresentation& scene,
                        const ReferenceDataset& dataset, const TrainConfig& config,
                        int first_epoch, const EpochCallback& callback) {
  config.Validate();
  CheckCompatible(params, scene.dims);
  if (scene.RetainedCodes() == 0) {
    throw InvalidArgument("every code is pruned; nothing left to fine-tune");
  }
  params.SetRequiresGrad(true);
  for (auto& [id, voxel] : scene.voxels) voxel.bank.SetRequiresGrad(true);

  diff::Optimizer optimizer({.kind = config.optimizer});
  const std::vector<diff::Tensor> agnostic = params.Tensors();
  optimizer.AddGroup("agnostic", agnostic, config.lr_agnostic);
  optimizer.AddGroup("codes", AllCodeTensors(scene), config.lr_codes);
  for (const auto& [id, voxel] : scene.voxels) {
    for (const diff::Tensor& w : voxel.bank.ScaleTensors()) optimizer.Freeze(w);
  }
  FreezePrunedRows(optimizer, scene);

  LoopSpec spec{.stage = 2,
                .first_epoch = first_epoch,
                .epochs = config.epochs_stage2,
                .lambda_l1 = 0.0,
                .train_agnostic = true,
                .stream = 2};
  return RunLoop(params, scene, dataset, config, optimizer, agnostic, spec,
                 callback);
}

TrainingResult RunTraining(DecoderParams& params, SceneRepresentation& scene,
                           const ReferenceDataset& dataset,
                           const TrainConfig& config,
                           const EpochCallback& callback) {
  TrainingResult result;
  result.log = TrainStage1(params, scene, dataset, config, callback);
  result.prune = Prune(scene, config.prune_threshold);
  TrainingLog stage2 = TrainStage2(params, scene, dataset, config,
                                   config.epochs_stage1, callback);
  result.log.epochs.insert(result.log.epochs.end(), stage2.epochs.begin(),
                           stage2.epochs.end());
  return result;
}

SceneRepresentation AdaptScene(const SceneRepresentation& scene,
                               const ReferenceDataset& dataset,
                               const DecoderParams& params,
                               const TrainConfig& config, TrainingLog* log,
                               const EpochCallback& callback) {
  config.Validate();
  CheckCompatible(params, scene.dims);
  DecoderParams frozen(params);
  frozen.SetRequiresGrad(false);

  SceneRepresentation adapted = scene;
  for (auto& [id, voxel] : adapted.voxels) voxel.bank.SetRequiresGrad(true);

  diff::Optimizer optimizer({.kind = config.optimizer});
  optimizer.AddGroup("codes", AllCodeTensors(adapted), config.lr_codes);
  if (!config.adapt_scales) {
    for (const auto& [id, voxel] : adapted.voxels) {
      for (const diff::Tensor& w : voxel.bank.ScaleTensors()) {
        optimizer.Freeze(w);
      }
    }
  }
  FreezePrunedRows(optimizer, adapted);

  LoopSpec spec{.stage = 0,
                .first_epoch = 0,
                .epochs = config.epochs_adapt,
                .lambda_l1 = config.adapt_scales ? config.lambda_l1 : 0.0,
                .train_agnostic = false,
                .stream = 3};
  TrainingLog result = RunLoop(frozen, adapted, dataset, config, optimizer, {},
                               spec, callback);
  if (log != nullptr) *log = std::move(result);
  return adapted;
}

}  // namespace ncmap
