// ncmap: command-line front end for world generation, training, pruning,
// adaptation, localization, evaluation and attention heatmaps.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncmap/decoder/decoder.h"
#include "ncmap/decoder/params.h"
#include "ncmap/pipeline/config.h"
#include "ncmap/pipeline/evaluation.h"
#include "ncmap/pipeline/heatmap.h"
#include "ncmap/pipeline/localizer.h"
#include "ncmap/scene/scene.h"
#include "ncmap/scene/scene_io.h"
#include "ncmap/synth/dataset_io.h"
#include "ncmap/synth/world.h"
#include "ncmap/training/trainer.h"
#include "ncmap/util/binary_io.h"
#include "ncmap/util/error.h"

namespace fs = std::filesystem;
using namespace ncmap;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
};

RunConfig LoadConfig(const CommonArgs& args) {
  RunConfig config = DefaultRunConfig();
  if (!args.config_path.empty()) ApplyConfigFile(config, args.config_path);
  std::string text;
  for (const std::string& kv : args.overrides) text += kv + "\n";
  if (!text.empty()) ApplyConfigText(config, text, "--set");
  config.Validate();
  return config;
}

EpochCallback Progress(const CommonArgs& args) {
  if (args.quiet) return {};
  return [](const EpochLog& e) {
    std::fprintf(stderr,
                 "epoch %3d stage %d  L_x %.5f  L_c %.5f  L_L1 %.4f  total %.5f"
                 "  codes %d\n",
                 e.epoch, e.stage, e.coord, e.conf, e.sparsity, e.total,
                 e.retained_codes);
  };
}

VoxelId ParseVoxel(const std::string& text) {
  VoxelId id;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d%c", &id.ix, &id.iy, &id.iz, &tail) != 3) {
    throw InvalidArgument("voxel must be ix,iy,iz, got '" + text + "'");
  }
  return id;
}

void AddCommon(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "key=value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", args.overrides,
                  "override one config key (key=value), repeatable");
  cmd->add_flag("-q,--quiet", args.quiet, "no per-epoch progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural coordinate mapping: voxel code banks, a transdecoder "
               "and PnP-RANSAC localization"};
  app.require_subcommand(1);
  CommonArgs common;

  // gen
  std::string gen_out = ".";
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic world and dataset");
  AddCommon(gen, common);
  gen->add_option("-o,--out", gen_out, "output directory");

  // train
  std::string data_path, scene_path, weights_path, log_path, report_path;
  std::string scene_out, weights_out;
  bool full = false;
  CLI::App* train = app.add_subcommand(
      "train", "build a scene from a dataset and run stage-1 training");
  AddCommon(train, common);
  train->add_option("-d,--data", data_path, "dataset (.nmds)")->required();
  train->add_option("--scene-out", scene_out, "trained scene (.nmap)")->required();
  train->add_option("--weights-out", weights_out, "decoder weights (.nmwt)")
      ->required();
  train->add_option("--log", log_path, "training log CSV");
  train->add_flag("--full", full, "also prune and fine-tune");
  train->add_option("--prune-report", report_path, "prune report CSV (with --full)");

  // prune
  std::optional<double> threshold;
  CLI::App* prune = app.add_subcommand("prune", "zero codes with small scales");
  AddCommon(prune, common);
  prune->add_option("--scene", scene_path, "input scene (.nmap)")
      ->required()
      ->check(CLI::ExistingFile);
  prune->add_option("--scene-out", scene_out, "pruned scene (.nmap)")->required();
  prune->add_option("-t,--threshold", threshold,
                    "prune threshold (default: prune_threshold key)");
  prune->add_option("--report", report_path, "prune report CSV");

  // finetune
  CLI::App* finetune = app.add_subcommand(
      "finetune", "stage-2 training of decoder and unpruned codes");
  AddCommon(finetune, common);
  finetune->add_option("-d,--data", data_path, "dataset (.nmds)")->required();
  finetune->add_option("--scene", scene_path, "pruned scene (.nmap)")
      ->required()
      ->check(CLI::ExistingFile);
  finetune->add_option("--weights", weights_path, "decoder weights (.nmwt)")
      ->required()
      ->check(CLI::ExistingFile);
  finetune->add_option("--scene-out", scene_out, "fine-tuned scene")->required();
  finetune->add_option("--weights-out", weights_out, "fine-tuned weights")
      ->required();
  finetune->add_option("--log", log_path, "training log CSV");

  // adapt
  CLI::App* adapt = app.add_subcommand(
      "adapt", "fit the codes of a new scene with frozen decoder weights");
  AddCommon(adapt, common);
  adapt->add_option("-d,--data", data_path, "dataset of the new scene")->required();
  adapt->add_option("--weights", weights_path, "frozen decoder weights")
      ->required()
      ->check(CLI::ExistingFile);
  adapt->add_option("--scene", scene_path,
                    "initial scene (default: fresh codes built from the data)")
      ->check(CLI::ExistingFile);
  adapt->add_option("--scene-out", scene_out, "adapted scene")->required();
  adapt->add_option("--log", log_path, "adaptation log CSV");

  // localize
  std::string poses_path;
  CLI::App* localize = app.add_subcommand("localize", "estimate query poses");
  AddCommon(localize, common);
  localize->add_option("-d,--data", data_path, "dataset with queries")->required();
  localize->add_option("--scene", scene_path, "scene (.nmap)")
      ->required()
      ->check(CLI::ExistingFile);
  localize->add_option("--weights", weights_path, "decoder weights")
      ->required()
      ->check(CLI::ExistingFile);
  localize->add_option("-o,--out", poses_path, "poses CSV")->required();

  // eval
  std::string truth_path, eval_out;
  CLI::App* eval = app.add_subcommand("eval", "score poses against ground truth");
  AddCommon(eval, common);
  eval->add_option("--poses", poses_path, "poses CSV from localize")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path, "ground truth (.nmds)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--scene", scene_path, "scene, for the map size")
      ->check(CLI::ExistingFile);
  eval->add_option("-o,--out", eval_out, "report CSV");

  // inspect
  CLI::App* inspect = app.add_subcommand("inspect", "print scene statistics");
  AddCommon(inspect, common);
  inspect->add_option("--scene", scene_path, "scene (.nmap)")
      ->required()
      ->check(CLI::ExistingFile);
  inspect->add_option("--weights", weights_path, "decoder weights")
      ->check(CLI::ExistingFile);

  // heatmap
  int view_id = 0, block = 0, code = 0;
  std::string voxel_text, csv_path, pgm_path;
  std::optional<double> grid_step;
  CLI::App* heatmap = app.add_subcommand(
      "heatmap", "attention scores of one code over a reference view");
  AddCommon(heatmap, common);
  heatmap->add_option("-d,--data", data_path, "dataset (.nmds)")->required();
  heatmap->add_option("--scene", scene_path, "scene (.nmap)")
      ->required()
      ->check(CLI::ExistingFile);
  heatmap->add_option("--weights", weights_path, "decoder weights")
      ->required()
      ->check(CLI::ExistingFile);
  heatmap->add_option("--view", view_id, "reference view id")->required();
  heatmap->add_option("--voxel", voxel_text, "voxel ix,iy,iz")->required();
  heatmap->add_option("--block", block, "block index")->required();
  heatmap->add_option("--code", code, "code index")->required();
  heatmap->add_option("--csv", csv_path, "scores CSV")->required();
  heatmap->add_option("--pgm", pgm_path, "8-bit PGM (lattice keypoints only)");
  heatmap->add_option("--grid-step", grid_step,
                      "resample the view onto a pixel lattice with this step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig config = LoadConfig(common);
    const EpochCallback progress = Progress(common);

    if (gen->parsed()) {
      fs::create_directories(gen_out);
      const World world = GenerateWorld(config.world);
      const SyntheticData data = BuildDataset(world, config.world);
      SaveDataset(data.reference, data.queries, (fs::path(gen_out) / "dataset.nmds").string());
      SaveGroundTruth(data.truth, (fs::path(gen_out) / "truth.nmds").string());
      WriteFileBytes((fs::path(gen_out) / "manifest.json").string(),
                     DatasetManifest(data, config.world));
      std::cout << "views " << data.reference.views.size() << ", points "
                << data.reference.points.size() << ", queries "
                << data.queries.size() << " -> " << gen_out << "\n";
    } else if (train->parsed()) {
      const LocalizationData data = LoadDataset(data_path);
      SceneRepresentation scene = BuildScene(data.reference, config.scene);
      DecoderParams params(config.decoder, config.decoder_seed);
      TrainingLog log;
      if (full) {
        TrainingResult result =
            RunTraining(params, scene, data.reference, config.train, progress);
        log = std::move(result.log);
        if (!report_path.empty()) WriteFileBytes(report_path, result.prune.ToCsv());
      } else {
        log = TrainStage1(params, scene, data.reference, config.train, progress);
      }
      SaveScene(scene, scene_out);
      SaveParams(params, weights_out);
      if (!log_path.empty()) WriteFileBytes(log_path, log.ToCsv());
      std::cout << "voxels " << scene.voxels.size() << ", retained codes "
                << scene.RetainedCodes() << "/" << scene.TotalCodes()
                << ", map " << SizeBytes(scene) << " bytes\n";
    } else if (prune->parsed()) {
      SceneRepresentation scene = LoadScene(scene_path);
      const PruneReport report =
          Prune(scene, threshold.value_or(config.train.prune_threshold));
      SaveScene(scene, scene_out);
      if (!report_path.empty()) WriteFileBytes(report_path, report.ToCsv());
      std::cout << "pruned " << report.pruned_codes << ", retained "
                << report.retained_codes << ", bytes " << report.bytes_before
                << " -> " << report.bytes_after << "\n";
    } else if (finetune->parsed()) {
      const LocalizationData data = LoadDataset(data_path);
      SceneRepresentation scene = LoadScene(scene_path);
      DecoderParams params = LoadParams(weights_path);
      CheckCompatible(params, scene.dims);
      const TrainingLog log =
          TrainStage2(params, scene, data.reference, config.train,
                      config.train.epochs_stage1, progress);
      SaveScene(scene, scene_out);
      SaveParams(params, weights_out);
      if (!log_path.empty()) WriteFileBytes(log_path, log.ToCsv());
    } else if (adapt->parsed()) {
      const LocalizationData data = LoadDataset(data_path);
      const DecoderParams params = LoadParams(weights_path);
      const SceneRepresentation initial =
          scene_path.empty() ? BuildScene(data.reference, config.scene)
                             : LoadScene(scene_path);
      CheckCompatible(params, initial.dims);
      TrainingLog log;
      const SceneRepresentation adapted = AdaptScene(
          initial, data.reference, params, config.train, &log, progress);
      SaveScene(adapted, scene_out);
      if (!log_path.empty()) WriteFileBytes(log_path, log.ToCsv());
    } else if (localize->parsed()) {
      const LocalizationData data = LoadDataset(data_path);
      const SceneRepresentation scene = LoadScene(scene_path);
      const DecoderParams params = LoadParams(weights_path);
      CheckCompatible(params, scene.dims);
      const std::vector<LocalizationResult> results = LocalizeAll(
          data.queries, scene, params, data.reference, config.localize);
      WriteFileBytes(poses_path, PosesCsv(data.queries, results));
      int ok = 0;
      for (const LocalizationResult& r : results) ok += r.ok() ? 1 : 0;
      std::cout << "localized " << ok << "/" << results.size() << "\n";
      if (!common.quiet) {
        for (size_t q = 0; q < results.size(); ++q) {
          if (!results[q].ok()) {
            std::cerr << "query " << data.queries[q].id << ": "
                      << results[q].failure << "\n";
          }
        }
      }
    } else if (eval->parsed()) {
      const std::vector<std::optional<Pose>> poses =
          ParsePosesCsv(ReadFileBytes(poses_path));
      const GroundTruth truth = LoadGroundTruth(truth_path);
      const uint64_t size = scene_path.empty() ? 0 : SizeBytes(LoadScene(scene_path));
      const EvalReport report =
          EvaluatePoses(poses, truth.query_poses, kDefaultThresholds, size);
      if (!eval_out.empty()) WriteFileBytes(eval_out, report.ToCsv());
      std::cout << report.ToCsv() << "\n" << report.Summary();
    } else if (inspect->parsed()) {
      const SceneRepresentation scene = LoadScene(scene_path);
      std::cout << "format version " << scene.format_version << "\n"
                << "side length " << scene.side_length << " m\n"
                << "blocks " << scene.dims.blocks << ", codes per block "
                << scene.dims.codes << ", code dim " << scene.dims.dim << "\n"
                << "voxels " << scene.voxels.size() << "\n"
                << "retained codes " << scene.RetainedCodes() << "/"
                << scene.TotalCodes() << "\n"
                << "map size " << SizeBytes(scene) << " bytes (file overhead "
                << SceneFileOverheadBytes(scene) << ")\n";
      for (const auto& [id, voxel] : scene.voxels) {
        std::cout << "  voxel " << id.ToString() << " members "
                  << voxel.members.size() << " views "
                  << voxel.covering_views.size() << " codes "
                  << voxel.bank.RetainedCodes() << "\n";
      }
      if (!weights_path.empty()) {
        const DecoderParams params = LoadParams(weights_path);
        CheckCompatible(params, scene.dims);
        std::cout << "decoder scalars " << params.NumScalars() << "\n";
      }
    } else if (heatmap->parsed()) {
      const LocalizationData data = LoadDataset(data_path);
      const SceneRepresentation scene = LoadScene(scene_path);
      const DecoderParams params = LoadParams(weights_path);
      CheckCompatible(params, scene.dims);
      const ReferenceView* view = nullptr;
      for (const ReferenceView& v : data.reference.views) {
        if (v.id == view_id) view = &v;
      }
      if (!view) throw InvalidArgument("no reference view " + std::to_string(view_id));
      const VoxelId voxel = ParseVoxel(voxel_text);
      if (!scene.voxels.count(voxel)) {
        throw InvalidArgument("scene has no voxel " + voxel.ToString());
      }
      const Keypoints keypoints =
          grid_step ? ResampleOnGrid(view->keypoints, view->intrinsics, *grid_step)
                    : view->keypoints;
      const Heatmap map = ExportHeatmap(params, keypoints, scene.at(voxel).bank,
                                        block, code, csv_path, pgm_path);
      std::cout << "keypoints " << map.scores.raw.size()
                << (map.lattice ? ", lattice " + std::to_string(map.lattice->width) +
                                      "x" + std::to_string(map.lattice->height)
                                : std::string(", no lattice (CSV only)"))
                << "\n";
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
