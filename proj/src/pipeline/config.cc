#include "ncmap/pipeline/config.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "ncmap/util/binary_io.h"

namespace ncmap {
namespace {

std::string_view Trim(std::string_view s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseDouble(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

template <typename Int>
Int ParseInt(std::string_view v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool ParseBool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

Eigen::Vector3d ParseVec3(std::string_view v) {
  Eigen::Vector3d out;
  for (int a = 0; a < 3; ++a) {
    const size_t comma = v.find(',');
    if ((a < 2) != (comma != std::string_view::npos)) {
      throw ConfigError("expected x,y,z");
    }
    out(a) = ParseDouble(Trim(v.substr(0, comma)));
    if (a < 2) v = v.substr(comma + 1);
  }
  return out;
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string FormatVec3(const Eigen::Vector3d& v) {
  return FormatDouble(v.x()) + "," + FormatDouble(v.y()) + "," +
         FormatDouble(v.z());
}

template <typename Field>
ConfigKey Real(std::string name, std::string doc, Field field) {
  return {std::move(name), std::move(doc),
          [field](RunConfig& c, std::string_view v) { field(c) = ParseDouble(v); },
          [field](const RunConfig& c) {
            return FormatDouble(field(c));
          }};
}

template <typename Int, typename Field>
ConfigKey Integer(std::string name, std::string doc, Field field) {
  return {std::move(name), std::move(doc),
          [field](RunConfig& c, std::string_view v) { field(c) = ParseInt<Int>(v); },
          [field](const RunConfig& c) {
            return std::to_string(field(c));
          }};
}

template <typename Field>
ConfigKey Flag(std::string name, std::string doc, Field field) {
  return {std::move(name), std::move(doc),
          [field](RunConfig& c, std::string_view v) { field(c) = ParseBool(v); },
          [field](const RunConfig& c) {
            return std::string(field(c) ? "true" : "false");
          }};
}

template <typename Field>
ConfigKey Vec3(std::string name, std::string doc, Field field) {
  return {std::move(name), std::move(doc),
          [field](RunConfig& c, std::string_view v) { field(c) = ParseVec3(v); },
          [field](const RunConfig& c) {
            return FormatVec3(field(c));
          }};
}

std::vector<ConfigKey> BuildKeys() {
  std::vector<ConfigKey> k;
  // World.
  k.push_back(Integer<int>("num_points", "scene points in the world box",
                           [](auto& c) -> auto& { return c.world.num_points; }));
  k.push_back(Vec3("box_min", "lower corner of the world box, meters (x,y,z)",
                   [](auto& c) -> auto& { return c.world.box_min; }));
  k.push_back(Vec3("extent", "world box size per axis, meters (x,y,z)",
                   [](auto& c) -> auto& { return c.world.extent; }));
  k.push_back(Integer<int>("num_ref_views", "reference (mapping) views",
                           [](auto& c) -> auto& { return c.world.num_ref_views; }));
  k.push_back(Integer<int>("num_query_views", "query views to localize",
                           [](auto& c) -> auto& { return c.world.num_query_views; }));
  k.push_back(Real("fx", "focal length x, pixels",
                   [](auto& c) -> auto& { return c.world.intrinsics.fx; }));
  k.push_back(Real("fy", "focal length y, pixels",
                   [](auto& c) -> auto& { return c.world.intrinsics.fy; }));
  k.push_back(Real("cx", "principal point x, pixels",
                   [](auto& c) -> auto& { return c.world.intrinsics.cx; }));
  k.push_back(Real("cy", "principal point y, pixels",
                   [](auto& c) -> auto& { return c.world.intrinsics.cy; }));
  k.push_back(Integer<int>("image_width", "image width, pixels",
                           [](auto& c) -> auto& { return c.world.intrinsics.width; }));
  k.push_back(Integer<int>("image_height", "image height, pixels",
                           [](auto& c) -> auto& { return c.world.intrinsics.height; }));
  k.push_back(Real("pixel_noise", "keypoint position noise sigma per axis, pixels",
                   [](auto& c) -> auto& { return c.world.pixel_noise; }));
  k.push_back(Integer<int>("descriptor_dim", "raw descriptor width D_raw",
                           [](auto& c) -> auto& { return c.world.descriptor_dim; }));
  k.push_back(Real("descriptor_noise", "expected norm of per-observation descriptor noise",
                   [](auto& c) -> auto& { return c.world.descriptor_noise; }));
  k.push_back(Real("illumination_shift", "expected norm of the per-view descriptor shift",
                   [](auto& c) -> auto& { return c.world.illumination_shift; }));
  k.push_back(Real("appearance_min_wavelength", "shortest appearance wavelength, meters",
                   [](auto& c) -> auto& { return c.world.appearance_min_wavelength; }));
  k.push_back(Real("appearance_max_wavelength", "longest appearance wavelength, meters",
                   [](auto& c) -> auto& { return c.world.appearance_max_wavelength; }));
  k.push_back(Integer<uint64_t>("appearance_seed", "seed of the shared appearance field",
                                [](auto& c) -> auto& { return c.world.appearance_seed; }));
  k.push_back(Real("min_depth", "nearest visible depth, meters",
                   [](auto& c) -> auto& { return c.world.min_depth; }));
  k.push_back(Real("max_depth", "farthest visible depth, meters",
                   [](auto& c) -> auto& { return c.world.max_depth; }));
  k.push_back(Real("frustum_margin", "border excluded from the image, pixels",
                   [](auto& c) -> auto& { return c.world.frustum_margin; }));
  k.push_back(Real("ref_orbit_radius", "reference orbit radius, meters",
                   [](auto& c) -> auto& { return c.world.ref_orbit_radius; }));
  k.push_back(Real("ref_orbit_height", "reference orbit height above the box center, meters",
                   [](auto& c) -> auto& { return c.world.ref_orbit_height; }));
  k.push_back(Real("ref_jitter", "reference camera and target jitter, meters",
                   [](auto& c) -> auto& { return c.world.ref_jitter; }));
  k.push_back(Real("query_radius_min", "minimum query distance from the box center, meters",
                   [](auto& c) -> auto& { return c.world.query_radius_min; }));
  k.push_back(Real("query_radius_max", "maximum query distance from the box center, meters",
                   [](auto& c) -> auto& { return c.world.query_radius_max; }));
  k.push_back(Real("query_height_min", "minimum query height above the box center, meters",
                   [](auto& c) -> auto& { return c.world.query_height_min; }));
  k.push_back(Real("query_height_max", "maximum query height above the box center, meters",
                   [](auto& c) -> auto& { return c.world.query_height_max; }));
  k.push_back(Real("query_min_baseline", "minimum distance from any reference camera, meters",
                   [](auto& c) -> auto& { return c.world.query_min_baseline; }));
  k.push_back(Integer<uint64_t>("world_seed", "seed of points, cameras and noise",
                                [](auto& c) -> auto& { return c.world.seed; }));
  // Scene.
  k.push_back(Real("side_length", "voxel side length l, meters",
                   [](auto& c) -> auto& { return c.scene.side_length; }));
  k.push_back(Integer<int>("blocks", "cross-attention blocks T",
                           [](auto& c) -> auto& { return c.scene.dims.blocks; }));
  k.push_back(Integer<int>("codes", "codes per block and voxel N",
                           [](auto& c) -> auto& { return c.scene.dims.codes; }));
  k.push_back(Integer<int>("dim", "feature and code width D",
                           [](auto& c) -> auto& { return c.scene.dims.dim; }));
  k.push_back(Integer<int>("min_points", "member observations for a view to cover a voxel",
                           [](auto& c) -> auto& { return c.scene.min_points; }));
  k.push_back(Integer<uint64_t>("scene_seed", "seed of code initialization",
                                [](auto& c) -> auto& { return c.scene.seed; }));
  k.push_back(Real("code_init_std", "standard deviation of initial codes",
                   [](auto& c) -> auto& { return c.scene.code_init_std; }));
  k.push_back(Flag("drop_uncovered", "drop voxels no view covers instead of failing",
                   [](auto& c) -> auto& { return c.scene.drop_uncovered; }));
  // Decoder.
  k.push_back(Integer<int>("encoder_hidden", "hidden width of the feature encoder",
                           [](auto& c) -> auto& { return c.decoder.encoder_hidden; }));
  k.push_back(Integer<int>("block_hidden", "hidden width of each block MLP",
                           [](auto& c) -> auto& { return c.decoder.block_hidden; }));
  k.push_back(Integer<int>("head_hidden", "hidden width of the output head",
                           [](auto& c) -> auto& { return c.decoder.head_hidden; }));
  k.push_back(Integer<uint64_t>("decoder_seed", "seed of decoder initialization",
                                [](auto& c) -> auto& { return c.decoder_seed; }));
  // Training.
  k.push_back(Real("lambda_x", "coordinate loss weight",
                   [](auto& c) -> auto& { return c.train.lambda_x; }));
  k.push_back(Real("lambda_c", "confidence loss weight",
                   [](auto& c) -> auto& { return c.train.lambda_c; }));
  k.push_back(Real("lambda_l1", "scale sparsity weight (stage 1)",
                   [](auto& c) -> auto& { return c.train.lambda_l1; }));
  k.push_back(Real("lr_agnostic", "learning rate of decoder weights",
                   [](auto& c) -> auto& { return c.train.lr_agnostic; }));
  k.push_back(Real("lr_codes", "learning rate of codes and scales",
                   [](auto& c) -> auto& { return c.train.lr_codes; }));
  k.push_back(Integer<int>("epochs_stage1", "epochs before pruning",
                           [](auto& c) -> auto& { return c.train.epochs_stage1; }));
  k.push_back(Integer<int>("epochs_stage2", "fine-tuning epochs after pruning",
                           [](auto& c) -> auto& { return c.train.epochs_stage2; }));
  k.push_back(Integer<int>("epochs_adapt", "code-only epochs for a new scene",
                           [](auto& c) -> auto& { return c.train.epochs_adapt; }));
  k.push_back(Integer<int>("batch_voxels", "voxels per optimizer step B",
                           [](auto& c) -> auto& { return c.train.batch_voxels; }));
  k.push_back(Integer<int>("lr_halving_period", "epochs between learning-rate halvings",
                           [](auto& c) -> auto& { return c.train.lr_halving_period; }));
  k.push_back(Real("prune_threshold", "codes with |w| below this are pruned",
                   [](auto& c) -> auto& { return c.train.prune_threshold; }));
  k.push_back(Integer<uint64_t>("train_seed", "seed of voxel and view sampling",
                                [](auto& c) -> auto& { return c.train.seed; }));
  k.push_back({"optimizer", "adam or sgd",
               [](RunConfig& c, std::string_view v) {
                 if (v == "adam") {
                   c.train.optimizer = diff::OptimizerKind::kAdam;
                 } else if (v == "sgd") {
                   c.train.optimizer = diff::OptimizerKind::kSgd;
                 } else {
                   throw ConfigError("expected adam or sgd, got '" +
                                     std::string(v) + "'");
                 }
               },
               [](const RunConfig& c) {
                 return std::string(c.train.optimizer == diff::OptimizerKind::kAdam
                                        ? "adam"
                                        : "sgd");
               }});
  k.push_back(Flag("adapt_scales", "also learn scales (with the L1 term) when adapting",
                   [](auto& c) -> auto& { return c.train.adapt_scales; }));
  // Localization.
  k.push_back(Integer<int>("top_k", "reference views retrieved per query",
                           [](auto& c) -> auto& { return c.localize.top_k; }));
  k.push_back(Flag("bypass_retrieval", "decode in every voxel instead of retrieving",
                   [](auto& c) -> auto& { return c.localize.bypass_retrieval; }));
  k.push_back(Real("min_confidence", "candidates below this confidence are discarded",
                   [](auto& c) -> auto& { return c.localize.min_confidence; }));
  k.push_back(Real("ransac_tolerance", "RANSAC inlier reprojection tolerance, pixels",
                   [](auto& c) -> auto& { return c.localize.ransac.inlier_tolerance; }));
  k.push_back(Integer<int>("ransac_max_iterations", "RANSAC hypothesis budget",
                           [](auto& c) -> auto& { return c.localize.ransac.max_iterations; }));
  k.push_back(Real("ransac_confidence", "RANSAC early-exit probability",
                   [](auto& c) -> auto& { return c.localize.ransac.confidence; }));
  k.push_back(Integer<uint64_t>("ransac_seed", "seed of RANSAC sampling",
                                [](auto& c) -> auto& { return c.localize.ransac.seed; }));
  return k;
}

}  // namespace

RunConfig DefaultRunConfig() {
  RunConfig c;
  c.scene.drop_uncovered = true;
  c.decoder.raw_dim = c.world.descriptor_dim;
  c.decoder.blocks = c.scene.dims.blocks;
  c.decoder.dim = c.scene.dims.dim;
  c.train.min_points = c.scene.min_points;
  // Desk schedule: one voxel per step and a common learning rate.
  c.train.batch_voxels = 1;
  c.train.lr_agnostic = 0.005;
  c.train.lr_codes = 0.005;
  return c;
}

void RunConfig::Validate() const {
  auto wrap = [](const auto& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  };
  wrap([&] { world.Validate(); });
  wrap([&] { scene.dims.Validate(); });
  wrap([&] { decoder.Validate(); });
  wrap([&] { train.Validate(); });
  if (decoder.raw_dim != world.descriptor_dim || decoder.blocks != scene.dims.blocks ||
      decoder.dim != scene.dims.dim) {
    throw ConfigError("decoder and scene dimensions disagree");
  }
  if (!(scene.side_length > 0.0)) throw ConfigError("side_length must be > 0");
  if (scene.min_points < 1) throw ConfigError("min_points must be >= 1");
  if (localize.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(localize.ransac.inlier_tolerance > 0.0)) {
    throw ConfigError("ransac_tolerance must be > 0");
  }
  if (localize.ransac.max_iterations < 1) {
    throw ConfigError("ransac_max_iterations must be >= 1");
  }
  if (!(localize.ransac.confidence > 0.0 && localize.ransac.confidence < 1.0)) {
    throw ConfigError("ransac_confidence must be in (0, 1)");
  }
}

const std::vector<ConfigKey>& ConfigKeys() {
  static const std::vector<ConfigKey> keys = BuildKeys();
  return keys;
}

void ApplyConfigText(RunConfig& config, std::string_view text,
                     const std::string& source) {
  size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "expected key = value");
    }
    const std::string_view key = Trim(line.substr(0, eq));
    const std::string_view value = Trim(line.substr(eq + 1));
    const auto& keys = ConfigKeys();
    const auto it = std::find_if(keys.begin(), keys.end(),
                                 [&](const ConfigKey& k) { return k.name == key; });
    if (it == keys.end()) {
      throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    }
    try {
      it->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + std::string(key) + ": " + e.what());
    }
  }
  config.decoder.raw_dim = config.world.descriptor_dim;
  config.decoder.blocks = config.scene.dims.blocks;
  config.decoder.dim = config.scene.dims.dim;
  config.train.min_points = config.scene.min_points;
}

void ApplyConfigFile(RunConfig& config, const std::string& path) {
  std::string text;
  try {
    text = ReadFileBytes(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  ApplyConfigText(config, text, path);
}

std::string DumpConfig(const RunConfig& config) {
  std::ostringstream out;
  for (const ConfigKey& k : ConfigKeys()) {
    out << "# " << k.doc << "\n" << k.name << " = " << k.get(config) << "\n";
  }
  return out.str();
}

}  // namespace ncmap
