#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ncmap/decoder/params.h"
#include "ncmap/pipeline/localizer.h"
#include "ncmap/scene/scene.h"
#include "ncmap/synth/world.h"
#include "ncmap/training/trainer.h"
#include "ncmap/util/error.h"

namespace ncmap {

// Bad configuration text: unknown key, malformed value or inconsistent
// settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Every setting of the command-line tool.
struct RunConfig {
  WorldConfig world;
  SceneBuildOptions scene;
  DecoderDims decoder;
  uint64_t decoder_seed = 11;
  TrainConfig train;
  LocalizeOptions localize;

  // Throws ConfigError when settings disagree or are out of range.
  void Validate() const;
};

// Defaults used by the tool: the desk-scale world and schedule.
RunConfig DefaultRunConfig();

struct ConfigKey {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

// All recognized keys, in documentation order.
const std::vector<ConfigKey>& ConfigKeys();

// Applies "key = value" lines; '#' starts a comment, blank lines are ignored.
// Throws ConfigError naming `source` and the line number.
void ApplyConfigText(RunConfig& config, std::string_view text,
                     const std::string& source = "config");
void ApplyConfigFile(RunConfig& config, const std::string& path);

// Every key with its current value, one per line, with documentation.
std::string DumpConfig(const RunConfig& config);

}  // namespace ncmap
