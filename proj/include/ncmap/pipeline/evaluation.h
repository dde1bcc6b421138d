#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ncmap/geometry/pose_error.h"
#include "ncmap/pipeline/localizer.h"

namespace ncmap {

struct Threshold {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

inline const std::vector<Threshold> kDefaultThresholds = {
    {0.25, 2.0}, {0.5, 5.0}, {5.0, 10.0}};

struct EvalReport {
  // Over successful queries only; NaN when every query failed.
  double median_translation_m = 0.0;
  double median_rotation_deg = 0.0;
  std::vector<Threshold> thresholds;
  std::vector<double> accuracy;  // per threshold, failures count as misses
  int num_queries = 0;
  int failures = 0;
  uint64_t map_size_bytes = 0;
  // Per query; NaN for failures.
  std::vector<PoseError> errors;

  // Summary as "metric,value" rows.
  std::string ToCsv() const;
  std::string Summary() const;
};

// Throws DimensionError if the lists differ in length.
EvalReport Evaluate(std::span<const LocalizationResult> results,
                    std::span<const Pose> truth,
                    std::span<const Threshold> thresholds = kDefaultThresholds,
                    uint64_t map_size_bytes = 0);

// Same, from optional poses (empty = failure).
EvalReport EvaluatePoses(std::span<const std::optional<Pose>> estimates,
                         std::span<const Pose> truth,
                         std::span<const Threshold> thresholds = kDefaultThresholds,
                         uint64_t map_size_bytes = 0);

double Median(std::vector<double> values);

// One row per query: query_id, success, r00..r22 (row-major), t0..t2,
// activated_voxels, candidates, confident, inliers. Reals round-trip exactly.
std::string PosesCsv(std::span<const QueryView> queries,
                     std::span<const LocalizationResult> results);
// Poses by row order; failures are empty. Throws DataError on bad input.
std::vector<std::optional<Pose>> ParsePosesCsv(const std::string& text);

}  // namespace ncmap
