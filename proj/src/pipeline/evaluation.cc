#include "ncmap/pipeline/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ncmap/util/error.h"

namespace ncmap {
namespace {

std::string ThresholdLabel(const Threshold& t) {
  std::ostringstream out;
  out << "accuracy@" << t.translation_m << "m_" << t.rotation_deg << "deg";
  return out.str();
}

}  // namespace

double Median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalReport EvaluatePoses(std::span<const std::optional<Pose>> estimates,
                         std::span<const Pose> truth,
                         std::span<const Threshold> thresholds,
                         uint64_t map_size_bytes) {
  if (estimates.size() != truth.size()) {
    throw DimensionError("evaluate: " + std::to_string(estimates.size()) +
                         " results for " + std::to_string(truth.size()) +
                         " ground-truth poses");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EvalReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  report.accuracy.assign(thresholds.size(), 0.0);
  report.num_queries = static_cast<int>(estimates.size());
  report.map_size_bytes = map_size_bytes;
  std::vector<double> t_errors;
  std::vector<double> r_errors;
  for (size_t i = 0; i < estimates.size(); ++i) {
    if (!estimates[i]) {
      ++report.failures;
      report.errors.push_back({nan, nan});
      continue;
    }
    const PoseError e = ComputePoseError(*estimates[i], truth[i]);
    report.errors.push_back(e);
    t_errors.push_back(e.translation_m);
    r_errors.push_back(e.rotation_deg);
    for (size_t k = 0; k < thresholds.size(); ++k) {
      if (e.translation_m <= thresholds[k].translation_m &&
          e.rotation_deg <= thresholds[k].rotation_deg) {
        report.accuracy[k] += 1.0;
      }
    }
  }
  if (report.num_queries > 0) {
    for (double& a : report.accuracy) a /= report.num_queries;
  }
  report.median_translation_m = Median(t_errors);
  report.median_rotation_deg = Median(r_errors);
  return report;
}

EvalReport Evaluate(std::span<const LocalizationResult> results,
                    std::span<const Pose> truth,
                    std::span<const Threshold> thresholds,
                    uint64_t map_size_bytes) {
  std::vector<std::optional<Pose>> poses;
  poses.reserve(results.size());
  for (const LocalizationResult& r : results) poses.push_back(r.pose);
  return EvaluatePoses(poses, truth, thresholds, map_size_bytes);
}

std::string EvalReport::ToCsv() const {
  std::ostringstream out;
  out.precision(12);
  out << "metric,value\n";
  out << "queries," << num_queries << '\n';
  out << "failures," << failures << '\n';
  out << "median_translation_m," << median_translation_m << '\n';
  out << "median_rotation_deg," << median_rotation_deg << '\n';
  for (size_t k = 0; k < thresholds.size(); ++k) {
    out << ThresholdLabel(thresholds[k]) << ',' << accuracy[k] << '\n';
  }
  out << "map_size_bytes," << map_size_bytes << '\n';
  return out.str();
}

std::string EvalReport::Summary() const {
  std::ostringstream out;
  out.precision(4);
  out << "queries: " << num_queries << " (failures: " << failures << ")\n";
  out << "median error: " << median_translation_m << " m, "
      << median_rotation_deg << " deg\n";
  for (size_t k = 0; k < thresholds.size(); ++k) {
    out << "accuracy (" << thresholds[k].translation_m << " m, "
        << thresholds[k].rotation_deg << " deg): " << 100.0 * accuracy[k]
        << "%\n";
  }
  out << "map size: " << map_size_bytes << " bytes\n";
  return out.str();
}

std::string PosesCsv(std::span<const QueryView> queries,
                     std::span<const LocalizationResult> results) {
  if (queries.size() != results.size()) {
    throw DimensionError("poses csv: query/result count mismatch");
  }
  std::string out =
      "query_id,success,r00,r01,r02,r10,r11,r12,r20,r21,r22,t0,t1,t2,"
      "activated_voxels,candidates,confident,inliers\n";
  char buf[64];
  for (size_t q = 0; q < queries.size(); ++q) {
    const LocalizationResult& r = results[q];
    out += std::to_string(queries[q].id) + (r.ok() ? ",1" : ",0");
    const Pose pose = r.pose.value_or(Pose{});
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        std::snprintf(buf, sizeof(buf), ",%.17g", pose.rotation(i, j));
        out += buf;
      }
    }
    for (int a = 0; a < 3; ++a) {
      std::snprintf(buf, sizeof(buf), ",%.17g", pose.translation(a));
      out += buf;
    }
    out += "," + std::to_string(r.num_activated_voxels) + "," +
           std::to_string(r.num_candidate_points) + "," +
           std::to_string(r.num_confident_points) + "," +
           std::to_string(r.num_inliers) + "\n";
  }
  return out;
}

std::vector<std::optional<Pose>> ParsePosesCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("query_id,success", 0) != 0) {
    throw DataError("poses csv: missing header");
  }
  std::vector<std::optional<Pose>> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 18) {
      throw DataError("poses csv line " + std::to_string(line_no) +
                      ": expected 18 fields");
    }
    try {
      if (cells[1] == "0") {
        out.emplace_back();
        continue;
      }
      Pose pose;
      for (int k = 0; k < 9; ++k) pose.rotation(k / 3, k % 3) = std::stod(cells[2 + k]);
      for (int a = 0; a < 3; ++a) pose.translation(a) = std::stod(cells[11 + a]);
      if (!pose.IsValid(1e-6)) throw DataError("rotation not orthonormal");
      out.emplace_back(pose);
    } catch (const std::logic_error&) {
      throw DataError("poses csv line " + std::to_string(line_no) +
                      ": malformed number");
    } catch (const DataError& e) {
      throw DataError("poses csv line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  return out;
}

}  // namespace ncmap
