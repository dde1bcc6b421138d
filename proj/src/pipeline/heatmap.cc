#include "ncmap/pipeline/heatmap.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "ncmap/util/binary_io.h"
#include "ncmap/util/error.h"

namespace ncmap {

std::optional<Lattice> DetectLattice(std::span<const Eigen::Vector2d> pixels) {
  if (pixels.empty()) return std::nullopt;
  std::map<double, int> xs;
  std::map<double, int> ys;
  for (const Eigen::Vector2d& p : pixels) {
    xs.emplace(p.x(), 0);
    ys.emplace(p.y(), 0);
  }
  if (xs.size() * ys.size() != pixels.size()) return std::nullopt;
  int i = 0;
  for (auto& [x, col] : xs) col = i++;
  i = 0;
  for (auto& [y, row] : ys) row = i++;
  Lattice lattice;
  lattice.width = static_cast<int>(xs.size());
  lattice.height = static_cast<int>(ys.size());
  lattice.index.assign(pixels.size(), -1);
  for (size_t k = 0; k < pixels.size(); ++k) {
    const size_t cell = static_cast<size_t>(ys[pixels[k].y()]) * xs.size() +
                        static_cast<size_t>(xs[pixels[k].x()]);
    if (lattice.index[cell] != -1) return std::nullopt;
    lattice.index[cell] = static_cast<int>(k);
  }
  return lattice;
}

Keypoints ResampleOnGrid(const Keypoints& keypoints, const Intrinsics& intrinsics,
                         double step) {
  if (!(step > 0.0)) throw InvalidArgument("grid step must be > 0");
  if (keypoints.empty()) throw InvalidArgument("no keypoints to resample");
  Keypoints out;
  std::vector<Eigen::Index> source;
  for (double y = 0.5 * step; y < intrinsics.height; y += step) {
    for (double x = 0.5 * step; x < intrinsics.width; x += step) {
      const Eigen::Vector2d node(x, y);
      size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < keypoints.size(); ++k) {
        const double d = (keypoints.pixels[k] - node).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      out.pixels.push_back(node);
      out.point_ids.push_back(-1);
      source.push_back(static_cast<Eigen::Index>(best));
    }
  }
  out.descriptors.resize(static_cast<Eigen::Index>(source.size()),
                         keypoints.descriptors.cols());
  for (size_t r = 0; r < source.size(); ++r) {
    out.descriptors.row(static_cast<Eigen::Index>(r)) =
        keypoints.descriptors.row(source[r]);
  }
  return out;
}

Heatmap ComputeHeatmap(const DecoderParams& params, const Keypoints& keypoints,
                       const CodeBank& bank, int block, int code) {
  Heatmap heatmap;
  const diff::Matrix features = EncodeFeatures(params, keypoints.descriptors);
  heatmap.scores = ComputeAttentionScores(params, features, bank, block, code);
  heatmap.lattice = DetectLattice(keypoints.pixels);
  return heatmap;
}

std::string HeatmapCsv(const AttentionScores& scores) {
  std::string out = "feature_index,s,s_norm\n";
  char buf[96];
  for (size_t i = 0; i < scores.raw.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, scores.raw[i],
                  scores.normalized[i]);
    out += buf;
  }
  return out;
}

std::string HeatmapPgm(const Lattice& lattice, std::span<const double> normalized) {
  std::string out = "P5\n" + std::to_string(lattice.width) + " " +
                    std::to_string(lattice.height) + "\n255\n";
  for (int k : lattice.index) {
    const double v = std::clamp(normalized[static_cast<size_t>(k)], 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(
        std::lround(255.0 * v))));
  }
  return out;
}

Heatmap ExportHeatmap(const DecoderParams& params, const Keypoints& keypoints,
                      const CodeBank& bank, int block, int code,
                      const std::string& csv_path, const std::string& pgm_path) {
  Heatmap heatmap = ComputeHeatmap(params, keypoints, bank, block, code);
  WriteFileBytes(csv_path, HeatmapCsv(heatmap.scores));
  if (heatmap.lattice && !pgm_path.empty()) {
    WriteFileBytes(pgm_path,
                   HeatmapPgm(*heatmap.lattice, heatmap.scores.normalized));
  }
  return heatmap;
}

}  // namespace ncmap
