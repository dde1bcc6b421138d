#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ncmap/decoder/decoder.h"
#include "ncmap/synth/dataset.h"

namespace ncmap {

// Row-major placement of keypoints on a regular pixel lattice.
struct Lattice {
  int width = 0;
  int height = 0;
  std::vector<int> index;  // keypoint index per cell
};

// Succeeds when the pixels are exactly the full product of their distinct
// x and y coordinates, each pixel used once.
std::optional<Lattice> DetectLattice(std::span<const Eigen::Vector2d> pixels);

// Keypoints on a lattice with spacing `step` covering the image; each node
// takes the descriptor of the nearest input keypoint.
Keypoints ResampleOnGrid(const Keypoints& keypoints, const Intrinsics& intrinsics,
                         double step);

struct Heatmap {
  AttentionScores scores;
  std::optional<Lattice> lattice;
};

Heatmap ComputeHeatmap(const DecoderParams& params, const Keypoints& keypoints,
                       const CodeBank& bank, int block, int code);

// "feature_index,s,s_norm" with round-trip precision.
std::string HeatmapCsv(const AttentionScores& scores);
// Binary 8-bit PGM, gray = round(255 * s_norm).
std::string HeatmapPgm(const Lattice& lattice, std::span<const double> normalized);

// Writes the CSV and, if the keypoints form a lattice, the PGM.
Heatmap ExportHeatmap(const DecoderParams& params, const Keypoints& keypoints,
                      const CodeBank& bank, int block, int code,
                      const std::string& csv_path, const std::string& pgm_path);

}  // namespace ncmap
