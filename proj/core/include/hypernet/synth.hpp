#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace hypernet {

// Deterministic-by-seed synthetic datasets, written as HTNS pairs plus a
// `manifest.tsv` in the target directory. Same seed, same bytes.

/// 10-class oriented-bar classification, 3x32x32 inputs, scalar labels.
/// Labels are assigned round-robin then shuffled, so class counts are even.
/// Returns the manifest path.
std::string generate_bars10(const std::string& dir, std::size_t n, std::uint64_t seed);

/// 4-class shape segmentation, 3x64x64 inputs, (64,64) label maps
/// (0 background, 1 disk, 2 rectangle, 3 cross).
std::string generate_shapes_seg(const std::string& dir, std::size_t n, std::uint64_t seed);

/// Shaded-bump depth regression, 3x32x32 inputs, (1,32,32) depth targets.
std::string generate_ramp_depth(const std::string& dir, std::size_t n, std::uint64_t seed);

constexpr std::size_t kBars10Classes = 10;
constexpr std::size_t kShapesSegClasses = 4;

}  // namespace hypernet
