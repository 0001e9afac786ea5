#include "hypernet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "hypernet/manifest.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/tensor_io.hpp"

namespace hypernet {

namespace fs = std::filesystem;

namespace {

std::string index_name(const std::string& stem, std::size_t i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu", i);
  return stem + "_" + buf + suffix;
}

std::string write_pairs(const std::string& dir, const std::string& stem,
                        const std::vector<Tensor<double>>& inputs,
                        const std::vector<Tensor<double>>& targets) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string in_name = index_name(stem, i, ".htns");
    const std::string tgt_name = index_name(stem, i, ".y.htns");
    write_tensor((fs::path(dir) / in_name).string(), inputs[i]);
    write_tensor((fs::path(dir) / tgt_name).string(), targets[i]);
    entries.push_back({in_name, tgt_name});
  }
  const std::string manifest = (fs::path(dir) / "manifest.tsv").string();
  save_manifest(manifest, entries);
  return manifest;
}

}  // namespace

std::string generate_bars10(const std::string& dir, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % kBars10Classes;
  rng.shuffle(labels.begin(), labels.end());

  const std::size_t side = 32;
  const double cx = (double(side) - 1.0) / 2.0;
  std::vector<Tensor<double>> inputs, targets;
  inputs.reserve(n);
  targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = labels[i];
    const double theta = double(label) * M_PI / double(kBars10Classes);
    const double nx = -std::sin(theta), ny = std::cos(theta);
    const double offset = rng.uniform(-3.0, 3.0);
    Tensor<double> img({3, side, side});
    const double chan_scale[3] = {1.0, 0.9, 0.8};
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double dist =
            std::abs(nx * (double(c) - cx) + ny * (double(r) - cx) - offset);
        const double bar = std::clamp(1.8 - dist, 0.0, 1.0);
        const double noise = rng.uniform(0.0, 0.15);
        for (std::size_t ch = 0; ch < 3; ++ch) {
          img.at(ch, r, c) = chan_scale[ch] * bar + noise;
        }
      }
    }
    inputs.push_back(std::move(img));
    Tensor<double> y({1});
    y[0] = double(label);
    targets.push_back(std::move(y));
  }
  return write_pairs(dir, "bars", inputs, targets);
}

std::string generate_shapes_seg(const std::string& dir, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t side = 64;
  std::vector<Tensor<double>> inputs, targets;
  inputs.reserve(n);
  targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<double> img({3, side, side});
    Tensor<double> lbl({side, side});
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double bg = rng.uniform(0.0, 0.2);
        for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, r, c) = bg;
      }
    }

    // One shape of each class per image, drawn in a random order so
    // occlusions vary; later shapes overwrite earlier ones.
    std::size_t order[3] = {0, 1, 2};
    rng.shuffle(order, order + 3);
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t kind = order[s];
      const double base[3][3] = {{0.9, 0.3, 0.25}, {0.2, 0.85, 0.3}, {0.25, 0.35, 0.9}};
      double color[3];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        color[ch] = std::clamp(base[kind][ch] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
      }
      const double ccx = rng.uniform(14.0, double(side) - 14.0);
      const double ccy = rng.uniform(14.0, double(side) - 14.0);
      const double radius = rng.uniform(6.0, 13.0);
      const double hx = rng.uniform(5.0, 12.0), hy = rng.uniform(5.0, 12.0);
      const double arm = rng.uniform(7.0, 13.0), thick = rng.uniform(2.0, 4.0);
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          const double dx = double(c) - ccx, dy = double(r) - ccy;
          bool inside = false;
          if (kind == 0) {
            inside = dx * dx + dy * dy <= radius * radius;
          } else if (kind == 1) {
            inside = std::abs(dx) <= hx && std::abs(dy) <= hy;
          } else {
            inside = (std::abs(dx) <= thick && std::abs(dy) <= arm) ||
                     (std::abs(dx) <= arm && std::abs(dy) <= thick);
          }
          if (inside) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
              img.at(ch, r, c) = std::clamp(color[ch] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
            }
            lbl[r * side + c] = double(kind + 1);
          }
        }
      }
    }
    inputs.push_back(std::move(img));
    targets.push_back(std::move(lbl));
  }
  return write_pairs(dir, "shapes", inputs, targets);
}

std::string generate_ramp_depth(const std::string& dir, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t side = 32;
  std::vector<Tensor<double>> inputs, targets;
  inputs.reserve(n);
  targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(0.0, 0.3);
    const double bx = rng.uniform(-0.3, 0.3), by = rng.uniform(-0.3, 0.3);
    const double ccx = rng.uniform(8.0, 24.0), ccy = rng.uniform(8.0, 24.0);
    const double radius = rng.uniform(5.0, 10.0);
    Tensor<double> depth({1, side, side});
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        double d = a + bx * double(c) / double(side) + by * double(r) / double(side);
        const double dx = double(c) - ccx, dy = double(r) - ccy;
        const double rr = radius * radius - dx * dx - dy * dy;
        if (rr > 0) d += std::sqrt(rr) / radius;
        depth.at(0, r, c) = d;
      }
    }
    // Shading channels: the height field plus its two forward differences.
    Tensor<double> img({3, side, side});
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double here = depth.at(0, r, c);
        const double right = c + 1 < side ? depth.at(0, r, c + 1) : here;
        const double down = r + 1 < side ? depth.at(0, r + 1, c) : here;
        img.at(0, r, c) = here + rng.uniform(-0.02, 0.02);
        img.at(1, r, c) = (right - here) * 4.0 + rng.uniform(-0.02, 0.02);
        img.at(2, r, c) = (down - here) * 4.0 + rng.uniform(-0.02, 0.02);
      }
    }
    inputs.push_back(std::move(img));
    targets.push_back(std::move(depth));
  }
  return write_pairs(dir, "ramp", inputs, targets);
}

}  // namespace hypernet
