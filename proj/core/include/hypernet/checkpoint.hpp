#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/network.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/tensor_io.hpp"

namespace hypernet {

// Checkpoint container: u32 LE entry count, then per entry a u16 LE name
// length, the UTF-8 name, and an embedded HTNS tensor. Entries keep their
// write order so serialization is byte-reproducible.

template <typename T>
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<T>>> entries;

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : entries) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  const Tensor<T>& require(const std::string& name) const {
    const Tensor<T>* t = find(name);
    if (!t) throw DataError("checkpoint is missing entry '" + name + "'");
    return *t;
  }

  void add(const std::string& name, Tensor<T> t) {
    entries.emplace_back(name, std::move(t));
  }

  void add_scalar(const std::string& name, double v) {
    Tensor<T> t({1});
    t[0] = static_cast<T>(v);
    add(name, std::move(t));
  }

  double scalar(const std::string& name) const { return double(require(name)[0]); }
};

template <typename T>
void write_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(IoError::Code::OpenFailed, "cannot write checkpoint: " + path);
  const std::uint32_t count = static_cast<std::uint32_t>(ckpt.entries.size());
  unsigned char cb[4];
  for (int i = 0; i < 4; ++i) cb[i] = static_cast<unsigned char>((count >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(cb), 4);
  for (const auto& [name, t] : ckpt.entries) {
    if (name.size() > 0xffff) throw ValueError("checkpoint entry name too long");
    const std::uint16_t len = static_cast<std::uint16_t>(name.size());
    const unsigned char lb[2] = {static_cast<unsigned char>(len & 0xff),
                                 static_cast<unsigned char>(len >> 8)};
    os.write(reinterpret_cast<const char*>(lb), 2);
    os.write(name.data(), len);
    write_tensor(os, t);
  }
  if (!os) throw IoError(IoError::Code::WriteFailed, "checkpoint write failed: " + path);
}

template <typename T>
Checkpoint<T> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Code::OpenFailed, "cannot open checkpoint: " + path);
  unsigned char cb[4];
  if (!is.read(reinterpret_cast<char*>(cb), 4)) {
    throw IoError(IoError::Code::BadHeader, "short checkpoint header: " + path);
  }
  std::uint32_t count = 0;
  for (int i = 0; i < 4; ++i) count |= std::uint32_t(cb[i]) << (8 * i);
  Checkpoint<T> ckpt;
  for (std::uint32_t e = 0; e < count; ++e) {
    unsigned char lb[2];
    if (!is.read(reinterpret_cast<char*>(lb), 2)) {
      throw IoError(IoError::Code::BadHeader, "short entry header in " + path);
    }
    const std::uint16_t len = std::uint16_t(lb[0]) | (std::uint16_t(lb[1]) << 8);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) {
      throw IoError(IoError::Code::BadHeader, "short entry name in " + path);
    }
    Tensor<T> t = read_tensor<T>(is, path + ":" + name);
    ckpt.add(name, std::move(t));
  }
  return ckpt;
}

namespace detail {

inline double encode_head(HeadKind h) {
  return h == HeadKind::Classifier ? 0 : h == HeadKind::Segmenter ? 1 : 2;
}

}  // namespace detail

/// Self-describing network shape: `spec.*` scalars plus the input geometry,
/// so evaluation needs only the checkpoint and a dataset.
template <typename T>
void encode_spec(const NetworkSpec& spec, std::size_t input_h, std::size_t input_w,
                 Checkpoint<T>& ckpt) {
  ckpt.add_scalar("spec.input_channels", double(spec.input_channels));
  ckpt.add_scalar("spec.opening_width", double(spec.opening_width));
  ckpt.add_scalar("spec.levels", double(spec.levels));
  ckpt.add_scalar("spec.blocks_per_level", double(spec.blocks_per_level));
  ckpt.add_scalar("spec.classes", double(spec.classes));
  ckpt.add_scalar("spec.head", detail::encode_head(spec.head));
  ckpt.add_scalar("spec.head_pool", spec.head_pool == HeadPool::Flatten ? 1 : 0);
  ckpt.add_scalar("spec.topology", spec.topology == Topology::DownUp ? 1 : 0);
  ckpt.add_scalar("spec.mode", spec.mode == GradMode::Stored ? 1 : 0);
  ckpt.add_scalar("spec.arch", spec.arch == Arch::ResNet ? 1 : 0);
  ckpt.add_scalar("spec.baseline_pool",
                  spec.baseline_pool == BaselinePool::StridedAvg ? 1 : 0);
  ckpt.add_scalar("spec.input_h", double(input_h));
  ckpt.add_scalar("spec.input_w", double(input_w));
}

template <typename T>
NetworkSpec decode_spec(const Checkpoint<T>& ckpt) {
  NetworkSpec spec;
  spec.input_channels = std::size_t(ckpt.scalar("spec.input_channels"));
  spec.opening_width = std::size_t(ckpt.scalar("spec.opening_width"));
  spec.levels = std::size_t(ckpt.scalar("spec.levels"));
  spec.blocks_per_level = std::size_t(ckpt.scalar("spec.blocks_per_level"));
  spec.classes = std::size_t(ckpt.scalar("spec.classes"));
  const int head = int(ckpt.scalar("spec.head"));
  spec.head = head == 0 ? HeadKind::Classifier
                        : head == 1 ? HeadKind::Segmenter : HeadKind::Regressor;
  spec.head_pool = ckpt.scalar("spec.head_pool") != 0 ? HeadPool::Flatten
                                                      : HeadPool::GlobalAvg;
  spec.topology = ckpt.scalar("spec.topology") != 0 ? Topology::DownUp
                                                    : Topology::DownOnly;
  spec.mode = ckpt.scalar("spec.mode") != 0 ? GradMode::Stored : GradMode::Reversible;
  spec.arch = ckpt.scalar("spec.arch") != 0 ? Arch::ResNet : Arch::Hyper;
  spec.baseline_pool = ckpt.scalar("spec.baseline_pool") != 0
                           ? BaselinePool::StridedAvg
                           : BaselinePool::WavePool;
  spec.validate();
  return spec;
}

template <typename T>
void encode_params(const NetworkSpec& spec, const NetworkParams<T>& p,
                   Checkpoint<T>& ckpt) {
  for_each_param(spec, p, [&](const std::string& name, const Tensor<T>& t) {
    ckpt.add(name, t);
  });
}

template <typename T>
NetworkParams<T> decode_params(const NetworkSpec& spec, const Checkpoint<T>& ckpt) {
  const std::size_t h = std::size_t(ckpt.scalar("spec.input_h"));
  const std::size_t w = std::size_t(ckpt.scalar("spec.input_w"));
  Rng scratch(0);
  NetworkParams<T> p = init_params<T>(spec, h, w, scratch);
  for_each_param(spec, p, [&](const std::string& name, Tensor<T>& t) {
    const Tensor<T>& src = ckpt.require(name);
    if (!src.same_shape(t)) {
      throw DataError("checkpoint entry '" + name + "' has shape " + src.shape_str() +
                      ", expected " + t.shape_str());
    }
    t = src;
  });
  return p;
}

}  // namespace hypernet
