#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"

namespace hypernet {

// HTNS v1 tensor file layout:
//   bytes 0-3   magic "HTNS"
//   byte  4     version, 1
//   byte  5     dtype code: 1 = f32, 2 = f64, 3 = u8
//   byte  6     ndim
//   byte  7     zero
//   then ndim x u64 little-endian dims
//   then raw little-endian row-major payload
// Tensors embed back-to-back inside checkpoint containers, so the stream
// forms below read/write exactly their own bytes.

namespace detail {

constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;
constexpr std::uint8_t kDtypeU8 = 3;
constexpr std::size_t kMaxRank = 8;

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_u64_le(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

template <typename T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 4 ? kDtypeF32 : kDtypeF64;
}

inline std::size_t dtype_size(std::uint8_t code) {
  switch (code) {
    case kDtypeF32: return 4;
    case kDtypeF64: return 8;
    case kDtypeU8: return 1;
    default: return 0;
  }
}

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  const char magic[4] = {'H', 'T', 'N', 'S'};
  os.write(magic, 4);
  const unsigned char head[4] = {1, detail::dtype_code<T>(),
                                 static_cast<unsigned char>(t.rank()), 0};
  os.write(reinterpret_cast<const char*>(head), 4);
  for (std::size_t d : t.shape()) detail::put_u64_le(os, d);

  // Elementwise little-endian packing keeps the format byte-stable
  // independent of host endianness.
  std::vector<unsigned char> buf(t.numel() * sizeof(T));
  unsigned char* p = buf.data();
  if constexpr (sizeof(T) == 4) {
    for (const T v : t.data()) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) *p++ = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    }
  } else {
    for (const T v : t.data()) {
      const auto u = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) *p++ = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    }
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError(IoError::Code::WriteFailed, "tensor write failed");
}

template <typename T>
void write_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(IoError::Code::OpenFailed, "cannot open for write: " + path);
  write_tensor(os, t);
}

template <typename T>
Tensor<T> read_tensor(std::istream& is, const std::string& where = "<stream>") {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "HTNS", 4) != 0) {
    throw IoError(IoError::Code::BadMagic, "bad magic in " + where);
  }
  unsigned char head[4];
  if (!is.read(reinterpret_cast<char*>(head), 4)) {
    throw IoError(IoError::Code::BadHeader, "short header in " + where);
  }
  if (head[0] != 1) {
    throw IoError(IoError::Code::BadVersion,
                  "unsupported version " + std::to_string(head[0]) + " in " + where);
  }
  const std::uint8_t code = head[1];
  const std::size_t elem_size = detail::dtype_size(code);
  if (elem_size == 0) {
    throw IoError(IoError::Code::BadDtype,
                  "bad dtype code " + std::to_string(code) + " in " + where);
  }
  const std::size_t ndim = head[2];
  if (ndim == 0 || ndim > detail::kMaxRank || head[3] != 0) {
    throw IoError(IoError::Code::BadHeader, "bad header in " + where);
  }

  std::vector<std::size_t> shape(ndim);
  std::size_t numel = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    std::uint64_t d;
    if (!detail::get_u64_le(is, d)) {
      throw IoError(IoError::Code::BadHeader, "short dims in " + where);
    }
    if (d == 0 || d > (1ull << 32)) {
      throw IoError(IoError::Code::BadHeader, "bad dimension in " + where);
    }
    shape[i] = static_cast<std::size_t>(d);
    numel *= shape[i];
    if (numel > (1ull << 40)) {
      throw IoError(IoError::Code::BadHeader, "oversized tensor in " + where);
    }
  }

  std::vector<unsigned char> buf(numel * elem_size);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    throw IoError(IoError::Code::TruncatedPayload, "truncated payload in " + where);
  }

  Tensor<T> t(shape);
  T* out = t.raw();
  const unsigned char* p = buf.data();
  if (code == detail::kDtypeU8) {
    for (std::size_t i = 0; i < numel; ++i) out[i] = static_cast<T>(p[i]);
  } else if (code == detail::kDtypeF32) {
    for (std::size_t i = 0; i < numel; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(*p++) << (8 * k);
      out[i] = static_cast<T>(std::bit_cast<float>(u));
    }
  } else {
    for (std::size_t i = 0; i < numel; ++i) {
      std::uint64_t u = 0;
      for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(*p++) << (8 * k);
      out[i] = static_cast<T>(std::bit_cast<double>(u));
    }
  }
  return t;
}

template <typename T>
Tensor<T> read_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Code::OpenFailed, "cannot open: " + path);
  return read_tensor<T>(is, path);
}

/// Dtype code of a tensor file (or of the first entry's tensor when `skip`
/// bytes of container header precede it). Used by the CLI to pick f32/f64.
inline std::uint8_t peek_dtype_code(const std::string& path, std::size_t offset) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Code::OpenFailed, "cannot open: " + path);
  is.seekg(static_cast<std::streamoff>(offset));
  char magic[4] = {};
  unsigned char head[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "HTNS", 4) != 0 ||
      !is.read(reinterpret_cast<char*>(head), 4)) {
    throw IoError(IoError::Code::BadMagic, "bad magic in " + path);
  }
  return head[1];
}

}  // namespace hypernet
