#pragma once

// Little-endian binary container shared by model checkpoints, dataset fixtures and
// server broadcast messages.
//
//   offset 0  : magic "PPFE"
//   offset 4  : u16 format version (currently 1)
//   offset 6  : u16 payload kind (1 = model, 2 = dataset, 3 = server message)
//   offset 8  : payload
//
// Model payload:
//   u32 layer count, u32 split
//   per layer: u8 kind (0 dense, 1 low-rank, 2 masked, 3 activation), u8 activation,
//              u32 in, u32 out, u32 rank
//   then, layer by layer, the raw f64 parameter blocks in params() order; masked layers
//   append their mask as f64 0/1 after the bias.
//
// Server message payload:
//   u32 round, u32 block count, per block u32 rows, u32 cols, then rows*cols f64.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ppfe/error.hpp"
#include "ppfe/nn.hpp"
#include "ppfe/tensor.hpp"

namespace ppfe::io {

inline constexpr std::array<char, 4> kMagic{'P', 'P', 'F', 'E'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class PayloadKind : std::uint16_t { Model = 1, Dataset = 2, ServerMessage = 3 };

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void header(PayloadKind kind) {
    for (char c : kMagic) u8(static_cast<std::uint8_t>(c));
    u16(kFormatVersion);
    u16(static_cast<std::uint16_t>(kind));
  }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  void header(PayloadKind expected) {
    for (char c : kMagic)
      if (u8() != static_cast<std::uint8_t>(c)) throw ParseError("bad magic bytes, not a PPFE file", 0);
    const auto version = u16();
    if (version != kFormatVersion) {
      throw ParseError("unsupported format version " + std::to_string(version), 0);
    }
    const auto kind = u16();
    if (kind != static_cast<std::uint16_t>(expected)) {
      throw ParseError("unexpected payload kind " + std::to_string(kind), 0);
    }
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("truncated binary payload", 0);
  }
  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_model(const nn::Model& m) {
  ByteWriter w;
  w.header(PayloadKind::Model);
  w.u32(static_cast<std::uint32_t>(m.layers.size()));
  w.u32(static_cast<std::uint32_t>(m.split));
  for (const auto& l : m.layers) {
    std::uint8_t kind = 3, act = 0;
    std::uint32_t rank = 0;
    if (std::holds_alternative<nn::Dense>(l)) kind = 0;
    if (const auto* r = std::get_if<nn::LowRankDense>(&l)) {
      kind = 1;
      rank = static_cast<std::uint32_t>(r->a.cols());
    }
    if (std::holds_alternative<nn::MaskedDense>(l)) kind = 2;
    if (const auto* a = std::get_if<nn::ActivationLayer>(&l)) act = static_cast<std::uint8_t>(a->fn);
    w.u8(kind);
    w.u8(act);
    w.u32(static_cast<std::uint32_t>(nn::in_dim(l)));
    w.u32(static_cast<std::uint32_t>(nn::out_dim(l)));
    w.u32(rank);
  }
  for (const auto& l : m.layers) {
    for (const Matrix* p : nn::params(l)) w.f64s(p->data());
    if (const auto* mk = std::get_if<nn::MaskedDense>(&l)) w.f64s(mk->mask.data());
  }
  return w.take();
}

inline nn::Model decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.header(PayloadKind::Model);
  const std::uint32_t count = r.u32();
  nn::Model m;
  m.split = r.u32();
  struct Entry {
    std::uint8_t kind, act;
    std::uint32_t in, out, rank;
  };
  std::vector<Entry> table(count);
  for (auto& e : table) {
    e.kind = r.u8();
    e.act = r.u8();
    e.in = r.u32();
    e.out = r.u32();
    e.rank = r.u32();
  }
  for (const auto& e : table) {
    switch (e.kind) {
      case 0: m.layers.emplace_back(nn::Dense{Matrix(e.out, e.in), Matrix(1, e.out)}); break;
      case 1: m.layers.emplace_back(nn::LowRankDense{Matrix(e.out, e.rank), Matrix(e.rank, e.in), Matrix(1, e.out)}); break;
      case 2: m.layers.emplace_back(nn::MaskedDense{Matrix(e.out, e.in), Matrix(1, e.out), Matrix(e.out, e.in)}); break;
      case 3:
        if (e.act > 2) throw ParseError("unknown activation tag " + std::to_string(e.act), 0);
        m.layers.emplace_back(nn::ActivationLayer{static_cast<nn::Activation>(e.act)});
        break;
      default: throw ParseError("unknown layer kind " + std::to_string(e.kind), 0);
    }
  }
  for (auto& l : m.layers) {
    for (Matrix* p : nn::params(l)) r.f64s(p->data());
    if (auto* mk = std::get_if<nn::MaskedDense>(&l)) r.f64s(mk->mask.data());
  }
  if (!r.at_end()) throw ParseError("trailing bytes after model payload", 0);
  m.validate();
  return m;
}

inline void save_model(const nn::Model& m, const std::filesystem::path& path) {
  write_file(path, encode_model(m));
}

inline nn::Model load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------------------------------------

/// Server -> client broadcast (and client -> server upload) of the shared body only.
struct ServerMessage {
  std::uint32_t round = 0;
  std::vector<Matrix> shared;
};

inline std::vector<std::uint8_t> encode_message(const ServerMessage& msg) {
  ByteWriter w;
  w.header(PayloadKind::ServerMessage);
  w.u32(msg.round);
  w.u32(static_cast<std::uint32_t>(msg.shared.size()));
  for (const auto& block : msg.shared) {
    w.u32(static_cast<std::uint32_t>(block.rows()));
    w.u32(static_cast<std::uint32_t>(block.cols()));
    w.f64s(block.data());
  }
  return w.take();
}

inline ServerMessage decode_message(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.header(PayloadKind::ServerMessage);
  ServerMessage msg;
  msg.round = r.u32();
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    Matrix block(rows, cols);
    r.f64s(block.data());
    msg.shared.push_back(std::move(block));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after server message", 0);
  return msg;
}

}  // namespace ppfe::io
