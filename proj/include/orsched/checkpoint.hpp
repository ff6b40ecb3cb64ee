#pragma once

// Binary checkpoint of an EnsembleAgent.
//
// Layout (all integers and floats little-endian):
//   "ORSCHED1"                       8 bytes
//   u32 format version
//   u64 config hash
//   u32 n, n bytes                   serialized config text
//   u32 ensemble size, u32 active actor
//   per network: u32 layer count, then per layer u32 rows, u32 cols, u32 activation
//   f64 tensors: for each network, per layer W (row-major) then b
//   u32 CRC-32 of every preceding byte
// Network order: critic, critic target, then actor i and actor target i for each i.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "orsched/agent.hpp"
#include "orsched/config.hpp"
#include "orsched/errors.hpp"

namespace orsched {

inline constexpr char kCheckpointMagic[8] = {'O', 'R', 'S', 'C', 'H', 'E', 'D', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > end_) throw ChecksumError("checkpoint truncated");
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

template <class A, class F>
void for_each_network(A& a, F&& f) {
  f(a.critic());
  f(a.critic_target());
  for (int i = 0; i < a.ensemble_size(); ++i) {
    f(a.actor(i));
    f(a.actor_target(i));
  }
}

}  // namespace detail

inline std::string serialize_checkpoint(const EnsembleAgent& agent, const SimConfig& cfg) {
  const auto& a = agent;
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u64(config_hash(cfg));
  const std::string text = serialize_config(cfg);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());
  w.u32(static_cast<std::uint32_t>(a.ensemble_size()));
  w.u32(static_cast<std::uint32_t>(a.active()));
  detail::for_each_network(a, [&](const Mlp& net) {
    w.u32(static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& l : net.layers()) {
      w.u32(static_cast<std::uint32_t>(l.w.rows()));
      w.u32(static_cast<std::uint32_t>(l.w.cols()));
      w.u32(static_cast<std::uint32_t>(l.act));
    }
  });
  detail::for_each_network(a, [&](const Mlp& net) {
    for (const auto& l : net.layers()) {
      for (Eigen::Index r = 0; r < l.w.rows(); ++r)
        for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.f64(l.w(r, c));
      for (Eigen::Index r = 0; r < l.b.size(); ++r) w.f64(l.b(r));
    }
  });
  const std::uint32_t crc = detail::crc32_of(w.bytes(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

struct LoadedCheckpoint {
  SimConfig config;
  std::uint64_t config_hash = 0;
  EnsembleAgent agent;
};

/// Parses checkpoint bytes. If `expected` is given, a config-hash mismatch raises ConfigMismatch
/// unless `force` is set.
inline LoadedCheckpoint deserialize_checkpoint(const std::string& bytes, const SimConfig* expected = nullptr,
                                               bool force = false) {
  if (bytes.size() < 8 + 4 + 8 + 4 + 4 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw ChecksumError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != detail::crc32_of(bytes, body)) throw ChecksumError("checkpoint CRC mismatch");

  detail::ByteReader r(bytes, body);
  char magic[8];
  r.raw(magic, 8);
  if (r.u32() != kCheckpointVersion) throw ChecksumError("unsupported checkpoint version");
  const std::uint64_t hash = r.u64();
  std::string text(r.u32(), '\0');
  r.raw(text.data(), text.size());
  SimConfig cfg = parse_config(text);
  if (config_hash(cfg) != hash) throw ChecksumError("embedded config does not match its hash");
  if (expected && config_hash(*expected) != hash && !force)
    throw ConfigMismatch("checkpoint was written under config " + hash_hex(hash) + ", expected " +
                         hash_hex(config_hash(*expected)));

  const int ensemble = static_cast<int>(r.u32());
  const int active = static_cast<int>(r.u32());
  SimConfig shape = cfg;
  shape.ensemble_size = ensemble;
  Rng dummy(0);
  EnsembleAgent agent(shape, cfg.state_dim(), cfg.action_dim(), dummy);
  detail::for_each_network(agent, [&](Mlp& net) {
    const auto n = r.u32();
    if (n != net.layers().size()) throw ShapeError("checkpoint architecture does not match its config");
    for (auto& l : net.layers()) {
      const auto rows = r.u32(), cols = r.u32(), act = r.u32();
      if (rows != l.w.rows() || cols != l.w.cols() || act != static_cast<std::uint32_t>(l.act))
        throw ShapeError("checkpoint architecture does not match its config");
    }
  });
  detail::for_each_network(agent, [&](Mlp& net) {
    for (auto& l : net.layers()) {
      for (Eigen::Index i = 0; i < l.w.rows(); ++i)
        for (Eigen::Index j = 0; j < l.w.cols(); ++j) l.w(i, j) = r.f64();
      for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = r.f64();
    }
  });
  if (r.pos() != body) throw ChecksumError("trailing bytes in checkpoint");
  agent.set_active(active);
  return {std::move(cfg), hash, std::move(agent)};
}

/// Writes via a temporary file and rename so readers never see a partial checkpoint.
inline void save_checkpoint(const std::filesystem::path& path, const EnsembleAgent& agent, const SimConfig& cfg) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    const auto bytes = serialize_checkpoint(agent, cfg);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const SimConfig* expected = nullptr,
                                        bool force = false) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_checkpoint(ss.str(), expected, force);
}

}  // namespace orsched
