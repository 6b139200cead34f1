#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drfk/config.hpp"
#include "drfk/image_io.hpp"
#include "drfk/train.hpp"

// Checkpoint container, version 1. Little-endian throughout:
//
//   "DRFK"                magic
//   u32  version          1
//   u64  snapshot length  canonical config text follows
//   u64  entry count
//   per entry:
//     u32 name length, name bytes
//     u32 dtype          0 = f32 tensor, 1 = u64 scalar
//     u32 ndim           4 for tensors, 0 for scalars
//     u64 dims[ndim]
//     u64 payload offset (bytes, relative to payload start)
//   u64  payload length
//   payload bytes
//
// Entry order is fixed (parameters in registration order, each followed by
// its optimizer moments, then the global step), so identical states produce
// identical files.

namespace drfk {

namespace detail {

inline void append_u32_le(std::string& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(char((v >> (8 * i)) & 0xff));
}
inline void append_u64_le(std::string& o, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) o.push_back(char((v >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& s;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) {
    require(pos + n <= s.size(), "checkpoint: ", path, " truncated at byte ",
            pos);
  }
  const unsigned char* take(std::size_t n) {
    need(n);
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(s.data()) + pos;
    pos += n;
    return p;
  }
  std::uint32_t u32() {
    const unsigned char* p = take(4);
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
           (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (std::uint64_t(u32()) << 32);
  }
  std::string str(std::size_t n) {
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
};

struct CkptEntry {
  std::string name;
  std::uint32_t dtype = 0;
  std::vector<std::uint64_t> dims;
  std::uint64_t offset = 0;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return n;
  }
  std::uint64_t byte_size() const { return dtype == 0 ? numel() * 4 : 8; }
};

inline void append_entry(std::string& table, std::string& payload,
                         const std::string& name, const Tensor<float>& t) {
  append_u32_le(table, std::uint32_t(name.size()));
  table += name;
  append_u32_le(table, 0);  // f32
  append_u32_le(table, 4);
  const Shape s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) append_u64_le(table, std::uint64_t(d));
  append_u64_le(table, std::uint64_t(payload.size()));
  for (std::size_t i = 0; i < t.numel(); ++i) append_f32_le(payload, t[i]);
}

inline void append_entry_u64(std::string& table, std::string& payload,
                             const std::string& name, std::uint64_t v) {
  append_u32_le(table, std::uint32_t(name.size()));
  table += name;
  append_u32_le(table, 1);  // u64 scalar
  append_u32_le(table, 0);
  append_u64_le(table, std::uint64_t(payload.size()));
  append_u64_le(payload, v);
}

}  // namespace detail

inline std::string checkpoint_bytes(const Config& cfg,
                                    const TrainState<float>& st) {
  std::string table, payload;
  std::uint64_t count = 0;
  for (const auto& [name, value] : st.model.named_params()) {
    detail::append_entry(table, payload, name, value);
    ++count;
    const auto it = st.opt.find(name);
    if (it != st.opt.end() && !it->second.m.empty()) {
      detail::append_entry(table, payload, "adam_m/" + name, it->second.m);
      detail::append_entry(table, payload, "adam_v/" + name, it->second.v);
      detail::append_entry_u64(table, payload, "adam_t/" + name,
                               std::uint64_t(it->second.t));
      count += 3;
    }
  }
  detail::append_entry_u64(table, payload, "step", std::uint64_t(st.step));
  ++count;

  const std::string snapshot = serialize_config(cfg);
  std::string out = "DRFK";
  detail::append_u32_le(out, 1);
  detail::append_u64_le(out, snapshot.size());
  out += snapshot;
  detail::append_u64_le(out, count);
  out += table;
  detail::append_u64_le(out, payload.size());
  out += payload;
  return out;
}

inline void save_checkpoint(const std::string& path, const Config& cfg,
                            const TrainState<float>& st) {
  write_file_atomic(path, checkpoint_bytes(cfg, st));
}

// Rebuilds the model from the embedded config snapshot, then overwrites
// every parameter and optimizer moment from the payload. Every model
// parameter must be present; entries that match nothing are rejected.
inline TrainState<float> load_checkpoint(const std::string& path,
                                         Config* cfg_out = nullptr) {
  const std::string bytes = read_file(path);
  detail::ByteReader rd{bytes, 0, path};
  require(rd.str(4) == "DRFK", "checkpoint: ", path, " has no DRFK magic");
  const std::uint32_t version = rd.u32();
  require(version == 1, "checkpoint: ", path, " has unsupported version ",
          version);
  const std::uint64_t snap_len = rd.u64();
  const std::string snapshot = rd.str(snap_len);
  const Config cfg = parse_config(snapshot);
  if (cfg_out) *cfg_out = cfg;

  const std::uint64_t count = rd.u64();
  std::vector<detail::CkptEntry> entries;
  std::map<std::string, std::size_t> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    detail::CkptEntry e;
    e.name = rd.str(rd.u32());
    e.dtype = rd.u32();
    require(e.dtype <= 1, "checkpoint: entry \"", e.name,
            "\" has unknown dtype ", e.dtype);
    const std::uint32_t ndim = rd.u32();
    require(ndim == (e.dtype == 0 ? 4u : 0u), "checkpoint: entry \"", e.name,
            "\" has ", ndim, " dims, dtype ", e.dtype, " expects ",
            e.dtype == 0 ? 4 : 0);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.dims.push_back(rd.u64());
      require(e.dims.back() >= 1 && e.dims.back() <= 1u << 24,
              "checkpoint: entry \"", e.name, "\" has absurd dim ",
              e.dims.back());
    }
    e.offset = rd.u64();
    require(index.emplace(e.name, entries.size()).second,
            "checkpoint: duplicate entry \"", e.name, "\"");
    entries.push_back(std::move(e));
  }
  const std::uint64_t payload_len = rd.u64();
  rd.need(payload_len);
  const std::size_t payload_at = rd.pos;
  require(rd.pos + payload_len == bytes.size(),
          "checkpoint: trailing garbage after payload in ", path);
  for (const detail::CkptEntry& e : entries)
    require(e.offset + e.byte_size() <= payload_len, "checkpoint: entry \"",
            e.name, "\" runs past the payload");

  auto tensor_of = [&](const detail::CkptEntry& e) {
    Tensor<float> t(int(e.dims[0]), int(e.dims[1]), int(e.dims[2]),
                    int(e.dims[3]));
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + payload_at +
        e.offset;
    for (std::size_t i = 0; i < t.numel(); ++i)
      t[i] = parse_f32_le(p + 4 * i);
    return t;
  };
  auto scalar_of = [&](const detail::CkptEntry& e) {
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + payload_at +
        e.offset;
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  };

  TrainState<float> st{Model<float>::build(cfg.network), {}, 0};
  std::vector<bool> used(entries.size(), false);
  auto claim = [&](const std::string& name,
                   std::uint32_t dtype) -> const detail::CkptEntry* {
    const auto it = index.find(name);
    if (it == index.end()) return nullptr;
    const detail::CkptEntry& e = entries[it->second];
    require(e.dtype == dtype, "checkpoint: entry \"", name,
            "\" has dtype ", e.dtype, ", expected ", dtype);
    used[it->second] = true;
    return &e;
  };

  for (const auto& [name, init] : st.model.named_params()) {
    const detail::CkptEntry* e = claim(name, 0);
    require(e != nullptr, "checkpoint: missing parameter \"", name, "\"");
    Tensor<float> t = tensor_of(*e);
    require(t.shape() == init.shape(), "checkpoint: parameter \"", name,
            "\" has shape ", t.shape().str(), ", model expects ",
            init.shape().str());
    st.model.param(name) = std::move(t);

    const detail::CkptEntry* em = claim("adam_m/" + name, 0);
    const detail::CkptEntry* ev = claim("adam_v/" + name, 0);
    const detail::CkptEntry* et = claim("adam_t/" + name, 1);
    require((em != nullptr) == (ev != nullptr) &&
                (em != nullptr) == (et != nullptr),
            "checkpoint: incomplete optimizer state for \"", name, "\"");
    if (em) {
      AdamState<float>& a = st.opt[name];
      a.m = tensor_of(*em);
      a.v = tensor_of(*ev);
      require(a.m.shape() == init.shape() && a.v.shape() == init.shape(),
              "checkpoint: optimizer moments for \"", name,
              "\" do not match the parameter shape");
      a.t = long(scalar_of(*et));
    }
  }
  const detail::CkptEntry* es = claim("step", 1);
  require(es != nullptr, "checkpoint: missing step entry");
  st.step = long(scalar_of(*es));

  for (std::size_t i = 0; i < entries.size(); ++i)
    require(used[i], "checkpoint: entry \"", entries[i].name,
            "\" matches nothing in the model");
  return st;
}

}  // namespace drfk
