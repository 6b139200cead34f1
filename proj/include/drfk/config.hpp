#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drfk/data.hpp"
#include "drfk/losses.hpp"
#include "drfk/network.hpp"
#include "drfk/train.hpp"

namespace drfk {

struct InferConfig {
  bool tile = false;
  bool fold = false;
  int window = 256;
  int step = 256;

  void validate() const {
    require(window >= 1, "infer: window must be >= 1, got ", window);
    require(step >= 1 && step <= window, "infer: need 1 <= step <= window, got ",
            step);
  }
};

struct Config {
  NetworkConfig network;
  TrainConfig train;
  DatasetSpec data;
  InferConfig infer;

  void validate() const {
    network.validate();
    train.validate(network.levels);
    data.validate();
    infer.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = int(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = int(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      diag = row[j];
      row[j] = std::min({row[j - 1] + 1, row[j] + 1, sub});
    }
  }
  return row[b.size()];
}

inline long long parse_ll(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw Error(cat("config: ", key, " = \"", v, "\" is not an integer"));
  }
  require(used == v.size(), "config: ", key, " = \"", v,
          "\" has trailing junk");
  return out;
}

inline int parse_int(const std::string& v, const std::string& key) {
  const long long x = parse_ll(v, key);
  require(x >= INT32_MIN && x <= INT32_MAX, "config: ", key, " = ", x,
          " out of range");
  return int(x);
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw Error(cat("config: ", key, " = \"", v,
                    "\" is not a nonnegative integer"));
  }
  require(used == v.size() && v[0] != '-', "config: ", key, " = \"", v,
          "\" is not a nonnegative integer");
  return out;
}

inline double parse_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw Error(cat("config: ", key, " = \"", v, "\" is not a number"));
  }
  require(used == v.size(), "config: ", key, " = \"", v,
          "\" has trailing junk");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(cat("config: ", key, " = \"", v,
                  "\" is not a bool (true/false/1/0)"));
}

inline std::string fmt_double(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

}  // namespace detail

// Strict INI: [network]/[train]/[data]/[infer] sections, key = value lines,
// '#' starts a comment anywhere. Unknown sections and keys are errors; a
// near-miss key gets a "did you mean" suggestion.
inline Config parse_config(const std::string& text) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_ll;
  using detail::parse_u64;

  static const std::map<std::string, std::vector<std::string>> known = {
      {"network",
       {"levels", "blocks", "base_channels", "block_kind", "conv_kind",
        "seed"}},
      {"train",
       {"patch", "batch", "steps", "lr_max", "lr_min", "seed", "reduction",
        "alpha1", "alpha2", "eps", "save_every"}},
      {"data",
       {"count", "height", "width", "seed", "motion_min_len", "motion_max_len",
        "gaussian_min_sigma", "gaussian_max_sigma", "p_motion",
        "noise_sigma"}},
      {"infer", {"tile", "fold", "window", "step"}},
  };

  Config c;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      require(line.back() == ']', "config line ", lineno,
              ": unterminated section header \"", line, "\"");
      section = line.substr(1, line.size() - 2);
      require(known.count(section), "config line ", lineno,
              ": unknown section [", section,
              "] (expected network, train, data, or infer)");
      continue;
    }

    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, "config line ", lineno,
            ": expected key = value, got \"", line, "\"");
    require(!section.empty(), "config line ", lineno,
            ": key before any [section]");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    require(!key.empty(), "config line ", lineno, ": empty key");
    require(!val.empty(), "config line ", lineno, ": empty value for ", key);

    const std::vector<std::string>& keys = known.at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      std::string best;
      int bd = 4;  // suggest only close misses
      for (const std::string& k : keys) {
        const int d = detail::edit_distance(key, k);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      std::string msg = detail::cat("config line ", lineno, ": unknown key \"",
                                    key, "\" in [", section, "]");
      if (!best.empty()) msg += detail::cat(" (did you mean \"", best, "\"?)");
      throw Error(msg);
    }

    const std::string full = section + "." + key;
    if (section == "network") {
      if (key == "levels") c.network.levels = parse_int(val, full);
      else if (key == "blocks") c.network.blocks_per_stage = parse_int(val, full);
      else if (key == "base_channels") c.network.base_channels = parse_int(val, full);
      else if (key == "block_kind") c.network.block_kind = parse_block_kind(val);
      else if (key == "conv_kind") c.network.conv_kind = parse_conv_kind(val);
      else c.network.seed = parse_u64(val, full);
    } else if (section == "train") {
      if (key == "patch") c.train.patch = parse_int(val, full);
      else if (key == "batch") c.train.batch = parse_int(val, full);
      else if (key == "steps") c.train.steps = long(parse_ll(val, full));
      else if (key == "lr_max") c.train.lr_max = parse_double(val, full);
      else if (key == "lr_min") c.train.lr_min = parse_double(val, full);
      else if (key == "seed") c.train.seed = parse_u64(val, full);
      else if (key == "reduction") c.train.reduction = parse_loss_mode(val);
      else if (key == "alpha1") c.train.loss.alpha1 = parse_double(val, full);
      else if (key == "alpha2") c.train.loss.alpha2 = parse_double(val, full);
      else if (key == "eps") c.train.loss.eps = parse_double(val, full);
      else c.train.save_every = long(parse_ll(val, full));
    } else if (section == "data") {
      if (key == "count") c.data.count = parse_int(val, full);
      else if (key == "height") c.data.height = parse_int(val, full);
      else if (key == "width") c.data.width = parse_int(val, full);
      else if (key == "seed") c.data.seed = parse_u64(val, full);
      else if (key == "motion_min_len") c.data.motion_min_len = parse_double(val, full);
      else if (key == "motion_max_len") c.data.motion_max_len = parse_double(val, full);
      else if (key == "gaussian_min_sigma") c.data.gaussian_min_sigma = parse_double(val, full);
      else if (key == "gaussian_max_sigma") c.data.gaussian_max_sigma = parse_double(val, full);
      else if (key == "p_motion") c.data.p_motion = parse_double(val, full);
      else c.data.noise_sigma = parse_double(val, full);
    } else {  // infer
      if (key == "tile") c.infer.tile = parse_bool(val, full);
      else if (key == "fold") c.infer.fold = parse_bool(val, full);
      else if (key == "window") c.infer.window = parse_int(val, full);
      else c.infer.step = parse_int(val, full);
    }
  }
  return c;
}

// Canonical text form: every key in a fixed order. parse(serialize(c))
// reproduces c exactly, which is what makes checkpoint snapshots stable.
inline std::string serialize_config(const Config& c) {
  using detail::fmt_double;
  std::string o;
  o += "[network]\n";
  o += "levels = " + std::to_string(c.network.levels) + "\n";
  o += "blocks = " + std::to_string(c.network.blocks_per_stage) + "\n";
  o += "base_channels = " + std::to_string(c.network.base_channels) + "\n";
  o += std::string("block_kind = ") + to_string(c.network.block_kind) + "\n";
  o += std::string("conv_kind = ") + to_string(c.network.conv_kind) + "\n";
  o += "seed = " + std::to_string(c.network.seed) + "\n";
  o += "[train]\n";
  o += "patch = " + std::to_string(c.train.patch) + "\n";
  o += "batch = " + std::to_string(c.train.batch) + "\n";
  o += "steps = " + std::to_string(c.train.steps) + "\n";
  o += "lr_max = " + fmt_double(c.train.lr_max) + "\n";
  o += "lr_min = " + fmt_double(c.train.lr_min) + "\n";
  o += "seed = " + std::to_string(c.train.seed) + "\n";
  o += std::string("reduction = ") + to_string(c.train.reduction) + "\n";
  o += "alpha1 = " + fmt_double(c.train.loss.alpha1) + "\n";
  o += "alpha2 = " + fmt_double(c.train.loss.alpha2) + "\n";
  o += "eps = " + fmt_double(c.train.loss.eps) + "\n";
  o += "save_every = " + std::to_string(c.train.save_every) + "\n";
  o += "[data]\n";
  o += "count = " + std::to_string(c.data.count) + "\n";
  o += "height = " + std::to_string(c.data.height) + "\n";
  o += "width = " + std::to_string(c.data.width) + "\n";
  o += "seed = " + std::to_string(c.data.seed) + "\n";
  o += "motion_min_len = " + fmt_double(c.data.motion_min_len) + "\n";
  o += "motion_max_len = " + fmt_double(c.data.motion_max_len) + "\n";
  o += "gaussian_min_sigma = " + fmt_double(c.data.gaussian_min_sigma) + "\n";
  o += "gaussian_max_sigma = " + fmt_double(c.data.gaussian_max_sigma) + "\n";
  o += "p_motion = " + fmt_double(c.data.p_motion) + "\n";
  o += "noise_sigma = " + fmt_double(c.data.noise_sigma) + "\n";
  o += "[infer]\n";
  o += std::string("tile = ") + (c.infer.tile ? "true" : "false") + "\n";
  o += std::string("fold = ") + (c.infer.fold ? "true" : "false") + "\n";
  o += "window = " + std::to_string(c.infer.window) + "\n";
  o += "step = " + std::to_string(c.infer.step) + "\n";
  return o;
}

}  // namespace drfk
