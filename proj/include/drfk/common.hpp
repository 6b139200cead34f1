#pragma once

#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>

namespace drfk {

// Library errors carry a human-readable diagnostic. The CLI maps Error to
// exit code 2 (usage/config/shape) and NumericError to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : Error {
  using Error::Error;
};

namespace detail {

template <class... Ts>
std::string cat(Ts&&... ts) {
  std::ostringstream os;
  (os << ... << ts);
  return os.str();
}

}  // namespace detail

template <class... Ts>
void require(bool cond, Ts&&... msg) {
  if (!cond) throw Error(detail::cat(std::forward<Ts>(msg)...));
}

template <class... Ts>
void require_numeric(bool cond, Ts&&... msg) {
  if (!cond) throw NumericError(detail::cat(std::forward<Ts>(msg)...));
}

// Thread cap from DRFK_THREADS; 1 (the default) is deterministic mode.
// All internal parallelism partitions work into disjoint outputs, so results
// are bitwise identical for every thread count; the cap exists to bound CPU.
inline int thread_cap() {
  static const int cap = [] {
    const char* env = std::getenv("DRFK_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    return v >= 1 ? v : 1;
  }();
  return cap;
}

// splitmix64 step; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace drfk
