#ifndef GEOMREID_COMMON_HPP
#define GEOMREID_COMMON_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace geomreid {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  // parsing / IO
  malformed_header,
  unsupported_property,
  truncated_body,
  parse_error,
  duplicate_sequence_id,
  missing_file,
  io_error,
  // data model
  invalid_frame,
  invalid_sequence,
  invalid_arg,
  // render
  empty_projection,
  // embed
  too_few_frames,
  no_color_data,
  dimension_mismatch,
  normalization_degenerate,
  singleton_label,
  insufficient_data,
  // evalkit
  too_few_surgeries,
  no_positive,
  unknown_probe_identity,
  incomplete_table,
  // saliency
  shape_mismatch,
  non_differentiable_path,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

// ---------------------------------------------------------------------------
// Counter-based deterministic RNG
// ---------------------------------------------------------------------------

// splitmix64 finalizer; the whole toolkit derives randomness from it so that
// results are bit-identical across platforms and thread counts.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Key derivation for independent streams: mix(seed, stream), mix(a, b, c), ...
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ULL));
}
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix(mix(a, b, c), d);
}

// A keyed counter stream: value i is a pure function of (key, i).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // standard normal via Box-Muller; consumes two uniforms per draw
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // deterministic Fisher-Yates shuffle
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Numeric helpers
// ---------------------------------------------------------------------------

// Pairwise (cascade) summation: bit-stable regardless of how callers chunk work.
double pairwise_sum(std::span<const double> v);

inline double pairwise_mean(std::span<const double> v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

// Percentile with linear interpolation between closest ranks; p in [0, 100].
double percentile(std::vector<double> values, double p);

template <typename Derived>
double percentile(const Eigen::DenseBase<Derived>& values, double p) {
  std::vector<double> v(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) v[static_cast<std::size_t>(i)] = values.derived()(i);
  return percentile(std::move(v), p);
}

// ---------------------------------------------------------------------------
// Color conversions (shared by the generator and the descriptors)
// ---------------------------------------------------------------------------

// h, s, v in [0,1]; returns rgb in [0,1].
Eigen::Vector3d hsv_to_rgb(double h, double s, double v);

struct HueSat {
  double hue = 0.0;  // [0,1)
  double sat = 0.0;  // [0,1]
};
HueSat rgb_to_hue_sat(double r, double g, double b);

// ---------------------------------------------------------------------------
// Deterministic parallel loop: each index writes its own slot, so the result
// is independent of the worker count.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::scoped_lock lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace geomreid

#endif  // GEOMREID_COMMON_HPP
