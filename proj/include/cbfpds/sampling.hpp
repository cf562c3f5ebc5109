#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <thread>
#include <vector>

#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"

namespace cbfpds {

/// Every randomized routine draws from one of these, seeded explicitly.
using Rng = std::mt19937_64;

inline constexpr std::uint64_t kDefaultSeed = 42;

/// Axis-aligned box.
struct Box {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x) const {
    return ((x.array() >= lower.array()) && (x.array() <= upper.array())).all();
  }
  double diagonal() const { return (upper - lower).norm(); }

  friend bool operator==(const Box& a, const Box& b) { return a.lower == b.lower && a.upper == b.upper; }
};

using Sampler = std::function<Vec(Rng&)>;

inline Vec uniform_in_box(const Box& box, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(box.dim());
  for (int i = 0; i < box.dim(); ++i) x[i] = box.lower[i] + u(rng) * (box.upper[i] - box.lower[i]);
  return x;
}

inline Vec random_unit_vector(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  do {
    for (int i = 0; i < n; ++i) v[i] = g(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

/// Uniform rejection sampler for {x in box | accept(x)}.
inline Sampler rejection_sampler(Box box, std::function<bool(const Vec&)> accept, int max_tries = 100000) {
  return [box = std::move(box), accept = std::move(accept), max_tries](Rng& rng) {
    for (int k = 0; k < max_tries; ++k) {
      Vec x = uniform_in_box(box, rng);
      if (accept(x)) return x;
    }
    throw ValidationError("rejection sampler: region is empty or negligible inside its box");
  };
}

/// Radical inverse in the given base; the k-th Halton point uses the first `dim` primes.
inline double radical_inverse(std::uint64_t k, unsigned base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (k > 0) {
    r += f * static_cast<double>(k % base);
    k /= base;
    f *= inv;
  }
  return r;
}

inline Vec halton_point(std::uint64_t k, const Box& box) {
  static constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  const int n = box.dim();
  if (n > 16) throw DimensionError("halton_point supports at most 16 dimensions");
  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = box.lower[i] + radical_inverse(k + 1, kPrimes[i]) * (box.upper[i] - box.lower[i]);
  return x;
}

/// Cell-centered N-per-axis grid over a box, in lexicographic order (first axis fastest).
inline std::vector<Vec> grid_points(const Box& box, int per_axis) {
  if (per_axis < 1) throw ValidationError("grid needs at least one point per axis");
  const int n = box.dim();
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(per_axis);
  std::vector<Vec> pts;
  pts.reserve(total);
  std::vector<int> idx(n, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vec x(n);
    for (int i = 0; i < n; ++i) {
      x[i] = box.lower[i] + (idx[i] + 0.5) * (box.upper[i] - box.lower[i]) / per_axis;
    }
    pts.push_back(std::move(x));
    for (int i = 0; i < n; ++i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
  }
  return pts;
}

/// Evaluates fn(i) for i in [0, count) on a small worker pool; results keep index order.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, Fn fn, unsigned workers = 0) {
  std::vector<T> out(count);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += workers) out[i] = fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace cbfpds
