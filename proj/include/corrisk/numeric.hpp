#pragma once

#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace corrisk {

// Pairwise (tree) summation. Fixed reduction order makes results identical
// across worker counts and keeps rounding error at O(log n).
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

// Sample variance with n-1 denominator.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) {
  return std::sqrt(sample_variance(v));
}

// Empirical quantile by linear interpolation of order statistics
// (the common "type 7" definition). `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::nan("");
  if (sorted.size() == 1) return sorted[0];
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = lo + 1 < sorted.size() ? lo + 1 : lo;
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Shortest decimal string that round-trips exactly. Used for every numeric
// CSV/JSON field so reruns are byte-identical.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double wrap_to_pi(double angle) {
  const double two_pi = 6.283185307179586476925287;
  double a = std::fmod(angle + 3.141592653589793238462643, two_pi);
  if (a < 0) a += two_pi;
  return a - 3.141592653589793238462643;
}

}  // namespace corrisk
