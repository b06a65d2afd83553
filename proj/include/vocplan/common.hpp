#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace vocplan {

using Rng = std::mt19937_64;

// Runtime errors raised on bad input or numerically unusable state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DegenerateBelief : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedStructure : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractViolation(what);
}

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// E[(X)^+] / s for X ~ N(m, s^2) with z = m / s, written so that the large
// |z| tails do not lose precision: pdf(z) + z * cdf(z).
inline double positive_part_factor(double z) {
  const double a = std::abs(z);
  const double tail = normal_pdf(a) - a * normal_cdf(-a);
  const double v = z >= 0.0 ? tail + z : tail;
  return v < 0.0 ? 0.0 : v;
}

// splitmix64 finaliser; used to derive independent streams from a master seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace vocplan
