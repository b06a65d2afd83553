#pragma once

#include <span>
#include <vector>

#include "vocplan/belief.hpp"
#include "vocplan/graph.hpp"

namespace vocplan {

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

McEstimate summarize(std::span<const double> xs);

// Joint draws of the frontier values (no observation noise).
class FrontierSampler {
 public:
  explicit FrontierSampler(const Belief& belief);
  // Fills `out` with mean + L z, z ~ N(0, I).
  void draw(Rng& rng, std::vector<double>& out);
  // Same, with caller supplied standard normals.
  void transform(std::span<const double> z, std::vector<double>& out) const;
  std::size_t size() const { return static_cast<std::size_t>(mean_.size()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd sd_;      // independent case
  Eigen::MatrixXd factor_;  // correlated case, empty otherwise
  Eigen::VectorXd z_;
};

// phi_n per root action: backward induction on posterior means.
std::vector<double> static_value(const SearchGraph& g, const Belief& belief);

// psi_n per root action from m joint draws of the frontier values.
std::vector<McEstimate> dynamic_value_mc(const SearchGraph& g, const Belief& belief, int m,
                                         Rng& rng);

// Root of sum_i (1 - F_i(c)) = 1 for Normal (or point mass when sigma = 0)
// distributions, clamped to [min mu - 10 max sigma, max mu + 10 max sigma].
double optimal_c(std::span<const double> mu, std::span<const double> sigma);

// Residual sum_i (1 - F_i(c)) - 1.
double optimal_c_residual(std::span<const double> mu, std::span<const double> sigma, double c);

struct LrBound {
  double lambda;
  double c;
};

// c + sum_i E[(Y_i - c)^+] at the optimizing c.
LrBound lr_bound_normal(std::span<const double> mu, std::span<const double> sigma);

// Lai-Robbins bound over one root action's Y terms.
LrBound lr_bound_terms(const std::vector<YTerm>& terms, const Belief& belief);

// Per root action bound. Deterministic graphs only.
std::vector<double> lr_bound(const SearchGraph& g, const Belief& belief);

// Average of lr_bound over k sampled transition tables.
std::vector<McEstimate> lr_bound_stochastic(const SearchGraph& g, const Belief& belief, int k,
                                            Rng& rng);

enum class ValueKind { Static, Dynamic };

// E[max_a Upsilon_n(a)] - max_a f(a), both from m joint draws.
McEstimate bsr_star(const SearchGraph& g, const Belief& belief, ValueKind kind, int m,
                    Rng& rng);

// Index of the largest value; lowest index on ties.
std::size_t argmax_first(std::span<const double> v);

}  // namespace vocplan
