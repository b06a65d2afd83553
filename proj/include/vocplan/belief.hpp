#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "vocplan/common.hpp"

namespace vocplan {

// Conjugate Normal prior over an unknown value, observed with known noise.
struct NormalPrior {
  double mean0 = 0.0;
  double var0 = 1.0;       // prior variance, 1 / tau0
  double noise_var = 1.0;  // observation noise variance, 1 / tau

  void validate() const;
};

// Posterior of a single frontier value under an independent NormalPrior.
struct NodeBelief {
  int count = 0;
  double sample_mean = 0.0;  // 0 while count == 0
  double post_mean = 0.0;
  double post_var = 1.0;

  static NodeBelief from_prior(const NormalPrior& prior);
  double cdf(double x) const;
};

NodeBelief update_independent(const NodeBelief& belief, const NormalPrior& prior,
                              double obs_value);

// Closed-form posterior after observing a whole batch at once.
NodeBelief posterior_from_batch(const NormalPrior& prior, std::span<const double> obs);

// Draw from the posterior predictive N(post_mean, post_var + noise_var).
double predictive_sample(const NodeBelief& belief, const NormalPrior& prior, Rng& rng);

struct Kernel {
  enum class Kind { White, Rbf };
  Kind kind = Kind::White;
  double signal_var = 1.0;
  double lengthscale = 1.0;

  static Kernel white(double signal_var) { return {Kind::White, signal_var, 1.0}; }
  static Kernel rbf(double signal_var, double lengthscale) {
    return {Kind::Rbf, signal_var, lengthscale};
  }
};

Eigen::MatrixXd kernel_matrix(const Kernel& kernel, std::span<const double> coords);

// Joint Normal belief over N values with per-node observation noise.
struct CorrelatedBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd noise_vars;

  std::size_t size() const { return static_cast<std::size_t>(mean.size()); }
};

// Rank-one conjugate update after observing node `node`. Applies PSD repair
// when the downdate drifts below -1e-9 * trace.
CorrelatedBelief update_correlated(const CorrelatedBelief& belief, std::size_t node,
                                   double obs_value);

double predictive_sample(const CorrelatedBelief& belief, std::size_t node, Rng& rng);

// Clamp negative eigenvalues of a symmetric matrix to zero.
Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& m);
double min_eigenvalue(const Eigen::MatrixXd& m);

struct ObservationEntry {
  std::size_t key;
  double value;
  long step;
};

// Append-only record of computation outcomes.
class ObservationLog {
 public:
  void append(std::size_t key, double value, long step);
  void append(std::size_t key, double value) { append(key, value, next_step()); }
  std::span<const ObservationEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  long next_step() const { return entries_.empty() ? 1 : entries_.back().step + 1; }

 private:
  std::vector<ObservationEntry> entries_;
};

// Belief over all frontier values of a search graph: either one independent
// NodeBelief per node, or a joint CorrelatedBelief.
class Belief {
 public:
  static Belief independent(std::vector<NormalPrior> priors);
  static Belief correlated(CorrelatedBelief joint);
  // Joint prior with covariance from `kernel` over `coords`, shared mean and noise.
  static Belief from_kernel(const Kernel& kernel, std::span<const double> coords,
                            double mean0, double noise_var);

  std::size_t size() const;
  bool is_correlated() const { return std::holds_alternative<CorrelatedBelief>(state_); }

  double mean(std::size_t i) const;
  double var(std::size_t i) const;
  double stddev(std::size_t i) const;
  double noise_var(std::size_t i) const;
  double covariance(std::size_t i, std::size_t j) const;

  void observe(std::size_t i, double value);
  Belief observed(std::size_t i, double value) const;

  // Posterior-mean shift per unit standardised predictive draw of node i:
  // mean_j(o) = mean_j + b_j * Z with Z ~ N(0, 1).
  Eigen::VectorXd preposterior_direction(std::size_t i) const;
  double predictive_sample(std::size_t i, Rng& rng) const;

  // Matrix L with L L^T = posterior covariance.
  Eigen::MatrixXd sampling_factor() const;
  Eigen::VectorXd means() const;

  const std::vector<NodeBelief>* nodes() const;
  const std::vector<NormalPrior>* priors() const;
  const CorrelatedBelief* joint() const;

 private:
  struct Independent {
    std::vector<NormalPrior> priors;
    std::vector<NodeBelief> nodes;
  };
  std::variant<Independent, CorrelatedBelief> state_;
};

}  // namespace vocplan
