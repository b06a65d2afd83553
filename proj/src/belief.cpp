#include "vocplan/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vocplan {

void NormalPrior::validate() const {
  if (!(var0 >= 0.0) || !std::isfinite(var0)) throw ConfigError("prior variance must be >= 0");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var))
    throw ConfigError("noise variance must be > 0");
  if (!std::isfinite(mean0)) throw ConfigError("prior mean must be finite");
}

NodeBelief NodeBelief::from_prior(const NormalPrior& prior) {
  return {0, 0.0, prior.mean0, prior.var0};
}

double NodeBelief::cdf(double x) const {
  if (post_var <= 0.0) return x >= post_mean ? 1.0 : 0.0;
  return normal_cdf((x - post_mean) / std::sqrt(post_var));
}

namespace {

// Written in variance form so that var0 == 0 (a known value) stays finite.
void set_posterior(NodeBelief& b, const NormalPrior& prior) {
  const double n = static_cast<double>(b.count);
  const double denom = n * prior.var0 + prior.noise_var;
  b.post_mean = (n * prior.var0 * b.sample_mean + prior.noise_var * prior.mean0) / denom;
  b.post_var = prior.var0 * prior.noise_var / denom;
}

}  // namespace

NodeBelief update_independent(const NodeBelief& belief, const NormalPrior& prior,
                              double obs_value) {
  if (!std::isfinite(obs_value)) throw InvalidInput("observation must be finite");
  NodeBelief next = belief;
  next.count += 1;
  next.sample_mean += (obs_value - belief.sample_mean) / next.count;
  set_posterior(next, prior);
  return next;
}

NodeBelief posterior_from_batch(const NormalPrior& prior, std::span<const double> obs) {
  NodeBelief b = NodeBelief::from_prior(prior);
  if (obs.empty()) return b;
  for (double o : obs) {
    if (!std::isfinite(o)) throw InvalidInput("observation must be finite");
  }
  b.count = static_cast<int>(obs.size());
  b.sample_mean = std::accumulate(obs.begin(), obs.end(), 0.0) / b.count;
  set_posterior(b, prior);
  return b;
}

double predictive_sample(const NodeBelief& belief, const NormalPrior& prior, Rng& rng) {
  const double sd = std::sqrt(belief.post_var + prior.noise_var);
  return belief.post_mean + sd * standard_normal(rng);
}

Eigen::MatrixXd kernel_matrix(const Kernel& kernel, std::span<const double> coords) {
  if (!(kernel.signal_var > 0.0)) throw ConfigError("kernel signal variance must be > 0");
  if (kernel.kind == Kernel::Kind::Rbf && !(kernel.lengthscale > 0.0))
    throw ConfigError("rbf lengthscale must be > 0");
  const auto n = static_cast<Eigen::Index>(coords.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(coords[i])) throw InvalidInput("kernel coordinates must be finite");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (kernel.kind == Kernel::Kind::White) {
        k(i, j) = i == j ? kernel.signal_var : 0.0;
      } else {
        const double d = coords[i] - coords[j];
        k(i, j) = kernel.signal_var *
                  std::exp(-d * d / (2.0 * kernel.lengthscale * kernel.lengthscale));
      }
    }
  }
  return k;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd r = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

CorrelatedBelief update_correlated(const CorrelatedBelief& belief, std::size_t node,
                                   double obs_value) {
  require(node < belief.size(), "update_correlated: node out of range");
  if (!std::isfinite(obs_value)) throw InvalidInput("observation must be finite");
  const auto i = static_cast<Eigen::Index>(node);
  const double denom = belief.noise_vars(i) + belief.cov(i, i);
  if (!(denom > 0.0)) throw DegenerateBelief("noise variance plus prior variance is not positive");

  CorrelatedBelief next = belief;
  const Eigen::VectorXd col = belief.cov.col(i);
  next.mean += ((obs_value - belief.mean(i)) / denom) * col;
  next.cov.noalias() -= (col * col.transpose()) / denom;
  next.cov = 0.5 * (next.cov + next.cov.transpose());
  next.cov(i, i) = std::max(next.cov(i, i), 0.0);

  const double trace = next.cov.trace();
  if (next.size() > 1 && min_eigenvalue(next.cov) < -1e-9 * std::max(trace, 0.0)) {
    next.cov = psd_repair(next.cov);
  }
  return next;
}

double predictive_sample(const CorrelatedBelief& belief, std::size_t node, Rng& rng) {
  require(node < belief.size(), "predictive_sample: node out of range");
  const auto i = static_cast<Eigen::Index>(node);
  const double sd = std::sqrt(std::max(belief.cov(i, i), 0.0) + belief.noise_vars(i));
  return belief.mean(i) + sd * standard_normal(rng);
}

void ObservationLog::append(std::size_t key, double value, long step) {
  if (!entries_.empty() && step <= entries_.back().step)
    throw ContractViolation("observation log steps must strictly increase");
  entries_.push_back({key, value, step});
}

// -- Belief -------------------------------------------------------------------

Belief Belief::independent(std::vector<NormalPrior> priors) {
  Belief b;
  Independent ind;
  ind.nodes.reserve(priors.size());
  for (const auto& p : priors) {
    p.validate();
    ind.nodes.push_back(NodeBelief::from_prior(p));
  }
  ind.priors = std::move(priors);
  b.state_ = std::move(ind);
  return b;
}

Belief Belief::correlated(CorrelatedBelief joint) {
  const auto n = joint.mean.size();
  if (joint.cov.rows() != n || joint.cov.cols() != n || joint.noise_vars.size() != n)
    throw ConfigError("correlated belief dimensions disagree");
  if (n > 0 && (joint.noise_vars.array() < 0.0).any())
    throw ConfigError("noise variances must be >= 0");
  if (!joint.cov.isApprox(joint.cov.transpose(), 1e-12))
    throw ConfigError("covariance must be symmetric");
  Belief b;
  b.state_ = std::move(joint);
  return b;
}

Belief Belief::from_kernel(const Kernel& kernel, std::span<const double> coords, double mean0,
                           double noise_var) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  CorrelatedBelief j{Eigen::VectorXd::Constant(n, mean0), kernel_matrix(kernel, coords),
                     Eigen::VectorXd::Constant(n, noise_var)};
  return correlated(std::move(j));
}

std::size_t Belief::size() const {
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) return c->size();
  return std::get<Independent>(state_).nodes.size();
}

double Belief::mean(std::size_t i) const {
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) return c->mean(static_cast<Eigen::Index>(i));
  return std::get<Independent>(state_).nodes[i].post_mean;
}

double Belief::var(std::size_t i) const {
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) {
    const auto k = static_cast<Eigen::Index>(i);
    return std::max(c->cov(k, k), 0.0);
  }
  return std::get<Independent>(state_).nodes[i].post_var;
}

double Belief::stddev(std::size_t i) const { return std::sqrt(var(i)); }

double Belief::noise_var(std::size_t i) const {
  if (auto* c = std::get_if<CorrelatedBelief>(&state_))
    return c->noise_vars(static_cast<Eigen::Index>(i));
  return std::get<Independent>(state_).priors[i].noise_var;
}

double Belief::covariance(std::size_t i, std::size_t j) const {
  if (auto* c = std::get_if<CorrelatedBelief>(&state_))
    return c->cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return i == j ? var(i) : 0.0;
}

void Belief::observe(std::size_t i, double value) {
  require(i < size(), "Belief::observe: node out of range");
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) {
    *c = update_correlated(*c, i, value);
    return;
  }
  auto& ind = std::get<Independent>(state_);
  ind.nodes[i] = update_independent(ind.nodes[i], ind.priors[i], value);
}

Belief Belief::observed(std::size_t i, double value) const {
  Belief b = *this;
  b.observe(i, value);
  return b;
}

Eigen::VectorXd Belief::preposterior_direction(std::size_t i) const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  const double pred_var = var(i) + noise_var(i);
  if (!(pred_var > 0.0)) return b;
  const double inv = 1.0 / std::sqrt(pred_var);
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) {
    b = c->cov.col(static_cast<Eigen::Index>(i)) * inv;
  } else {
    b(static_cast<Eigen::Index>(i)) = var(i) * inv;
  }
  return b;
}

double Belief::predictive_sample(std::size_t i, Rng& rng) const {
  require(i < size(), "Belief::predictive_sample: node out of range");
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) return vocplan::predictive_sample(*c, i, rng);
  const auto& ind = std::get<Independent>(state_);
  return vocplan::predictive_sample(ind.nodes[i], ind.priors[i], rng);
}

Eigen::MatrixXd Belief::sampling_factor() const {
  const auto n = static_cast<Eigen::Index>(size());
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) {
    if (n == 0) return Eigen::MatrixXd(0, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c->cov);
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal();
  }
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) l(k, k) = stddev(static_cast<std::size_t>(k));
  return l;
}

Eigen::VectorXd Belief::means() const {
  if (auto* c = std::get_if<CorrelatedBelief>(&state_)) return c->mean;
  const auto& ind = std::get<Independent>(state_);
  Eigen::VectorXd m(static_cast<Eigen::Index>(ind.nodes.size()));
  for (std::size_t k = 0; k < ind.nodes.size(); ++k)
    m(static_cast<Eigen::Index>(k)) = ind.nodes[k].post_mean;
  return m;
}

const std::vector<NodeBelief>* Belief::nodes() const {
  if (auto* ind = std::get_if<Independent>(&state_)) return &ind->nodes;
  return nullptr;
}

const std::vector<NormalPrior>* Belief::priors() const {
  if (auto* ind = std::get_if<Independent>(&state_)) return &ind->priors;
  return nullptr;
}

const CorrelatedBelief* Belief::joint() const { return std::get_if<CorrelatedBelief>(&state_); }

}  // namespace vocplan
