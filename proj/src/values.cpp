#include "vocplan/values.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vocplan {

McEstimate summarize(std::span<const double> xs) {
  const auto n = static_cast<double>(xs.size());
  if (xs.empty()) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

std::size_t argmax_first(std::span<const double> v) {
  require(!v.empty(), "argmax_first: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

FrontierSampler::FrontierSampler(const Belief& belief) : mean_(belief.means()) {
  const auto n = mean_.size();
  z_.resize(n);
  if (belief.is_correlated()) {
    factor_ = belief.sampling_factor();
  } else {
    sd_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) sd_(i) = belief.stddev(static_cast<std::size_t>(i));
  }
}

void FrontierSampler::draw(Rng& rng, std::vector<double>& out) {
  for (Eigen::Index i = 0; i < z_.size(); ++i) z_(i) = standard_normal(rng);
  transform(std::span<const double>(z_.data(), static_cast<std::size_t>(z_.size())), out);
}

void FrontierSampler::transform(std::span<const double> z, std::vector<double>& out) const {
  const auto n = mean_.size();
  out.resize(static_cast<std::size_t>(n));
  Eigen::Map<const Eigen::VectorXd> zv(z.data(), n);
  Eigen::Map<Eigen::VectorXd> o(out.data(), n);
  if (factor_.size() > 0) {
    o.noalias() = mean_ + factor_ * zv;
  } else {
    o = mean_ + sd_.cwiseProduct(zv);
  }
}

std::vector<double> static_value(const SearchGraph& g, const Belief& belief) {
  require(belief.size() == g.frontier.size(), "static_value: belief does not cover the frontier");
  const Eigen::VectorXd m = belief.means();
  return backup(g, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

std::vector<McEstimate> dynamic_value_mc(const SearchGraph& g, const Belief& belief, int m,
                                         Rng& rng) {
  require(m >= 2, "dynamic_value_mc: need at least two samples");
  require(belief.size() == g.frontier.size(), "dynamic_value_mc: belief does not cover the frontier");
  FrontierSampler sampler(belief);
  const std::size_t k = g.root_action_count();
  std::vector<std::vector<double>> draws(k, std::vector<double>(static_cast<std::size_t>(m)));
  std::vector<double> leaf, scratch, q;
  for (int j = 0; j < m; ++j) {
    sampler.draw(rng, leaf);
    backup(g, leaf, scratch, q);
    for (std::size_t a = 0; a < k; ++a) draws[a][static_cast<std::size_t>(j)] = q[a];
  }
  std::vector<McEstimate> out;
  for (const auto& d : draws) out.push_back(summarize(d));
  return out;
}

double optimal_c_residual(std::span<const double> mu, std::span<const double> sigma, double c) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (sigma[i] > 0.0) s += normal_cdf((mu[i] - c) / sigma[i]);
    else s += c < mu[i] ? 1.0 : 0.0;
  }
  return s - 1.0;
}

double optimal_c(std::span<const double> mu, std::span<const double> sigma) {
  require(!mu.empty() && mu.size() == sigma.size(), "optimal_c: need at least one node");
  const double mu_lo = *std::min_element(mu.begin(), mu.end());
  const double mu_hi = *std::max_element(mu.begin(), mu.end());
  const double sd_hi = *std::max_element(sigma.begin(), sigma.end());
  double lo = mu_lo - 10.0 * sd_hi;
  double hi = mu_hi + 10.0 * sd_hi;
  // The residual is non-increasing in c.
  if (optimal_c_residual(mu, sigma, lo) <= 0.0) return lo;
  if (optimal_c_residual(mu, sigma, hi) >= 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = optimal_c_residual(mu, sigma, mid);
    if (std::abs(r) <= 1e-9) return mid;
    if (r > 0.0) lo = mid;
    else hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

LrBound lr_bound_normal(std::span<const double> mu, std::span<const double> sigma) {
  const double c = optimal_c(mu, sigma);
  double lambda = c;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (sigma[i] > 0.0) lambda += sigma[i] * positive_part_factor((mu[i] - c) / sigma[i]);
    else lambda += std::max(mu[i] - c, 0.0);
  }
  return {lambda, c};
}

LrBound lr_bound_terms(const std::vector<YTerm>& terms, const Belief& belief) {
  std::vector<double> mu, sd;
  mu.reserve(terms.size());
  sd.reserve(terms.size());
  for (const auto& t : terms) {
    if (t.frontier < 0) {
      mu.push_back(t.offset);
      sd.push_back(0.0);
    } else {
      const auto i = static_cast<std::size_t>(t.frontier);
      mu.push_back(t.offset + t.scale * belief.mean(i));
      sd.push_back(t.scale * belief.stddev(i));
    }
  }
  return lr_bound_normal(mu, sd);
}

std::vector<double> lr_bound(const SearchGraph& g, const Belief& belief) {
  if (!g.deterministic()) throw UnsupportedStructure("lr_bound needs a deterministic graph");
  std::vector<double> out;
  for (const auto& terms : y_terms(g)) out.push_back(lr_bound_terms(terms, belief).lambda);
  return out;
}

std::vector<McEstimate> lr_bound_stochastic(const SearchGraph& g, const Belief& belief, int k,
                                            Rng& rng) {
  require(k >= 1, "lr_bound_stochastic: need at least one table");
  const std::size_t na = g.root_action_count();
  std::vector<std::vector<double>> vals(na);
  for (int j = 0; j < k; ++j) {
    const auto t = sample_transition_table(g, rng);
    const auto terms = y_terms(g, t);
    for (std::size_t a = 0; a < na; ++a) vals[a].push_back(lr_bound_terms(terms[a], belief).lambda);
  }
  std::vector<McEstimate> out;
  for (const auto& v : vals) out.push_back(summarize(v));
  return out;
}

McEstimate bsr_star(const SearchGraph& g, const Belief& belief, ValueKind kind, int m, Rng& rng) {
  require(m >= 2, "bsr_star: need at least two samples");
  FrontierSampler sampler(belief);
  const std::size_t k = g.root_action_count();
  std::vector<double> leaf, scratch, q;
  std::vector<double> best(static_cast<std::size_t>(m));
  std::vector<std::vector<double>> per(k, std::vector<double>(static_cast<std::size_t>(m)));
  for (int j = 0; j < m; ++j) {
    sampler.draw(rng, leaf);
    backup(g, leaf, scratch, q);
    best[static_cast<std::size_t>(j)] = *std::max_element(q.begin(), q.end());
    for (std::size_t a = 0; a < k; ++a) per[a][static_cast<std::size_t>(j)] = q[a];
  }
  std::size_t chosen;
  double f_max;
  if (kind == ValueKind::Static) {
    const auto phi = static_value(g, belief);
    chosen = argmax_first(phi);
    f_max = phi[chosen];
    const auto e = summarize(best);
    return {e.mean - f_max, e.se};
  }
  std::vector<double> psi(k);
  for (std::size_t a = 0; a < k; ++a) psi[a] = summarize(per[a]).mean;
  chosen = argmax_first(psi);
  std::vector<double> diff(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j)
    diff[static_cast<std::size_t>(j)] = best[static_cast<std::size_t>(j)] - per[chosen][static_cast<std::size_t>(j)];
  return summarize(diff);
}

}  // namespace vocplan
