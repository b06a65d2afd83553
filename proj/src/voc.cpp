#include "vocplan/voc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <boost/math/distributions/normal.hpp>

namespace vocplan {

// -- ConvexPL ------------------------------------------------------------------

ConvexPL ConvexPL::line(double a, double b) {
  ConvexPL f;
  f.lines_.push_back({a, b});
  return f;
}

namespace {

double cross(const ConvexPL::Line& l, const ConvexPL::Line& r) {
  return (l.a - r.a) / (r.b - l.b);
}

}  // namespace

ConvexPL ConvexPL::envelope(std::vector<Line> lines) {
  require(!lines.empty(), "ConvexPL::envelope: no lines");
  std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) {
    return x.b < y.b || (x.b == y.b && x.a > y.a);
  });
  ConvexPL f;
  for (const auto& l : lines) {
    if (!f.lines_.empty() && f.lines_.back().b == l.b) continue;  // dominated parallel line
    while (!f.lines_.empty()) {
      const double x = cross(f.lines_.back(), l);
      if (!f.knots_.empty() && x <= f.knots_.back()) {
        f.lines_.pop_back();
        f.knots_.pop_back();
        continue;
      }
      f.knots_.push_back(x);
      break;
    }
    f.lines_.push_back(l);
  }
  return f;
}

ConvexPL ConvexPL::max(const ConvexPL& f, const ConvexPL& g) {
  std::vector<Line> all = f.lines_;
  all.insert(all.end(), g.lines_.begin(), g.lines_.end());
  return envelope(std::move(all));
}

void ConvexPL::add_scaled(const ConvexPL& g, double w) {
  require(w >= 0.0, "ConvexPL::add_scaled: negative weight");
  if (w == 0.0) return;
  ConvexPL out;
  std::size_t i = 0, j = 0;
  const auto inf = std::numeric_limits<double>::infinity();
  while (true) {
    out.lines_.push_back({lines_[i].a + w * g.lines_[j].a, lines_[i].b + w * g.lines_[j].b});
    const double ki = i < knots_.size() ? knots_[i] : inf;
    const double kj = j < g.knots_.size() ? g.knots_[j] : inf;
    if (ki == inf && kj == inf) break;
    if (ki < kj) {
      out.knots_.push_back(ki);
      ++i;
    } else if (kj < ki) {
      out.knots_.push_back(kj);
      ++j;
    } else {
      out.knots_.push_back(ki);
      ++i;
      ++j;
    }
  }
  *this = std::move(out);
}

void ConvexPL::shift(double c) {
  for (auto& l : lines_) l.a += c;
}

double ConvexPL::at(double z) const {
  const auto k = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), z) -
                                          knots_.begin());
  return lines_[k].a + lines_[k].b * z;
}

double ConvexPL::expected_gain() const {
  // f(z) = l_0(z) + sum_k (b_{k+1} - b_k) (z - z_k)^+, and
  // E[(Z - z)^+] - (-z)^+ = ppf(-|z|).
  double g = 0.0;
  for (std::size_t k = 0; k < knots_.size(); ++k)
    g += (lines_[k + 1].b - lines_[k].b) * positive_part_factor(-std::abs(knots_[k]));
  return g;
}

// -- VOC(phi) ------------------------------------------------------------------

std::vector<ConvexPL> static_value_pl(const SearchGraph& g, const Belief& belief,
                                      const Eigen::VectorXd& dir) {
  require(belief.size() == g.frontier.size(), "static_value_pl: belief does not cover the frontier");
  std::vector<ConvexPL> v(g.states.size(), ConvexPL::constant(0.0));
  std::vector<ConvexPL> root;
  std::vector<ConvexPL::Line> pool;
  for (std::size_t si = g.states.size(); si-- > 0;) {
    const auto& st = g.states[si];
    if (st.actions.empty()) continue;
    pool.clear();
    for (std::size_t an_idx : st.actions) {
      const auto& an = g.action_nodes[an_idx];
      ConvexPL q;
      if (an.frontier >= 0) {
        const auto f = static_cast<std::size_t>(an.frontier);
        q = ConvexPL::line(belief.mean(f), dir(static_cast<Eigen::Index>(f)));
      } else {
        q = ConvexPL::constant(0.0);
        for (const auto& e : an.edges) {
          q.add_scaled(v[e.child], e.prob * g.gamma);
          q.shift(e.prob * e.reward);
        }
      }
      pool.insert(pool.end(), q.lines().begin(), q.lines().end());
      if (si == 0) root.push_back(std::move(q));
    }
    v[si] = ConvexPL::envelope(pool);
  }
  return root;
}

namespace {

bool tree_independent(const SearchGraph& g, const Belief& belief) {
  return g.tree && !belief.is_correlated();
}

// Root value as one envelope: on deterministic graphs every path contributes
// one line.
ConvexPL root_envelope_det(const std::vector<std::vector<YTerm>>& terms, const Belief& belief,
                           const Eigen::VectorXd& dir, std::vector<ConvexPL>* per_action) {
  std::vector<ConvexPL::Line> all;
  for (const auto& ts : terms) {
    std::vector<ConvexPL::Line> mine;
    for (const auto& t : ts) {
      if (t.frontier < 0) {
        mine.push_back({t.offset, 0.0});
      } else {
        const auto f = static_cast<std::size_t>(t.frontier);
        mine.push_back({t.offset + t.scale * belief.mean(f),
                        t.scale * dir(static_cast<Eigen::Index>(f))});
      }
    }
    all.insert(all.end(), mine.begin(), mine.end());
    if (per_action) per_action->push_back(ConvexPL::envelope(std::move(mine)));
  }
  return ConvexPL::envelope(std::move(all));
}

struct PlValues {
  ConvexPL best;
  std::vector<ConvexPL> per_action;
};

PlValues pl_values(const SearchGraph& g, const Belief& belief, std::size_t i) {
  const Eigen::VectorXd dir = belief.preposterior_direction(i);
  PlValues out;
  if (g.deterministic()) {
    out.best = root_envelope_det(y_terms(g), belief, dir, &out.per_action);
    return out;
  }
  out.per_action = static_value_pl(g, belief, dir);
  std::vector<ConvexPL::Line> all;
  for (const auto& q : out.per_action) all.insert(all.end(), q.lines().begin(), q.lines().end());
  out.best = ConvexPL::envelope(std::move(all));
  return out;
}

}  // namespace

double voc_phi_independent(const SearchGraph& g, const Belief& belief, std::size_t i) {
  if (!tree_independent(g, belief))
    throw UnsupportedStructure("closed-form VOC needs a tree graph and independent beliefs");
  require(i < g.frontier.size(), "voc_phi_independent: node out of range");
  const double var = belief.var(i);
  const double pred = var + belief.noise_var(i);
  if (!(var > 0.0) || !(pred > 0.0)) return 0.0;
  const auto& fe = g.frontier[i];
  const double s = fe.scale * var / std::sqrt(pred);
  if (!(s > 0.0)) return 0.0;
  const double beta = y_mean(g, i, belief);
  double c = -std::numeric_limits<double>::infinity();
  for (const auto& ts : y_terms(g)) {
    for (const auto& t : ts) {
      if (t.frontier == static_cast<int>(i)) continue;
      const double v = t.frontier < 0 ? t.offset
                                      : t.offset + t.scale * belief.mean(static_cast<std::size_t>(t.frontier));
      c = std::max(c, v);
    }
  }
  if (c == -std::numeric_limits<double>::infinity()) return 0.0;
  return s * positive_part_factor(-std::abs(beta - c) / s);
}

double voc_phi_envelope(const SearchGraph& g, const Belief& belief, std::size_t i) {
  require(i < g.frontier.size(), "voc_phi: node out of range");
  return pl_values(g, belief, i).best.expected_gain();
}

double voc_phi(const SearchGraph& g, const Belief& belief, std::size_t i) {
  if (tree_independent(g, belief)) return voc_phi_independent(g, belief, i);
  return voc_phi_envelope(g, belief, i);
}

std::vector<double> voc_phi_all(const SearchGraph& g, const Belief& belief) {
  std::vector<double> out(g.frontier.size());
  if (tree_independent(g, belief)) {
    // Closed form with the two largest path values precomputed.
    const auto terms = y_terms(g);
    double top1 = -std::numeric_limits<double>::infinity(), top2 = top1;
    int arg1 = -2;
    std::vector<double> beta(g.frontier.size(), 0.0);
    for (const auto& ts : terms) {
      for (const auto& t : ts) {
        const double v = t.frontier < 0 ? t.offset
                                        : t.offset + t.scale * belief.mean(static_cast<std::size_t>(t.frontier));
        if (t.frontier >= 0) beta[static_cast<std::size_t>(t.frontier)] = v;
        if (v > top1) {
          top2 = top1;
          top1 = v;
          arg1 = t.frontier;
        } else if (v > top2) {
          top2 = v;
        }
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double var = belief.var(i);
      const double pred = var + belief.noise_var(i);
      const double s = g.frontier[i].scale * (pred > 0.0 ? var / std::sqrt(pred) : 0.0);
      const double c = arg1 == static_cast<int>(i) ? top2 : top1;
      if (!(s > 0.0) || c == -std::numeric_limits<double>::infinity()) {
        out[i] = 0.0;
        continue;
      }
      out[i] = s * positive_part_factor(-std::abs(beta[i] - c) / s);
    }
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = voc_phi_envelope(g, belief, i);
  return out;
}

double voc_prime_phi(const SearchGraph& g, const Belief& belief, std::size_t i) {
  require(i < g.frontier.size(), "voc_prime_phi: node out of range");
  const auto phi = static_value(g, belief);
  const std::size_t star = argmax_first(phi);
  const auto pl = pl_values(g, belief, i);
  // Both functions agree at Z = 0, so the difference of expectations is the
  // difference of gains.
  return std::max(0.0, pl.best.expected_gain() - pl.per_action[star].expected_gain());
}

std::vector<double> voc_prime_phi_all(const SearchGraph& g, const Belief& belief) {
  std::vector<double> out(g.frontier.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = voc_prime_phi(g, belief, i);
  return out;
}

// -- VOC(psi) ------------------------------------------------------------------

namespace {

struct PsiDraws {
  Eigen::MatrixXd inner;      // N x m_inner standard normals
  std::vector<double> outer;  // m_outer standardised outcomes
};

PsiDraws draw_psi(std::size_t n, const PsiMcConfig& cfg, Rng& rng) {
  require(cfg.m_outer >= 2 && cfg.m_inner >= 2, "VOC(psi): need at least two samples per loop");
  PsiDraws d;
  d.inner.resize(static_cast<Eigen::Index>(n), cfg.m_inner);
  // Antithetic pairs of columns for the inner draws.
  for (Eigen::Index k = 0; k < d.inner.cols(); k += 2) {
    for (Eigen::Index r = 0; r < d.inner.rows(); ++r) {
      d.inner(r, k) = standard_normal(rng);
      if (k + 1 < d.inner.cols()) d.inner(r, k + 1) = -d.inner(r, k);
    }
  }
  // The outcome is one dimensional: two draws per equal-probability stratum,
  // the pair giving the stratum's variance.
  const boost::math::normal_distribution<double> unit;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t strata = static_cast<std::size_t>(cfg.m_outer + 1) / 2;
  d.outer.resize(2 * strata);
  for (std::size_t o = 0; o < d.outer.size(); ++o) {
    const double p = (static_cast<double>(o / 2) + u(rng)) / static_cast<double>(strata);
    d.outer[o] = boost::math::quantile(unit, std::clamp(p, 1e-300, 1.0 - 1e-16));
  }
  return d;
}

// Factor of the covariance after one observation of node i.
Eigen::MatrixXd updated_factor(const Belief& belief, std::size_t i) {
  const auto n = static_cast<Eigen::Index>(belief.size());
  const auto ii = static_cast<Eigen::Index>(i);
  const double denom = belief.var(i) + belief.noise_var(i);
  if (!belief.is_correlated()) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) l(k, k) = belief.stddev(static_cast<std::size_t>(k));
    if (denom > 0.0) l(ii, ii) = std::sqrt(belief.var(i) * belief.noise_var(i) / denom);
    return l;
  }
  Eigen::MatrixXd cov = belief.joint()->cov;
  if (denom > 0.0) {
    const Eigen::VectorXd col = cov.col(ii);
    cov.noalias() -= col * col.transpose() / denom;
    cov = 0.5 * (cov + cov.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::MatrixXd current_factor(const Belief& belief) {
  const auto n = static_cast<Eigen::Index>(belief.size());
  if (belief.is_correlated()) return belief.sampling_factor();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) l(k, k) = belief.stddev(static_cast<std::size_t>(k));
  return l;
}

struct PsiEvaluator {
  const SearchGraph& g;
  std::vector<double> leaf, scratch, q;

  // Per inner draw root values for frontier values mean + x_k.
  void root_values(const Eigen::VectorXd& mean, const Eigen::MatrixXd& x,
                   std::vector<std::vector<double>>& out) {
    out.resize(static_cast<std::size_t>(x.cols()));
    leaf.resize(static_cast<std::size_t>(mean.size()));
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      for (Eigen::Index r = 0; r < mean.size(); ++r)
        leaf[static_cast<std::size_t>(r)] = mean(r) + x(r, k);
      backup(g, leaf, scratch, q);
      out[static_cast<std::size_t>(k)] = q;
    }
  }
};

// Mean of draws that come in consecutive pairs from equal-probability strata,
// with the standard error estimated from the within-pair spread.
McEstimate stratified_pairs(const std::vector<double>& x) {
  double sum = 0.0, var = 0.0;
  for (std::size_t h = 0; h + 1 < x.size(); h += 2) {
    sum += x[h] + x[h + 1];
    const double half = 0.5 * (x[h] - x[h + 1]);
    var += half * half;
  }
  const double strata = static_cast<double>(x.size() / 2);
  return {sum / (2.0 * strata), std::sqrt(var) / strata};
}

struct PsiResult {
  McEstimate voc;
  McEstimate voc_prime;
};

PsiResult psi_candidate(const SearchGraph& g, const Belief& belief, std::size_t i,
                        const PsiDraws& d, std::size_t star, const std::vector<double>& max_now) {
  const Eigen::VectorXd mean = belief.means();
  const Eigen::VectorXd dir = belief.preposterior_direction(i);
  const std::size_t mi = static_cast<std::size_t>(d.inner.cols());
  const std::size_t mo = d.outer.size();
  if (dir.cwiseAbs().maxCoeff() == 0.0) return {};

  const Eigen::MatrixXd x_new = updated_factor(belief, i) * d.inner;
  PsiEvaluator ev{g, {}, {}, {}};
  std::vector<std::vector<double>> vals;
  const std::size_t na = g.root_action_count();

  // gain[o] = psi_max(o) - psi_max(now); prime[o] = psi_max(o) - psi_star(o).
  std::vector<double> gain(mo), prime(mo);
  std::vector<double> inner_diff(mi, 0.0);
  std::vector<double> per_action(na);
  double now = 0.0;
  for (double m : max_now) now += m;
  now /= static_cast<double>(mi);
  for (std::size_t o = 0; o < mo; ++o) {
    ev.root_values(mean + dir * d.outer[o], x_new, vals);
    std::fill(per_action.begin(), per_action.end(), 0.0);
    for (std::size_t k = 0; k < mi; ++k) {
      for (std::size_t a = 0; a < na; ++a) per_action[a] += vals[k][a];
    }
    for (auto& v : per_action) v /= static_cast<double>(mi);
    const std::size_t best = argmax_first(per_action);
    gain[o] = per_action[best] - now;
    prime[o] = per_action[best] - per_action[star];
    for (std::size_t k = 0; k < mi; ++k) inner_diff[k] += vals[k][best] - max_now[k];
  }
  PsiResult r;
  r.voc = stratified_pairs(gain);
  r.voc_prime = stratified_pairs(prime);
  // Add the inner-loop error, which the outer spread does not see. Antithetic
  // columns are averaged first so the terms are independent.
  std::vector<double> inner_pairs;
  for (std::size_t k = 0; k < mi; k += 2)
    inner_pairs.push_back((k + 1 < mi ? 0.5 * (inner_diff[k] + inner_diff[k + 1]) : inner_diff[k]) /
                          static_cast<double>(mo));
  const auto inner = summarize(inner_pairs);
  r.voc.se = std::sqrt(r.voc.se * r.voc.se + inner.se * inner.se);
  r.voc_prime.se = std::sqrt(r.voc_prime.se * r.voc_prime.se + inner.se * inner.se);
  return r;
}

struct PsiContext {
  PsiDraws d;
  Eigen::MatrixXd x_now;
  std::vector<double> psi_now;
  std::vector<double> max_now;
  std::size_t star = 0;
};

PsiContext psi_context(const SearchGraph& g, const Belief& belief, const PsiMcConfig& cfg,
                       Rng& rng) {
  require(belief.size() == g.frontier.size(), "VOC(psi): belief does not cover the frontier");
  PsiContext c;
  c.d = draw_psi(belief.size(), cfg, rng);
  c.x_now = current_factor(belief) * c.d.inner;
  PsiEvaluator ev{g, {}, {}, {}};
  std::vector<std::vector<double>> vals;
  ev.root_values(belief.means(), c.x_now, vals);
  const std::size_t na = g.root_action_count();
  c.psi_now.assign(na, 0.0);
  c.max_now.resize(vals.size());
  for (std::size_t k = 0; k < vals.size(); ++k) {
    for (std::size_t a = 0; a < na; ++a) c.psi_now[a] += vals[k][a];
  }
  for (auto& v : c.psi_now) v /= static_cast<double>(vals.size());
  c.star = argmax_first(c.psi_now);
  for (std::size_t k = 0; k < vals.size(); ++k) c.max_now[k] = vals[k][c.star];
  return c;
}

}  // namespace

McEstimate voc_psi_mc(const SearchGraph& g, const Belief& belief, std::size_t i,
                      const PsiMcConfig& cfg, Rng& rng) {
  require(i < g.frontier.size(), "voc_psi_mc: node out of range");
  const auto c = psi_context(g, belief, cfg, rng);
  return psi_candidate(g, belief, i, c.d, c.star, c.max_now).voc;
}

McEstimate voc_prime_psi_mc(const SearchGraph& g, const Belief& belief, std::size_t i,
                            const PsiMcConfig& cfg, Rng& rng) {
  require(i < g.frontier.size(), "voc_prime_psi_mc: node out of range");
  const auto c = psi_context(g, belief, cfg, rng);
  return psi_candidate(g, belief, i, c.d, c.star, c.max_now).voc_prime;
}

std::vector<McEstimate> voc_psi_all(const SearchGraph& g, const Belief& belief,
                                    const PsiMcConfig& cfg, Rng& rng) {
  const auto c = psi_context(g, belief, cfg, rng);
  std::vector<McEstimate> out;
  out.reserve(g.frontier.size());
  for (std::size_t i = 0; i < g.frontier.size(); ++i)
    out.push_back(psi_candidate(g, belief, i, c.d, c.star, c.max_now).voc);
  return out;
}

// -- UEB -----------------------------------------------------------------------

UebParts ueb_parts(const YTerm& term, double c, const NodeBelief& node, const NormalPrior& prior) {
  const double n = node.count;
  const double s0sq = prior.var0;
  const double s0 = std::sqrt(prior.var0);
  const double se = std::sqrt(prior.noise_var);
  const double sesq = prior.noise_var;
  const double mu_y = term.offset + term.scale * node.post_mean;
  const double sd_y = term.scale * std::sqrt(node.post_var);
  UebParts p{};
  if (sd_y > 0.0) {
    const double z = (mu_y - c) / sd_y;
    p.dlambda_dsigma = term.scale * normal_pdf(z);
    p.dlambda_dmu = term.scale * normal_cdf(z);
  } else {
    p.dlambda_dsigma = 0.0;
    p.dlambda_dmu = mu_y > c ? term.scale : 0.0;
  }
  const double d = n * s0sq + sesq;
  p.dsigma_dn = -se * s0 * s0sq / (2.0 * std::pow(d, 1.5));
  p.dmu_dn = s0sq * sesq * (node.sample_mean - prior.mean0) / (d * d);
  return p;
}

UebScore ueb_scores(const SearchGraph& g, const Belief& belief) {
  if (belief.is_correlated()) throw UnsupportedStructure("UEB needs independent beliefs");
  if (!g.deterministic()) throw UnsupportedStructure("UEB without tables needs a deterministic graph");
  TermGroups groups;
  for (auto& ts : y_terms(g)) groups.push_back({{std::move(ts), 1.0}});
  return ueb_scores(g, belief, groups);
}

TermGroups group_tables(const SearchGraph& g, std::span<const TransitionTable> tables) {
  require(!tables.empty(), "group_tables: no transition tables");
  const std::size_t na = g.root_action_count();
  TermGroups groups(na);
  const double w = 1.0 / static_cast<double>(tables.size());
  auto same = [](const std::vector<YTerm>& x, const std::vector<YTerm>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k].frontier != y[k].frontier || x[k].offset != y[k].offset || x[k].scale != y[k].scale)
        return false;
    return true;
  };
  for (const auto& t : tables) {
    auto terms = y_terms(g, t);
    for (std::size_t a = 0; a < na; ++a) {
      auto& ga = groups[a];
      auto it = std::find_if(ga.begin(), ga.end(),
                             [&](const WeightedTerms& wt) { return same(wt.terms, terms[a]); });
      if (it != ga.end()) it->weight += w;
      else ga.push_back({std::move(terms[a]), w});
    }
  }
  return groups;
}

UebScore ueb_scores(const SearchGraph& g, const Belief& belief, const TermGroups& groups) {
  if (belief.is_correlated()) throw UnsupportedStructure("UEB needs independent beliefs");
  require(groups.size() == g.root_action_count(), "ueb_scores: groups do not match graph");
  const auto* nodes = belief.nodes();
  const auto* priors = belief.priors();
  UebScore s;
  s.lambda.assign(groups.size(), 0.0);
  std::vector<std::vector<LrBound>> lr(groups.size());
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (const auto& wt : groups[a]) {
      lr[a].push_back(lr_bound_terms(wt.terms, belief));
      s.lambda[a] += wt.weight * lr[a].back().lambda;
    }
  }
  s.alpha = argmax_first(s.lambda);
  s.dlambda_dn.assign(g.frontier.size(), 0.0);
  for (std::size_t k = 0; k < groups[s.alpha].size(); ++k) {
    const auto& wt = groups[s.alpha][k];
    for (const auto& t : wt.terms) {
      if (t.frontier < 0) continue;
      const auto f = static_cast<std::size_t>(t.frontier);
      const auto p = ueb_parts(t, lr[s.alpha][k].c, (*nodes)[f], (*priors)[f]);
      s.dlambda_dn[f] += wt.weight * (p.dlambda_dsigma * p.dsigma_dn + p.dlambda_dmu * p.dmu_dn);
    }
  }
  return s;
}

UebScore ueb_scores(const SearchGraph& g, const Belief& belief,
                    std::span<const TransitionTable> tables) {
  return ueb_scores(g, belief, group_tables(g, tables));
}

}  // namespace vocplan
