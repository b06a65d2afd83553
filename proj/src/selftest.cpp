#include "vocplan/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include "vocplan/harness.hpp"
#include "vocplan/voc.hpp"

namespace vocplan {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// Root with one action over two frontier nodes and one over a single node.
SearchGraph small_tree() {
  static const TableMdp m = [] {
    TableMdp t;
    t.add(0, 0, {{1, 1.0, 0.0}});
    t.add(0, 1, {{2, 1.0, 0.0}});
    t.add(1, 0, {{3, 1.0, 0.0}});
    t.add(1, 1, {{4, 1.0, 0.0}});
    t.add(2, 0, {{5, 1.0, 0.0}});
    return t;
  }();
  return expand(m, 0, 2);
}

Belief random_independent(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.5);
  std::vector<NormalPrior> p;
  for (std::size_t i = 0; i < n; ++i) p.push_back({0.5 * standard_normal(rng), u(rng), u(rng)});
  auto b = Belief::independent(p);
  for (std::size_t i = 0; i < n; ++i)
    if (rng() % 2) b.observe(i, standard_normal(rng));
  return b;
}

// E[max(X, Y)] for independent normals.
double emax2(double m1, double s1, double m2, double s2) {
  const double th = std::hypot(s1, s2);
  if (th == 0.0) return std::max(m1, m2);
  const double a = (m1 - m2) / th;
  return m1 * normal_cdf(a) + m2 * normal_cdf(-a) + th * normal_pdf(a);
}

// psi of the two actions of small_tree in closed form.
std::vector<double> psi_exact(const Belief& b) {
  return {emax2(b.mean(0), b.stddev(0), b.mean(1), b.stddev(1)), b.mean(2)};
}

SelftestResult psi_ge_phi(Rng& rng) {
  const auto g = small_tree();
  int bad = 0, mc_off = 0;
  for (int k = 0; k < 100; ++k) {
    const auto b = random_independent(3, rng);
    const auto phi = static_value(g, b);
    const auto psi = psi_exact(b);
    const auto est = dynamic_value_mc(g, b, 2000, rng);
    for (std::size_t a = 0; a < phi.size(); ++a) {
      if (psi[a] < phi[a] - 1e-12) ++bad;
      if (std::abs(est[a].mean - psi[a]) > 4.0 * est[a].se + 1e-12) ++mc_off;
    }
  }
  return {"psi >= phi (100 instances)", bad == 0 && mc_off == 0,
          fmt("%.0f order violations, %.0f sampled psi beyond 4 SE", bad, mc_off)};
}

SelftestResult martingale_and_dominance(Rng& rng) {
  const auto g = small_tree();
  const auto b = random_independent(3, rng);
  const auto phi0 = static_value(g, b);
  const double phi_max = std::max(phi0[0], phi0[1]);
  auto psi0 = [](const Belief& x) { return emax2(x.mean(0), x.stddev(0), x.mean(1), x.stddev(1)); };
  const double before = psi0(b);
  std::vector<double> psi_after, phi_after;
  for (int k = 0; k < 10000; ++k) {
    const std::size_t i = static_cast<std::size_t>(k % 3);
    const auto nb = b.observed(i, b.predictive_sample(i, rng));
    psi_after.push_back(psi0(nb));
    const auto p = static_value(g, nb);
    phi_after.push_back(std::max(p[0], p[1]));
  }
  const auto ps = summarize(psi_after), ph = summarize(phi_after);
  const bool ok = std::abs(ps.mean - before) <= 3.0 * ps.se && ph.mean >= phi_max - 3.0 * ph.se;
  return {"psi martingale, phi dominance (1e4 draws)", ok,
          fmt("psi drift %.2e, phi gain %.2e", ps.mean - before, ph.mean - phi_max)};
}

SelftestResult lr_ge_psi(Rng& rng) {
  const auto g = small_tree();
  int bad = 0;
  double slack = 1e300;
  for (int k = 0; k < 100; ++k) {
    const auto b = random_independent(3, rng);
    const auto lam = lr_bound(g, b);
    const auto psi = psi_exact(b);
    for (std::size_t a = 0; a < lam.size(); ++a) {
      if (lam[a] < psi[a] - 1e-12) ++bad;
      slack = std::min(slack, lam[a] - psi[a]);
    }
  }
  return {"lambda >= psi (100 instances)", bad == 0, fmt("%.0f violations, min slack %.2e", bad, slack)};
}

SelftestResult optimal_c_check(Rng& rng) {
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    std::vector<double> mu(2 + rng() % 8), sd(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      mu[i] = standard_normal(rng);
      sd[i] = 0.02 + std::abs(standard_normal(rng));
    }
    worst = std::max(worst, std::abs(optimal_c_residual(mu, sd, optimal_c(mu, sd))));
  }
  return {"optimal c residual <= 1e-6", worst <= 1e-6, fmt("max residual %.2e", worst)};
}

SelftestResult white_equivalence(Rng& rng) {
  const auto chain = make_chain_tree(2, 3, 1.0, 0.0);
  const auto g = expand(chain, 0, 3);
  const std::size_t n = g.frontier.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  auto joint = Belief::from_kernel(Kernel::white(0.8), x, 0.1, 0.3);
  auto ind = Belief::independent(std::vector<NormalPrior>(n, NormalPrior{0.1, 0.8, 0.3}));
  double worst = 0.0;
  for (int k = 0; k < 30; ++k) {
    const std::size_t i = rng() % n;
    const double o = standard_normal(rng);
    joint.observe(i, o);
    ind.observe(i, o);
    for (std::size_t j = 0; j < n; ++j) {
      worst = std::max(worst, std::abs(joint.mean(j) - ind.mean(j)));
      worst = std::max(worst, std::abs(joint.var(j) - ind.var(j)));
      worst = std::max(worst, std::abs(voc_phi(g, joint, j) - voc_phi(g, ind, j)));
    }
  }
  return {"white kernel correlated == independent (1e-9)", worst <= 1e-9, fmt("max diff %.2e", worst)};
}

// Central difference with one Richardson step.
template <class F>
double richardson(const F& f, double x, double h) {
  const double d1 = (f(x + h) - f(x - h)) / (2 * h);
  const double d2 = (f(x + h / 2) - f(x - h / 2)) / h;
  return (4 * d2 - d1) / 3;
}

SelftestResult ueb_chain(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const NormalPrior prior{1.0 + standard_normal(rng), 0.3 + std::abs(standard_normal(rng)),
                            0.2 + std::abs(standard_normal(rng))};
    NodeBelief node = NodeBelief::from_prior(prior);
    const int n = static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) node = update_independent(node, prior, standard_normal(rng));
    const YTerm term{0, 0.3 * standard_normal(rng), 0.5 + 0.5 * static_cast<double>(rng() % 2)};
    const double c = standard_normal(rng);
    const auto parts = ueb_parts(term, c, node, prior);
    const double h = 1e-3, mu = node.post_mean, sd = std::sqrt(node.post_var);
    // E[(Y - c)+] = (mu_Y - c)+ + s_Y ppf(-|z|): no cancellation in the tails.
    auto lam = [&](double m, double s) {
      const double my = term.offset + term.scale * m, sy = term.scale * s;
      return std::max(my - c, 0.0) + sy * positive_part_factor(-std::abs(my - c) / sy);
    };
    const double s0 = prior.var0, se = prior.noise_var, rhat = node.sample_mean;
    auto sigma_n = [&](double k) { return std::sqrt(s0 * se / (k * s0 + se)); };
    auto mu_n = [&](double k) { return (k * s0 * rhat + se * prior.mean0) / (k * s0 + se); };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-8); };
    // The (mu_Y - c)+ part is constant in s; dropping it keeps tiny slopes out of roundoff.
    auto d_sigma = [&](double x) {
      const double my = term.offset + term.scale * mu, sy = term.scale * x;
      return sy * positive_part_factor(-std::abs(my - c) / sy);
    };
    auto d_mu = [&](double x) { return lam(x, sd); };
    worst = std::max(worst, rel(parts.dlambda_dsigma, richardson(d_sigma, sd, h)));
    worst = std::max(worst, rel(parts.dlambda_dmu, richardson(d_mu, mu, h)));
    worst = std::max(worst, rel(parts.dsigma_dn, richardson(sigma_n, n, h)));
    if (std::abs(rhat - prior.mean0) > 1e-3) worst = std::max(worst, rel(parts.dmu_dn, richardson(mu_n, n, h)));
  }
  return {"UEB chain factors vs finite differences (1e-4 rel)", worst <= 1e-4,
          fmt("max relative error %.2e", worst)};
}

SelftestResult psd_preservation(Rng& rng) {
  std::vector<double> x(32);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  auto b = Belief::from_kernel(Kernel::rbf(1.0, 8.0), x, 0.0, 1e-6);
  double worst = 0.0;
  for (int k = 0; k < 300; ++k) {
    const std::size_t i = rng() % x.size();
    b.observe(i, b.predictive_sample(i, rng));
    const auto* j = b.joint();
    worst = std::min(worst, min_eigenvalue(j->cov) / std::max(j->cov.trace(), 1e-300));
  }
  return {"posterior covariance stays PSD", worst >= -1e-9, fmt("min eigenvalue / trace %.2e", worst)};
}

SelftestResult batch_vs_sequential(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const NormalPrior prior{standard_normal(rng), 0.1 + std::abs(standard_normal(rng)),
                            0.1 + std::abs(standard_normal(rng))};
    std::vector<double> obs(1 + rng() % 20);
    for (auto& o : obs) o = standard_normal(rng);
    NodeBelief seq = NodeBelief::from_prior(prior);
    for (double o : obs) seq = update_independent(seq, prior, o);
    const auto batch = posterior_from_batch(prior, obs);
    worst = std::max({worst, std::abs(seq.post_mean - batch.post_mean), std::abs(seq.post_var - batch.post_var)});
  }
  return {"conjugate batch == sequential (1e-12)", worst <= 1e-12, fmt("max diff %.2e", worst)};
}

SelftestResult voc_consistency(Rng& rng) {
  const auto chain = make_chain_tree(2, 3, 0.9, 0.3);
  const auto g = expand(chain, 0, 3);
  double worst = 0.0;
  int dominance = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_independent(g.frontier.size(), rng);
    for (std::size_t i = 0; i < g.frontier.size(); ++i) {
      const double cf = voc_phi_independent(g, b, i);
      worst = std::max(worst, std::abs(cf - voc_phi_envelope(g, b, i)));
      if (cf < voc_prime_phi(g, b, i) - 1e-12 || cf < 0.0) ++dominance;
    }
  }
  return {"VOC closed form == envelope, VOC >= VOC' >= 0", worst <= 1e-9 && dominance == 0,
          fmt("max diff %.2e, %.0f order violations", worst, dominance)};
}

SelftestResult frontier_sizes(Rng& rng) {
  BanditTreeSpec spec;
  spec.depth = 6;
  spec.p = 1.0;
  const auto env = bandit_tree_build(spec, rng);
  bool ok = true;
  for (int n = 1; n <= 6; ++n) ok = ok && expand(env, env.root(), n).frontier.size() == (std::size_t{1} << n);
  return {"deterministic frontier has 2^n nodes", ok, ""};
}

SelftestResult peg_moves(Rng& rng) {
  int bad = 0;
  for (int k = 0; k < 300; ++k) {
    const auto b = static_cast<PegBoard>(rng() & 0xFFFF);
    std::set<std::tuple<int, int, int>> want, got;
    auto peg = [&](int r, int c) { return (b >> (r * 4 + c)) & 1; };
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        for (auto [dr, dc] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int r2 = r + 2 * dr, c2 = c + 2 * dc;
          if (r2 < 0 || r2 > 3 || c2 < 0 || c2 > 3) continue;
          if (peg(r, c) && peg(r + dr, c + dc) && !peg(r2, c2)) want.insert({r * 4 + c, (r + dr) * 4 + c + dc, r2 * 4 + c2});
        }
    for (const auto& m : peg_legal_moves(b)) got.insert({m.from, m.over, m.to});
    if (got != want) ++bad;
  }
  return {"peg move generation vs rule enumeration", bad == 0, fmt("%.0f mismatching boards", bad)};
}

SelftestResult csv_round_trip(Rng& rng) {
  std::vector<RegretRecord> recs;
  for (int k = 0; k < 200; ++k) {
    const double v = std::ldexp(standard_normal(rng), static_cast<int>(rng() % 200) - 100);
    recs.push_back({"bandit_tree", k % 2 ? "uct" : "voc_phi", static_cast<int>(rng() % 5), k, rng(),
                    "simple_regret", v, static_cast<std::int64_t>(rng() >> 2)});
  }
  auto sorted = recs;
  sort_records(sorted);
  const auto text = format_csv(recs);
  return {"csv round trip", parse_csv(text) == sorted && format_csv(parse_csv(text)) == text, ""};
}

}  // namespace

std::vector<SelftestResult> selftest(std::uint64_t seed) {
  using Check = std::function<SelftestResult(Rng&)>;
  const std::vector<Check> checks{psi_ge_phi,         martingale_and_dominance, lr_ge_psi,
                                  optimal_c_check,    white_equivalence,        ueb_chain,
                                  psd_preservation,   batch_vs_sequential,      voc_consistency,
                                  frontier_sizes,     peg_moves,                csv_round_trip};
  std::vector<SelftestResult> out;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    Rng rng(derive_seed(seed, k));
    try {
      out.push_back(checks[k](rng));
    } catch (const std::exception& e) {
      out.push_back({"check " + std::to_string(k), false, std::string("threw: ") + e.what()});
    }
  }
  return out;
}

}  // namespace vocplan
