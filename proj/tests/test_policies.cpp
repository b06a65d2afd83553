#include <cmath>
#include <numeric>

#include "doctest.h"
#include "vocplan/policies.hpp"

using namespace vocplan;

namespace {

constexpr PolicyKind kAll[] = {PolicyKind::VocPhi,   PolicyKind::VocPsi,   PolicyKind::VocPrimePhi,
                               PolicyKind::Ueb,      PolicyKind::Uct,      PolicyKind::VoiBased,
                               PolicyKind::BayesUct, PolicyKind::Thompson};

UctNode stats_node(std::vector<double> q, std::vector<int> n) {
  UctNode node;
  node.state = 0;
  node.actions.resize(q.size());
  std::iota(node.actions.begin(), node.actions.end(), 0);
  node.visits = std::accumulate(n.begin(), n.end(), 0);
  node.q = std::move(q);
  node.n = std::move(n);
  node.children.resize(node.q.size());
  return node;
}

TableMdp counterexample_mdp() {
  TableMdp t;
  t.add(0, 0, {{1, 1.0, 0.0}});
  t.add(0, 1, {{2, 1.0, 0.0}});
  t.add(1, 0, {{3, 1.0, 0.0}});
  t.add(1, 1, {{3, 1.0, 0.0}});
  t.add(2, 0, {{3, 1.0, 0.0}});
  return t;
}

MetaPolicyConfig counterexample_config(PolicyKind kind) {
  MetaPolicyConfig cfg;
  cfg.kind = kind;
  cfg.horizon = 2;
  cfg.budget = 20;
  cfg.stop_threshold = 1e-9;
  cfg.prior_fn = [](const FrontierEntry& f) {
    return f.state == 1 ? NormalPrior{0.0, 1.0, 1.0} : NormalPrior{-1.0, 0.0, 1.0};
  };
  return cfg;
}

BanditTreeEnv small_tree(std::uint64_t seed, int depth = 3) {
  Rng rng(seed);
  BanditTreeSpec spec;
  spec.depth = depth;
  return bandit_tree_build(spec, rng);
}

}  // namespace

TEST_CASE("policy names") {
  for (auto k : kAll) CHECK(parse_policy(policy_name(k)) == k);
  CHECK_THROWS_AS(parse_policy("random"), ConfigError);
}

TEST_CASE("config validation") {
  MetaPolicyConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.horizon = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.horizon = 1;
  cfg.budget.reset();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.stop_threshold = 0.01;
  CHECK_NOTHROW(cfg.validate());
  cfg.kind = PolicyKind::Uct;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.budget = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("UCT scoring") {
  CHECK(uct_score(0.5, 3, 4, 1.0) == doctest::Approx(1.4614).epsilon(1e-4));
  CHECK(uct_score(0.4, 1, 4, 1.0) == doctest::Approx(2.0651).epsilon(1e-4));
  Rng rng(1);
  CHECK(uct_select(stats_node({0.5, 0.4}, {3, 1}), 1.0, rng) == 1);
  CHECK(uct_select(stats_node({0.5, 0.4}, {3, 1}), 0.0, rng) == 0);
  CHECK(uct_select(stats_node({0.3, 0.1, 0.9}, {5, 5, 5}), 0.0, rng) == 2);

  // Unvisited children first, in random order.
  std::array<int, 3> picks{};
  for (int k = 0; k < 3000; ++k) {
    const auto a = uct_select(stats_node({9.0, 0.0, 0.0}, {10, 0, 0}), 1.0, rng);
    ++picks[a];
  }
  CHECK(picks[0] == 0);
  CHECK(picks[1] > 1300);
  CHECK(picks[2] > 1300);
}

TEST_CASE("UCT iteration") {
  TableMdp one(1.0);
  one.add(0, 0, {{1, 1.0, 1.0}});
  one.add(0, 1, {{2, 1.0, 1.0}});
  UctTree t(one, 0);
  Rng rng(2);
  for (int k = 0; k < 10; ++k) CHECK(uct_iterate(t, one, 1.0, 10, rng) == 1.0);
  CHECK(t.root().q[0] == 1.0);
  CHECK(t.root().q[1] == 1.0);
  CHECK(t.root().n[0] + t.root().n[1] == 10);

  TableMdp ended;
  UctTree done(ended, 5);
  CHECK(uct_iterate(done, ended, 1.0, 10, rng) == 0.0);
  CHECK(done.nodes().size() == 1);

  auto env = small_tree(3);
  UctTree tree(env, env.root());
  std::vector<double> returns;
  for (int k = 1; k <= 500; ++k) {
    returns.push_back(uct_iterate(tree, env, 1.0, 10, rng));
    const auto& r = tree.root();
    CHECK(r.n[0] + r.n[1] == k);
    CHECK(r.visits == k);
  }
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
  CHECK(std::abs(tree.root_value() - mean) <= 1e-12);
  // Every node's visit count is the sum of its action counts.
  for (const auto& node : tree.nodes())
    CHECK(node.visits == std::accumulate(node.n.begin(), node.n.end(), 0));
}

TEST_CASE("UCT keeps sampling both root actions") {
  auto env = small_tree(4);
  MetaPolicyConfig cfg;
  cfg.kind = PolicyKind::Uct;
  cfg.budget = 10000;
  Rng rng(5);
  UctTree tree(env, env.root());
  for (int k = 0; k < *cfg.budget; ++k) uct_iterate(tree, env, cfg.uct_c, cfg.rollout_depth, rng);
  CHECK(std::min(tree.root().n[0], tree.root().n[1]) >= 10);
}

TEST_CASE("Bayes-UCT scoring") {
  CHECK(bayes_uct_score(0.5, 0.1, 8, 1.0) == doctest::Approx(0.7039).epsilon(1e-4));
  // 0.4 + 0.3 * sqrt(2 ln 8)
  CHECK(bayes_uct_score(0.4, 0.3, 8, 1.0) == doctest::Approx(1.0118).epsilon(1e-4));
  Rng rng(6);
  const double mu[] = {0.5, 0.4}, sd[] = {0.1, 0.3};
  CHECK(bayes_uct_select(mu, sd, 8, 1.0, rng) == 1);
  const double zero[] = {0.0, 0.0};
  CHECK(bayes_uct_select(mu, zero, 8, 1.0, rng) == 0);
  const double same[] = {0.2, 0.2}, wide[] = {0.1, 0.4};
  CHECK(bayes_uct_select(same, wide, 3, 1.0, rng) == 1);
}

TEST_CASE("Thompson selection") {
  Rng rng(7);
  const double mu[] = {0.3, 0.1, 0.2}, zero[] = {0.0, 0.0, 0.0};
  for (int k = 0; k < 20; ++k) CHECK(thompson_select(mu, zero, rng) == 0);

  const double m2[] = {0.2, 0.0}, s2[] = {0.5, 1.0};
  const int n = 100000;
  int first = 0;
  for (int k = 0; k < n; ++k) first += thompson_select(m2, s2, rng) == 0 ? 1 : 0;
  const double p = normal_cdf(0.2 / std::sqrt(0.25 + 1.0));
  CHECK(std::abs(first / double(n) - p) <= 3.0 * std::sqrt(p * (1 - p) / n));

  const double m3[] = {0.0, 0.2}, s3[] = {1.0, 0.5};
  int second = 0;
  for (int k = 0; k < n; ++k) second += thompson_select(m3, s3, rng) == 1 ? 1 : 0;
  CHECK(std::abs((second - first) / double(n)) <= 3.0 * std::sqrt(2.0 * p * (1 - p) / n));
}

TEST_CASE("propagated normals") {
  TableMdp m(0.5);
  m.add(0, 0, {{1, 0.5, 1.0}, {2, 0.5, 0.0}});
  for (State s : {1, 2}) {
    m.add(s, 0, {{9, 1.0, 0.0}});
    m.add(s, 1, {{9, 1.0, 0.0}});
  }
  auto g = expand(m, 0, 2);
  REQUIRE(g.frontier.size() == 4);
  auto b = Belief::independent({{0.2, 1.0, 1}, {0.4, 4.0, 1}, {-0.1, 0.25, 1}, {0.0, 9.0, 1}});
  auto nn = propagate_normals(g, b);
  const std::size_t root_action = g.root().actions[0];
  // Child means 0.4 (sd 2) and 0.0 (sd 3).
  CHECK(nn.action_mu[root_action] == doctest::Approx(0.5 * (1.0 + 0.5 * 0.4) + 0.5 * 0.0));
  CHECK(nn.action_sd[root_action] == doctest::Approx(std::hypot(0.5 * 0.5 * 2.0, 0.5 * 0.5 * 3.0)));
  CHECK(nn.state_mu[0] == nn.action_mu[root_action]);
}

TEST_CASE("VOI-based root scores") {
  auto dominant = Belief::independent({{0.0, 1.0, 1.0}, {30.0, 0.0, 1.0}, {0.5, 1.0, 1.0}});
  auto v = voi_scores(dominant);
  for (double x : v) CHECK(x < 1e-12);

  auto sym = Belief::independent({{0.0, 1.0, 1.0}, {0.0, 1.0, 1.0}});
  auto s = voi_scores(sym);
  CHECK(s[0] == s[1]);
  Rng rng(8);
  int zeros = 0;
  for (int k = 0; k < 2000; ++k) zeros += voi_policy_choose(sym, rng) == 0 ? 1 : 0;
  CHECK(zeros > 850);
  CHECK(zeros < 1150);

  // Brute force VOC'(phi_1): E[max_a mu_a(o)] - E[mu_{a*}(o)] for each candidate.
  auto b = Belief::independent({{0.3, 0.5, 0.4}, {0.1, 1.2, 0.8}, {-0.2, 2.0, 1.5}});
  auto exact = voi_scores(b);
  TableMdp arms;
  arms.add(0, 0, {{1, 1.0, 0.0}});
  arms.add(0, 1, {{2, 1.0, 0.0}});
  arms.add(0, 2, {{3, 1.0, 0.0}});
  auto g = expand(arms, 0, 1);
  auto vp = voc_prime_phi_all(g, b);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(exact[i] == doctest::Approx(vp[i]).epsilon(1e-12));
    const int n = 1000000;
    std::vector<double> d(n);
    for (int k = 0; k < n; ++k) {
      auto nb = b.observed(i, b.predictive_sample(i, rng));
      d[k] = std::max({nb.mean(0), nb.mean(1), nb.mean(2)}) - nb.mean(0);
    }
    auto mc = summarize(d);
    CHECK(std::abs(mc.mean - exact[i]) <= 3.0 * mc.se);
  }
}

TEST_CASE("budget zero returns the prior argmax") {
  auto m = counterexample_mdp();
  for (auto k : kAll) {
    auto cfg = counterexample_config(k);
    cfg.budget = 0;
    cfg.stop_threshold.reset();
    if (k == PolicyKind::Ueb) cfg.prior_fn = nullptr;
    Rng rng(9);
    auto r = plan(m, 0, cfg, rng);
    CHECK(r.computations == 0);
    CHECK(r.action == 0);
  }
  // Equal prior values: lowest index.
  TableMdp tie;
  tie.add(0, 0, {{1, 1.0, 0.0}});
  tie.add(0, 1, {{2, 1.0, 0.0}});
  MetaPolicyConfig cfg;
  cfg.budget = 0;
  Rng rng(10);
  CHECK(plan(tie, 0, cfg, rng).action_index == 0);
}

TEST_CASE("early stopping counterexample") {
  auto m = counterexample_mdp();
  Rng r1(11), r2(11);
  auto prime = plan(m, 0, counterexample_config(PolicyKind::VocPrimePhi), r1);
  CHECK(prime.computations == 0);
  CHECK(prime.action == 0);
  auto full = plan(m, 0, counterexample_config(PolicyKind::VocPhi), r2);
  CHECK(full.computations >= 1);
}

TEST_CASE("threshold mode") {
  auto env = small_tree(12);
  MetaPolicyConfig cfg;
  cfg.kind = PolicyKind::VocPhi;
  cfg.horizon = 3;
  cfg.budget.reset();
  cfg.stop_threshold = 1e-3;
  Rng rng(13);
  auto r = plan(env, env.root(), cfg, rng);
  CHECK(r.computations > 0);
  cfg.stop_threshold = 1e9;
  CHECK(plan(env, env.root(), cfg, rng).computations == 0);
}

TEST_CASE("every policy spends exactly its budget and is deterministic") {
  auto env = small_tree(14);
  BanditTreeSpec stochastic_spec;
  stochastic_spec.depth = 3;
  stochastic_spec.p = 0.7;
  Rng er(15);
  auto noisy = bandit_tree_build(stochastic_spec, er);
  for (const BanditTreeEnv* e : {&env, &noisy}) {
    for (auto k : kAll) {
      MetaPolicyConfig cfg;
      cfg.kind = k;
      cfg.horizon = 2;
      cfg.budget = 37;
      Rng a(16), b(16);
      auto ra = plan(*e, e->root(), cfg, a);
      auto rb = plan(*e, e->root(), cfg, b);
      CHECK(ra.computations == 37);
      CHECK(ra.action == rb.action);
      CHECK(ra.root_values == rb.root_values);
      CHECK(ra.frontier_samples == rb.frontier_samples);
      const int sampled = std::accumulate(ra.frontier_samples.begin(), ra.frontier_samples.end(), 0);
      CHECK(sampled <= 37);
      if (k != PolicyKind::BayesUct && k != PolicyKind::Thompson && k != PolicyKind::Uct)
        CHECK(sampled == 37);
    }
  }
}

TEST_CASE("planning on terminal or unknown states") {
  TableMdp m;
  MetaPolicyConfig cfg;
  Rng rng(17);
  CHECK_THROWS_AS(plan(m, 0, cfg, rng), InvalidInput);
}

TEST_CASE("planners find the best arm of an easy tree") {
  auto env = BanditTreeEnv(2, 1.0, 0.01, Kernel::white(1.0), {0.1, 0.2, 0.9, 0.3});
  for (auto k : kAll) {
    MetaPolicyConfig cfg;
    cfg.kind = k;
    cfg.horizon = 2;
    cfg.budget = 200;
    Rng rng(18);
    CHECK_MESSAGE(plan(env, env.root(), cfg, rng).action == kRight, policy_name(k));
  }
}
