#include "vocplan/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vocplan/values.hpp"

namespace vocplan {

namespace {

struct PolicyNameEntry {
  PolicyKind kind;
  const char* name;
};

constexpr PolicyNameEntry kPolicyNames[] = {
    {PolicyKind::VocPhi, "voc_phi"},     {PolicyKind::VocPsi, "voc_psi"},
    {PolicyKind::VocPrimePhi, "voc_prime_phi"}, {PolicyKind::Ueb, "ueb"},
    {PolicyKind::Uct, "uct"},            {PolicyKind::VoiBased, "voi"},
    {PolicyKind::BayesUct, "bayes_uct"}, {PolicyKind::Thompson, "thompson"},
};

}  // namespace

std::string policy_name(PolicyKind k) {
  for (const auto& e : kPolicyNames)
    if (e.kind == k) return e.name;
  return "unknown";
}

PolicyKind parse_policy(const std::string& name) {
  for (const auto& e : kPolicyNames)
    if (name == e.name) return e.kind;
  throw ConfigError("unknown policy '" + name + "'");
}

void MetaPolicyConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!budget && !stop_threshold) throw ConfigError("need a budget or a stop threshold");
  if (budget && *budget < 0) throw ConfigError("budget must be >= 0");
  if (!(uct_c >= 0.0)) throw ConfigError("uct_c must be >= 0");
  if (rollout_depth < 0) throw ConfigError("rollout_depth must be >= 0");
  if (value_samples < 2) throw ConfigError("value_samples must be >= 2");
  if (ueb_tables < 1) throw ConfigError("ueb_tables must be >= 1");
  const bool voc_family = kind == PolicyKind::VocPhi || kind == PolicyKind::VocPsi ||
                          kind == PolicyKind::VocPrimePhi || kind == PolicyKind::VoiBased;
  if (!budget && !voc_family) throw ConfigError(policy_name(kind) + " needs a budget");
  if (kind == PolicyKind::Ueb && kernel && kernel->kind == Kernel::Kind::Rbf)
    throw ConfigError("UEB supports independent beliefs only");
  prior.validate();
}

std::size_t argmax_random(std::span<const double> v, Rng& rng) {
  require(!v.empty(), "argmax_random: empty input");
  const double best = *std::max_element(v.begin(), v.end());
  std::size_t count = 0, pick = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] == best) ++count;
  if (count == 1) return argmax_first(v);
  std::size_t target = static_cast<std::size_t>(rng() % count);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != best) continue;
    if (target-- == 0) {
      pick = i;
      break;
    }
  }
  return pick;
}

// -- UCT -----------------------------------------------------------------------

UctTree::UctTree(const MdpModel& mdp, State root) : mdp_(&mdp) { add_node(root); }

std::size_t UctTree::add_node(State s) {
  UctNode node;
  node.state = s;
  if (!mdp_->is_terminal(s)) node.actions = mdp_->actions(s);
  node.n.assign(node.actions.size(), 0);
  node.q.assign(node.actions.size(), 0.0);
  node.children.resize(node.actions.size());
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

double UctTree::root_value() const {
  const auto& r = root();
  double s = 0.0;
  int n = 0;
  for (std::size_t a = 0; a < r.actions.size(); ++a) {
    s += r.n[a] * r.q[a];
    n += r.n[a];
  }
  return n > 0 ? s / n : 0.0;
}

double uct_score(double q, int n_child, int n_parent, double uct_c) {
  if (n_child <= 0) return std::numeric_limits<double>::infinity();
  return q + uct_c * std::sqrt(2.0 * std::log(static_cast<double>(n_parent)) / n_child);
}

std::size_t uct_select(const UctNode& node, double uct_c, Rng& rng) {
  require(!node.actions.empty(), "uct_select: node has no actions");
  std::vector<double> score(node.actions.size());
  for (std::size_t a = 0; a < score.size(); ++a)
    score[a] = uct_score(node.q[a], node.n[a], std::max(node.visits, 1), uct_c);
  return argmax_random(score, rng);
}

double random_rollout(const MdpModel& mdp, State s, int depth, Rng& rng) {
  double ret = 0.0, disc = 1.0;
  for (int k = 0; k < depth && !mdp.is_terminal(s); ++k) {
    const auto acts = mdp.actions(s);
    if (acts.empty()) break;
    const Action a = acts[static_cast<std::size_t>(rng() % acts.size())];
    const auto step = mdp.sample_step(s, a, rng);
    ret += disc * step.reward;
    disc *= mdp.gamma();
    s = step.next;
  }
  return ret;
}

namespace {

double uct_descend(UctTree& tree, std::size_t idx, const MdpModel& mdp, double uct_c,
                   int rollout_depth, Rng& rng) {
  if (tree.nodes()[idx].actions.empty()) return 0.0;
  const std::size_t a = uct_select(tree.nodes()[idx], uct_c, rng);
  const State s = tree.nodes()[idx].state;
  const Action act = tree.nodes()[idx].actions[a];
  const auto step = mdp.sample_step(s, act, rng);
  const bool fresh_action = tree.nodes()[idx].n[a] == 0;

  double g = step.reward;
  if (!mdp.is_terminal(step.next)) {
    auto& kids = tree.nodes()[idx].children[a];
    auto it = std::find_if(kids.begin(), kids.end(),
                           [&](const auto& p) { return p.first == step.next; });
    if (fresh_action || it == kids.end()) {
      const std::size_t c = tree.add_node(step.next);
      tree.nodes()[idx].children[a].push_back({step.next, c});
      g += mdp.gamma() * random_rollout(mdp, step.next, rollout_depth, rng);
    } else {
      const std::size_t c = it->second;
      g += mdp.gamma() * uct_descend(tree, c, mdp, uct_c, rollout_depth, rng);
    }
  }
  auto& node = tree.nodes()[idx];
  node.n[a] += 1;
  node.q[a] += (g - node.q[a]) / node.n[a];
  node.visits += 1;
  return g;
}

}  // namespace

double uct_iterate(UctTree& tree, const MdpModel& mdp, double uct_c, int rollout_depth, Rng& rng) {
  return uct_descend(tree, 0, mdp, uct_c, rollout_depth, rng);
}

// -- Bayesian tree policies ----------------------------------------------------

double bayes_uct_score(double mu, double sigma, int n_parent, double uct_c) {
  const double n = std::max(n_parent, 1);
  return mu + uct_c * sigma * std::sqrt(2.0 * std::log(n));
}

std::size_t bayes_uct_select(std::span<const double> mu, std::span<const double> sigma,
                             int n_parent, double uct_c, Rng& rng) {
  require(!mu.empty() && mu.size() == sigma.size(), "bayes_uct_select: bad input");
  std::vector<double> score(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    score[i] = bayes_uct_score(mu[i], sigma[i], n_parent, uct_c);
  return argmax_random(score, rng);
}

std::size_t thompson_select(std::span<const double> mu, std::span<const double> sigma, Rng& rng) {
  require(!mu.empty() && mu.size() == sigma.size(), "thompson_select: bad input");
  std::vector<double> draw(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    draw[i] = sigma[i] > 0.0 ? mu[i] + sigma[i] * standard_normal(rng) : mu[i];
  return argmax_random(draw, rng);
}

NodeNormals propagate_normals(const SearchGraph& g, const Belief& belief) {
  NodeNormals nn;
  nn.action_mu.assign(g.action_nodes.size(), 0.0);
  nn.action_sd.assign(g.action_nodes.size(), 0.0);
  nn.state_mu.assign(g.states.size(), 0.0);
  nn.state_sd.assign(g.states.size(), 0.0);
  for (std::size_t si = g.states.size(); si-- > 0;) {
    const auto& st = g.states[si];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t ai : st.actions) {
      const auto& an = g.action_nodes[ai];
      double mu = 0.0, var = 0.0;
      if (an.frontier >= 0) {
        const auto f = static_cast<std::size_t>(an.frontier);
        mu = belief.mean(f);
        var = belief.var(f);
      } else {
        for (const auto& e : an.edges) {
          mu += e.prob * (e.reward + g.gamma * nn.state_mu[e.child]);
          const double sd = e.prob * g.gamma * nn.state_sd[e.child];
          var += sd * sd;
        }
      }
      nn.action_mu[ai] = mu;
      nn.action_sd[ai] = std::sqrt(var);
      if (mu > best) {
        best = mu;
        nn.state_mu[si] = mu;
        nn.state_sd[si] = nn.action_sd[ai];
      }
    }
  }
  return nn;
}

std::vector<double> voi_scores(const Belief& root_belief) {
  require(!root_belief.is_correlated(), "voi_scores: independent beliefs only");
  const std::size_t k = root_belief.size();
  require(k >= 1, "voi_scores: no actions");
  std::vector<double> mu(k);
  for (std::size_t i = 0; i < k; ++i) mu[i] = root_belief.mean(i);
  const std::size_t star = argmax_first(mu);
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i)
    if (i != star) second = std::max(second, mu[i]);
  std::vector<double> voi(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double var = root_belief.var(i);
    const double pred = var + root_belief.noise_var(i);
    if (!(var > 0.0) || k == 1) continue;
    const double s = var / std::sqrt(pred);
    // Gain only when the outcome changes which action is best.
    const double gap = i == star ? second - mu[star] : mu[i] - mu[star];
    voi[i] = s * positive_part_factor(gap / s);
  }
  return voi;
}

std::size_t voi_policy_choose(const Belief& root_belief, Rng& rng) {
  return argmax_random(voi_scores(root_belief), rng);
}

// -- Planning ------------------------------------------------------------------

Belief make_belief(const MdpModel& mdp, State s, const SearchGraph& g,
                   const MetaPolicyConfig& config) {
  (void)s;
  const std::size_t n = g.frontier.size();
  if (config.prior_fn) {
    std::vector<NormalPrior> priors;
    for (const auto& f : g.frontier) priors.push_back(config.prior_fn(f));
    return Belief::independent(std::move(priors));
  }
  NormalPrior base = config.prior;
  const bool independent_only =
      config.kind == PolicyKind::VoiBased || config.kind == PolicyKind::Ueb;
  if (config.kernel && config.kernel->kind == Kernel::Kind::Rbf && !independent_only) {
    return Belief::from_kernel(*config.kernel, frontier_coordinates(mdp, g), base.mean0,
                               base.noise_var);
  }
  if (config.kernel) base.var0 = config.kernel->signal_var;
  std::vector<NormalPrior> priors(n, base);
  if (config.kind == PolicyKind::Ueb) {
    for (std::size_t i = 0; i < n; ++i) {
      if (config.ueb_mean0) {
        priors[i].mean0 = *config.ueb_mean0;
      } else if (auto m = mdp.max_return(g.frontier[i].state)) {
        priors[i].mean0 = *m;
      } else {
        priors[i].mean0 = base.mean0 + 3.0 * std::sqrt(base.var0);
      }
    }
  }
  return Belief::independent(std::move(priors));
}

namespace {

PlanResult plan_uct(const MdpModel& mdp, State s, const MetaPolicyConfig& config, Rng& rng) {
  UctTree tree(mdp, s);
  PlanResult r;
  for (int t = 0; t < *config.budget; ++t) {
    uct_iterate(tree, mdp, config.uct_c, config.rollout_depth, rng);
    ++r.computations;
  }
  const auto& root = tree.root();
  r.root_values = root.q;
  std::vector<double> v(root.actions.size());
  for (std::size_t a = 0; a < v.size(); ++a)
    v[a] = root.n[a] > 0 ? root.q[a] : -std::numeric_limits<double>::infinity();
  r.action_index = root.actions.empty() ? 0 : argmax_first(v);
  if (root.n.empty() || root.n[r.action_index] == 0) r.action_index = 0;
  r.action = root.actions.empty() ? 0 : root.actions[r.action_index];
  return r;
}

class Hybrid {
 public:
  Hybrid(const MdpModel& mdp, State s, const MetaPolicyConfig& config, Rng& rng)
      : mdp_(mdp), cfg_(config), rng_(rng),
        g_(expand(mdp, s, config.kind == PolicyKind::VoiBased ? 1 : config.horizon)),
        belief_(make_belief(mdp, s, g_, config)),
        visits_(g_.states.size(), 0),
        samples_(g_.frontier.size(), 0) {
    if (cfg_.kind == PolicyKind::Ueb && !g_.deterministic()) {
      std::vector<TransitionTable> tables;
      for (int k = 0; k < cfg_.ueb_tables; ++k) tables.push_back(sample_transition_table(g_, rng_));
      groups_ = group_tables(g_, tables);
    }
  }

  PlanResult run() {
    PlanResult r;
    const long limit = cfg_.budget ? *cfg_.budget : std::numeric_limits<int>::max();
    for (long t = 0; t < limit; ++t) {
      const int omega = choose();
      if (omega == kStop) break;
      ++r.computations;
      if (omega >= 0) {
        const auto i = static_cast<std::size_t>(omega);
        belief_.observe(i, simulate(i));
        ++samples_[i];
      }
    }
    finish(r);
    r.frontier_samples = samples_;
    return r;
  }

 private:
  static constexpr int kStop = -2;
  static constexpr int kNone = -1;

  int pick_max(const std::vector<double>& score) {
    if (score.empty()) return kStop;
    const double best = *std::max_element(score.begin(), score.end());
    if (cfg_.stop_threshold && best < *cfg_.stop_threshold) return kStop;
    return static_cast<int>(argmax_random(score, rng_));
  }

  int choose() {
    switch (cfg_.kind) {
      case PolicyKind::VocPhi:
        return pick_max(voc_phi_all(g_, belief_));
      case PolicyKind::VocPrimePhi:
        return pick_max(voc_prime_phi_all(g_, belief_));
      case PolicyKind::VoiBased: {
        if (cfg_.stop_threshold && max_or(voc_prime_phi_all(g_, belief_)) < *cfg_.stop_threshold)
          return kStop;
        return static_cast<int>(voi_policy_choose(belief_, rng_));
      }
      case PolicyKind::VocPsi: {
        const auto est = voc_psi_all(g_, belief_, cfg_.psi, rng_);
        std::vector<double> m;
        for (const auto& e : est) m.push_back(e.mean);
        return pick_max(m);
      }
      case PolicyKind::Ueb: {
        const auto sc = ueb();
        if (sc.dlambda_dn.empty()) return kStop;
        // argmin, lowest index on ties
        std::size_t best = 0;
        for (std::size_t i = 1; i < sc.dlambda_dn.size(); ++i)
          if (sc.dlambda_dn[i] < sc.dlambda_dn[best]) best = i;
        return static_cast<int>(best);
      }
      case PolicyKind::BayesUct:
      case PolicyKind::Thompson:
        return descend();
      case PolicyKind::Uct:
        break;
    }
    throw ContractViolation("hybrid planner: unsupported policy");
  }

  static double max_or(const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  }

  UebScore ueb() const {
    if (g_.deterministic()) return ueb_scores(g_, belief_);
    return ueb_scores(g_, belief_, groups_);
  }

  int descend() {
    const auto nn = propagate_normals(g_, belief_);
    std::size_t si = 0;
    std::vector<double> mu, sd;
    while (true) {
      const auto& st = g_.states[si];
      if (st.actions.empty()) return kNone;
      mu.clear();
      sd.clear();
      for (std::size_t ai : st.actions) {
        mu.push_back(nn.action_mu[ai]);
        sd.push_back(nn.action_sd[ai]);
      }
      const std::size_t k = cfg_.kind == PolicyKind::BayesUct
                                ? bayes_uct_select(mu, sd, visits_[si], cfg_.uct_c, rng_)
                                : thompson_select(mu, sd, rng_);
      ++visits_[si];
      const auto& an = g_.action_nodes[st.actions[k]];
      if (an.frontier >= 0) return an.frontier;
      std::vector<Outcome> outs;
      for (const auto& e : an.edges) outs.push_back({g_.states[e.child].state, e.prob, e.reward});
      si = an.edges[sample_outcome(outs, rng_)].child;
    }
  }

  double simulate(std::size_t i) {
    const auto& fe = g_.frontier[i];
    const auto step = mdp_.sample_step(fe.state, fe.action, rng_);
    if (mdp_.is_terminal(step.next)) return step.reward;
    auto it = trees_.try_emplace(step.next, mdp_, step.next).first;
    return step.reward +
           mdp_.gamma() * uct_iterate(it->second, mdp_, cfg_.uct_c, cfg_.rollout_depth, rng_);
  }

  void finish(PlanResult& r) {
    if (cfg_.kind == PolicyKind::VocPsi) {
      const auto psi = dynamic_value_mc(g_, belief_, cfg_.value_samples, rng_);
      for (const auto& e : psi) r.root_values.push_back(e.mean);
    } else if (cfg_.kind == PolicyKind::Ueb) {
      r.root_values = ueb().lambda;
    } else {
      r.root_values = static_value(g_, belief_);
    }
    r.action_index = argmax_first(r.root_values);
    r.action = g_.root_action(r.action_index);
  }

  const MdpModel& mdp_;
  const MetaPolicyConfig& cfg_;
  Rng& rng_;
  SearchGraph g_;
  Belief belief_;
  std::vector<int> visits_;
  std::vector<int> samples_;
  TermGroups groups_;
  std::map<State, UctTree> trees_;
};

}  // namespace

PlanResult plan(const MdpModel& mdp, State s, const MetaPolicyConfig& config, Rng& rng) {
  config.validate();
  if (mdp.is_terminal(s)) throw InvalidInput("plan: state is terminal");
  if (config.kind == PolicyKind::Uct) return plan_uct(mdp, s, config, rng);
  Hybrid h(mdp, s, config, rng);
  return h.run();
}

}  // namespace vocplan
