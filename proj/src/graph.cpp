#include "vocplan/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace vocplan {

namespace {

constexpr std::size_t kMaxNodes = 2'000'000;

struct Builder {
  const MdpModel& mdp;
  int n;
  bool merge;
  SearchGraph g;
  std::map<std::pair<State, int>, std::size_t> index;
  bool saw_stochastic = false;

  std::size_t add_state(State s, int depth) {
    if (merge) {
      auto [it, fresh] = index.try_emplace({s, depth}, g.states.size());
      if (!fresh) return it->second;
    }
    if (g.states.size() >= kMaxNodes) throw ConfigError("search graph too large");
    g.states.push_back({s, depth, {}});
    return g.states.size() - 1;
  }

  void run(State sink) {
    g.sink = sink;
    g.horizon = n;
    g.gamma = mdp.gamma();
    g.tree = !merge;
    add_state(sink, 0);
    std::vector<double> path_reward{0.0};
    std::vector<std::size_t> root_of{0};
    for (std::size_t si = 0; si < g.states.size(); ++si) {
      const State s = g.states[si].state;
      const int d = g.states[si].depth;
      if (mdp.is_terminal(s)) continue;
      for (Action a : mdp.actions(s)) {
        const std::size_t ai = g.action_nodes.size();
        g.action_nodes.push_back({si, a, {}, -1});
        g.states[si].actions.push_back(ai);
        const std::size_t root_idx = si == 0 ? g.states[0].actions.size() - 1 : root_of[si];
        if (d == n - 1) {
          g.action_nodes[ai].frontier = static_cast<int>(g.frontier.size());
          g.frontier.push_back({s, a, d, merge ? 0.0 : path_reward[si],
                                std::pow(g.gamma, d), root_idx, ai});
          continue;
        }
        const auto outs = mdp.transitions(s, a);
        std::size_t kept = 0;
        for (const auto& o : outs) {
          if (!(o.prob > 0.0)) continue;
          ++kept;
          const std::size_t before = g.states.size();
          const std::size_t c = add_state(o.next, d + 1);
          if (c == before) {
            path_reward.push_back(merge ? 0.0 : path_reward[si] + std::pow(g.gamma, d) * o.reward);
            root_of.push_back(root_idx);
          }
          g.action_nodes[ai].edges.push_back({c, o.prob, o.reward});
        }
        if (kept > 1) saw_stochastic = true;
        if (kept == 0) throw InvalidInput("transition with no positive-probability outcome");
      }
    }
  }
};

}  // namespace

bool SearchGraph::deterministic() const {
  for (const auto& an : action_nodes)
    if (an.edges.size() > 1) return false;
  return true;
}

SearchGraph expand(const MdpModel& mdp, State s, int n) {
  if (n < 1) throw ConfigError("horizon must be >= 1");
  if (mdp.is_terminal(s)) throw InvalidInput("cannot expand a terminal state");
  Builder tree{mdp, n, false, {}, {}};
  tree.run(s);
  if (!tree.saw_stochastic) return std::move(tree.g);
  Builder merged{mdp, n, true, {}, {}};
  merged.run(s);
  return std::move(merged.g);
}

double y_mean(const SearchGraph& g, std::size_t i, const Belief& belief) {
  if (!g.tree) throw UnsupportedStructure("y_mean needs a deterministic search tree");
  require(i < g.frontier.size() && i < belief.size(), "y_mean: frontier index out of range");
  const auto& f = g.frontier[i];
  return f.path_reward + f.scale * belief.mean(i);
}

TransitionTable sample_transition_table(const SearchGraph& g, Rng& rng) {
  TransitionTable t;
  t.choice.resize(g.action_nodes.size(), -1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < g.action_nodes.size(); ++i) {
    const auto& e = g.action_nodes[i].edges;
    if (e.empty()) continue;
    if (e.size() == 1) {
      t.choice[i] = 0;
      continue;
    }
    double total = 0.0;
    for (const auto& x : e) total += x.prob;
    const double r = u(rng) * total;
    double acc = 0.0;
    int pick = static_cast<int>(e.size()) - 1;
    for (std::size_t k = 0; k < e.size(); ++k) {
      acc += e[k].prob;
      if (r < acc) {
        pick = static_cast<int>(k);
        break;
      }
    }
    t.choice[i] = pick;
  }
  return t;
}

TransitionTable identity_table(const SearchGraph& g) {
  require(g.deterministic(), "identity_table: graph is stochastic");
  TransitionTable t;
  t.choice.resize(g.action_nodes.size(), -1);
  for (std::size_t i = 0; i < g.action_nodes.size(); ++i)
    if (!g.action_nodes[i].edges.empty()) t.choice[i] = 0;
  return t;
}

State table_next(const SearchGraph& g, const TransitionTable& t, std::size_t action_node) {
  const int c = t.choice.at(action_node);
  require(c >= 0, "table_next: frontier action has no successor");
  return g.states[g.action_nodes[action_node].edges[static_cast<std::size_t>(c)].child].state;
}

namespace {

void collect(const SearchGraph& g, const TransitionTable& t, std::size_t an, double offset,
             double scale, std::vector<YTerm>& out) {
  const auto& node = g.action_nodes[an];
  if (node.frontier >= 0) {
    for (auto& term : out) {
      if (term.frontier == node.frontier) {
        term.offset = std::max(term.offset, offset);
        return;
      }
    }
    out.push_back({node.frontier, offset, scale});
    return;
  }
  const auto& e = node.edges[static_cast<std::size_t>(t.choice[an])];
  const double next_offset = offset + scale * e.reward;
  const double next_scale = scale * g.gamma;
  const auto& child = g.states[e.child];
  if (child.actions.empty()) {
    out.push_back({-1, next_offset, 0.0});
    return;
  }
  for (std::size_t ca : child.actions) collect(g, t, ca, next_offset, next_scale, out);
}

}  // namespace

std::vector<std::vector<YTerm>> y_terms(const SearchGraph& g, const TransitionTable& t) {
  require(t.choice.size() == g.action_nodes.size(), "y_terms: table does not match graph");
  std::vector<std::vector<YTerm>> out(g.root_action_count());
  for (std::size_t r = 0; r < g.root_action_count(); ++r)
    collect(g, t, g.root().actions[r], 0.0, 1.0, out[r]);
  return out;
}

std::vector<std::vector<YTerm>> y_terms(const SearchGraph& g) {
  if (!g.deterministic()) throw UnsupportedStructure("y_terms needs a deterministic graph");
  return y_terms(g, identity_table(g));
}

void backup(const SearchGraph& g, std::span<const double> leaf, std::vector<double>& scratch,
            std::vector<double>& root_q) {
  require(leaf.size() == g.frontier.size(), "backup: leaf values do not match frontier");
  scratch.assign(g.states.size(), 0.0);
  root_q.assign(g.root_action_count(), 0.0);
  for (std::size_t si = g.states.size(); si-- > 0;) {
    const auto& st = g.states[si];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < st.actions.size(); ++k) {
      const auto& an = g.action_nodes[st.actions[k]];
      double q;
      if (an.frontier >= 0) {
        q = leaf[static_cast<std::size_t>(an.frontier)];
      } else {
        q = 0.0;
        for (const auto& e : an.edges) q += e.prob * (e.reward + g.gamma * scratch[e.child]);
      }
      if (si == 0) root_q[k] = q;
      best = std::max(best, q);
    }
    scratch[si] = st.actions.empty() ? 0.0 : best;
  }
}

std::vector<double> backup(const SearchGraph& g, std::span<const double> leaf) {
  std::vector<double> scratch, q;
  backup(g, leaf, scratch, q);
  return q;
}

std::vector<double> frontier_coordinates(const MdpModel& mdp, const SearchGraph& g) {
  std::vector<double> x;
  x.reserve(g.frontier.size());
  for (const auto& f : g.frontier) {
    auto c = mdp.coordinate(f.state, f.action);
    if (!c) throw ConfigError("environment has no coordinates for kernel priors");
    x.push_back(*c);
  }
  return x;
}

}  // namespace vocplan
