#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vocplan/belief.hpp"
#include "vocplan/graph.hpp"
#include "vocplan/mdp.hpp"
#include "vocplan/voc.hpp"

namespace vocplan {

enum class PolicyKind { VocPhi, VocPsi, VocPrimePhi, Ueb, Uct, VoiBased, BayesUct, Thompson };

std::string policy_name(PolicyKind k);
PolicyKind parse_policy(const std::string& name);

struct MetaPolicyConfig {
  PolicyKind kind = PolicyKind::VocPhi;
  int horizon = 1;
  std::optional<int> budget = 100;
  // Stop once the best computation is worth less than this (VOC family).
  std::optional<double> stop_threshold;
  double uct_c = 1.0;
  NormalPrior prior{0.5, 1.0, 0.01};
  // Prior covariance over frontier coordinates. White kernels give
  // independent beliefs with var0 = signal_var.
  std::optional<Kernel> kernel;
  PsiMcConfig psi{16, 32};
  int value_samples = 1000;  // psi estimate behind the final VOC(psi) action
  int ueb_tables = 32;
  // Optimistic prior mean for UEB; defaults to the environment's max return,
  // or prior mean + 3 prior sd when the environment has none.
  std::optional<double> ueb_mean0;
  int rollout_depth = 64;
  // Per-frontier prior override.
  std::function<NormalPrior(const FrontierEntry&)> prior_fn;

  void validate() const;
};

struct PlanResult {
  Action action = 0;
  std::size_t action_index = 0;  // position in the sink's action list
  int computations = 0;
  std::vector<double> root_values;    // the valuation the action was chosen by
  std::vector<int> frontier_samples;  // per frontier node (empty for UCT)
};

// -- UCT -----------------------------------------------------------------------

struct UctNode {
  State state;
  std::vector<Action> actions;
  std::vector<int> n;
  std::vector<double> q;
  int visits = 0;
  // Per action, the successor states seen so far and their node indices.
  std::vector<std::vector<std::pair<State, std::size_t>>> children;
};

class UctTree {
 public:
  UctTree(const MdpModel& mdp, State root);

  std::vector<UctNode>& nodes() { return nodes_; }
  const std::vector<UctNode>& nodes() const { return nodes_; }
  const UctNode& root() const { return nodes_.front(); }
  std::size_t add_node(State s);
  // Visit-weighted mean of the root action values.
  double root_value() const;

 private:
  const MdpModel* mdp_;
  std::vector<UctNode> nodes_;
};

double uct_score(double q, int n_child, int n_parent, double uct_c);

// Index into node.actions. Unvisited actions first, in seeded random order;
// otherwise the best UCB1 score with seeded random ties.
std::size_t uct_select(const UctNode& node, double uct_c, Rng& rng);

// One select-expand-rollout-backup pass; returns the discounted return.
double uct_iterate(UctTree& tree, const MdpModel& mdp, double uct_c, int rollout_depth, Rng& rng);

double random_rollout(const MdpModel& mdp, State s, int depth, Rng& rng);

// -- Bayesian tree policies ----------------------------------------------------

double bayes_uct_score(double mu, double sigma, int n_parent, double uct_c);
std::size_t bayes_uct_select(std::span<const double> mu, std::span<const double> sigma,
                             int n_parent, double uct_c, Rng& rng);
std::size_t thompson_select(std::span<const double> mu, std::span<const double> sigma, Rng& rng);

// Posterior (mean, sd) per graph node: frontier beliefs pushed up by
// expectation over transitions and max-of-means over actions.
struct NodeNormals {
  std::vector<double> action_mu, action_sd;  // per action node
  std::vector<double> state_mu, state_sd;    // per state node
};
NodeNormals propagate_normals(const SearchGraph& g, const Belief& belief);

// VOI-based root choice: argmax over root actions of VOC'(phi_1).
std::vector<double> voi_scores(const Belief& root_belief);
std::size_t voi_policy_choose(const Belief& root_belief, Rng& rng);

// -- Planning ------------------------------------------------------------------

// Frontier belief for `config` on graph `g`.
Belief make_belief(const MdpModel& mdp, State s, const SearchGraph& g,
                   const MetaPolicyConfig& config);

// Index of the largest value, uniform among exact ties.
std::size_t argmax_random(std::span<const double> v, Rng& rng);

PlanResult plan(const MdpModel& mdp, State s, const MetaPolicyConfig& config, Rng& rng);

}  // namespace vocplan
