#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vocplan/belief.hpp"
#include "vocplan/mdp.hpp"

namespace vocplan {

struct GraphEdge {
  std::size_t child;  // index into SearchGraph::states
  double prob;
  double reward;
};

struct ActionNode {
  std::size_t parent;
  Action action;
  std::vector<GraphEdge> edges;  // empty for frontier actions
  int frontier = -1;             // index into SearchGraph::frontier
};

struct StateNode {
  State state;
  int depth;
  std::vector<std::size_t> actions;  // indices into SearchGraph::action_nodes
};

struct FrontierEntry {
  State state;
  Action action;
  int depth;           // n - 1
  double path_reward;  // sum_i gamma^i r_i along the unique path; tree graphs only
  double scale;        // gamma^depth
  std::size_t root_index;  // position of the root ancestor in the sink's action list
  std::size_t action_node;
};

// n-step expansion of the sink state. Nodes are stored breadth first, so every
// child has a larger index than its parent and a reverse sweep is a valid
// backward induction order.
struct SearchGraph {
  State sink = 0;
  int horizon = 0;
  double gamma = 1.0;
  bool tree = true;  // false when states were merged on (state, depth)
  std::vector<StateNode> states;
  std::vector<ActionNode> action_nodes;
  std::vector<FrontierEntry> frontier;

  const StateNode& root() const { return states.front(); }
  std::size_t root_action_count() const { return root().actions.size(); }
  Action root_action(std::size_t i) const { return action_nodes[root().actions[i]].action; }
  bool deterministic() const;
};

// Builds a pure tree when every expanded transition is deterministic, and a
// graph merged on (state, depth) otherwise.
SearchGraph expand(const MdpModel& mdp, State s, int n);

// b + gamma^d * post_mean of frontier entry i. Tree graphs only.
double y_mean(const SearchGraph& g, std::size_t i, const Belief& belief);

// One summand of a root action's value along a deterministic path: either a
// frontier value (offset + scale * value) or a constant (frontier == -1)
// reached by ending in a terminal state inside the horizon.
struct YTerm {
  int frontier;
  double offset;
  double scale;
};

// Chosen edge per action node (-1 for frontier nodes).
struct TransitionTable {
  std::vector<int> choice;
};

TransitionTable sample_transition_table(const SearchGraph& g, Rng& rng);
TransitionTable identity_table(const SearchGraph& g);
State table_next(const SearchGraph& g, const TransitionTable& t, std::size_t action_node);

// Per root action, the paths it reaches under the table. A frontier reached by
// several paths keeps the largest offset.
std::vector<std::vector<YTerm>> y_terms(const SearchGraph& g, const TransitionTable& t);
// Deterministic graphs only.
std::vector<std::vector<YTerm>> y_terms(const SearchGraph& g);

// Backward induction with frontier values `leaf`; returns Q per root action.
// `scratch` is resized as needed and may be reused across calls.
void backup(const SearchGraph& g, std::span<const double> leaf, std::vector<double>& scratch,
            std::vector<double>& root_q);
std::vector<double> backup(const SearchGraph& g, std::span<const double> leaf);

// Coordinates of every frontier entry, from MdpModel::coordinate.
std::vector<double> frontier_coordinates(const MdpModel& mdp, const SearchGraph& g);

}  // namespace vocplan
