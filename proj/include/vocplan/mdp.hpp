#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vocplan/belief.hpp"
#include "vocplan/common.hpp"

namespace vocplan {

using State = std::uint64_t;
using Action = int;

struct Outcome {
  State next;
  double prob;
  double reward;  // expected reward of this transition
};

struct Step {
  State next;
  double reward;
};

class MdpModel {
 public:
  virtual ~MdpModel() = default;

  virtual std::vector<Action> actions(State s) const = 0;
  virtual std::vector<Outcome> transitions(State s, Action a) const = 0;
  virtual bool is_terminal(State s) const = 0;
  virtual double gamma() const = 0;

  // Simulator access. The default samples `transitions` and returns the
  // expected reward; environments with reward noise override it.
  virtual Step sample_step(State s, Action a, Rng& rng) const;

  // Scalar location of a state-action, used to build kernel priors.
  virtual std::optional<double> coordinate(State, Action) const { return std::nullopt; }
  // Upper bound on the return obtainable from s (optimistic priors).
  virtual std::optional<double> max_return(State) const { return std::nullopt; }
};

// Sample an index from a list of outcomes by probability.
std::size_t sample_outcome(const std::vector<Outcome>& outs, Rng& rng);

// -- Bandit trees --------------------------------------------------------------
//
// Heap-indexed complete binary tree: root is 1, children of k are 2k and 2k+1,
// leaves (arms) are 2^d .. 2^(d+1)-1. Action LEFT goes to 2k with probability
// p and to 2k+1 otherwise; RIGHT is the mirror. Entering a leaf pays the arm
// mean (plus Normal noise when simulated) and ends the episode.

inline constexpr Action kLeft = 0;
inline constexpr Action kRight = 1;

class BanditTreeEnv final : public MdpModel {
 public:
  BanditTreeEnv(int depth, double p, double arm_noise_var, Kernel kernel,
                std::vector<double> arm_means);

  std::vector<Action> actions(State s) const override;
  std::vector<Outcome> transitions(State s, Action a) const override;
  bool is_terminal(State s) const override { return s >= leaf_begin(); }
  double gamma() const override { return 1.0; }
  Step sample_step(State s, Action a, Rng& rng) const override;
  std::optional<double> coordinate(State s, Action a) const override;

  int depth() const { return depth_; }
  double p() const { return p_; }
  double arm_noise_var() const { return noise_var_; }
  const Kernel& kernel() const { return kernel_; }
  State root() const { return 1; }
  State leaf_begin() const { return State{1} << depth_; }
  std::size_t arm_count() const { return arm_means_.size(); }

  // Oracle-only access to the hidden arm means.
  const std::vector<double>& oracle_arm_means() const { return arm_means_; }

 private:
  int depth_;
  double p_;
  double noise_var_;
  Kernel kernel_;
  std::vector<double> arm_means_;
};

struct BanditTreeSpec {
  int depth = 3;
  double p = 0.9;
  double arm_noise_var = 0.01;
  double mean = 0.5;
  Kernel kernel = Kernel::white(1.0);
  // When > 0, arm vectors are redrawn until sorted neighbours differ by at
  // least this much.
  double min_gap = 0.0;
};

// Arm means ~ N(mean * 1, K) with K the kernel over coordinates 0..2^d-1.
BanditTreeEnv bandit_tree_build(const BanditTreeSpec& spec, Rng& rng);

// Exact Q*(root, LEFT) and Q*(root, RIGHT).
std::array<double, 2> bandit_tree_optimal(const BanditTreeEnv& env);

// Q* of every action at state s, by the same dynamic program.
std::array<double, 2> bandit_tree_q(const BanditTreeEnv& env, State s);

// -- Peg solitaire on a 4x4 board --------------------------------------------
//
// Cell index r * 4 + c. Bit i of the mask is set when cell i holds a peg.
// Action id = from * 4 + dir with dir 0 up, 1 down, 2 left, 3 right.

using PegBoard = std::uint16_t;

struct Move {
  int from;
  int over;
  int to;

  Action id() const;
  bool operator==(const Move&) const = default;
};

std::vector<Move> peg_legal_moves(PegBoard board);
PegBoard peg_apply(PegBoard board, const Move& m);
Move peg_move_from_id(Action id);
int peg_count(PegBoard board);
PegBoard peg_random_board(int pegs, Rng& rng);
PegBoard peg_parse(const std::string& text);
std::string peg_format(PegBoard board);

class PegEnv final : public MdpModel {
 public:
  std::vector<Action> actions(State s) const override;
  std::vector<Outcome> transitions(State s, Action a) const override;
  bool is_terminal(State s) const override;
  double gamma() const override { return 1.0; }
  Step sample_step(State s, Action a, Rng& rng) const override;
  std::optional<double> max_return(State s) const override;
};

// -- Explicit tables -----------------------------------------------------------

// Small hand-specified MDP. States without an entry in `table` are terminal.
class TableMdp final : public MdpModel {
 public:
  explicit TableMdp(double gamma = 1.0) : gamma_(gamma) {}

  void add(State s, Action a, std::vector<Outcome> outs);
  void set_coordinate(State s, Action a, double x) { coords_[{s, a}] = x; }

  std::vector<Action> actions(State s) const override;
  std::vector<Outcome> transitions(State s, Action a) const override;
  bool is_terminal(State s) const override { return table_.find(s) == table_.end(); }
  double gamma() const override { return gamma_; }
  std::optional<double> coordinate(State s, Action a) const override;

 private:
  double gamma_;
  std::map<State, std::map<Action, std::vector<Outcome>>> table_;
  std::map<std::pair<State, Action>, double> coords_;
};

// Deterministic tree with `branching` actions per state and `depth` levels;
// every transition pays `reward` times (action index + 1).
TableMdp make_chain_tree(int branching, int depth, double gamma, double reward);

}  // namespace vocplan
