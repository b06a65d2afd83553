#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vocplan/mdp.hpp"
#include "vocplan/policies.hpp"
#include "vocplan/values.hpp"

namespace vocplan {

// A policy under test. The name labels CSV rows; "oracle" is a pseudo-policy
// that reads the hidden environment and plays optimally.
struct PolicyEntry {
  std::string name;
  MetaPolicyConfig config;
};

enum class EnvKind { BanditTree, Peg };

struct ExperimentConfig {
  EnvKind env = EnvKind::BanditTree;
  BanditTreeSpec tree;
  int pegs = 9;
  std::vector<PolicyEntry> policies;
  std::vector<int> budgets;  // strictly increasing
  int instances = 1;
  std::uint64_t seed = 0;
  // Instance i uses stream instance_offset + i of the master seed. Grid
  // search evaluates on a disjoint block.
  std::uint64_t instance_offset = 0;
  bool wall_clock = false;  // when false wall_ns is written as 0
  int threads = 0;          // 0: hardware concurrency

  void validate() const;
};

struct RegretRecord {
  std::string env;
  std::string policy;
  int budget = 0;
  int instance = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  std::int64_t wall_ns = 0;

  bool operator==(const RegretRecord&) const = default;
};

std::uint64_t instance_seed(const ExperimentConfig& config, int instance);
// Shared by every policy for a given instance and budget.
std::uint64_t planning_seed(std::uint64_t instance_seed, int budget);

// Per instance: simple_regret of each (policy, budget).
std::vector<RegretRecord> run_bandit_tree(const ExperimentConfig& config);
// Per instance: pegs_remaining after a full episode, re-planning every move.
std::vector<RegretRecord> run_peg(const ExperimentConfig& config);
std::vector<RegretRecord> run_experiment(const ExperimentConfig& config);

struct PegEpisode {
  int pegs_remaining;
  int computations;
};
// Plays from `board` to the end, planning each move with `config`; the
// "oracle" entry plays exhaustive-search moves instead.
PegEpisode play_peg_episode(PegBoard board, const PolicyEntry& policy, Rng& rng);

// Minimum number of pegs reachable from `board`, by exhaustive search.
int peg_min_remaining(PegBoard board);

// Sorted by (policy, budget, instance, metric).
void sort_records(std::vector<RegretRecord>& records);
std::string format_csv(std::vector<RegretRecord> records);
std::vector<RegretRecord> parse_csv(const std::string& text);
void write_csv(const std::vector<RegretRecord>& records, const std::string& path);
std::vector<RegretRecord> read_csv(const std::string& path);

struct GroupStat {
  std::string policy;
  int budget;
  std::string metric;
  double mean;
  double se;
  std::size_t n;
};
std::vector<GroupStat> aggregate(const std::vector<RegretRecord>& records);

// Mean and standard error over instances of metric(a) - metric(b) at one budget.
McEstimate paired_difference(const std::vector<RegretRecord>& records, const std::string& a,
                             const std::string& b, int budget, const std::string& metric);

// Default hyperparameters for a named policy (or "oracle") on the environment
// described by `experiment`. The belief model follows the generating
// distribution of the bandit tree: prior mean, signal variance and kernel.
PolicyEntry default_policy(const std::string& name, const ExperimentConfig& experiment, int horizon);

// -- Configuration keys ----------------------------------------------------------

// Sets one policy hyperparameter by name (uct_c, horizon, mean0, var0,
// noise_var, signal_var, lengthscale, kernel, psi_outer, psi_inner,
// value_samples, ueb_tables, ueb_mean0, stop_threshold, rollout_depth, budget).
void apply_policy_param(MetaPolicyConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> split_list(const std::string& text, char sep = ',');

// -- Grid search -----------------------------------------------------------------

struct GridCandidate {
  std::string label;  // e.g. "uct_c=0.5"
  PolicyEntry policy;
};

struct GridRow {
  std::string label;
  double mean;
  double se;
};

struct GridResult {
  std::vector<GridRow> table;  // in input order
  std::string best_label;
  PolicyEntry best;
};

// Default instance block used for hyperparameter selection.
inline constexpr std::uint64_t kHeldOutOffset = 1'000'000;

// Evaluates each candidate on `base` (with its policy list replaced and the
// instances moved to the held-out block) and picks the smallest mean metric
// over every budget and instance. Ties go to the lexicographically smallest
// label, so the choice ignores grid order.
GridResult grid_search(const ExperimentConfig& base, const std::vector<GridCandidate>& grid,
                       const std::string& metric);

// Cartesian product of per-key value lists applied to `base`.
std::vector<GridCandidate> expand_grid(const PolicyEntry& base,
                                       const std::map<std::string, std::vector<std::string>>& axes);

}  // namespace vocplan
