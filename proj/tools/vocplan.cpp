// Command line front end: selftest, bench, grid.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "vocplan/harness.hpp"
#include "vocplan/selftest.hpp"

using namespace vocplan;

namespace {

struct Args {
  int depth = 3;
  int horizon = 3;
  double p = 0.9;
  std::string kernel = "white";
  double lengthscale = 10.0;
  double signal_var = 1.0;
  double arm_noise_var = 0.01;
  double min_gap = 0.0;
  int pegs = 9;
  std::vector<int> budgets{20, 50, 100};
  int instances = 10;
  std::string policies = "voc_phi,uct";
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
  bool wall_clock = false;
  std::vector<std::string> sets;
  // grid only
  std::string env = "bandit-tree";
  std::string policy = "voc_phi";
  std::vector<std::string> axes;
  std::string metric;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    for (auto& ch : key)
      if (ch == '_') ch = '-';
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

// Moves `--config FILE` entries into the argument list right after the
// subcommand words, so that flags given on the command line take precedence.
std::vector<std::string> splice_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;
  std::set<std::string> given;
  for (const auto& a : rest) {
    if (a.rfind("--", 0) != 0) continue;
    given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::size_t head = 1;
  while (head < rest.size() && rest[head].rfind("-", 0) != 0) ++head;
  std::vector<std::string> from_file;
  for (const auto& [k, v] : read_config(path))
    if (!given.count(k)) from_file.push_back("--" + k + "=" + v);
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(head), from_file.begin(), from_file.end());
  return rest;
}

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--budgets", a.budgets, "Comma separated, strictly increasing")->delimiter(',');
  cmd->add_option("--instances", a.instances);
  cmd->add_option("--policies", a.policies, "Comma separated policy names, or oracle");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--out", a.out, "CSV path (default stdout)");
  cmd->add_option("--threads", a.threads, "0 uses every core");
  cmd->add_flag("--wall-clock", a.wall_clock, "Record wall_ns (breaks byte-identical reruns)");
  cmd->add_option("--set", a.sets, "Policy parameter key=value, or policy.key=value");
  cmd->add_option("--horizon", a.horizon);
}

void add_tree(CLI::App* cmd, Args& a) {
  cmd->add_option("--depth", a.depth);
  cmd->add_option("--p", a.p);
  cmd->add_option("--kernel", a.kernel)->check(CLI::IsMember({"white", "rbf"}));
  cmd->add_option("--lengthscale", a.lengthscale);
  cmd->add_option("--signal-var", a.signal_var);
  cmd->add_option("--arm-noise-var", a.arm_noise_var);
  cmd->add_option("--min-gap", a.min_gap);
}

void apply_sets(std::vector<PolicyEntry>& policies, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    std::string key = s.substr(0, eq), value = s.substr(eq + 1), only;
    if (auto dot = key.find('.'); dot != std::string::npos) {
      only = key.substr(0, dot);
      key = key.substr(dot + 1);
    }
    for (auto& p : policies)
      if ((only.empty() || only == p.name) && p.name != "oracle") apply_policy_param(p.config, key, value);
  }
}

ExperimentConfig make_experiment(const Args& a, EnvKind env) {
  ExperimentConfig c;
  c.env = env;
  c.tree.depth = a.depth;
  c.tree.p = a.p;
  c.tree.arm_noise_var = a.arm_noise_var;
  c.tree.min_gap = a.min_gap;
  c.tree.kernel = a.kernel == "rbf" ? Kernel::rbf(a.signal_var, a.lengthscale) : Kernel::white(a.signal_var);
  c.pegs = a.pegs;
  c.budgets = a.budgets;
  c.instances = a.instances;
  c.seed = a.seed;
  c.threads = a.threads;
  c.wall_clock = a.wall_clock;
  for (const auto& name : split_list(a.policies)) c.policies.push_back(default_policy(name, c, a.horizon));
  apply_sets(c.policies, a.sets);
  return c;
}

void print_summary(const std::vector<RegretRecord>& recs) {
  std::fprintf(stderr, "%-16s %8s %-18s %12s %12s %6s\n", "policy", "budget", "metric", "mean", "se", "n");
  for (const auto& s : aggregate(recs))
    std::fprintf(stderr, "%-16s %8d %-18s %12.6f %12.6f %6zu\n", s.policy.c_str(), s.budget,
                 s.metric.c_str(), s.mean, s.se, s.n);
}

void emit(const std::vector<RegretRecord>& recs, const std::string& out) {
  if (out.empty()) {
    std::cout << format_csv(recs);
  } else {
    write_csv(recs, out);
  }
  print_summary(recs);
}

int run_selftest(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : selftest(seed)) {
    std::printf("%s  %s  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value-of-computation planning benchmarks"};
  app.require_subcommand(1);
  Args a;

  std::uint64_t self_seed = 1;
  auto* self = app.add_subcommand("selftest", "Run the invariant suites");
  self->add_option("--seed", self_seed);

  auto* bench = app.add_subcommand("bench", "Run a benchmark and write CSV");
  bench->require_subcommand(1);
  auto* tree = bench->add_subcommand("bandit-tree");
  add_common(tree, a);
  add_tree(tree, a);
  auto* peg = bench->add_subcommand("peg");
  add_common(peg, a);
  peg->add_option("--pegs", a.pegs);

  auto* grid = app.add_subcommand("grid", "Grid search one policy's hyperparameters");
  add_common(grid, a);
  add_tree(grid, a);
  grid->add_option("--pegs", a.pegs);
  grid->add_option("--env", a.env)->check(CLI::IsMember({"bandit-tree", "peg"}));
  grid->add_option("--policy", a.policy);
  grid->add_option("--axis", a.axes, "key=v1,v2,... (repeatable)");
  grid->add_option("--metric", a.metric, "Default simple_regret or pegs_remaining");
  for (auto* cmd : {tree, peg, grid}) cmd->add_option("--config", "key = value file; flags override it");

  try {
    auto args = splice_config(argc, argv);
    std::vector<const char*> cargs;
    for (const auto& s : args) cargs.push_back(s.c_str());
    try {
      app.parse(static_cast<int>(cargs.size()), const_cast<char**>(cargs.data()));
    } catch (const CLI::ParseError& e) {
      return app.exit(e);
    }

    if (self->parsed()) return run_selftest(self_seed);
    if (tree->parsed()) {
      emit(run_bandit_tree(make_experiment(a, EnvKind::BanditTree)), a.out);
      return 0;
    }
    if (peg->parsed()) {
      emit(run_peg(make_experiment(a, EnvKind::Peg)), a.out);
      return 0;
    }
    if (grid->parsed()) {
      const EnvKind env = a.env == "peg" ? EnvKind::Peg : EnvKind::BanditTree;
      Args single = a;
      single.policies = a.policy;
      auto base = make_experiment(single, env);
      std::map<std::string, std::vector<std::string>> axes;
      for (const auto& ax : a.axes) {
        const auto eq = ax.find('=');
        if (eq == std::string::npos) throw ConfigError("--axis expects key=v1,v2,...");
        axes[ax.substr(0, eq)] = split_list(ax.substr(eq + 1));
      }
      const std::string metric =
          !a.metric.empty() ? a.metric : env == EnvKind::Peg ? "pegs_remaining" : "simple_regret";
      const auto res = grid_search(base, expand_grid(base.policies.front(), axes), metric);
      std::printf("%-48s %12s %12s\n", "candidate", "mean", "se");
      for (const auto& row : res.table)
        std::printf("%-48s %12.6f %12.6f\n", row.label.c_str(), row.mean, row.se);
      std::printf("best: %s\n", res.best_label.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
