#include "vocplan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace vocplan {

namespace {

constexpr const char* kHeader = "env,policy,budget,instance,seed,metric,value,wall_ns";

bool is_oracle(const PolicyEntry& p) { return p.name == "oracle"; }

std::string env_label(const ExperimentConfig& c) {
  return c.env == EnvKind::BanditTree ? "bandit_tree" : "peg";
}

// Runs fn(i) for i in [0, n) on a small pool; the first exception wins.
template <class Fn>
void parallel_for(int n, int threads, Fn fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::vector<RegretRecord> flatten(std::vector<std::vector<RegretRecord>>& parts) {
  std::vector<RegretRecord> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  sort_records(out);
  return out;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), t0_(std::chrono::steady_clock::now()) {}
  std::int64_t ns() const {
    if (!on_) return 0;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

std::string fmt_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput(std::string("bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (instances < 1) throw ConfigError("instances must be >= 1");
  if (budgets.empty()) throw ConfigError("need at least one budget");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 0) throw ConfigError("budgets must be >= 0");
    if (i > 0 && budgets[i] <= budgets[i - 1]) throw ConfigError("budgets must be strictly increasing");
  }
  if (policies.empty()) throw ConfigError("need at least one policy");
  for (const auto& p : policies) {
    if (p.name.empty() || p.name.find_first_of(",\n\r") != std::string::npos)
      throw ConfigError("bad policy label '" + p.name + "'");
    if (!is_oracle(p)) p.config.validate();
  }
  if (env == EnvKind::Peg && (pegs < 1 || pegs > 16)) throw ConfigError("pegs must be in [1, 16]");
}

std::uint64_t instance_seed(const ExperimentConfig& config, int instance) {
  return derive_seed(config.seed, config.instance_offset + static_cast<std::uint64_t>(instance));
}

std::uint64_t planning_seed(std::uint64_t iseed, int budget) {
  return derive_seed(iseed, static_cast<std::uint64_t>(budget));
}

std::vector<RegretRecord> run_bandit_tree(const ExperimentConfig& config) {
  config.validate();
  const std::string env_name = env_label(config);
  std::vector<std::vector<RegretRecord>> parts(static_cast<std::size_t>(config.instances));
  parallel_for(config.instances, config.threads, [&](int i) {
    const std::uint64_t iseed = instance_seed(config, i);
    Rng env_rng(iseed);
    const auto env = bandit_tree_build(config.tree, env_rng);
    const auto q = bandit_tree_optimal(env);
    const double best = std::max(q[0], q[1]);
    auto& out = parts[static_cast<std::size_t>(i)];
    for (const auto& pol : config.policies) {
      for (int budget : config.budgets) {
        Stopwatch sw(config.wall_clock);
        std::size_t chosen;
        if (is_oracle(pol)) {
          chosen = q[1] > q[0] ? 1 : 0;
        } else {
          MetaPolicyConfig cfg = pol.config;
          cfg.budget = budget;
          Rng rng(planning_seed(iseed, budget));
          const auto r = plan(env, env.root(), cfg, rng);
          chosen = r.action_index;
        }
        const auto ns = sw.ns();
        out.push_back({env_name, pol.name, budget, i, iseed, "simple_regret", best - q[chosen], ns});
      }
    }
  });
  return flatten(parts);
}

int peg_min_remaining(PegBoard board) {
  // Every board is reached with the same peg count, so a flat memo is enough.
  thread_local std::vector<std::int8_t> memo;
  if (memo.empty()) memo.assign(1u << 16, -1);
  auto& m = memo[board];
  if (m >= 0) return m;
  int best = peg_count(board);
  for (const auto& mv : peg_legal_moves(board)) best = std::min(best, peg_min_remaining(peg_apply(board, mv)));
  memo[board] = static_cast<std::int8_t>(best);
  return best;
}

namespace {

Move peg_oracle_move(PegBoard board) {
  const auto moves = peg_legal_moves(board);
  require(!moves.empty(), "peg_oracle_move: no legal moves");
  Move best = moves.front();
  int best_count = 17;
  for (const auto& mv : moves) {
    const int c = peg_min_remaining(peg_apply(board, mv));
    if (c < best_count) {
      best_count = c;
      best = mv;
    }
  }
  return best;
}

}  // namespace

PegEpisode play_peg_episode(PegBoard board, const PolicyEntry& policy, Rng& rng) {
  const PegEnv env;
  PegEpisode ep{0, 0};
  while (!env.is_terminal(board)) {
    Move mv{};
    if (is_oracle(policy)) {
      mv = peg_oracle_move(board);
    } else {
      const auto r = plan(env, board, policy.config, rng);
      ep.computations += r.computations;
      mv = peg_move_from_id(r.action);
    }
    board = peg_apply(board, mv);
  }
  ep.pegs_remaining = peg_count(board);
  return ep;
}

std::vector<RegretRecord> run_peg(const ExperimentConfig& config) {
  config.validate();
  const std::string env_name = env_label(config);
  std::vector<std::vector<RegretRecord>> parts(static_cast<std::size_t>(config.instances));
  parallel_for(config.instances, config.threads, [&](int i) {
    const std::uint64_t iseed = instance_seed(config, i);
    Rng env_rng(iseed);
    const PegBoard start = peg_random_board(config.pegs, env_rng);
    auto& out = parts[static_cast<std::size_t>(i)];
    for (const auto& pol : config.policies) {
      for (int budget : config.budgets) {
        Stopwatch sw(config.wall_clock);
        PolicyEntry p = pol;
        p.config.budget = budget;
        Rng rng(planning_seed(iseed, budget));
        const auto ep = play_peg_episode(start, p, rng);
        out.push_back({env_name, pol.name, budget, i, iseed, "pegs_remaining",
                       static_cast<double>(ep.pegs_remaining), sw.ns()});
      }
    }
  });
  return flatten(parts);
}

std::vector<RegretRecord> run_experiment(const ExperimentConfig& config) {
  return config.env == EnvKind::BanditTree ? run_bandit_tree(config) : run_peg(config);
}

// -- CSV -------------------------------------------------------------------------

void sort_records(std::vector<RegretRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const RegretRecord& a, const RegretRecord& b) {
    return std::tie(a.policy, a.budget, a.instance, a.metric) <
           std::tie(b.policy, b.budget, b.instance, b.metric);
  });
}

std::string format_csv(std::vector<RegretRecord> records) {
  sort_records(records);
  std::string out = kHeader;
  out += '\n';
  for (const auto& r : records) {
    out += r.env + ',' + r.policy + ',' + std::to_string(r.budget) + ',' + std::to_string(r.instance) +
           ',' + std::to_string(r.seed) + ',' + r.metric + ',' + fmt_double(r.value) + ',' +
           std::to_string(r.wall_ns) + '\n';
  }
  return out;
}

std::vector<RegretRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw InvalidInput("csv: missing or unexpected header");
  std::vector<RegretRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_list(line, ',');
    if (f.size() != 8) throw InvalidInput("csv line " + std::to_string(lineno) + ": expected 8 fields");
    RegretRecord r;
    r.env = f[0];
    r.policy = f[1];
    r.budget = parse_number<int>(f[2], "budget");
    r.instance = parse_number<int>(f[3], "instance");
    r.seed = parse_number<std::uint64_t>(f[4], "seed");
    r.metric = f[5];
    r.value = parse_number<double>(f[6], "value");
    r.wall_ns = parse_number<std::int64_t>(f[7], "wall_ns");
    out.push_back(std::move(r));
  }
  return out;
}

void write_csv(const std::vector<RegretRecord>& records, const std::string& path) {
  const std::string text = format_csv(records);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.close();
  if (!f) throw Error("failed writing '" + path + "'");
}

std::vector<RegretRecord> read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const InvalidInput& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

std::vector<GroupStat> aggregate(const std::vector<RegretRecord>& records) {
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.policy, r.budget, r.metric}].push_back(r.value);
  std::vector<GroupStat> out;
  for (const auto& [key, xs] : groups) {
    const auto s = summarize(xs);
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), s.mean, s.se, xs.size()});
  }
  return out;
}

McEstimate paired_difference(const std::vector<RegretRecord>& records, const std::string& a,
                             const std::string& b, int budget, const std::string& metric) {
  std::map<int, double> va, vb;
  for (const auto& r : records) {
    if (r.budget != budget || r.metric != metric) continue;
    if (r.policy == a) va[r.instance] = r.value;
    if (r.policy == b) vb[r.instance] = r.value;
  }
  if (va.empty() || va.size() != vb.size()) throw InvalidInput("paired_difference: unmatched instances");
  std::vector<double> d;
  for (const auto& [i, x] : va) {
    auto it = vb.find(i);
    if (it == vb.end()) throw InvalidInput("paired_difference: unmatched instances");
    d.push_back(x - it->second);
  }
  return summarize(d);
}

PolicyEntry default_policy(const std::string& name, const ExperimentConfig& experiment, int horizon) {
  PolicyEntry p;
  p.name = name;
  if (name == "oracle") return p;
  auto& c = p.config;
  c.kind = parse_policy(name);
  c.horizon = horizon;
  if (experiment.env == EnvKind::BanditTree) {
    const auto& t = experiment.tree;
    c.prior = {t.mean, t.kernel.signal_var, 0.01};
    c.kernel = t.kernel;
    c.uct_c = 1.0;
    c.rollout_depth = t.depth;
  } else {
    c.prior = {2.0, 4.0, 1.0};
    c.uct_c = 1.0;
    c.rollout_depth = 16;
  }
  return p;
}

// -- Configuration keys ----------------------------------------------------------

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

void apply_policy_param(MetaPolicyConfig& c, const std::string& key, const std::string& value) {
  auto num = [&] { return parse_number<double>(value, key.c_str()); };
  auto integer = [&] { return parse_number<int>(value, key.c_str()); };
  auto kernel = [&]() -> Kernel& {
    if (!c.kernel) c.kernel = Kernel::white(c.prior.var0);
    return *c.kernel;
  };
  if (key == "uct_c") c.uct_c = num();
  else if (key == "horizon") c.horizon = integer();
  else if (key == "mean0") c.prior.mean0 = num();
  else if (key == "var0") c.prior.var0 = num();
  else if (key == "noise_var") c.prior.noise_var = num();
  else if (key == "signal_var") kernel().signal_var = num();
  else if (key == "lengthscale") kernel().lengthscale = num();
  else if (key == "kernel") {
    if (value == "none") c.kernel.reset();
    else if (value == "white") kernel().kind = Kernel::Kind::White;
    else if (value == "rbf") kernel().kind = Kernel::Kind::Rbf;
    else throw ConfigError("kernel must be none, white or rbf");
  } else if (key == "psi_outer") c.psi.m_outer = integer();
  else if (key == "psi_inner") c.psi.m_inner = integer();
  else if (key == "value_samples") c.value_samples = integer();
  else if (key == "ueb_tables") c.ueb_tables = integer();
  else if (key == "ueb_mean0") c.ueb_mean0 = num();
  else if (key == "stop_threshold") c.stop_threshold = num();
  else if (key == "rollout_depth") c.rollout_depth = integer();
  else if (key == "budget") c.budget = integer();
  else throw ConfigError("unknown policy parameter '" + key + "'");
}

// -- Grid search -----------------------------------------------------------------

std::vector<GridCandidate> expand_grid(const PolicyEntry& base,
                                       const std::map<std::string, std::vector<std::string>>& axes) {
  std::vector<GridCandidate> out{{"", base}};
  for (const auto& [key, values] : axes) {
    if (values.empty()) throw ConfigError("grid axis '" + key + "' has no values");
    std::vector<GridCandidate> next;
    for (const auto& cand : out) {
      for (const auto& v : values) {
        GridCandidate c = cand;
        apply_policy_param(c.policy.config, key, v);
        c.label += (c.label.empty() ? "" : " ") + key + "=" + v;
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

GridResult grid_search(const ExperimentConfig& base, const std::vector<GridCandidate>& grid,
                       const std::string& metric) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  GridResult res;
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    ExperimentConfig c = base;
    c.instance_offset = kHeldOutOffset;
    c.policies = {grid[g].policy};
    const auto records = run_experiment(c);
    // Average over budgets within an instance, then over instances.
    std::map<int, std::vector<double>> per_instance;
    for (const auto& r : records)
      if (r.metric == metric) per_instance[r.instance].push_back(r.value);
    if (per_instance.empty()) throw ConfigError("grid_search: no records for metric '" + metric + "'");
    std::vector<double> xs;
    for (const auto& [i, v] : per_instance) xs.push_back(summarize(v).mean);
    const auto s = summarize(xs);
    res.table.push_back({grid[g].label, s.mean, s.se});
    const auto& cur = res.table.back();
    const auto& inc = res.table[best];
    if (g > 0 && (cur.mean < inc.mean || (cur.mean == inc.mean && cur.label < inc.label))) best = g;
  }
  res.best_label = grid[best].label;
  res.best = grid[best].policy;
  return res;
}

}  // namespace vocplan
