#include "vocplan/mdp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace vocplan {

std::size_t sample_outcome(const std::vector<Outcome>& outs, Rng& rng) {
  require(!outs.empty(), "sample_outcome: no outcomes");
  if (outs.size() == 1) return 0;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    acc += outs[i].prob;
    if (u < acc) return i;
  }
  return outs.size() - 1;
}

Step MdpModel::sample_step(State s, Action a, Rng& rng) const {
  const auto outs = transitions(s, a);
  const auto& o = outs[sample_outcome(outs, rng)];
  return {o.next, o.reward};
}

// -- Bandit trees --------------------------------------------------------------

namespace {

int level_of(State s) { return static_cast<int>(std::bit_width(s)) - 1; }

}  // namespace

BanditTreeEnv::BanditTreeEnv(int depth, double p, double arm_noise_var, Kernel kernel,
                             std::vector<double> arm_means)
    : depth_(depth), p_(p), noise_var_(arm_noise_var), kernel_(kernel),
      arm_means_(std::move(arm_means)) {
  if (depth < 1 || depth > 20) throw ConfigError("bandit tree depth must be in [1, 20]");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("bandit tree p must be in [0, 1]");
  if (!(arm_noise_var >= 0.0)) throw ConfigError("arm noise variance must be >= 0");
  if (arm_means_.size() != (std::size_t{1} << depth))
    throw ConfigError("bandit tree needs 2^depth arm means");
}

std::vector<Action> BanditTreeEnv::actions(State s) const {
  if (s == 0 || is_terminal(s)) return {};
  return {kLeft, kRight};
}

std::vector<Outcome> BanditTreeEnv::transitions(State s, Action a) const {
  require(s >= 1 && !is_terminal(s), "bandit tree: no actions at this state");
  require(a == kLeft || a == kRight, "bandit tree: invalid action");
  const State intended = 2 * s + static_cast<State>(a);
  const State other = 2 * s + static_cast<State>(1 - a);
  auto reward = [&](State c) {
    return c >= leaf_begin() ? arm_means_[c - leaf_begin()] : 0.0;
  };
  std::vector<Outcome> outs;
  if (p_ > 0.0) outs.push_back({intended, p_, reward(intended)});
  if (p_ < 1.0) outs.push_back({other, 1.0 - p_, reward(other)});
  return outs;
}

Step BanditTreeEnv::sample_step(State s, Action a, Rng& rng) const {
  const auto outs = transitions(s, a);
  const auto& o = outs[sample_outcome(outs, rng)];
  if (o.next >= leaf_begin() && noise_var_ > 0.0)
    return {o.next, o.reward + std::sqrt(noise_var_) * standard_normal(rng)};
  return {o.next, o.reward};
}

std::optional<double> BanditTreeEnv::coordinate(State s, Action a) const {
  if (s == 0 || is_terminal(s)) return std::nullopt;
  const int k = level_of(s) + 1;
  const State child = 2 * s + static_cast<State>(a);
  const double span = std::ldexp(1.0, depth_ - k);
  const double pos = static_cast<double>(child - (State{1} << k));
  return pos * span + (span - 1.0) / 2.0;
}

BanditTreeEnv bandit_tree_build(const BanditTreeSpec& spec, Rng& rng) {
  if (spec.depth < 1 || spec.depth > 20) throw ConfigError("bandit tree depth must be in [1, 20]");
  const std::size_t n = std::size_t{1} << spec.depth;
  std::vector<double> coords(n);
  std::iota(coords.begin(), coords.end(), 0.0);
  const Eigen::MatrixXd k = kernel_matrix(spec.kernel, coords);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  if (es.eigenvalues().minCoeff() < -1e-9 * k.trace())
    throw ConfigError("kernel matrix is not positive semi-definite");
  const Eigen::MatrixXd factor =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::vector<double> means(n);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100000) throw ConfigError("could not satisfy the arm gap constraint");
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = standard_normal(rng);
    const Eigen::VectorXd x = factor * z;
    for (std::size_t i = 0; i < n; ++i) means[i] = spec.mean + x(static_cast<Eigen::Index>(i));
    if (spec.min_gap <= 0.0) break;
    std::vector<double> sorted = means;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t i = 1; i < n && ok; ++i) ok = sorted[i] - sorted[i - 1] >= spec.min_gap;
    if (ok) break;
  }
  return BanditTreeEnv(spec.depth, spec.p, spec.arm_noise_var, spec.kernel, std::move(means));
}

namespace {

double bandit_v(const BanditTreeEnv& env, State s);

std::array<double, 2> bandit_q(const BanditTreeEnv& env, State s) {
  std::array<double, 2> q{};
  for (Action a : {kLeft, kRight}) {
    double v = 0.0;
    for (const auto& o : env.transitions(s, a)) v += o.prob * (o.reward + bandit_v(env, o.next));
    q[static_cast<std::size_t>(a)] = v;
  }
  return q;
}

double bandit_v(const BanditTreeEnv& env, State s) {
  if (env.is_terminal(s)) return 0.0;
  const auto q = bandit_q(env, s);
  return std::max(q[0], q[1]);
}

}  // namespace

std::array<double, 2> bandit_tree_q(const BanditTreeEnv& env, State s) {
  require(!env.is_terminal(s), "bandit_tree_q: terminal state");
  return bandit_q(env, s);
}

std::array<double, 2> bandit_tree_optimal(const BanditTreeEnv& env) {
  return bandit_q(env, env.root());
}

// -- Peg solitaire -------------------------------------------------------------

namespace {

constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};

bool has(PegBoard b, int cell) { return (b >> cell) & 1u; }

}  // namespace

Action Move::id() const {
  const int d = to - from;
  int dir = 0;
  if (d == -8) dir = 0;
  else if (d == 8) dir = 1;
  else if (d == -2) dir = 2;
  else dir = 3;
  return from * 4 + dir;
}

Move peg_move_from_id(Action id) {
  require(id >= 0 && id < 64, "peg: action id out of range");
  const int from = id / 4, dir = id % 4;
  const int r = from / 4, c = from % 4;
  const int r2 = r + 2 * kDr[dir], c2 = c + 2 * kDc[dir];
  require(r2 >= 0 && r2 < 4 && c2 >= 0 && c2 < 4, "peg: move leaves the board");
  return {from, (r + kDr[dir]) * 4 + (c + kDc[dir]), r2 * 4 + c2};
}

std::vector<Move> peg_legal_moves(PegBoard board) {
  std::vector<Move> moves;
  for (int from = 0; from < 16; ++from) {
    if (!has(board, from)) continue;
    const int r = from / 4, c = from % 4;
    for (int dir = 0; dir < 4; ++dir) {
      const int r2 = r + 2 * kDr[dir], c2 = c + 2 * kDc[dir];
      if (r2 < 0 || r2 >= 4 || c2 < 0 || c2 >= 4) continue;
      const int over = (r + kDr[dir]) * 4 + (c + kDc[dir]);
      const int to = r2 * 4 + c2;
      if (has(board, over) && !has(board, to)) moves.push_back({from, over, to});
    }
  }
  return moves;
}

PegBoard peg_apply(PegBoard board, const Move& m) {
  const auto legal = peg_legal_moves(board);
  if (std::find(legal.begin(), legal.end(), m) == legal.end())
    throw ContractViolation("peg_apply: illegal move");
  const unsigned b = board;
  return static_cast<PegBoard>((b & ~(1u << m.from) & ~(1u << m.over)) | (1u << m.to));
}

int peg_count(PegBoard board) { return std::popcount(board); }

PegBoard peg_random_board(int pegs, Rng& rng) {
  if (pegs < 0 || pegs > 16) throw ConfigError("peg count must be in [0, 16]");
  std::array<int, 16> cells{};
  std::iota(cells.begin(), cells.end(), 0);
  // Partial Fisher-Yates with an explicit draw so results do not depend on
  // the standard library's shuffle.
  unsigned b = 0;
  for (int i = 0; i < pegs; ++i) {
    const auto j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(16 - i));
    std::swap(cells[i], cells[j]);
    b |= 1u << cells[i];
  }
  return static_cast<PegBoard>(b);
}

PegBoard peg_parse(const std::string& text) {
  unsigned b = 0;
  int cell = 0;
  for (char ch : text) {
    if (ch == '\n' || ch == '\r') continue;
    if (ch != '#' && ch != '.') throw InvalidInput("peg board: unexpected character");
    if (cell >= 16) throw InvalidInput("peg board: more than 16 cells");
    if (ch == '#') b |= 1u << cell;
    ++cell;
  }
  if (cell != 16) throw InvalidInput("peg board: expected 16 cells");
  return static_cast<PegBoard>(b);
}

std::string peg_format(PegBoard board) {
  std::string s;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) s += has(board, r * 4 + c) ? '#' : '.';
    s += '\n';
  }
  return s;
}

std::vector<Action> PegEnv::actions(State s) const {
  std::vector<Action> out;
  for (const auto& m : peg_legal_moves(static_cast<PegBoard>(s))) out.push_back(m.id());
  return out;
}

std::vector<Outcome> PegEnv::transitions(State s, Action a) const {
  const auto b = peg_apply(static_cast<PegBoard>(s), peg_move_from_id(a));
  return {{State{b}, 1.0, 1.0}};
}

bool PegEnv::is_terminal(State s) const {
  return peg_legal_moves(static_cast<PegBoard>(s)).empty();
}

Step PegEnv::sample_step(State s, Action a, Rng&) const {
  return {State{peg_apply(static_cast<PegBoard>(s), peg_move_from_id(a))}, 1.0};
}

std::optional<double> PegEnv::max_return(State s) const {
  return std::max(0, peg_count(static_cast<PegBoard>(s)) - 1);
}

// -- Tables --------------------------------------------------------------------

void TableMdp::add(State s, Action a, std::vector<Outcome> outs) {
  double total = 0.0;
  for (const auto& o : outs) {
    if (!(o.prob >= 0.0)) throw ConfigError("table mdp: negative probability");
    total += o.prob;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("table mdp: probabilities must sum to 1");
  table_[s][a] = std::move(outs);
}

std::vector<Action> TableMdp::actions(State s) const {
  std::vector<Action> out;
  auto it = table_.find(s);
  if (it == table_.end()) return out;
  for (const auto& [a, _] : it->second) out.push_back(a);
  return out;
}

std::vector<Outcome> TableMdp::transitions(State s, Action a) const {
  auto it = table_.find(s);
  require(it != table_.end(), "table mdp: terminal state");
  auto jt = it->second.find(a);
  require(jt != it->second.end(), "table mdp: unknown action");
  return jt->second;
}

std::optional<double> TableMdp::coordinate(State s, Action a) const {
  auto it = coords_.find({s, a});
  if (it == coords_.end()) return std::nullopt;
  return it->second;
}

TableMdp make_chain_tree(int branching, int depth, double gamma, double reward) {
  require(branching >= 1 && depth >= 1, "make_chain_tree: bad shape");
  TableMdp m(gamma);
  State next_id = 1;
  std::vector<State> layer{0};
  for (int d = 0; d < depth; ++d) {
    std::vector<State> nl;
    for (State s : layer) {
      for (int a = 0; a < branching; ++a) {
        const State c = next_id++;
        m.add(s, a, {{c, 1.0, reward * (a + 1)}});
        nl.push_back(c);
      }
    }
    layer = std::move(nl);
  }
  return m;
}

}  // namespace vocplan
