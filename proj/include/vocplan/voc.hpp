#pragma once

#include <span>
#include <vector>

#include "vocplan/belief.hpp"
#include "vocplan/graph.hpp"
#include "vocplan/values.hpp"

namespace vocplan {

// Continuous convex piecewise-linear function of a scalar z, stored as the
// lines that are maximal on consecutive intervals (slopes strictly increasing)
// and the breakpoints between them.
class ConvexPL {
 public:
  struct Line {
    double a;  // intercept
    double b;  // slope
  };

  static ConvexPL constant(double c) { return line(c, 0.0); }
  static ConvexPL line(double a, double b);
  // Upper envelope of a set of lines.
  static ConvexPL envelope(std::vector<Line> lines);
  static ConvexPL max(const ConvexPL& f, const ConvexPL& g);

  // this = this + w * g (w >= 0).
  void add_scaled(const ConvexPL& g, double w);
  void shift(double c);

  double at(double z) const;
  // E[f(Z)] - f(0) for Z ~ N(0, 1). Always >= 0.
  double expected_gain() const;

  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<double>& knots() const { return knots_; }

 private:
  std::vector<Line> lines_;
  std::vector<double> knots_;
};

// Per root action value as a function of the standardised outcome Z of a
// single computation on frontier node i: the frontier posterior means move
// along mean + dir * Z.
std::vector<ConvexPL> static_value_pl(const SearchGraph& g, const Belief& belief,
                                      const Eigen::VectorXd& dir);

// Closed-form VOC(phi) of sampling node i: tree graph, independent beliefs.
double voc_phi_independent(const SearchGraph& g, const Belief& belief, std::size_t i);

// Exact VOC(phi) through the piecewise-linear envelope. Any graph and belief.
double voc_phi_envelope(const SearchGraph& g, const Belief& belief, std::size_t i);

// Dispatches to the fastest exact method.
double voc_phi(const SearchGraph& g, const Belief& belief, std::size_t i);
std::vector<double> voc_phi_all(const SearchGraph& g, const Belief& belief);

// Exact VOC'(phi): E[max_a phi_a(o)] - E[phi_{a*}(o)].
double voc_prime_phi(const SearchGraph& g, const Belief& belief, std::size_t i);
std::vector<double> voc_prime_phi_all(const SearchGraph& g, const Belief& belief);

// Monte Carlo VOC(psi) and VOC'(psi). The outer loop draws the outcome of the
// computation, the inner loop draws frontier values; inner draws are shared
// between the current and the updated belief.
struct PsiMcConfig {
  int m_outer = 16;
  int m_inner = 64;
};

McEstimate voc_psi_mc(const SearchGraph& g, const Belief& belief, std::size_t i,
                      const PsiMcConfig& cfg, Rng& rng);
McEstimate voc_prime_psi_mc(const SearchGraph& g, const Belief& belief, std::size_t i,
                            const PsiMcConfig& cfg, Rng& rng);
// All candidates with one shared set of draws.
std::vector<McEstimate> voc_psi_all(const SearchGraph& g, const Belief& belief,
                                    const PsiMcConfig& cfg, Rng& rng);

// UEB: derivative of the alpha action's Lai-Robbins bound with respect to the
// sample count of each frontier node. The policy samples the argmin.
struct UebScore {
  std::vector<double> dlambda_dn;  // 0 for nodes outside alpha's subtree
  std::size_t alpha = 0;           // root action index
  std::vector<double> lambda;      // per root action
};

struct UebParts {
  double dlambda_dsigma;
  double dsigma_dn;
  double dlambda_dmu;
  double dmu_dn;
};

// Chain factors for one frontier term; exposed for testing.
UebParts ueb_parts(const YTerm& term, double c, const NodeBelief& node, const NormalPrior& prior);

UebScore ueb_scores(const SearchGraph& g, const Belief& belief);

// Distinct per-root-action Y term sets of a list of transition tables, with
// the fraction of tables that produced each.
struct WeightedTerms {
  std::vector<YTerm> terms;
  double weight;
};
using TermGroups = std::vector<std::vector<WeightedTerms>>;
TermGroups group_tables(const SearchGraph& g, std::span<const TransitionTable> tables);

// Stochastic graphs: lambda and its derivatives averaged over a fixed set of
// transition tables.
UebScore ueb_scores(const SearchGraph& g, const Belief& belief, const TermGroups& groups);
UebScore ueb_scores(const SearchGraph& g, const Belief& belief,
                    std::span<const TransitionTable> tables);

}  // namespace vocplan
