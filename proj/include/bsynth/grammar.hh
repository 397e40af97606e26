// Apache License, Version 2.0, refer to LICENSE.txt

// Tagged probabilistic context-free grammars with random terminal symbols.
//
// Every production emits a unique phrase tag, so an expression's parse is read
// off its tags. Leaf productions may draw one terminal atom from a discrete
// table or a continuous density. The grammar gives the prior over programs:
// sampling, the Expand density, and the expectation-matrix consistency check.

#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bsynth/random.hh"
#include "bsynth/sexpr.hh"

namespace bsynth {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct DiscreteDist {
  std::vector<std::pair<Atom, double>> outcomes;
};

// Gamma(shape, rate). Draws below `floor` are redrawn.
struct GammaDensity {
  double shape = 1.0;
  double rate = 1.0;
  double floor = 0.0;
};

using TerminalDist = std::variant<DiscreteDist, GammaDensity>;

Atom sample_terminal(const TerminalDist& d, Rng& rng);
double terminal_logdensity(const TerminalDist& d, const Atom& a);
bool is_discrete(const TerminalDist& d);

struct Rule {
  std::string lhs;
  std::string tag;
  std::vector<std::string> rhs;  // child nonterminals, in order
  double prob = 1.0;
  std::optional<TerminalDist> terminal;  // only on leaf rules
};

class Grammar {
 public:
  Grammar(std::string start, std::vector<Rule> rules);

  const std::string& start() const { return start_; }
  const std::vector<Rule>& rules() const { return rules_; }
  // Start symbol first, then in order of first appearance.
  const std::vector<std::string>& nonterminals() const { return nonterminals_; }

  const Rule* rule_for_tag(const std::string& tag) const;
  std::vector<const Rule*> rules_for(const std::string& nonterminal) const;
  std::optional<std::string> nonterminal_of(const std::string& tag) const;
  TagResolver resolver() const;

  // A nonterminal whose productions are all leaves (e.g. the GP's H).
  bool is_parameter_nonterminal(const std::string& nonterminal) const;

  std::string to_text() const;
  std::uint64_t hash() const;

 private:
  std::string start_;
  std::vector<Rule> rules_;
  std::vector<std::string> nonterminals_;
};

class GrammarParseError : public std::runtime_error {
 public:
  GrammarParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Line format:
//   start K
//   rule K + 0.135 K K
//   rule H gamma 1 ~ gamma 1 1 [floor 1e-9]
//   rule C coin 1 ~ discrete heads 0.5 tails 0.5
// '#' starts a comment.
Grammar parse_grammar(std::string_view text);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const Grammar& g);

class SamplingDepthExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleOptions {
  std::size_t max_depth = 10'000;
};

struct Sampled {
  Expr expr;
  double logp = 0.0;  // log Expand[expr](nonterminal) accumulated while drawing
};

Sampled sample_with_logp(const Grammar& g, const std::string& nonterminal, Rng& rng,
                         const SampleOptions& opts = {});
Expr sample(const Grammar& g, const std::string& nonterminal, Rng& rng,
            const SampleOptions& opts = {});

// log Expand[e](nonterminal); -inf when e is not derivable from it.
double expand_logdensity(const Grammar& g, const std::string& nonterminal, const Expr& e);
double prior_logdensity(const Grammar& g, const Expr& e);

// Every expression derivable from `nonterminal` with its log-probability.
// Requires discrete terminals and a finite language; throws past `limit`.
std::vector<std::pair<Expr, double>> enumerate_language(const Grammar& g,
                                                        const std::string& nonterminal,
                                                        std::size_t limit = 100'000);

// z[d] = probability that a derivation from `nonterminal` closes within d
// structural levels. Parameter nonterminals do not add depth.
std::vector<double> termination_mass_by_depth(const Grammar& g, const std::string& nonterminal,
                                              std::size_t max_depth);

struct ExpectationMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd m;

  std::size_t index(const std::string& label) const;
  double at(const std::string& row, const std::string& col) const;
};

// Binary normal form: a leaf rule N -> (t s) stays a terminal production; any
// other rule becomes N -> [t] R, where [t] is a preterminal and R is the child
// nonterminal or a shared fresh nonterminal <N1 N2 ...> that peels one child
// at a time. Terminal distributions play no part.
ExpectationMatrix expectation_matrix(const Grammar& g);

struct ConsistencyReport {
  double spectral_radius = 0.0;
  bool consistent = false;
  // Eigenvalues of the recurrent blocks, largest modulus first. Transient
  // nonterminals only contribute exact zeros and are omitted.
  std::vector<std::complex<double>> eigenvalues;
};

ConsistencyReport check_consistency(const Grammar& g);

}  // namespace bsynth
