// Apache License, Version 2.0, refer to LICENSE.txt

// Markov chain Monte Carlo over program text.
//
// A chain starts from a prior draw with nonzero likelihood and repeatedly
// applies the sever/resimulate/accept operator: pick a node uniformly among
// the eligible addresses, cut it out, regrow it from the grammar, and accept
// with probability min{1, |A_E|/|A_E'| * Lik[E']/Lik[E]}. Independent chains
// give an ensemble of final programs.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsynth/grammar.hh"
#include "bsynth/random.hh"
#include "bsynth/sexpr.hh"

namespace bsynth {

// Data-bound likelihood. `loglik` must never exceed `log_upper_bound()`.
class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;
  virtual double loglik(const Expr& program) const = 0;
  virtual double log_upper_bound() const = 0;
};

// Restricts address selection to nodes produced by the listed nonterminals.
// An empty set means every node is eligible.
struct MoveFilter {
  std::set<std::string> nonterminals;

  bool admits(const std::string& nonterminal) const {
    return nonterminals.empty() || nonterminals.count(nonterminal) > 0;
  }
};

std::vector<Address> eligible_addresses(const Expr& e, const Grammar& g, const MoveFilter& f);

struct MoveSchedule {
  enum class Kind { kUniform, kAlternating };
  Kind kind = Kind::kUniform;
  std::size_t structure_steps = 1;
  std::size_t parameter_steps = 1;

  static MoveSchedule uniform() { return {}; }
  static MoveSchedule alternating(std::size_t structure, std::size_t parameter) {
    return {Kind::kAlternating, structure, parameter};
  }
  // "uniform" or "alternating:S,P".
  static MoveSchedule parse(const std::string& text);
  std::string to_string() const;

  // Filter for the step-th transition (0-based).
  MoveFilter filter_for_step(std::size_t step, const Grammar& g) const;
};

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Initialized {
  Expr program;
  double loglik = 0.0;
  std::size_t attempts = 0;
};

// Draws from the prior until the likelihood is nonzero.
Initialized initialize(const Grammar& g, const LikelihoodModel& lik, Rng& rng,
                       std::size_t max_attempts = 1'000'000);

struct Proposal {
  Expr program;
  double loglik = 0.0;
  double log_accept_ratio = 0.0;  // before capping at 0
  Address address;
  bool noop = false;  // no eligible address; the chain stays put
};

// Deterministic core of a move: regrow the node at `a` as `replacement`.
Proposal evaluate_move(const Expr& e, double e_loglik, const Address& a, const Expr& replacement,
                       const Grammar& g, const LikelihoodModel& lik, const MoveFilter& filter);

Proposal propose(const Expr& e, double e_loglik, const Grammar& g, const LikelihoodModel& lik,
                 Rng& rng, const MoveFilter& filter = {});

struct Chain {
  Expr current;
  double current_loglik = 0.0;
  std::size_t steps_taken = 0;
  std::size_t accepts = 0;
  Rng rng;
};

Chain start_chain(const Grammar& g, const LikelihoodModel& lik, std::uint64_t seed);

// One step of the operator. Returns true when the proposal was accepted.
bool transition(Chain& chain, const Grammar& g, const LikelihoodModel& lik,
                const MoveFilter& filter = {});

struct EnsembleMember {
  Expr program;
  double log_prior = 0.0;
  double loglik = 0.0;
  std::size_t steps = 0;
  std::size_t accepts = 0;
};

struct Ensemble {
  std::vector<EnsembleMember> members;
  // Free-form provenance, written as "#key: value" header lines.
  std::vector<std::pair<std::string, std::string>> metadata;

  std::optional<std::string> meta(const std::string& key) const;
  void set_meta(const std::string& key, std::string value);
};

struct SynthConfig {
  std::size_t chains = 1;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  MoveSchedule schedule;
  std::size_t threads = 1;  // 0: hardware concurrency
};

// Per-chain seed: seed XOR chain index.
inline std::uint64_t chain_seed(std::uint64_t seed, std::size_t chain) {
  return seed ^ static_cast<std::uint64_t>(chain);
}

// Runs `body(chain_index, rng)` for every chain, possibly on several threads,
// and returns the members in chain order. Output never depends on threading.
std::vector<EnsembleMember> run_chains(
    const SynthConfig& config,
    const std::function<EnsembleMember(std::size_t chain, Rng& rng)>& body);

Ensemble synthesize(const Grammar& g, const LikelihoodModel& lik, const SynthConfig& config);

}  // namespace bsynth
