// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/synthesis.hh"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "bsynth/hash.hh"

namespace bsynth {

std::vector<Address> eligible_addresses(const Expr& e, const Grammar& g, const MoveFilter& f) {
  std::vector<Address> out;
  for (auto& a : addresses(e)) {
    const Expr* node = find_node(e, a);
    auto nt = g.nonterminal_of(node->tag());
    if (nt && f.admits(*nt)) out.push_back(std::move(a));
  }
  return out;
}

MoveSchedule MoveSchedule::parse(const std::string& text) {
  if (text == "uniform") return uniform();
  const std::string prefix = "alternating:";
  if (text.rfind(prefix, 0) == 0) {
    std::istringstream in(text.substr(prefix.size()));
    std::size_t s = 0, p = 0;
    char comma = 0;
    if (in >> s >> comma >> p && comma == ',' && in.peek() == EOF && s + p > 0) {
      return alternating(s, p);
    }
  }
  throw std::invalid_argument("bad move schedule '" + text +
                              "' (expected 'uniform' or 'alternating:S,P')");
}

std::string MoveSchedule::to_string() const {
  if (kind == Kind::kUniform) return "uniform";
  return "alternating:" + std::to_string(structure_steps) + "," + std::to_string(parameter_steps);
}

MoveFilter MoveSchedule::filter_for_step(std::size_t step, const Grammar& g) const {
  if (kind == Kind::kUniform) return {};
  const bool structure = step % (structure_steps + parameter_steps) < structure_steps;
  MoveFilter f;
  for (const auto& nt : g.nonterminals()) {
    if (g.is_parameter_nonterminal(nt) != structure) f.nonterminals.insert(nt);
  }
  return f;
}

Initialized initialize(const Grammar& g, const LikelihoodModel& lik, Rng& rng,
                       std::size_t max_attempts) {
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    Expr e = sample(g, g.start(), rng);
    const double ll = lik.loglik(e);
    if (ll > kNegInf) return {std::move(e), ll, attempt};
  }
  throw InitializationError("no prior draw had nonzero likelihood after " +
                            std::to_string(max_attempts) + " attempts");
}

Proposal evaluate_move(const Expr& e, double e_loglik, const Address& a, const Expr& replacement,
                       const Grammar& g, const LikelihoodModel& lik, const MoveFilter& filter) {
  auto cut = sever(e, a, g.resolver());
  if (!cut) throw std::invalid_argument("address " + format_address(a) + " is not in the program");
  Proposal p;
  p.address = a;
  p.program = fill(cut->hole, replacement, g.resolver());
  p.loglik = lik.loglik(p.program);
  const double n_from = static_cast<double>(eligible_addresses(e, g, filter).size());
  const double n_to = static_cast<double>(eligible_addresses(p.program, g, filter).size());
  p.log_accept_ratio =
      p.loglik == kNegInf ? kNegInf : std::log(n_from) - std::log(n_to) + p.loglik - e_loglik;
  return p;
}

Proposal propose(const Expr& e, double e_loglik, const Grammar& g, const LikelihoodModel& lik,
                 Rng& rng, const MoveFilter& filter) {
  const auto eligible = eligible_addresses(e, g, filter);
  if (eligible.empty()) {
    Proposal p;
    p.program = e;
    p.loglik = e_loglik;
    p.noop = true;
    return p;
  }
  const Address& a = eligible[uniform_index(rng, eligible.size())];
  const auto nt = g.nonterminal_of(find_node(e, a)->tag());
  Expr replacement = sample(g, *nt, rng);
  return evaluate_move(e, e_loglik, a, replacement, g, lik, filter);
}

Chain start_chain(const Grammar& g, const LikelihoodModel& lik, std::uint64_t seed) {
  Chain c{Expr{}, 0.0, 0, 0, Rng(seed)};
  auto init = initialize(g, lik, c.rng);
  c.current = std::move(init.program);
  c.current_loglik = init.loglik;
  return c;
}

bool transition(Chain& chain, const Grammar& g, const LikelihoodModel& lik,
                const MoveFilter& filter) {
  Proposal p = propose(chain.current, chain.current_loglik, g, lik, chain.rng, filter);
  ++chain.steps_taken;
  if (p.noop) return false;
  const double u = uniform01(chain.rng);
  if (std::log(u) < p.log_accept_ratio) {
    chain.current = std::move(p.program);
    chain.current_loglik = p.loglik;
    ++chain.accepts;
    return true;
  }
  return false;
}

std::optional<std::string> Ensemble::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void Ensemble::set_meta(const std::string& key, std::string value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  metadata.emplace_back(key, std::move(value));
}

std::vector<EnsembleMember> run_chains(
    const SynthConfig& config,
    const std::function<EnsembleMember(std::size_t chain, Rng& rng)>& body) {
  if (config.chains == 0) throw std::invalid_argument("chains must be at least 1");
  std::vector<EnsembleMember> out(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  auto run_one = [&](std::size_t i) {
    try {
      Rng rng(chain_seed(config.seed, i));
      out[i] = body(i, rng);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::max<std::size_t>(1, std::min(threads, config.chains));
  if (threads == 1) {
    for (std::size_t i = 0; i < config.chains; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < config.chains; i = next++) run_one(i);
      });
    }
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return out;
}

Ensemble synthesize(const Grammar& g, const LikelihoodModel& lik, const SynthConfig& config) {
  Ensemble ens;
  ens.members = run_chains(config, [&](std::size_t, Rng& rng) {
    auto init = initialize(g, lik, rng);
    Chain chain{std::move(init.program), init.loglik, 0, 0, rng};
    for (std::size_t step = 0; step < config.steps; ++step) {
      transition(chain, g, lik, config.schedule.filter_for_step(step, g));
    }
    EnsembleMember m;
    m.log_prior = prior_logdensity(g, chain.current);
    m.loglik = chain.current_loglik;
    m.steps = chain.steps_taken;
    m.accepts = chain.accepts;
    m.program = std::move(chain.current);
    return m;
  });
  ens.set_meta("seed", std::to_string(config.seed));
  ens.set_meta("chains", std::to_string(config.chains));
  ens.set_meta("steps", std::to_string(config.steps));
  ens.set_meta("schedule", config.schedule.to_string());
  ens.set_meta("grammar-hash", hex64(g.hash()));
  return ens;
}

}  // namespace bsynth
