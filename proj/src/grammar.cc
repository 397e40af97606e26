// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/grammar.hh"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "bsynth/hash.hh"

namespace bsynth {

// ---------------------------------------------------------------------------
// Terminal distributions

Atom sample_terminal(const TerminalDist& d, Rng& rng) {
  if (const auto* disc = std::get_if<DiscreteDist>(&d)) {
    std::vector<double> w;
    w.reserve(disc->outcomes.size());
    for (const auto& [atom, p] : disc->outcomes) w.push_back(p);
    return disc->outcomes[sample_categorical(rng, w)].first;
  }
  const auto& g = std::get<GammaDensity>(d);
  std::gamma_distribution<double> dist(g.shape, 1.0 / g.rate);
  double v = dist(rng);
  while (v < g.floor) v = dist(rng);
  return v;
}

double terminal_logdensity(const TerminalDist& d, const Atom& a) {
  if (const auto* disc = std::get_if<DiscreteDist>(&d)) {
    for (const auto& [atom, p] : disc->outcomes) {
      if (atom == a) return std::log(p);
    }
    return kNegInf;
  }
  const auto& g = std::get<GammaDensity>(d);
  const auto* v = std::get_if<double>(&a);
  if (v == nullptr || !(*v > 0.0)) return kNegInf;
  return g.shape * std::log(g.rate) + (g.shape - 1.0) * std::log(*v) - g.rate * *v -
         std::lgamma(g.shape);
}

bool is_discrete(const TerminalDist& d) { return std::holds_alternative<DiscreteDist>(d); }

// ---------------------------------------------------------------------------
// Grammar

Grammar::Grammar(std::string start, std::vector<Rule> rules)
    : start_(std::move(start)), rules_(std::move(rules)) {
  auto note = [this](const std::string& nt) {
    if (std::find(nonterminals_.begin(), nonterminals_.end(), nt) == nonterminals_.end()) {
      nonterminals_.push_back(nt);
    }
  };
  note(start_);
  for (const auto& r : rules_) {
    note(r.lhs);
    for (const auto& c : r.rhs) note(c);
  }
}

const Rule* Grammar::rule_for_tag(const std::string& tag) const {
  for (const auto& r : rules_) {
    if (r.tag == tag) return &r;
  }
  return nullptr;
}

std::vector<const Rule*> Grammar::rules_for(const std::string& nonterminal) const {
  std::vector<const Rule*> out;
  for (const auto& r : rules_) {
    if (r.lhs == nonterminal) out.push_back(&r);
  }
  return out;
}

std::optional<std::string> Grammar::nonterminal_of(const std::string& tag) const {
  const Rule* r = rule_for_tag(tag);
  if (r == nullptr) return std::nullopt;
  return r->lhs;
}

TagResolver Grammar::resolver() const {
  return [this](const std::string& tag) { return nonterminal_of(tag); };
}

bool Grammar::is_parameter_nonterminal(const std::string& nonterminal) const {
  auto rs = rules_for(nonterminal);
  if (rs.empty()) return false;
  return std::all_of(rs.begin(), rs.end(), [](const Rule* r) { return r->rhs.empty(); });
}

namespace {

std::string format_atom(const Atom& a) {
  if (const auto* v = std::get_if<double>(&a)) return format_number(*v);
  return std::get<Symbol>(a).name;
}

}  // namespace

std::string Grammar::to_text() const {
  std::ostringstream out;
  out << "start " << start_ << "\n";
  for (const auto& r : rules_) {
    out << "rule " << r.lhs << " " << r.tag << " " << format_number(r.prob);
    for (const auto& c : r.rhs) out << " " << c;
    if (r.terminal) {
      out << " ~ ";
      if (const auto* disc = std::get_if<DiscreteDist>(&*r.terminal)) {
        out << "discrete";
        for (const auto& [atom, p] : disc->outcomes) {
          out << " " << format_atom(atom) << " " << format_number(p);
        }
      } else {
        const auto& g = std::get<GammaDensity>(*r.terminal);
        out << "gamma " << format_number(g.shape) << " " << format_number(g.rate);
        if (g.floor > 0.0) out << " floor " << format_number(g.floor);
      }
    }
    out << "\n";
  }
  return out.str();
}

std::uint64_t Grammar::hash() const { return fnv1a(to_text()); }

namespace {

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double parse_real(const std::string& s, std::size_t line) {
  try {
    Expr e = parse("(x " + s + ")");
    if (e.atoms().size() == 1 && std::holds_alternative<double>(e.atoms()[0])) {
      return std::get<double>(e.atoms()[0]);
    }
  } catch (const ParseError&) {
  }
  throw GrammarParseError("expected a number, got '" + s + "'", line);
}

Atom parse_outcome(const std::string& s) {
  Expr e = parse("(x " + s + ")");
  return e.atoms().at(0);
}

}  // namespace

Grammar parse_grammar(std::string_view text) {
  std::optional<std::string> start;
  std::vector<Rule> rules;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    auto words = split_words(raw);
    if (words.empty()) continue;
    if (words[0] == "start") {
      if (words.size() != 2) throw GrammarParseError("'start' takes one nonterminal", lineno);
      if (start) throw GrammarParseError("duplicate 'start'", lineno);
      start = words[1];
    } else if (words[0] == "rule") {
      if (words.size() < 4) {
        throw GrammarParseError("'rule' needs a nonterminal, tag and probability", lineno);
      }
      Rule r;
      r.lhs = words[1];
      r.tag = words[2];
      r.prob = parse_real(words[3], lineno);
      std::size_t i = 4;
      for (; i < words.size() && words[i] != "~"; ++i) r.rhs.push_back(words[i]);
      if (i < words.size()) {
        ++i;
        if (i >= words.size()) throw GrammarParseError("missing distribution after '~'", lineno);
        const std::string kind = words[i++];
        if (kind == "gamma") {
          if (words.size() - i != 2 && !(words.size() - i == 4 && words[i + 2] == "floor")) {
            throw GrammarParseError("gamma takes shape and rate [floor f]", lineno);
          }
          GammaDensity g{parse_real(words[i], lineno), parse_real(words[i + 1], lineno), 0.0};
          if (words.size() - i == 4) g.floor = parse_real(words[i + 3], lineno);
          r.terminal = g;
        } else if (kind == "discrete") {
          if ((words.size() - i) % 2 != 0 || words.size() == i) {
            throw GrammarParseError("discrete takes outcome/probability pairs", lineno);
          }
          DiscreteDist d;
          for (; i < words.size(); i += 2) {
            d.outcomes.emplace_back(parse_outcome(words[i]), parse_real(words[i + 1], lineno));
          }
          r.terminal = d;
        } else {
          throw GrammarParseError("unknown distribution '" + kind + "'", lineno);
        }
      }
      rules.push_back(std::move(r));
    } else {
      throw GrammarParseError("unknown directive '" + words[0] + "'", lineno);
    }
  }
  if (!start) throw GrammarParseError("missing 'start' directive", lineno);
  return Grammar(*start, std::move(rules));
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate(const Grammar& g) {
  ValidationReport report;
  auto flag = [&report](std::string msg) { report.violations.push_back(std::move(msg)); };

  std::set<std::string> defined;
  for (const auto& r : g.rules()) defined.insert(r.lhs);

  std::set<std::string> seen_tags;
  for (const auto& r : g.rules()) {
    if (r.tag.empty() || r.tag == kHoleTag ||
        r.tag.find_first_of("() \t\n") != std::string::npos) {
      flag("invalid tag '" + r.tag + "'");
    }
    if (!seen_tags.insert(r.tag).second) flag("duplicate tag " + r.tag);
    if (!(r.prob > 0.0 && r.prob <= 1.0)) {
      flag("P(" + r.tag + ") = " + format_number(r.prob) + " is outside (0, 1]");
    }
    if (r.terminal && !r.rhs.empty()) flag("rule " + r.tag + " has both children and a terminal");
    if (r.terminal) {
      if (const auto* d = std::get_if<DiscreteDist>(&*r.terminal)) {
        double s = 0.0;
        for (const auto& [atom, p] : d->outcomes) {
          if (!(p > 0.0)) flag("Q(" + r.tag + ") has a nonpositive probability");
          s += p;
        }
        if (std::abs(s - 1.0) > 1e-12) flag("Q for " + r.tag + " sums to " + format_number(s));
      } else {
        const auto& gd = std::get<GammaDensity>(*r.terminal);
        if (!(gd.shape > 0.0 && gd.rate > 0.0)) flag("Q for " + r.tag + " has invalid gamma parameters");
      }
    }
    for (const auto& c : r.rhs) {
      if (!defined.count(c)) flag("undefined nonterminal " + c + " in rule " + r.tag);
    }
  }

  for (const auto& nt : g.nonterminals()) {
    if (!defined.count(nt)) continue;
    double s = 0.0;
    for (const Rule* r : g.rules_for(nt)) s += r->prob;
    if (std::abs(s - 1.0) > 1e-12) flag("P for " + nt + " sums to " + format_number(s));
  }
  if (!defined.count(g.start())) flag("start symbol " + g.start() + " has no rules");

  // Reachability from the start symbol.
  std::set<std::string> reachable{g.start()};
  std::vector<std::string> stack{g.start()};
  while (!stack.empty()) {
    std::string nt = stack.back();
    stack.pop_back();
    for (const Rule* r : g.rules_for(nt)) {
      for (const auto& c : r->rhs) {
        if (reachable.insert(c).second) stack.push_back(c);
      }
    }
  }
  // Nonterminals with at least one finite derivation.
  std::set<std::string> productive;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& r : g.rules()) {
      if (productive.count(r.lhs)) continue;
      if (std::all_of(r.rhs.begin(), r.rhs.end(),
                      [&](const std::string& c) { return productive.count(c) > 0; })) {
        productive.insert(r.lhs);
        changed = true;
      }
    }
  }
  for (const auto& nt : g.nonterminals()) {
    if (!defined.count(nt)) continue;
    if (!reachable.count(nt)) flag("useless symbol " + nt + " (unreachable from " + g.start() + ")");
    if (!productive.count(nt)) flag("useless symbol " + nt + " (no terminating derivation)");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sampling and density

namespace {

Expr sample_rec(const Grammar& g, const std::string& nt, Rng& rng, std::size_t depth,
                const SampleOptions& opts, double& logp) {
  if (depth > opts.max_depth) {
    throw SamplingDepthExceeded("sampling exceeded depth " + std::to_string(opts.max_depth) +
                                "; the grammar is probably not consistent");
  }
  auto rules = g.rules_for(nt);
  if (rules.empty()) throw std::invalid_argument("nonterminal " + nt + " has no rules");
  std::vector<double> w;
  w.reserve(rules.size());
  for (const Rule* r : rules) w.push_back(r->prob);
  const Rule& rule = *rules[sample_categorical(rng, w)];
  logp += std::log(rule.prob);
  Expr e(rule.tag);
  if (rule.terminal) {
    Atom a = sample_terminal(*rule.terminal, rng);
    logp += terminal_logdensity(*rule.terminal, a);
    e.add_atom(std::move(a));
  }
  for (const auto& c : rule.rhs) e.add_child(sample_rec(g, c, rng, depth + 1, opts, logp));
  return e;
}

}  // namespace

Sampled sample_with_logp(const Grammar& g, const std::string& nonterminal, Rng& rng,
                         const SampleOptions& opts) {
  Sampled out;
  out.expr = sample_rec(g, nonterminal, rng, 0, opts, out.logp);
  return out;
}

Expr sample(const Grammar& g, const std::string& nonterminal, Rng& rng, const SampleOptions& opts) {
  return sample_with_logp(g, nonterminal, rng, opts).expr;
}

double expand_logdensity(const Grammar& g, const std::string& nonterminal, const Expr& e) {
  const Rule* rule = g.rule_for_tag(e.tag());
  if (rule == nullptr || rule->lhs != nonterminal) return kNegInf;
  if (e.num_children() != rule->rhs.size()) return kNegInf;
  double lp = std::log(rule->prob);
  if (rule->terminal) {
    if (e.atoms().size() != 1) return kNegInf;
    lp += terminal_logdensity(*rule->terminal, e.atoms()[0]);
  } else if (!e.atoms().empty()) {
    return kNegInf;
  }
  for (std::size_t i = 0; i < rule->rhs.size() && lp > kNegInf; ++i) {
    lp += expand_logdensity(g, rule->rhs[i], e.child(i));
  }
  return lp;
}

double prior_logdensity(const Grammar& g, const Expr& e) {
  return expand_logdensity(g, g.start(), e);
}

namespace {

using Language = std::vector<std::pair<Expr, double>>;

Language enumerate_rec(const Grammar& g, const std::string& nt, std::size_t depth,
                       std::size_t limit) {
  if (depth > 64) throw std::runtime_error("language of " + nt + " is not finite");
  Language out;
  for (const Rule* r : g.rules_for(nt)) {
    const double lp_rule = std::log(r->prob);
    if (r->terminal) {
      const auto* d = std::get_if<DiscreteDist>(&*r->terminal);
      if (d == nullptr) throw std::runtime_error("cannot enumerate continuous terminal " + r->tag);
      for (const auto& [atom, p] : d->outcomes) {
        Expr e(r->tag);
        e.add_atom(atom);
        out.emplace_back(std::move(e), lp_rule + std::log(p));
      }
      continue;
    }
    // Cross product over children, built left to right.
    Language partial{{Expr(r->tag), lp_rule}};
    for (const auto& c : r->rhs) {
      Language sub = enumerate_rec(g, c, depth + 1, limit);
      Language next;
      for (const auto& [prefix, lp] : partial) {
        for (const auto& [child, lc] : sub) {
          Expr e = prefix;
          e.add_child(child);
          next.emplace_back(std::move(e), lp + lc);
          if (next.size() > limit) throw std::runtime_error("language exceeds enumeration limit");
        }
      }
      partial = std::move(next);
    }
    for (auto& item : partial) out.push_back(std::move(item));
    if (out.size() > limit) throw std::runtime_error("language exceeds enumeration limit");
  }
  return out;
}

}  // namespace

std::vector<std::pair<Expr, double>> enumerate_language(const Grammar& g,
                                                        const std::string& nonterminal,
                                                        std::size_t limit) {
  return enumerate_rec(g, nonterminal, 0, limit);
}

std::vector<double> termination_mass_by_depth(const Grammar& g, const std::string& nonterminal,
                                              std::size_t max_depth) {
  const auto& nts = g.nonterminals();
  std::map<std::string, double> param_mass;
  for (const auto& nt : nts) {
    if (!g.is_parameter_nonterminal(nt)) continue;
    double s = 0.0;
    for (const Rule* r : g.rules_for(nt)) s += r->prob;
    param_mass[nt] = s;
  }
  auto lookup = [&](const std::map<std::string, double>& z, const std::string& nt) {
    if (auto it = param_mass.find(nt); it != param_mass.end()) return it->second;
    auto it = z.find(nt);
    return it == z.end() ? 0.0 : it->second;
  };

  std::map<std::string, double> z;  // depth 0: nothing has closed
  std::vector<double> out{lookup(z, nonterminal)};
  for (std::size_t d = 1; d <= max_depth; ++d) {
    std::map<std::string, double> next;
    for (const auto& nt : nts) {
      if (param_mass.count(nt)) continue;
      double s = 0.0;
      for (const Rule* r : g.rules_for(nt)) {
        double term = r->prob;
        for (const auto& c : r->rhs) term *= lookup(z, c);
        s += term;
      }
      next[nt] = s;
    }
    z = std::move(next);
    out.push_back(lookup(z, nonterminal));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expectation matrix and consistency

std::size_t ExpectationMatrix::index(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw std::out_of_range("no expectation-matrix row " + label);
  return static_cast<std::size_t>(it - labels.begin());
}

double ExpectationMatrix::at(const std::string& row, const std::string& col) const {
  return m(static_cast<Eigen::Index>(index(row)), static_cast<Eigen::Index>(index(col)));
}

namespace {

std::string sequence_label(const std::vector<std::string>& seq, std::size_t from) {
  std::string s = "<";
  for (std::size_t i = from; i < seq.size(); ++i) {
    if (i > from) s += " ";
    s += seq[i];
  }
  return s + ">";
}

}  // namespace

ExpectationMatrix expectation_matrix(const Grammar& g) {
  // (lhs, rhs symbols, probability) over the normal-form grammar.
  struct Production {
    std::string lhs;
    std::vector<std::string> rhs;
    double prob;
  };
  std::vector<std::string> labels;
  auto add_label = [&labels](const std::string& s) {
    if (std::find(labels.begin(), labels.end(), s) == labels.end()) labels.push_back(s);
  };
  for (const auto& nt : g.nonterminals()) add_label(nt);

  std::vector<Production> prods;
  std::set<std::string> fresh_done;
  std::vector<std::string> preterminals;
  std::vector<std::string> fresh_order;
  for (const auto& r : g.rules()) {
    if (r.rhs.empty()) continue;  // N -> t: no nonterminal on the right
    const std::string pre = "[" + r.tag + "]";
    preterminals.push_back(pre);
    if (r.rhs.size() == 1) {
      prods.push_back({r.lhs, {pre, r.rhs[0]}, r.prob});
      continue;
    }
    prods.push_back({r.lhs, {pre, sequence_label(r.rhs, 0)}, r.prob});
    for (std::size_t i = 0; i + 1 < r.rhs.size(); ++i) {
      const std::string lhs = sequence_label(r.rhs, i);
      if (!fresh_done.insert(lhs).second) break;  // suffixes already emitted
      fresh_order.push_back(lhs);
      const std::string tail = i + 2 == r.rhs.size() ? r.rhs[i + 1] : sequence_label(r.rhs, i + 1);
      prods.push_back({lhs, {r.rhs[i], tail}, 1.0});
    }
  }
  for (const auto& p : preterminals) add_label(p);
  for (const auto& f : fresh_order) add_label(f);

  ExpectationMatrix out;
  out.labels = labels;
  const auto n = static_cast<Eigen::Index>(labels.size());
  out.m = Eigen::MatrixXd::Zero(n, n);
  for (const auto& p : prods) {
    const auto i = static_cast<Eigen::Index>(out.index(p.lhs));
    for (const auto& s : p.rhs) out.m(i, static_cast<Eigen::Index>(out.index(s))) += p.prob;
  }
  return out;
}

namespace {

// Tarjan's algorithm over the support graph of a square matrix.
std::vector<std::vector<Eigen::Index>> strongly_connected_components(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  std::vector<Eigen::Index> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<Eigen::Index> stack;
  std::vector<std::vector<Eigen::Index>> comps;
  Eigen::Index counter = 0;
  std::function<void(Eigen::Index)> visit = [&](Eigen::Index v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (Eigen::Index w = 0; w < n; ++w) {
      if (m(v, w) == 0.0) continue;
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<Eigen::Index> comp;
      Eigen::Index w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      comps.push_back(std::move(comp));
    }
  };
  for (Eigen::Index v = 0; v < n; ++v) {
    if (index[v] < 0) visit(v);
  }
  return comps;
}

}  // namespace

ConsistencyReport check_consistency(const Grammar& g) {
  const ExpectationMatrix em = expectation_matrix(g);
  ConsistencyReport report;
  // The spectrum of a matrix permuted to block-triangular form is the union
  // of its diagonal blocks' spectra; acyclic singletons contribute zero.
  for (const auto& comp : strongly_connected_components(em.m)) {
    const auto k = static_cast<Eigen::Index>(comp.size());
    if (k == 1 && em.m(comp[0], comp[0]) == 0.0) continue;
    Eigen::MatrixXd block(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) block(i, j) = em.m(comp[i], comp[j]);
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(block, /*computeEigenvectors=*/false);
    for (Eigen::Index i = 0; i < k; ++i) report.eigenvalues.push_back(solver.eigenvalues()(i));
  }
  std::stable_sort(report.eigenvalues.begin(), report.eigenvalues.end(),
                   [](const auto& a, const auto& b) { return std::abs(a) > std::abs(b); });
  report.spectral_radius = report.eigenvalues.empty() ? 0.0 : std::abs(report.eigenvalues.front());
  report.consistent = report.spectral_radius < 1.0;
  return report;
}

}  // namespace bsynth
