// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/queries.hh"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <memory>
#include <sstream>

#include "bsynth/gp.hh"

namespace bsynth::queries {
namespace {

std::size_t count_tag(const Expr& e, const std::string& tag) {
  std::size_t n = e.tag() == tag ? 1 : 0;
  for (const auto& c : e.children()) n += count_tag(c, tag);
  return n;
}

bool is_one_of(const std::string& s, const std::vector<std::string>& set) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

using Pred = std::function<bool(const Expr&)>;

class PropertyParser {
 public:
  explicit PropertyParser(const std::string& text) : text_(text) {}

  Pred parse() {
    Pred p = parse_or();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw PropertyParseError(what, pos_); }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  // Next token without consuming it: a word, a number, or punctuation.
  std::string peek() {
    skip_space();
    if (pos_ >= text_.size()) return {};
    const char c = text_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < text_.size() && std::isalnum(static_cast<unsigned char>(text_[end]))) ++end;
      return text_.substr(pos_, end - pos_);
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < text_.size() && std::isdigit(static_cast<unsigned char>(text_[end]))) ++end;
      return text_.substr(pos_, end - pos_);
    }
    if ((c == '>' || c == '<' || c == '=' || c == '!') && pos_ + 1 < text_.size() &&
        text_[pos_ + 1] == '=') {
      return text_.substr(pos_, 2);
    }
    return std::string(1, c);
  }

  std::string take() {
    std::string t = peek();
    pos_ += t.size();
    return t;
  }

  Pred parse_or() {
    Pred left = parse_and();
    while (peek() == "or") {
      take();
      Pred right = parse_and();
      left = [l = std::move(left), r = std::move(right)](const Expr& e) { return l(e) || r(e); };
    }
    return left;
  }

  Pred parse_and() {
    Pred left = parse_unary();
    while (peek() == "and") {
      take();
      Pred right = parse_unary();
      left = [l = std::move(left), r = std::move(right)](const Expr& e) { return l(e) && r(e); };
    }
    return left;
  }

  Pred parse_unary() {
    const std::string t = peek();
    if (t.empty()) fail("unexpected end of property");
    if (t == "not") {
      take();
      Pred inner = parse_unary();
      return [p = std::move(inner)](const Expr& e) { return !p(e); };
    }
    if (t == "(") {
      take();
      Pred inner = parse_or();
      if (peek() != ")") fail("expected ')'");
      take();
      return inner;
    }
    if (t == "true" || t == "false") {
      take();
      return [v = t == "true"](const Expr&) { return v; };
    }
    const bool kernel = is_one_of(t, gp::kBaseKernels);
    if (!kernel && !is_one_of(t, gp::kOperators)) fail("unknown name '" + t + "'");
    take();
    std::function<std::size_t(const Expr&)> count = [tag = t](const Expr& e) {
      return count_tag(e, tag);
    };
    const std::string op = peek();
    if (op != ">" && op != ">=" && op != "<" && op != "<=" && op != "==" && op != "!=") {
      return [count](const Expr& e) { return count(e) > 0; };
    }
    take();
    skip_space();
    const std::size_t num_at = pos_;
    const std::string num = take();
    if (num.empty() || !std::isdigit(static_cast<unsigned char>(num[0]))) {
      pos_ = num_at;
      fail("expected a non-negative integer");
    }
    const std::size_t k = std::stoull(num);
    return [count, op, k](const Expr& e) {
      const std::size_t c = count(e);
      if (op == ">") return c > k;
      if (op == ">=") return c >= k;
      if (op == "<") return c < k;
      if (op == "<=") return c <= k;
      if (op == "==") return c == k;
      return c != k;
    };
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

}  // namespace

std::size_t count_kernels(const Expr& e, const std::string& tag) {
  if (!is_one_of(tag, gp::kBaseKernels)) throw std::invalid_argument("unknown kernel '" + tag + "'");
  return count_tag(e, tag);
}

std::size_t count_operators(const Expr& e, const std::string& op) {
  if (!is_one_of(op, gp::kOperators)) throw std::invalid_argument("unknown operator '" + op + "'");
  return count_tag(e, op);
}

Property parse_property(const std::string& text) {
  return {trim(text), PropertyParser(text).parse()};
}

std::vector<Property> parse_property_file(const std::string& text) {
  std::vector<Property> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::string label, body = line;
    std::size_t offset = 0;
    if (const auto colon = line.find(':'); colon != std::string::npos) {
      label = trim(line.substr(0, colon));
      body = line.substr(colon + 1);
      offset = colon + 1;
    }
    try {
      Property p = parse_property(body);
      if (!label.empty()) p.name = label;
      out.push_back(std::move(p));
    } catch (const PropertyParseError& e) {
      throw PropertyParseError("line " + std::to_string(lineno) + ": " + e.what(),
                               offset + e.position());
    }
  }
  return out;
}

double estimate_property(const std::vector<Expr>& programs, const Property& p) {
  if (programs.empty()) throw std::invalid_argument("cannot estimate over an empty ensemble");
  std::size_t hits = 0;
  for (const auto& e : programs) hits += p.holds(e) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(programs.size());
}

double estimate_property(const Ensemble& ensemble, const Property& p) {
  std::vector<Expr> programs;
  programs.reserve(ensemble.members.size());
  for (const auto& m : ensemble.members) programs.push_back(m.program);
  return estimate_property(programs, p);
}

bool same_block(const Expr& program, std::size_t a, std::size_t b) {
  std::optional<std::size_t> block_a, block_b;
  for (std::size_t i = 0; i < program.num_children(); ++i) {
    const Expr& blk = program.child(i);
    if (blk.tag() != "block" || blk.num_children() == 0) continue;
    for (const auto& atom : blk.child(0).atoms()) {
      const double* v = std::get_if<double>(&atom);
      if (!v) continue;
      if (*v == static_cast<double>(a)) block_a = i;
      if (*v == static_cast<double>(b)) block_b = i;
    }
  }
  if (!block_a) throw std::invalid_argument("column " + std::to_string(a) + " is not in the program");
  if (!block_b) throw std::invalid_argument("column " + std::to_string(b) + " is not in the program");
  return *block_a == *block_b;
}

double mixture_same_block(const Ensemble& ensemble, std::size_t a, std::size_t b) {
  if (ensemble.members.empty()) throw std::invalid_argument("cannot estimate over an empty ensemble");
  std::size_t hits = 0;
  for (const auto& m : ensemble.members) hits += same_block(m.program, a, b) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ensemble.members.size());
}

std::string format_table(const std::vector<ReportRow>& rows, const std::string& name_header,
                         const std::string& value_header) {
  std::size_t width = name_header.size();
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  out << pad(name_header) << "  " << value_header << "\n";
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.probability);
    out << pad(r.name) << "  " << buf << "\n";
  }
  return out.str();
}

std::string format_key_value(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.name + "=" + format_number(r.probability) + "\n";
  return out;
}

}  // namespace bsynth::queries
