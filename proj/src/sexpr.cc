// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/sexpr.hh"

#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace bsynth {

double Expr::number(std::size_t i) const {
  const auto* v = std::get_if<double>(&atoms_.at(i));
  if (v == nullptr) {
    throw std::invalid_argument("atom " + std::to_string(i) + " of (" + tag_ +
                                " ...) is not numeric");
  }
  return *v;
}

Expr& Expr::add_child(Expr child) {
  children_.push_back(std::move(child));
  is_child_.push_back(true);
  return *this;
}

Expr& Expr::add_atom(Atom atom) {
  atoms_.push_back(std::move(atom));
  is_child_.push_back(false);
  return *this;
}

std::size_t Expr::node_count() const {
  std::size_t n = 1;
  for (const auto& c : children_) n += c.node_count();
  return n;
}

Expr make_expr(std::string tag, std::vector<Expr> children) {
  Expr e(std::move(tag));
  for (auto& c : children) e.add_child(std::move(c));
  return e;
}

Expr make_leaf(std::string tag, std::vector<double> numbers) {
  Expr e(std::move(tag));
  for (double v : numbers) e.add_number(v);
  return e;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  std::size_t pos() const { return pos_; }

  Expr parse_list() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    if (text_[pos_] != '(') throw ParseError("expected '('", pos_);
    const std::size_t open = pos_;
    ++pos_;
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses", pos_);
    if (text_[pos_] == ')') throw ParseError("empty list", open);

    Expr e;
    if (text_[pos_] != '(') {
      Atom head = parse_atom();
      if (const auto* sym = std::get_if<Symbol>(&head)) {
        e = Expr(sym->name);
      } else {
        e.add_atom(std::move(head));
      }
    }
    while (true) {
      skip_space();
      if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses", pos_);
      const char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        return e;
      }
      if (c == '(') {
        e.add_child(parse_list());
      } else {
        e.add_atom(parse_atom());
      }
    }
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  static bool is_delim(char c) {
    return c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c));
  }

  static bool looks_numeric(std::string_view tok) {
    if (tok.empty()) return false;
    std::size_t i = 0;
    if (tok[0] == '-' || tok[0] == '+') {
      if (tok.size() == 1) return false;
      i = 1;
    }
    return std::isdigit(static_cast<unsigned char>(tok[i])) || tok[i] == '.';
  }

  Atom parse_atom() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_delim(text_[pos_])) ++pos_;
    std::string_view tok = text_.substr(start, pos_ - start);
    if (!looks_numeric(tok)) return Symbol{std::string(tok)};
    std::string_view digits = tok[0] == '+' ? tok.substr(1) : tok;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || !std::isfinite(v)) {
      throw ParseError("malformed numeric literal '" + std::string(tok) + "'", start);
    }
    return v;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void print_into(const Expr& e, std::string& out) {
  out.push_back('(');
  bool first = true;
  if (!e.tag().empty()) {
    out += e.tag();
    first = false;
  }
  std::size_t ci = 0, ai = 0;
  for (bool is_child : e.layout()) {
    if (!first) out.push_back(' ');
    first = false;
    if (is_child) {
      const Expr& c = e.children()[ci++];
      if (c.tag() == kHoleTag) {
        out += kHoleTag;
      } else {
        print_into(c, out);
      }
    } else {
      const Atom& a = e.atoms()[ai++];
      if (const auto* v = std::get_if<double>(&a)) {
        out += format_number(*v);
      } else {
        out += std::get<Symbol>(a).name;
      }
    }
  }
  out.push_back(')');
}

void collect(const Expr& e, Address& prefix, std::vector<Address>& out) {
  out.push_back(prefix);
  for (std::size_t i = 0; i < e.num_children(); ++i) {
    prefix.push_back(i + 1);
    collect(e.child(i), prefix, out);
    prefix.pop_back();
  }
}

Expr* find_mutable(Expr& e, const Address& a) {
  Expr* node = &e;
  for (std::size_t idx : a) {
    if (idx == 0 || idx > node->num_children()) return nullptr;
    node = &node->mutable_child(idx - 1);
  }
  return node;
}

}  // namespace

Expr parse(std::string_view text) {
  Parser p(text);
  Expr e = p.parse_list();
  if (!p.at_end()) throw ParseError("trailing input after expression", p.pos());
  return e;
}

std::vector<Expr> parse_all(std::string_view text) {
  Parser p(text);
  std::vector<Expr> out;
  while (!p.at_end()) out.push_back(p.parse_list());
  return out;
}

std::string print(const Expr& e) {
  std::string out;
  print_into(e, out);
  return out;
}

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

std::string format_address(const Address& a) {
  std::string out = "(";
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(a[i]);
  }
  return out + ")";
}

std::vector<Address> addresses(const Expr& e) {
  std::vector<Address> out;
  Address prefix;
  collect(e, prefix, out);
  return out;
}

const Expr* find_node(const Expr& e, const Address& a) {
  const Expr* node = &e;
  for (std::size_t idx : a) {
    if (idx == 0 || idx > node->num_children()) return nullptr;
    node = &node->child(idx - 1);
  }
  return node;
}

std::optional<Expr> subexpr(const Expr& e, const Address& a) {
  const Expr* node = find_node(e, a);
  if (node == nullptr) return std::nullopt;
  return *node;
}

std::optional<Severed> sever(const Expr& e, const Address& a, const TagResolver& resolve) {
  const Expr* node = find_node(e, a);
  if (node == nullptr) return std::nullopt;
  auto nt = resolve(node->tag());
  if (!nt) return std::nullopt;
  Severed out;
  out.nonterminal = *nt;
  out.hole.host = e;
  out.hole.at = a;
  out.hole.nonterminal = *nt;
  *find_mutable(out.hole.host, a) = Expr(std::string(kHoleTag));
  return out;
}

Expr fill(const ExprWithHole& h, Expr sub, const TagResolver& resolve) {
  auto nt = resolve(sub.tag());
  if (!nt || *nt != h.nonterminal) {
    throw std::invalid_argument("cannot fill a " + h.nonterminal + " hole with (" + sub.tag() +
                                " ...)");
  }
  Expr out = h.host;
  Expr* slot = find_mutable(out, h.at);
  if (slot == nullptr || slot->tag() != kHoleTag) {
    throw std::invalid_argument("hole address " + format_address(h.at) + " is not a hole");
  }
  *slot = std::move(sub);
  return out;
}

}  // namespace bsynth
