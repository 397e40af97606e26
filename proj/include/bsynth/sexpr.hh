// Apache License, Version 2.0, refer to LICENSE.txt

// Tagged s-expressions: the program representation shared by every DSL.
//
// An Expr is a phrase tag followed by an ordered mix of atoms (numbers or
// symbols) and child expressions, e.g. "(cp (gamma 5) (lin (gamma 1)) (wn
// (gamma 2)))". A list whose head is not a symbol, such as the column list
// "(1 2)" of a mixture block, is stored with an empty tag.
//
// Nodes are addressed by 1-based paths over child expressions; atoms are
// payloads and are never addressable.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bsynth {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct Symbol {
  std::string name;
  bool operator==(const Symbol&) const = default;
};

// Numbers are stored as doubles; integral values print without a decimal
// point, so "(cluster 6 ...)" round-trips unchanged.
using Atom = std::variant<double, Symbol>;

class Expr {
 public:
  Expr() = default;
  explicit Expr(std::string tag) : tag_(std::move(tag)) {}

  const std::string& tag() const { return tag_; }
  const std::vector<Expr>& children() const { return children_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t num_children() const { return children_.size(); }

  const Expr& child(std::size_t i) const { return children_.at(i); }
  Expr& mutable_child(std::size_t i) { return children_.at(i); }
  double number(std::size_t i) const;  // throws if atom i is not numeric

  Expr& add_child(Expr child);
  Expr& add_atom(Atom atom);
  Expr& add_number(double v) { return add_atom(Atom{v}); }
  Expr& add_symbol(std::string s) { return add_atom(Atom{Symbol{std::move(s)}}); }

  // True iff item `i` of the interleaved list is a child (false: an atom).
  const std::vector<bool>& layout() const { return is_child_; }

  bool operator==(const Expr& other) const = default;

  // Number of tagged nodes, i.e. |addresses(e)|.
  std::size_t node_count() const;

 private:
  std::string tag_;
  std::vector<Expr> children_;
  std::vector<Atom> atoms_;
  std::vector<bool> is_child_;
};

// Builders used heavily by tests and the DSL modules.
Expr make_expr(std::string tag, std::vector<Expr> children);
Expr make_leaf(std::string tag, std::vector<double> numbers);

Expr parse(std::string_view text);
// Parses every top-level expression in `text`.
std::vector<Expr> parse_all(std::string_view text);

std::string print(const Expr& e);
std::string format_number(double v);

using Address = std::vector<std::size_t>;
std::string format_address(const Address& a);

// All addresses of tagged nodes in pre-order; the root () comes first.
std::vector<Address> addresses(const Expr& e);

// The subtree at `a`, or nullopt when `a` does not name a node. The root
// address yields the whole expression.
std::optional<Expr> subexpr(const Expr& e, const Address& a);
const Expr* find_node(const Expr& e, const Address& a);

// Maps a phrase tag to the nonterminal that produces it.
using TagResolver = std::function<std::optional<std::string>(const std::string& tag)>;

inline constexpr std::string_view kHoleTag = "□";

// An expression in which exactly one node has been replaced by a hole.
struct ExprWithHole {
  Expr host;           // holds a placeholder node tagged kHoleTag at `at`
  Address at;
  std::string nonterminal;
};

struct Severed {
  std::string nonterminal;
  ExprWithHole hole;
};

// Removes the subtree at `a`. Fails when `a` is not an address of `e` or the
// subtree's tag is unknown to `resolve`.
std::optional<Severed> sever(const Expr& e, const Address& a, const TagResolver& resolve);

// Plugs `sub` into the hole. Throws std::invalid_argument when `sub` is not
// produced by the hole's nonterminal.
Expr fill(const ExprWithHole& h, Expr sub, const TagResolver& resolve);

}  // namespace bsynth
