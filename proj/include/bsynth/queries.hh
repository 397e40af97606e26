// Apache License, Version 2.0, refer to LICENSE.txt

// Static queries over synthesized programs and ensemble averages of them.
//
// The property language used on the command line:
//
//   expr  ::= conj ("or" conj)*
//   conj  ::= unary ("and" unary)*
//   unary ::= "not" unary | "(" expr ")" | "true" | "false"
//           | name [cmp integer]
//   name  ::= const | wn | lin | se | per | + | * | cp
//   cmp   ::= > | >= | < | <= | == | !=
//
// A bare name means "name > 0", so "per or cp" asks for periodic or
// change-point structure.

#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsynth/sexpr.hh"
#include "bsynth/synthesis.hh"

namespace bsynth::queries {

// Leaf base-kernel nodes tagged `tag`. Throws std::invalid_argument for a tag
// outside {const, wn, lin, se, per}.
std::size_t count_kernels(const Expr& e, const std::string& tag);
// Internal nodes tagged `op`, one of {+, *, cp}.
std::size_t count_operators(const Expr& e, const std::string& op);

struct Property {
  std::string name;
  std::function<bool(const Expr&)> holds;
};

class PropertyParseError : public std::invalid_argument {
 public:
  PropertyParseError(const std::string& what, std::size_t position)
      : std::invalid_argument(what + " at column " + std::to_string(position + 1)),
        position_(position) {}
  std::size_t position() const { return position_; }  // 0-based

 private:
  std::size_t position_;
};

// The property's name is its trimmed source text.
Property parse_property(const std::string& text);

// One property per line, optionally labelled "label: expr". Blank lines and
// lines starting with '#' are skipped. Errors carry the line number.
std::vector<Property> parse_property_file(const std::string& text);

// Fraction of programs satisfying p. Throws std::invalid_argument if empty.
double estimate_property(const std::vector<Expr>& programs, const Property& p);
double estimate_property(const Ensemble& ensemble, const Property& p);

// True iff the mixture program places 1-based columns a and b in one block.
// Throws std::invalid_argument when either column is absent.
bool same_block(const Expr& mixture_program, std::size_t a, std::size_t b);
double mixture_same_block(const Ensemble& ensemble, std::size_t a, std::size_t b);

inline constexpr double kDependenceThreshold = 0.8;

struct ReportRow {
  std::string name;
  double probability = 0.0;
};

// Two aligned columns under the given header.
std::string format_table(const std::vector<ReportRow>& rows, const std::string& name_header,
                         const std::string& value_header = "probability");
// One "name=probability" line per row.
std::string format_key_value(const std::vector<ReportRow>& rows);

}  // namespace bsynth::queries
