// Apache License, Version 2.0, refer to LICENSE.txt

// Emission of Venture-syntax program text for synthesized programs.

#pragma once

#include <cstdint>
#include <string>

#include "bsynth/mixture.hh"
#include "bsynth/sexpr.hh"

namespace bsynth {

struct VentureText {
  std::string text;
  std::uint64_t source_hash = 0;  // fnv1a of the printed source program
};

// The covariance function as a Venture lambda. Throws std::invalid_argument
// on tags outside the GP DSL.
std::string venture_cov(const Expr& kernel);

// "assume gp = gaussian_process(gp_mean_constant(0), <cov>);" plus newline.
VentureText gp_to_venture(const Expr& kernel);

// One categorical cluster assignment per block, then one cond per variable
// dispatching on that assignment. Statements are separated by blank lines.
VentureText mixture_to_venture(const mixture::MixtureProgram& p);

}  // namespace bsynth
