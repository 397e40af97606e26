// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace bsynth {

// Every stochastic routine takes its engine explicitly; chains own one each.
using Rng = std::mt19937_64;

double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
std::size_t sample_categorical(Rng& rng, std::span<const double> weights);
std::size_t sample_log_categorical(Rng& rng, std::span<const double> log_weights);

double log_sum_exp(std::span<const double> xs);
double log_factorial(std::uint64_t n);

}  // namespace bsynth
