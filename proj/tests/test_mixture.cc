// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <numbers>

#include "bsynth/mixture.hh"
#include "examples.hh"

namespace bsynth::mixture {
namespace {

using testing::example_schema;
using testing::kExampleProgram;

MixtureProgram example() { return from_expr(parse(kExampleProgram), example_schema(), 10); }

double normal_pdf(double x, double mu, double sd) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd)) / (std::sqrt(2 * std::numbers::pi) * sd);
}

Table missing_table(const TableSchema& schema, std::size_t n) {
  Table t{schema, {}};
  for (std::size_t c = 0; c < schema.size(); ++c) t.columns.emplace_back(n, kMissing);
  return t;
}

// Structure key: per block, its columns and cluster weights.
std::string structure(const MixtureProgram& p) {
  std::string s;
  for (const auto& b : p.blocks) {
    s += "[";
    for (auto c : b.columns) s += std::to_string(c) + " ";
    s += "|";
    for (const auto& cl : b.clusters) s += " " + std::to_string(cl.weight);
    s += "]";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Brute-force posterior over structures for nominal tables, with every
// categorical parameter integrated out against its Dirichlet(1) prior.

void set_partitions(std::size_t m, std::vector<std::vector<std::size_t>>& cur,
                    std::size_t next, const std::function<void()>& visit) {
  if (next > m) {
    visit();
    return;
  }
  for (std::size_t b = 0; b < cur.size(); ++b) {
    cur[b].push_back(next);
    set_partitions(m, cur, next + 1, visit);
    cur[b].pop_back();
  }
  cur.push_back({next});
  set_partitions(m, cur, next + 1, visit);
  cur.pop_back();
}

void compositions(std::uint64_t n, std::vector<std::uint64_t>& cur,
                  const std::function<void()>& visit) {
  if (n == 0) {
    visit();
    return;
  }
  for (std::uint64_t s = 1; s <= n; ++s) {
    cur.push_back(s);
    compositions(n - s, cur, visit);
    cur.pop_back();
  }
}

double lfact(double k) { return std::lgamma(k + 1); }

// E[prod_x w_x^{c_x}] under Dirichlet(1,...,1) of dimension q.
double dirichlet_moment(const std::vector<int>& counts) {
  const double q = static_cast<double>(counts.size());
  double total = 0, lp = std::lgamma(q);
  for (int c : counts) {
    lp += std::lgamma(1.0 + c);
    total += c;
  }
  return std::exp(lp - std::lgamma(q + total));
}

double block_marginal(const Table& t, const std::vector<std::size_t>& cols,
                      const std::vector<std::uint64_t>& weights) {
  const std::size_t n = t.rows(), k = weights.size();
  std::vector<std::size_t> z(n, 0);
  double total = 0.0;
  for (;;) {
    double p = 1.0;
    for (std::size_t r = 0; r < n; ++r) p *= double(weights[z[r]]) / double(n);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t c : cols) {
        std::vector<int> counts(t.schema.columns[c - 1].arity, 0);
        for (std::size_t r = 0; r < n; ++r) {
          if (z[r] == j && !is_missing(t.at(r, c))) ++counts[std::size_t(t.at(r, c)) - 1];
        }
        p *= dirichlet_moment(counts);
      }
    }
    total += p;
    std::size_t i = 0;
    while (i < n && ++z[i] == k) z[i++] = 0;
    if (i == n) break;
  }
  return total;
}

std::map<std::string, double> exact_structure_posterior(const Table& t) {
  const std::size_t m = t.schema.size();
  const std::uint64_t n = t.rows();
  std::map<std::string, double> post;
  std::vector<std::vector<std::size_t>> parts;
  set_partitions(m, parts, 1, [&] {
    // Enumerate a composition for each block in turn.
    std::vector<std::vector<std::uint64_t>> chosen(parts.size());
    std::function<void(std::size_t)> rec = [&](std::size_t b) {
      if (b == parts.size()) {
        MixtureProgram p;
        double w = -lfact(double(m));
        double lik = 1.0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
          Block blk;
          blk.columns = parts[i];
          w += lfact(double(parts[i].size()) - 1) - lfact(double(n));
          for (auto s : chosen[i]) {
            blk.clusters.push_back(
                {s, std::vector<Dist>(parts[i].size(), CategoricalDist{{1.0}})});
            w += lfact(double(s) - 1);
          }
          lik *= block_marginal(t, parts[i], chosen[i]);
          p.blocks.push_back(blk);
        }
        canonicalize(p);
        post[structure(p)] += std::exp(w) * lik;
        return;
      }
      std::vector<std::uint64_t> cur;
      compositions(n, cur, [&] {
        chosen[b] = cur;
        rec(b + 1);
      });
    };
    rec(0);
  });
  double z = 0.0;
  for (auto& [k, v] : post) z += v;
  for (auto& [k, v] : post) v /= z;
  return post;
}

std::map<std::string, double> chain_structure_frequencies(const Table& t, std::size_t steps,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  MixtureState st(initial_program(t.schema, t.rows(), rng), t);
  std::map<std::string, double> freq;
  for (std::size_t i = 0; i < steps; ++i) {
    st.mutate(rng);
    freq[structure(st.program())] += 1.0 / double(steps);
  }
  return freq;
}

double total_variation(const std::map<std::string, double>& a,
                       const std::map<std::string, double>& b) {
  std::map<std::string, double> all = a;
  for (const auto& [k, v] : b) all[k] += 0.0;
  double tv = 0.0;
  for (const auto& [k, v] : all) {
    auto ia = a.find(k);
    auto ib = b.find(k);
    tv += std::abs((ia == a.end() ? 0.0 : ia->second) - (ib == b.end() ? 0.0 : ib->second));
  }
  return 0.5 * tv;
}

TEST(Program, ExampleRoundTrips) {
  const auto p = example();
  EXPECT_EQ(p.blocks.size(), 2u);
  EXPECT_EQ(print(to_expr(p)), print(parse(kExampleProgram)));
  EXPECT_EQ(from_expr(to_expr(p), example_schema(), 10), p);
}

TEST(Program, CanonicalizesOrder) {
  const auto p = from_expr(
      parse("(partition (block (3 2) (cluster 10 (var 3 (poisson 2)) (var 2 (normal 0 1))))"
            " (block (1) (cluster 10 (var 1 (normal 1 1)))))"),
      example_schema(), 10);
  EXPECT_EQ(print(to_expr(p)),
            "(partition (block (1) (cluster 10 (var 1 (normal 1 1)))) (block (2 3) (cluster 10 "
            "(var 2 (normal 0 1)) (var 3 (poisson 2)))))");
}

TEST(Program, RejectsInvalid) {
  const auto s = example_schema();
  auto bad = [&](const char* text) {
    EXPECT_THROW(from_expr(parse(text), s, 10), MixtureError) << text;
  };
  // weights not summing to n
  bad("(partition (block (1 2 3) (cluster 9 (var 1 (normal 0 1)) (var 2 (normal 0 1)) (var 3 (poisson 1)))))");
  // column missing from the partition
  bad("(partition (block (1 2) (cluster 10 (var 1 (normal 0 1)) (var 2 (normal 0 1)))))");
  // column in two blocks
  bad("(partition (block (1 2 3) (cluster 10 (var 1 (normal 0 1)) (var 2 (normal 0 1)) (var 3 (poisson 1))))"
      " (block (1) (cluster 10 (var 1 (normal 0 1)))))");
  // type mismatch
  bad("(partition (block (1 2 3) (cluster 10 (var 1 (normal 0 1)) (var 2 (normal 0 1)) (var 3 (normal 1 1)))))");
  // nonpositive deviation
  bad("(partition (block (1 2 3) (cluster 10 (var 1 (normal 0 0)) (var 2 (normal 0 1)) (var 3 (poisson 1)))))");
  // var order differs from block order
  bad("(partition (block (1 2 3) (cluster 10 (var 2 (normal 0 1)) (var 1 (normal 0 1)) (var 3 (poisson 1)))))");
  bad("(block (1) (cluster 10 (var 1 (normal 0 1))))");
}

TEST(Schema, ParseAndPrint) {
  const auto s = TableSchema::parse("x:numeric,n:count,c:nominal:3");
  EXPECT_EQ(s.to_string(), "x:numeric,n:count,c:nominal:3");
  EXPECT_EQ(s.find("c"), 3u);
  EXPECT_FALSE(s.find("zz").has_value());
  EXPECT_THROW(TableSchema::parse("x:numeric,x:count"), MixtureError);
  EXPECT_THROW(TableSchema::parse("x:nominal:1"), MixtureError);
  EXPECT_THROW(TableSchema::parse("x:weird"), MixtureError);
}

TEST(Likelihood, SingleRowFixture) {
  const auto p = example();
  const Row row = {0.6, kMissing, kMissing};
  const double oracle = 0.6 * normal_pdf(0.6, 0.6, 2.1) + 0.4 * normal_pdf(0.6, 0.3, 1.7);
  EXPECT_NEAR(oracle, 0.206, 1e-3);
  EXPECT_NEAR(mixture_logpdf(p, row), std::log(oracle), 1e-12);
  EXPECT_NEAR(mixture_logpdf(p, row), -1.578, 1e-3);

  Table t = missing_table(example_schema(), 1);
  t.columns[0][0] = 0.6;
  EXPECT_EQ(mixture_logpdf(p, row), mixture_loglik(p, t));
}

TEST(Likelihood, EmptyRowHasUnitProbability) {
  EXPECT_NEAR(mixture_logpdf(example(), {kMissing, kMissing, kMissing}), 0.0, 1e-15);
  EXPECT_NEAR(mixture_logpdf(example(), {}), 0.0, 1e-15);
}

TEST(Likelihood, FullRowByHand) {
  const Row row = {1.0, 2.0, 3.0};
  const double b1 = 0.6 * normal_pdf(1, 0.6, 2.1) + 0.4 * normal_pdf(1, 0.3, 1.7);
  auto pois = [](double x, double r) { return std::exp(x * std::log(r) - r - std::lgamma(x + 1)); };
  const double b2 = 0.2 * normal_pdf(2, 7.6, 1.9) * pois(3, 12) +
                    0.3 * normal_pdf(2, 1.1, 0.5) * pois(3, 1) +
                    0.5 * normal_pdf(2, -0.6, 2.9) * pois(3, 4);
  EXPECT_NEAR(mixture_logpdf(example(), row), std::log(b1) + std::log(b2), 1e-12);
}

TEST(Likelihood, BlockAdditivity) {
  Rng rng(3);
  Table t = missing_table(example_schema(), 10);
  for (std::size_t r = 0; r < 10; ++r) {
    t.columns[0][r] = std::normal_distribution<double>(0, 2)(rng);
    t.columns[1][r] = std::normal_distribution<double>(1, 2)(rng);
    t.columns[2][r] = double(std::poisson_distribution<int>(3)(rng));
  }
  auto p = example();
  const double b1 = block_loglik(p.blocks[0], t);
  EXPECT_NEAR(mixture_loglik(p, t), b1 + block_loglik(p.blocks[1], t), 1e-12);
  std::get<NormalDist>(p.blocks[1].clusters[0].dists[0]).mean = 42.0;
  EXPECT_EQ(block_loglik(p.blocks[0], t), b1);
}

TEST(Prior, SingleColumnSingleCluster) {
  const TableSchema s{{{"x", ColumnType::kCount, 0}}};
  const auto p = from_expr(parse("(partition (block (1) (cluster 7 (var 1 (poisson 2.5)))))"), s, 7);
  const double prior_d = -2.5;  // gamma(1, 1) density at 2.5
  EXPECT_NEAR(mixture_prior_logdensity(p, 7), prior_d + std::log(720.0) - std::log(5040.0), 1e-12);
}

TEST(Prior, ExampleIsFiniteAndNegative) {
  const double lp = mixture_prior_logdensity(example(), 10);
  EXPECT_TRUE(std::isfinite(lp));
  EXPECT_LT(lp, 0.0);
}

TEST(Prior, ClusterPermutationInvariant) {
  auto p = example();
  const double before = mixture_prior_logdensity(p, 10);
  std::swap(p.blocks[1].clusters[0], p.blocks[1].clusters[2]);
  EXPECT_NEAR(mixture_prior_logdensity(p, 10), before, 1e-12);
}

TEST(Prior, DistributionDensities) {
  // Normal-inverse-gamma with unit constants at (v, y) = (0.5, 2).
  const double y2 = 4.0;
  const double nig = std::sqrt(1 / (y2 * 2 * std::numbers::pi)) * std::pow(1 / y2, 2) *
                     std::exp(-(2 + 0.25) / (2 * y2));
  EXPECT_NEAR(dist_prior_logdensity(NormalDist{0.5, 2.0}), std::log(nig), 1e-12);
  // Flat Dirichlet over three categories: density 2! = 2.
  EXPECT_NEAR(dist_prior_logdensity(CategoricalDist{{0.2, 0.3, 0.5}}), std::log(2.0), 1e-12);
  EXPECT_NEAR(dist_prior_logdensity(PoissonDist{3.0}), -3.0, 1e-12);
}

TEST(Proposal, NumericDensityIntegratesToOne) {
  const TableSchema s{{{"x", ColumnType::kNumeric, 0}}};
  Table t{s, {{150.0, 160.0, 185.0, kMissing, 190.0}}};
  const DistProposal q(t);
  // Integrate over (mean, log sd) with the Jacobian sd.
  double total = 0.0, below = 0.0;
  const double dv = 0.1, du = 0.04;
  for (double u = -12; u < 8; u += du) {
    const double sd = std::exp(u);
    for (double v = -400; v < 600; v += dv) {
      const double mass = std::exp(q.logdensity(1, NormalDist{v, sd})) * sd * dv * du;
      total += mass;
      if (v < 170) below += mass;
    }
  }
  // The prior half has Student-t tails in the mean; the window loses ~1e-3.
  EXPECT_NEAR(total, 1.0, 5e-3);
  Rng rng(14);
  const int draws = 100'000;
  int hits = 0;
  for (int i = 0; i < draws; ++i) hits += std::get<NormalDist>(q.sample(1, rng)).mean < 170;
  EXPECT_NEAR(double(hits) / draws, below / total, 0.01);
}

TEST(Proposal, CountDensityIntegratesToOne) {
  const TableSchema s{{{"n", ColumnType::kCount, 0}}};
  Table t{s, {{0.0, 3.0, 40.0}}};
  const DistProposal q(t);
  double total = 0.0, below = 0.0;
  for (double u = -25; u < 6; u += 1e-3) {
    const double r = std::exp(u);
    const double mass = std::exp(q.logdensity(1, PoissonDist{r})) * r * 1e-3;
    total += mass;
    if (r < 10) below += mass;
  }
  EXPECT_NEAR(total, 1.0, 1e-3);
  Rng rng(15);
  int hits = 0;
  for (int i = 0; i < 100'000; ++i) hits += std::get<PoissonDist>(q.sample(1, rng)).rate < 10;
  EXPECT_NEAR(hits / 1e5, below / total, 0.01);
}

TEST(Proposal, FallsBackToPriorWithoutData) {
  const TableSchema s{{{"x", ColumnType::kNumeric, 0}, {"c", ColumnType::kNominal, 3}}};
  const Table t = missing_table(s, 4);
  const DistProposal q(t);
  const Dist d = NormalDist{0.3, 1.4};
  EXPECT_EQ(q.logdensity(1, d), dist_proposal_logdensity(d));
  const Dist w = CategoricalDist{{0.2, 0.3, 0.5}};
  EXPECT_EQ(q.logdensity(2, w), dist_proposal_logdensity(w));
}

TEST(Simulate, MarginalMeans) {
  const auto p = example();
  Rng rng(5);
  const std::size_t n = 100'000;
  const auto rows = mixture_simulate(p, example_schema(), {}, n, rng);
  const double mean1 = 0.6 * 0.6 + 0.4 * 0.3;
  const double mean2 = 0.2 * 7.6 + 0.3 * 1.1 + 0.5 * -0.6;
  const double mean3 = 0.2 * 12 + 0.3 * 1 + 0.5 * 4;
  const double var1 = 0.6 * (2.1 * 2.1 + 0.36) + 0.4 * (1.7 * 1.7 + 0.09) - mean1 * mean1;
  const double var2 = 0.2 * (1.9 * 1.9 + 7.6 * 7.6) + 0.3 * (0.25 + 1.21) + 0.5 * (2.9 * 2.9 + 0.36) -
                      mean2 * mean2;
  const double var3 = 0.2 * (12 + 144) + 0.3 * (1 + 1) + 0.5 * (4 + 16) - mean3 * mean3;
  double s1 = 0, s2 = 0, s3 = 0;
  for (const auto& r : rows) {
    s1 += r[0] / n;
    s2 += r[1] / n;
    s3 += r[2] / n;
  }
  EXPECT_NEAR(s1, mean1, 3 * std::sqrt(var1 / n));
  EXPECT_NEAR(s2, mean2, 3 * std::sqrt(var2 / n));
  EXPECT_NEAR(s3, mean3, 3 * std::sqrt(var3 / n));
}

TEST(Simulate, ConditioningSelectsCluster) {
  const auto p = example();
  const auto post = cluster_posterior(p.blocks[1], {kMissing, kMissing, 20.0});
  auto pois = [](double x, double r) { return std::exp(x * std::log(r) - r - std::lgamma(x + 1)); };
  const double w[3] = {0.2 * pois(20, 12), 0.3 * pois(20, 1), 0.5 * pois(20, 4)};
  const double z = w[0] + w[1] + w[2];
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(post[j], w[j] / z, 1e-12);
  EXPECT_GT(post[0], 0.99);

  Rng rng(6);
  const auto rows = mixture_simulate(p, example_schema(), {kMissing, kMissing, 20.0}, 20'000, rng);
  double m2 = 0;
  for (const auto& r : rows) {
    EXPECT_EQ(r[2], 20.0);
    m2 += r[1] / rows.size();
  }
  const double expect = (w[0] * 7.6 + w[1] * 1.1 + w[2] * -0.6) / z;
  EXPECT_NEAR(m2, expect, 0.05);
}

TEST(Simulate, DegeneratePosterior) {
  const TableSchema s{{{"c", ColumnType::kNominal, 2}, {"x", ColumnType::kNumeric, 0}}};
  const auto p = from_expr(
      parse("(partition (block (1 2) (cluster 1 (var 1 (categorical 0.5 0.5)) (var 2 (normal 0 1)))"
            " (cluster 1 (var 1 (categorical 0.5 0.5)) (var 2 (normal 100 1)))))"),
      s, 2);
  const auto post = cluster_posterior(p.blocks[0], {kMissing, 100.0});
  EXPECT_NEAR(post[1], 1.0, 1e-12);
  EXPECT_THROW(cluster_posterior(p.blocks[0], {3.0, kMissing}), MixtureError);
}

TEST(Simulate, NominalFrequenciesMatchMarginal) {
  const TableSchema s{{{"c", ColumnType::kNominal, 3}}};
  const auto p = from_expr(parse("(partition (block (1) (cluster 3 (var 1 (categorical 0.7 0.2 0.1)))"
                                 " (cluster 1 (var 1 (categorical 0.1 0.1 0.8)))))"),
                           s, 4);
  Rng rng(7);
  const std::size_t n = 50'000;
  std::vector<double> freq(3, 0.0);
  for (const auto& r : mixture_simulate(p, s, {}, n, rng)) freq[std::size_t(r[0]) - 1] += 1.0 / n;
  const double marg[3] = {0.75 * 0.7 + 0.25 * 0.1, 0.75 * 0.2 + 0.25 * 0.1, 0.75 * 0.1 + 0.25 * 0.8};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(freq[i], marg[i], 3 * std::sqrt(marg[i] * (1 - marg[i]) / n));
    EXPECT_NEAR(std::exp(mixture_logpdf(p, {double(i + 1)})), marg[i], 1e-12);
  }
}

TEST(Mutate, InvariantsHoldAndCacheIsExact) {
  Rng rng(8);
  const TableSchema s{{{"a", ColumnType::kNumeric, 0},
                       {"b", ColumnType::kCount, 0},
                       {"c", ColumnType::kNominal, 3},
                       {"d", ColumnType::kNumeric, 0}}};
  Table t = missing_table(s, 25);
  for (std::size_t r = 0; r < 25; ++r) {
    t.columns[0][r] = std::normal_distribution<double>(0, 1)(rng);
    t.columns[1][r] = double(std::poisson_distribution<int>(2)(rng));
    if (r % 5) t.columns[2][r] = double(1 + r % 3);
    t.columns[3][r] = t.columns[0][r] + std::normal_distribution<double>(0, 0.1)(rng);
  }
  MixtureState st(initial_program(s, 25, rng), t);
  MoveStats stats;
  for (int i = 0; i < 10'000; ++i) {
    st.mutate(rng, &stats);
    if (i % 97 == 0) {
      ASSERT_NO_THROW(validate(st.program(), s, 25));
      EXPECT_NEAR(st.loglik(), mixture_loglik(st.program(), t), 1e-9);
      EXPECT_NEAR(st.log_prior(), mixture_prior_logdensity(st.program(), 25), 1e-9);
    }
  }
  ASSERT_NO_THROW(validate(st.program(), s, 25));
  for (std::size_t k = 0; k < kMoveKinds; ++k) {
    EXPECT_GT(stats.proposed[k], 0u) << move_name(static_cast<MoveKind>(k));
    EXPECT_GT(stats.accepted[k], 0u) << move_name(static_cast<MoveKind>(k));
  }
}

TEST(Mutate, SingleColumnKeepsOneBlock) {
  const TableSchema s{{{"x", ColumnType::kNumeric, 0}}};
  Table t = missing_table(s, 5);
  for (std::size_t r = 0; r < 5; ++r) t.columns[0][r] = double(r);
  Rng rng(9);
  MixtureState st(initial_program(s, 5, rng), t);
  for (int i = 0; i < 2000; ++i) {
    st.mutate(rng);
    ASSERT_EQ(st.program().blocks.size(), 1u);
  }
}

TEST(Oracle, TwoRowsOneNominalColumn) {
  const TableSchema s{{{"c", ColumnType::kNominal, 2}}};
  Table t{s, {{1.0, 2.0}}};
  const auto exact = exact_structure_posterior(t);
  EXPECT_NEAR(exact.at("[1 | 2]"), 4.0 / 9.0, 1e-12);
  const auto freq = chain_structure_frequencies(t, 300'000, 10);
  EXPECT_LT(total_variation(exact, freq), 0.02);
}

TEST(Oracle, TwoNominalColumnsThreeRows) {
  const TableSchema s{{{"a", ColumnType::kNominal, 2}, {"b", ColumnType::kNominal, 2}}};
  Table t{s, {{1.0, 1.0, 2.0}, {1.0, 1.0, 2.0}}};
  const auto exact = exact_structure_posterior(t);
  const auto freq = chain_structure_frequencies(t, 600'000, 11);
  EXPECT_LT(total_variation(exact, freq), 0.02);
}

TEST(Oracle, ThreeNominalColumnsWithMissing) {
  const TableSchema s{{{"a", ColumnType::kNominal, 2},
                       {"b", ColumnType::kNominal, 3},
                       {"c", ColumnType::kNominal, 2}}};
  Table t{s, {{1.0, 1.0, 2.0}, {1.0, kMissing, 3.0}, {2.0, 1.0, 1.0}}};
  const auto exact = exact_structure_posterior(t);
  const auto freq = chain_structure_frequencies(t, 1'000'000, 16);
  EXPECT_LT(total_variation(exact, freq), 0.02);
}

TEST(Oracle, MissingDataRecoversStructurePrior) {
  // With no observed cells the chain targets the prior. Each normal's
  // density integrates to E[1 / (2 sd)] = Gamma(3/2) / 2 under the sampler,
  // so a structure with d normals carries an extra factor of that to the d.
  const double c = std::tgamma(1.5) / 2;
  const TableSchema s{{{"x", ColumnType::kNumeric, 0}}};
  const Table t = missing_table(s, 3);
  std::map<std::string, double> exact = {{"[1 | 3]", 2.0 * c / 6},
                                         {"[1 | 1 2]", c * c / 6},
                                         {"[1 | 2 1]", c * c / 6},
                                         {"[1 | 1 1 1]", c * c * c / 6}};
  double z = 0;
  for (auto& [k, v] : exact) z += v;
  for (auto& [k, v] : exact) v /= z;
  const auto freq = chain_structure_frequencies(t, 400'000, 12);
  EXPECT_LT(total_variation(exact, freq), 0.02);
}

TEST(Synthesize, DeterministicAndMetadata) {
  const TableSchema s{{{"a", ColumnType::kNumeric, 0}, {"b", ColumnType::kNumeric, 0}}};
  Rng rng(13);
  Table t = missing_table(s, 30);
  for (std::size_t r = 0; r < 30; ++r) {
    t.columns[0][r] = std::normal_distribution<double>(0, 1)(rng);
    t.columns[1][r] = std::normal_distribution<double>(0, 1)(rng);
  }
  MixtureConfig cfg{4, 5, 77, 1, {}};
  const auto a = mixture_synthesize(t, cfg);
  cfg.threads = 2;
  const auto b = mixture_synthesize(t, cfg);
  ASSERT_EQ(a.members.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.members[i].program, b.members[i].program);
    EXPECT_NO_THROW(from_expr(a.members[i].program, s, 30));
    EXPECT_EQ(a.members[i].steps, 5u * 6u * 2u);
  }
  EXPECT_EQ(a.meta("schema"), "a:numeric,b:numeric");
  EXPECT_EQ(a.meta("rows"), "30");
}

}  // namespace
}  // namespace bsynth::mixture
