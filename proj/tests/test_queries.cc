// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>

#include "bsynth/gp.hh"
#include "bsynth/queries.hh"
#include "examples.hh"

namespace bsynth::queries {
namespace {

const char* kAirline = testing::kAirlineKernel;

TEST(Counts, AirlineProgram) {
  const Expr e = parse(kAirline);
  EXPECT_EQ(count_kernels(e, "per"), 1u);
  EXPECT_EQ(count_kernels(e, "lin"), 2u);
  EXPECT_EQ(count_kernels(e, "wn"), 2u);
  EXPECT_EQ(count_kernels(e, "const"), 1u);
  EXPECT_EQ(count_kernels(e, "se"), 0u);
  EXPECT_EQ(count_operators(e, "+"), 4u);
  EXPECT_EQ(count_operators(e, "*"), 1u);
  EXPECT_EQ(count_operators(e, "cp"), 0u);
}

TEST(Counts, LeafAndChangePoint) {
  const Expr se = parse("(se (gamma 1))");
  EXPECT_EQ(count_kernels(se, "se"), 1u);
  for (const auto& op : gp::kOperators) EXPECT_EQ(count_operators(se, op), 0u);
  EXPECT_EQ(count_operators(parse("(cp (gamma 5) (lin (gamma 1)) (wn (gamma 2)))"), "cp"), 1u);
}

TEST(Counts, DeepSumOfSevenLinears) {
  const Expr e = make_expr("lin", {make_leaf("gamma", {1})});
  Expr acc = e;
  for (int i = 0; i < 6; ++i) acc = make_expr("+", {e, acc});
  EXPECT_EQ(count_kernels(acc, "lin"), 7u);
  EXPECT_EQ(count_operators(acc, "+"), 6u);
}

TEST(Counts, UnknownTagsThrow) {
  const Expr e = parse(kAirline);
  EXPECT_THROW(count_kernels(e, "rq"), std::invalid_argument);
  EXPECT_THROW(count_kernels(e, "+"), std::invalid_argument);
  EXPECT_THROW(count_operators(e, "lin"), std::invalid_argument);
}

TEST(Counts, SumsMatchNodeTotals) {
  const Grammar g = gp::gp_grammar();
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    const Expr e = sample(g, g.start(), rng);
    std::size_t leaves = 0, internal = 0;
    std::function<void(const Expr&)> walk = [&](const Expr& n) {
      if (n.tag() == "gamma") return;
      const bool has_kernel_child =
          std::any_of(n.children().begin(), n.children().end(),
                      [](const Expr& c) { return c.tag() != "gamma"; });
      (has_kernel_child ? internal : leaves) += 1;
      for (const auto& c : n.children()) walk(c);
    };
    walk(e);
    std::size_t k = 0, o = 0;
    for (const auto& t : gp::kBaseKernels) k += count_kernels(e, t);
    for (const auto& t : gp::kOperators) o += count_operators(e, t);
    EXPECT_EQ(k, leaves) << print(e);
    EXPECT_EQ(o, internal) << print(e);
  }
}

TEST(Property, Language) {
  const Expr e = parse(kAirline);
  auto holds = [&](const char* text) { return parse_property(text).holds(e); };
  EXPECT_TRUE(holds("per"));
  EXPECT_TRUE(holds("per or cp"));
  EXPECT_FALSE(holds("per and cp"));
  EXPECT_TRUE(holds("lin == 2 and wn >= 2 and not se"));
  EXPECT_TRUE(holds("+ > 3 and * < 2"));
  EXPECT_FALSE(holds("+ != 4"));
  EXPECT_TRUE(holds("(cp or se) or (true and not false)"));
  EXPECT_FALSE(holds("not (per > 0)"));
  EXPECT_TRUE(holds("  const<=1 "));
  EXPECT_EQ(parse_property("  per or cp \n").name, "per or cp");
}

TEST(Property, ErrorsCarryPosition) {
  auto position = [](const char* text) {
    try {
      parse_property(text);
    } catch (const PropertyParseError& e) {
      return e.position();
    }
    return std::string::npos;
  };
  EXPECT_EQ(position("per or rq"), 7u);
  EXPECT_EQ(position("per >"), 5u);
  EXPECT_EQ(position("(per"), 4u);
  EXPECT_EQ(position("per per"), 4u);
  EXPECT_EQ(position(""), 0u);
  EXPECT_EQ(position("lin > x"), 6u);
}

TEST(Property, File) {
  const auto props = parse_property_file(
      "# temporal structure\n"
      "white noise: wn\n"
      "linear trend: lin\n"
      "\n"
      "per\n"
      "change point: cp > 0\n");
  ASSERT_EQ(props.size(), 4u);
  EXPECT_EQ(props[0].name, "white noise");
  EXPECT_EQ(props[2].name, "per");
  EXPECT_EQ(props[3].name, "change point");
  try {
    parse_property_file("ok: per\nbad: per and\n");
    FAIL();
  } catch (const PropertyParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_EQ(e.position(), 12u);
  }
}

TEST(Estimate, Basics) {
  const std::vector<Expr> progs = {parse(kAirline), parse("(lin (gamma 1))")};
  EXPECT_EQ(estimate_property(progs, parse_property("true")), 1.0);
  EXPECT_EQ(estimate_property(progs, parse_property("per")), 0.5);
  EXPECT_EQ(estimate_property({parse("(lin (gamma 1))")}, parse_property("per")), 0.0);
  EXPECT_THROW(estimate_property(std::vector<Expr>{}, parse_property("true")),
               std::invalid_argument);
}

TEST(Estimate, OrderInvariantAndExactMean) {
  const Grammar g = gp::gp_grammar();
  Rng rng(2);
  std::vector<Expr> progs;
  for (int i = 0; i < 57; ++i) progs.push_back(sample(g, g.start(), rng));
  const auto p = parse_property("per or cp");
  std::size_t hits = 0;
  for (const auto& e : progs) hits += (count_kernels(e, "per") + count_operators(e, "cp")) > 0;
  const double base = estimate_property(progs, p);
  EXPECT_EQ(base, double(hits) / 57.0);
  for (int r = 0; r < 10; ++r) {
    std::shuffle(progs.begin(), progs.end(), rng);
    EXPECT_EQ(estimate_property(progs, p), base);
  }
}

TEST(SameBlock, ExampleProgram) {
  const Expr e = parse(testing::kExampleProgram);
  EXPECT_FALSE(same_block(e, 1, 2));
  EXPECT_TRUE(same_block(e, 2, 3));
  EXPECT_TRUE(same_block(e, 1, 1));
  EXPECT_THROW(same_block(e, 1, 4), std::invalid_argument);
}

TEST(SameBlock, EnsembleAverage) {
  Ensemble ens;
  ens.members.push_back({parse(testing::kExampleProgram), 0, 0, 0, 0});
  ens.members.push_back({parse("(partition (block (1 2 3) (cluster 10 (var 1 (normal 0 1))"
                               " (var 2 (normal 0 1)) (var 3 (poisson 1)))))"),
                         0, 0, 0, 0});
  EXPECT_EQ(mixture_same_block(ens, 1, 2), 0.5);
  EXPECT_EQ(mixture_same_block(ens, 2, 3), 1.0);
}

TEST(Report, Formats) {
  const std::vector<ReportRow> rows = {{"white noise", 0.25}, {"per", 1.0 / 3.0}};
  EXPECT_EQ(format_table(rows, "structure"),
            "structure    probability\n"
            "white noise  0.250\n"
            "per          0.333\n");
  EXPECT_EQ(format_key_value(rows), "white noise=0.25\nper=" + format_number(1.0 / 3.0) + "\n");
}

}  // namespace
}  // namespace bsynth::queries
