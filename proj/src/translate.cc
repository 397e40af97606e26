// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/translate.hh"

#include <stdexcept>

#include "bsynth/gp.hh"
#include "bsynth/hash.hh"

namespace bsynth {
namespace {

std::string lambda(const std::string& body) { return "((x1, x2) -> {" + body + "})"; }

std::string param(const Expr& k, std::size_t i) { return format_number(k.child(i).number(0)); }

std::string dist_text(const mixture::Dist& d) {
  using namespace mixture;
  if (const auto* n = std::get_if<NormalDist>(&d)) {
    return "normal(" + format_number(n->mean) + ", " + format_number(n->sd) + ")";
  }
  if (const auto* p = std::get_if<PoissonDist>(&d)) return "poisson(" + format_number(p->rate) + ")";
  const auto& c = std::get<CategoricalDist>(d);
  std::string s = "categorical(simplex([";
  for (std::size_t i = 0; i < c.weights.size(); ++i) {
    s += (i ? ", " : "") + format_number(c.weights[i]);
  }
  return s + "]))";
}

}  // namespace

std::string venture_cov(const Expr& k) {
  const std::string& t = k.tag();
  if (t == "const") return lambda(param(k, 0));
  if (t == "wn") return lambda("if (x1==x2) {" + param(k, 0) + "} else {0}");
  if (t == "lin") {
    const std::string v = param(k, 0);
    return lambda("(x1-" + v + ") * (x2-" + v + ")");
  }
  if (t == "se") return lambda("exp(-(x1-x2)**2/" + param(k, 0) + ")");
  if (t == "per") {
    return lambda("exp(-2/" + param(k, 0) + " * sin(2*pi/" + param(k, 1) + " * abs(x1-x2))**2)");
  }
  if (t == "+" || t == "*") {
    return lambda(venture_cov(k.child(0)) + "(x1, x2) " + t + " " + venture_cov(k.child(1)) +
                  "(x1, x2)");
  }
  if (t == "cp") {
    const std::string v = param(k, 0);
    return lambda("sig1 = sigmoid(x1, " + v + ", .1) * sigmoid(x2, " + v + ", .1); " +
                  "sig2 = (1-sigmoid(x1, " + v + ", .1)) * (1-sigmoid(x2, " + v + ", .1)); " +
                  "sig1 * " + venture_cov(k.child(1)) + "(x1, x2) + sig2 * " +
                  venture_cov(k.child(2)) + "(x1, x2)");
  }
  throw std::invalid_argument("cannot translate kernel tag '" + t + "'");
}

VentureText gp_to_venture(const Expr& kernel) {
  gp::validate_kernel(kernel);
  return {"assume gp = gaussian_process(gp_mean_constant(0), " + venture_cov(kernel) + ");\n",
          fnv1a(print(kernel))};
}

VentureText mixture_to_venture(const mixture::MixtureProgram& p) {
  std::uint64_t n = 0;
  if (!p.blocks.empty()) {
    for (const auto& c : p.blocks.front().clusters) n += c.weight;
  }
  std::string out;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    const std::string name = "block" + std::to_string(b + 1) + "_cluster";
    if (b) out += "\n";
    out += "assume " + name + " =\n  categorical(simplex([";
    for (std::size_t j = 0; j < blk.clusters.size(); ++j) {
      const double w = static_cast<double>(blk.clusters[j].weight) / static_cast<double>(n);
      out += (j ? ", " : "") + format_number(w);
    }
    out += "])) #block:" + std::to_string(b + 1) + ";\n";
    for (std::size_t v = 0; v < blk.columns.size(); ++v) {
      out += "\nassume var" + std::to_string(blk.columns[v]) + " = cond(";
      for (std::size_t j = 0; j < blk.clusters.size(); ++j) {
        out += "\n  (" + name + " == " + std::to_string(j) + ") (" +
               dist_text(blk.clusters[j].dists.at(v)) + ")";
      }
      out += ");\n";
    }
  }
  return {out, fnv1a(print(mixture::to_expr(p)))};
}

}  // namespace bsynth
