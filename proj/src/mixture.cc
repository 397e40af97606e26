// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/mixture.hh"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace bsynth::mixture {

namespace {

[[noreturn]] void fail(const std::string& what) { throw MixtureError(what); }

bool is_integral(double v) { return std::isfinite(v) && v == std::floor(v); }

const char* dist_tag(const Dist& d) {
  if (std::holds_alternative<NormalDist>(d)) return "normal";
  if (std::holds_alternative<PoissonDist>(d)) return "poisson";
  return "categorical";
}

ColumnType type_for(const Dist& d) {
  if (std::holds_alternative<NormalDist>(d)) return ColumnType::kNumeric;
  if (std::holds_alternative<PoissonDist>(d)) return ColumnType::kCount;
  return ColumnType::kNominal;
}

}  // namespace

std::string type_name(ColumnType t) {
  switch (t) {
    case ColumnType::kNumeric:
      return "numeric";
    case ColumnType::kCount:
      return "count";
    case ColumnType::kNominal:
      return "nominal";
  }
  return "?";
}

std::optional<std::size_t> TableSchema::find(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i + 1;
  }
  return std::nullopt;
}

std::string TableSchema::to_string() const {
  std::string out;
  for (const auto& c : columns) {
    if (!out.empty()) out += ',';
    out += c.name + ':' + type_name(c.type);
    if (c.type == ColumnType::kNominal) out += ':' + std::to_string(c.arity);
  }
  return out;
}

TableSchema TableSchema::parse(const std::string& text) {
  TableSchema s;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::vector<std::string> parts;
    std::istringstream ps(item);
    std::string p;
    while (std::getline(ps, p, ':')) parts.push_back(p);
    if (parts.size() < 2) fail("bad schema entry '" + item + "'");
    Column c{parts[0]};
    if (parts[1] == "numeric" && parts.size() == 2) {
      c.type = ColumnType::kNumeric;
    } else if (parts[1] == "count" && parts.size() == 2) {
      c.type = ColumnType::kCount;
    } else if (parts[1] == "nominal" && parts.size() == 3) {
      c.type = ColumnType::kNominal;
      c.arity = std::stoul(parts[2]);
    } else {
      fail("bad schema entry '" + item + "'");
    }
    s.columns.push_back(std::move(c));
  }
  s.validate();
  return s;
}

void TableSchema::validate() const {
  if (columns.empty()) fail("schema has no columns");
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) fail("empty column name");
    if (!seen.insert(c.name).second) fail("duplicate column name '" + c.name + "'");
    if (c.type == ColumnType::kNominal && c.arity < 2) {
      fail("nominal column '" + c.name + "' needs at least 2 categories");
    }
  }
}

void Table::validate() const {
  schema.validate();
  if (columns.size() != schema.size()) fail("table column count does not match schema");
  const std::size_t n = rows();
  if (n == 0) fail("table has no rows");
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const Column& col = schema.columns[c];
    if (columns[c].size() != n) fail("ragged column '" + col.name + "'");
    for (std::size_t r = 0; r < n; ++r) {
      const double v = columns[c][r];
      if (is_missing(v)) continue;
      const std::string where = " at row " + std::to_string(r + 1) + ", column " +
                                std::to_string(c + 1) + " ('" + col.name + "')";
      if (!std::isfinite(v)) fail("non-finite value" + where);
      if (col.type == ColumnType::kCount && (!is_integral(v) || v < 0)) {
        fail("count value must be a nonnegative integer" + where);
      }
      if (col.type == ColumnType::kNominal &&
          (!is_integral(v) || v < 1 || v > static_cast<double>(col.arity))) {
        fail("nominal value must be an integer in 1.." + std::to_string(col.arity) + where);
      }
    }
  }
}

std::size_t MixtureProgram::block_of(std::size_t column) const {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& cols = blocks[b].columns;
    if (std::find(cols.begin(), cols.end(), column) != cols.end()) return b;
  }
  fail("column " + std::to_string(column) + " is in no block");
}

// ---------------------------------------------------------------------------
// Expr conversion

namespace {

Expr dist_expr(const Dist& d) {
  Expr e(dist_tag(d));
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    e.add_number(nd->mean).add_number(nd->sd);
  } else if (const auto* pd = std::get_if<PoissonDist>(&d)) {
    e.add_number(pd->rate);
  } else {
    for (double w : std::get<CategoricalDist>(d).weights) e.add_number(w);
  }
  return e;
}

std::vector<double> numbers_of(const Expr& e) {
  std::vector<double> out;
  for (std::size_t i = 0; i < e.atoms().size(); ++i) out.push_back(e.number(i));
  return out;
}

Dist parse_dist(const Expr& e) {
  if (e.num_children() != 0) fail("distribution takes only numbers: " + print(e));
  std::vector<double> xs;
  try {
    xs = numbers_of(e);
  } catch (const std::exception&) {
    fail("distribution takes only numbers: " + print(e));
  }
  if (e.tag() == "normal") {
    if (xs.size() != 2) fail("normal takes a mean and a standard deviation: " + print(e));
    return NormalDist{xs[0], xs[1]};
  }
  if (e.tag() == "poisson") {
    if (xs.size() != 1) fail("poisson takes one rate: " + print(e));
    return PoissonDist{xs[0]};
  }
  if (e.tag() == "categorical") return CategoricalDist{xs};
  fail("unknown distribution '" + e.tag() + "'");
}

std::uint64_t parse_count(const Expr& e, const char* what) {
  if (e.atoms().size() != 1 || !std::holds_alternative<double>(e.atoms()[0])) {
    fail(std::string(what) + " needs one integer: " + print(e));
  }
  const double v = e.number(0);
  if (!is_integral(v) || v < 1) fail(std::string(what) + " must be a positive integer: " + print(e));
  return static_cast<std::uint64_t>(v);
}

}  // namespace

Expr to_expr(const MixtureProgram& p) {
  Expr root("partition");
  for (const auto& b : p.blocks) {
    Expr block("block");
    Expr cols("");
    for (std::size_t c : b.columns) cols.add_number(static_cast<double>(c));
    block.add_child(std::move(cols));
    for (const auto& cl : b.clusters) {
      Expr cluster("cluster");
      cluster.add_number(static_cast<double>(cl.weight));
      for (std::size_t i = 0; i < b.columns.size(); ++i) {
        Expr var("var");
        var.add_number(static_cast<double>(b.columns[i]));
        var.add_child(dist_expr(cl.dists[i]));
        cluster.add_child(std::move(var));
      }
      block.add_child(std::move(cluster));
    }
    root.add_child(std::move(block));
  }
  return root;
}

MixtureProgram from_expr(const Expr& e, const TableSchema& schema, std::uint64_t n) {
  if (e.tag() != "partition" || !e.atoms().empty()) fail("expected (partition ...)");
  MixtureProgram p;
  for (const auto& be : e.children()) {
    if (be.tag() != "block" || be.num_children() < 2 || !be.atoms().empty() ||
        !be.child(0).tag().empty()) {
      fail("expected (block (columns...) clusters...): " + print(be));
    }
    Block b;
    for (const auto& a : be.child(0).atoms()) {
      const double* v = std::get_if<double>(&a);
      if (!v || !is_integral(*v) || *v < 1) fail("block columns must be positive integers");
      b.columns.push_back(static_cast<std::size_t>(*v));
    }
    if (b.columns.empty()) fail("block has no columns");
    for (std::size_t i = 1; i < be.num_children(); ++i) {
      const Expr& ce = be.child(i);
      if (ce.tag() != "cluster") fail("expected (cluster s vars...): " + print(ce));
      Cluster cl;
      cl.weight = parse_count(ce, "cluster weight");
      if (ce.num_children() != b.columns.size()) {
        fail("cluster must carry one var per block column: " + print(ce));
      }
      for (std::size_t j = 0; j < ce.num_children(); ++j) {
        const Expr& ve = ce.child(j);
        if (ve.tag() != "var" || ve.num_children() != 1) fail("expected (var a D): " + print(ve));
        if (parse_count(ve, "var column") != b.columns[j]) {
          fail("var columns must follow the block's column order: " + print(ce));
        }
        cl.dists.push_back(parse_dist(ve.child(0)));
      }
      b.clusters.push_back(std::move(cl));
    }
    p.blocks.push_back(std::move(b));
  }
  canonicalize(p);
  validate(p, schema, n);
  return p;
}

void canonicalize(MixtureProgram& p) {
  for (auto& b : p.blocks) {
    std::vector<std::size_t> order(b.columns.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return b.columns[i] < b.columns[j]; });
    std::vector<std::size_t> cols;
    for (std::size_t i : order) cols.push_back(b.columns[i]);
    b.columns = std::move(cols);
    for (auto& cl : b.clusters) {
      std::vector<Dist> ds;
      for (std::size_t i : order) ds.push_back(cl.dists[i]);
      cl.dists = std::move(ds);
    }
  }
  std::sort(p.blocks.begin(), p.blocks.end(), [](const Block& a, const Block& b) {
    return a.columns.front() < b.columns.front();
  });
}

void validate(const MixtureProgram& p, const TableSchema& schema, std::uint64_t n) {
  const std::size_t m = schema.size();
  std::vector<int> seen(m + 1, 0);
  if (p.blocks.empty()) fail("partition has no blocks");
  for (const auto& b : p.blocks) {
    if (b.columns.empty()) fail("block has no columns");
    for (std::size_t c : b.columns) {
      if (c < 1 || c > m) fail("column " + std::to_string(c) + " is out of range 1.." + std::to_string(m));
      if (seen[c]++) fail("column " + std::to_string(c) + " appears in more than one block");
    }
    if (b.clusters.empty()) fail("block has no clusters");
    std::uint64_t total = 0;
    for (const auto& cl : b.clusters) {
      if (cl.weight < 1) fail("cluster weights must be positive");
      total += cl.weight;
      if (cl.dists.size() != b.columns.size()) fail("cluster var count differs from block columns");
      for (std::size_t i = 0; i < b.columns.size(); ++i) {
        const Column& col = schema.columns[b.columns[i] - 1];
        const Dist& d = cl.dists[i];
        if (type_for(d) != col.type) {
          fail(std::string(dist_tag(d)) + " cannot model " + type_name(col.type) + " column '" +
               col.name + "'");
        }
        if (const auto* nd = std::get_if<NormalDist>(&d)) {
          if (!std::isfinite(nd->mean) || !(nd->sd > 0) || !std::isfinite(nd->sd)) {
            fail("normal needs a finite mean and positive deviation");
          }
        } else if (const auto* pd = std::get_if<PoissonDist>(&d)) {
          if (!(pd->rate > 0) || !std::isfinite(pd->rate)) fail("poisson rate must be positive");
        } else {
          const auto& w = std::get<CategoricalDist>(d).weights;
          if (w.size() != col.arity) {
            fail("categorical for '" + col.name + "' needs " + std::to_string(col.arity) + " weights");
          }
          double s = 0.0;
          for (double x : w) {
            if (!(x > 0)) fail("categorical weights must be positive");
            s += x;
          }
          if (std::abs(s - 1.0) > 1e-9) fail("categorical weights must sum to 1");
        }
      }
    }
    if (total != n) {
      fail("cluster weights in block of column " + std::to_string(b.columns.front()) + " sum to " +
           std::to_string(total) + ", expected " + std::to_string(n));
    }
  }
  for (std::size_t c = 1; c <= m; ++c) {
    if (!seen[c]) fail("column " + std::to_string(c) + " is in no block");
  }
  for (std::size_t i = 1; i < p.blocks.size(); ++i) {
    if (p.blocks[i - 1].columns.front() > p.blocks[i].columns.front()) fail("blocks not in canonical order");
  }
}

// ---------------------------------------------------------------------------
// Densities

double dist_logpdf(const Dist& d, double x) {
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    const double z = (x - nd->mean) / nd->sd;
    return -0.5 * std::log(2.0 * std::numbers::pi * nd->sd * nd->sd) - 0.5 * z * z;
  }
  if (const auto* pd = std::get_if<PoissonDist>(&d)) {
    if (!is_integral(x) || x < 0) return kNegInf;
    return x * std::log(pd->rate) - pd->rate - std::lgamma(x + 1.0);
  }
  const auto& w = std::get<CategoricalDist>(d).weights;
  if (!is_integral(x) || x < 1 || x > static_cast<double>(w.size())) return kNegInf;
  return std::log(w[static_cast<std::size_t>(x) - 1]);
}

double dist_prior_logdensity(const Dist& d, const PriorConstants& c) {
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    // Normal-inverse-gamma in (mean, sd^2).
    const double y2 = nd->sd * nd->sd;
    const double dv = nd->mean - c.eta;
    return 0.5 * std::log(c.lambda / (2.0 * std::numbers::pi * y2)) + c.alpha * std::log(c.beta) -
           std::lgamma(c.alpha) - (c.alpha + 1.0) * std::log(y2) -
           (2.0 * c.beta + c.lambda * dv * dv) / (2.0 * y2);
  }
  if (const auto* pd = std::get_if<PoissonDist>(&d)) {
    return c.nu * std::log(c.xi) + (c.nu - 1.0) * std::log(pd->rate) - c.xi * pd->rate -
           std::lgamma(c.nu);
  }
  const auto& w = std::get<CategoricalDist>(d).weights;
  const double q = static_cast<double>(w.size());
  double lp = std::lgamma(q * c.kappa) - q * std::lgamma(c.kappa);
  for (double x : w) lp += (c.kappa - 1.0) * std::log(x);
  return lp;
}

double dist_proposal_logdensity(const Dist& d, const PriorConstants& c) {
  // Drawing sd^2 and reporting sd adds the Jacobian d(sd^2)/d(sd) = 2 sd.
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    return dist_prior_logdensity(d, c) + std::log(2.0 * nd->sd);
  }
  return dist_prior_logdensity(d, c);
}

Dist sample_dist_prior(const Column& col, Rng& rng, const PriorConstants& c) {
  switch (col.type) {
    case ColumnType::kNumeric: {
      std::gamma_distribution<double> g(c.alpha, 1.0 / c.beta);
      double var = 0.0;
      while (!(var > 0) || !std::isfinite(var)) var = 1.0 / g(rng);
      std::normal_distribution<double> nv(c.eta, std::sqrt(var / c.lambda));
      return NormalDist{nv(rng), std::sqrt(var)};
    }
    case ColumnType::kCount: {
      std::gamma_distribution<double> g(c.nu, 1.0 / c.xi);
      double r = 0.0;
      while (!(r > 0)) r = g(rng);
      return PoissonDist{r};
    }
    case ColumnType::kNominal:
      break;
  }
  std::gamma_distribution<double> g(c.kappa, 1.0);
  std::vector<double> w(col.arity);
  for (;;) {
    double s = 0.0;
    for (auto& x : w) s += (x = g(rng));
    for (auto& x : w) x /= s;
    if (std::all_of(w.begin(), w.end(), [](double x) { return x > 0; })) break;
  }
  return CategoricalDist{w};
}

double sample_dist(const Dist& d, Rng& rng) {
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    return std::normal_distribution<double>(nd->mean, nd->sd)(rng);
  }
  if (const auto* pd = std::get_if<PoissonDist>(&d)) {
    return static_cast<double>(std::poisson_distribution<long long>(pd->rate)(rng));
  }
  const auto& w = std::get<CategoricalDist>(d).weights;
  return static_cast<double>(sample_categorical(rng, w) + 1);
}

namespace {

constexpr double kBandwidthFraction = 0.2;  // mean kernel width / column sd
constexpr double kSdFraction = 0.4;         // typical cluster sd / column sd
constexpr double kLogSdSpread = 0.8;

double log_normal_pdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

DistProposal::DistProposal(const Table& t, const PriorConstants& c) : constants_(c) {
  for (std::size_t col = 1; col <= t.schema.size(); ++col) {
    ColumnKernel k{t.schema.columns[col - 1], {}, 1.0, 0.0};
    for (std::size_t r = 0; r < t.rows(); ++r) {
      if (!is_missing(t.at(r, col))) k.observed.push_back(t.at(r, col));
    }
    if (k.column.type == ColumnType::kNumeric && !k.observed.empty()) {
      double mean = 0.0, ss = 0.0;
      for (double x : k.observed) mean += x / static_cast<double>(k.observed.size());
      for (double x : k.observed) ss += (x - mean) * (x - mean);
      double sd = std::sqrt(ss / static_cast<double>(k.observed.size()));
      if (!(sd > 0)) sd = 1.0;
      k.mean_bandwidth = kBandwidthFraction * sd;
      k.log_sd_center = std::log(kSdFraction * sd);
    }
    columns_.push_back(std::move(k));
  }
}

Dist DistProposal::sample(std::size_t column, Rng& rng) const {
  const ColumnKernel& k = columns_.at(column - 1);
  const bool use_kernel = k.column.type != ColumnType::kNominal && !k.observed.empty();
  if (!use_kernel || uniform01(rng) < 0.5) return sample_dist_prior(k.column, rng, constants_);
  const double x = k.observed[uniform_index(rng, k.observed.size())];
  if (k.column.type == ColumnType::kNumeric) {
    const double mean = std::normal_distribution<double>(x, k.mean_bandwidth)(rng);
    const double sd = std::exp(std::normal_distribution<double>(k.log_sd_center, kLogSdSpread)(rng));
    return NormalDist{mean, sd};
  }
  double rate = 0.0;
  while (!(rate > 0)) rate = std::gamma_distribution<double>(x + 0.5, 1.0)(rng);
  return PoissonDist{rate};
}

double DistProposal::kernel_logdensity(const ColumnKernel& k, const Dist& d) const {
  std::vector<double> terms;
  terms.reserve(k.observed.size());
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    for (double x : k.observed) terms.push_back(log_normal_pdf(nd->mean, x, k.mean_bandwidth));
    const double log_sd = std::log(nd->sd);
    return log_sum_exp(terms) - std::log(static_cast<double>(k.observed.size())) +
           log_normal_pdf(log_sd, k.log_sd_center, kLogSdSpread) - log_sd;
  }
  const double rate = std::get<PoissonDist>(d).rate;
  for (double x : k.observed) terms.push_back(log_gamma_pdf(rate, x + 0.5, 1.0));
  return log_sum_exp(terms) - std::log(static_cast<double>(k.observed.size()));
}

double DistProposal::logdensity(std::size_t column, const Dist& d) const {
  const ColumnKernel& k = columns_.at(column - 1);
  const double prior = dist_proposal_logdensity(d, constants_);
  if (k.column.type == ColumnType::kNominal || k.observed.empty()) return prior;
  const double both[2] = {prior, kernel_logdensity(k, d)};
  return log_sum_exp(both) - std::log(2.0);
}

double mixture_prior_logdensity(const MixtureProgram& p, std::uint64_t n, const PriorConstants& c) {
  std::size_t m = 0;
  double lp = 0.0;
  for (const auto& b : p.blocks) {
    m += b.columns.size();
    lp += log_factorial(b.columns.size() - 1) - log_factorial(n);
    for (const auto& cl : b.clusters) {
      lp += log_factorial(cl.weight - 1);
      for (const auto& d : cl.dists) lp += dist_prior_logdensity(d, c);
    }
  }
  return lp - log_factorial(m);
}

namespace {

double block_row_logpdf(const Block& b, const std::vector<double>& log_w,
                        const std::function<double(std::size_t)>& cell) {
  std::vector<double> terms(b.clusters.size());
  for (std::size_t j = 0; j < b.clusters.size(); ++j) {
    double t = log_w[j];
    for (std::size_t i = 0; i < b.columns.size(); ++i) {
      const double x = cell(b.columns[i]);
      if (!is_missing(x)) t += dist_logpdf(b.clusters[j].dists[i], x);
    }
    terms[j] = t;
  }
  return log_sum_exp(terms);
}

std::vector<double> log_weights(const Block& b) {
  double n = 0.0;
  for (const auto& cl : b.clusters) n += static_cast<double>(cl.weight);
  std::vector<double> out;
  for (const auto& cl : b.clusters) out.push_back(std::log(static_cast<double>(cl.weight) / n));
  return out;
}

}  // namespace

double block_loglik(const Block& b, const Table& t) {
  const auto lw = log_weights(b);
  const std::size_t n = t.rows();
  const std::size_t nc = b.clusters.size();
  // terms[r * nc + j]: log weight plus the row's log-density under cluster j.
  std::vector<double> terms(n * nc);
  for (std::size_t j = 0; j < nc; ++j) {
    for (std::size_t r = 0; r < n; ++r) terms[r * nc + j] = lw[j];
    for (std::size_t i = 0; i < b.columns.size(); ++i) {
      const Dist& d = b.clusters[j].dists[i];
      const auto& col = t.columns[b.columns[i] - 1];
      for (std::size_t r = 0; r < n; ++r) {
        if (!is_missing(col[r])) terms[r * nc + j] += dist_logpdf(d, col[r]);
      }
    }
  }
  double ll = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ll += log_sum_exp(std::span<const double>(terms.data() + r * nc, nc));
  }
  return ll;
}

double mixture_loglik(const MixtureProgram& p, const Table& t) {
  double ll = 0.0;
  for (const auto& b : p.blocks) ll += block_loglik(b, t);
  return ll;
}

double mixture_logpdf(const MixtureProgram& p, const Row& row) {
  double lp = 0.0;
  for (const auto& b : p.blocks) {
    lp += block_row_logpdf(b, log_weights(b), [&](std::size_t col) {
      return col - 1 < row.size() ? row[col - 1] : kMissing;
    });
  }
  return lp;
}

std::vector<double> cluster_posterior(const Block& b, const Row& row) {
  const auto lw = log_weights(b);
  std::vector<double> logp(b.clusters.size());
  for (std::size_t j = 0; j < b.clusters.size(); ++j) {
    double t = lw[j];
    for (std::size_t i = 0; i < b.columns.size(); ++i) {
      const std::size_t c = b.columns[i] - 1;
      if (c < row.size() && !is_missing(row[c])) t += dist_logpdf(b.clusters[j].dists[i], row[c]);
    }
    logp[j] = t;
  }
  const double z = log_sum_exp(logp);
  if (!std::isfinite(z)) fail("conditions have zero density under every cluster");
  for (auto& x : logp) x = std::exp(x - z);
  return logp;
}

std::vector<Row> mixture_simulate(const MixtureProgram& p, const TableSchema& schema,
                                  const Row& conditions, std::size_t count, Rng& rng) {
  const std::size_t m = schema.size();
  if (conditions.size() > m) fail("conditions name more columns than the schema has");
  std::vector<std::vector<double>> posts;
  for (const auto& b : p.blocks) posts.push_back(cluster_posterior(b, conditions));
  std::vector<Row> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Row row(m, kMissing);
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
      const Block& b = p.blocks[bi];
      const Cluster& cl = b.clusters[sample_categorical(rng, posts[bi])];
      for (std::size_t i = 0; i < b.columns.size(); ++i) {
        const std::size_t c = b.columns[i] - 1;
        const bool fixed = c < conditions.size() && !is_missing(conditions[c]);
        row[c] = fixed ? conditions[c] : sample_dist(cl.dists[i], rng);
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mutation moves

std::string move_name(MoveKind k) {
  switch (k) {
    case MoveKind::kMoveColumn:
      return "move-column";
    case MoveKind::kSplit:
      return "split-cluster";
    case MoveKind::kMerge:
      return "merge-cluster";
    case MoveKind::kTransfer:
      return "transfer-weight";
    case MoveKind::kResample:
      return "resample-distribution";
    case MoveKind::kWalk:
      return "perturb-distribution";
  }
  return "?";
}

MixtureState::MixtureState(MixtureProgram p, const Table& t, const PriorConstants& c)
    : program_(std::move(p)), table_(&t), constants_(c), proposal_(t, c) {
  validate(program_, t.schema, t.rows());
  log_prior_ = mixture_prior_logdensity(program_, t.rows(), constants_);
  for (const auto& b : program_.blocks) block_ll_.push_back(block_loglik(b, t));
}

double MixtureState::loglik() const {
  double s = 0.0;
  for (double x : block_ll_) s += x;
  return s;
}

namespace {

constexpr double kMeanStep = 0.5;    // in units of the current deviation
constexpr double kLogStep = 0.3;     // for log deviation and log rate
constexpr double kSimplexConc = 50;  // Dirichlet concentration around the weights

double log_dirichlet(const std::vector<double>& w, const std::vector<double>& a) {
  double lp = 0.0, asum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    lp += (a[i] - 1.0) * std::log(w[i]) - std::lgamma(a[i]);
    asum += a[i];
  }
  return lp + std::lgamma(asum);
}

// Cluster weights for a block created by moving a column out: one cluster
// with probability 1/2, otherwise two with a uniform cut.
std::vector<std::uint64_t> draw_composition(std::uint64_t n, Rng& rng) {
  if (n < 2 || uniform01(rng) < 0.5) return {n};
  const std::uint64_t a = 1 + uniform_index(rng, n - 1);
  return {a, n - a};
}

double composition_logq(const std::vector<std::uint64_t>& w, std::uint64_t n) {
  if (n < 2) return w.size() == 1 ? 0.0 : kNegInf;
  if (w.size() == 1) return std::log(0.5);
  if (w.size() == 2) return -std::log(2.0 * static_cast<double>(n - 1));
  return kNegInf;
}

std::vector<double> around(const std::vector<double>& w) {
  std::vector<double> a;
  for (double x : w) a.push_back(1.0 + kSimplexConc * x);
  return a;
}

}  // namespace

std::optional<MixtureState::Candidate> MixtureState::propose(MoveKind kind, Rng& rng) const {
  const TableSchema& schema = table_->schema;
  const std::size_t k = program_.blocks.size();
  Candidate cand{program_, 0.0};
  MixtureProgram& p = cand.program;
  double& ratio = cand.log_proposal_ratio;
  auto q = [&](std::size_t c, const Dist& d) { return proposal_.logdensity(c, d); };
  auto draw = [&](std::size_t c) { return proposal_.sample(c, rng); };

  switch (kind) {
    case MoveKind::kMoveColumn: {
      const std::size_t c = uniform_index(rng, schema.size()) + 1;
      const std::size_t src = p.block_of(c);
      const std::size_t option = uniform_index(rng, k);  // k - 1 other blocks, then fresh
      const bool fresh = option == k - 1;
      const std::size_t dst = fresh ? k : (option < src ? option : option + 1);
      Block& from = p.blocks[src];
      const bool singleton = from.columns.size() == 1;
      if (fresh && singleton) return std::nullopt;
      const std::uint64_t n = table_->rows();
      std::vector<std::uint64_t> src_weights;
      for (const auto& cl : from.clusters) src_weights.push_back(cl.weight);
      // A vanishing block must be one the fresh-block proposal could create.
      const double src_comp = singleton ? composition_logq(src_weights, n) : 0.0;
      if (src_comp == kNegInf) return std::nullopt;

      const auto pos = static_cast<std::size_t>(
          std::find(from.columns.begin(), from.columns.end(), c) - from.columns.begin());
      double removed = src_comp;
      for (auto& cl : from.clusters) {
        removed += q(c, cl.dists[pos]);
        cl.dists.erase(cl.dists.begin() + static_cast<std::ptrdiff_t>(pos));
      }
      from.columns.erase(from.columns.begin() + static_cast<std::ptrdiff_t>(pos));

      double added = 0.0;
      if (fresh) {
        Block b;
        b.columns = {c};
        const auto weights = draw_composition(n, rng);
        added += composition_logq(weights, n);
        for (auto w : weights) {
          b.clusters.push_back(Cluster{w, {draw(c)}});
          added += q(c, b.clusters.back().dists[0]);
        }
        p.blocks.push_back(std::move(b));
      } else {
        Block& to = p.blocks[dst];
        to.columns.push_back(c);
        for (auto& cl : to.clusters) {
          cl.dists.push_back(draw(c));
          added += q(c, cl.dists.back());
        }
        if (singleton) p.blocks.erase(p.blocks.begin() + static_cast<std::ptrdiff_t>(src));
      }
      const std::size_t k_after = p.blocks.size();
      ratio = (removed - std::log(static_cast<double>(k_after))) -
              (added - std::log(static_cast<double>(k)));
      canonicalize(p);
      return cand;
    }
    case MoveKind::kSplit: {
      // With probability 1/2 the donor's distributions are redrawn as well,
      // pairing with a merge that redraws the recipient's.
      const bool refit = uniform01(rng) < 0.5;
      Block& b = p.blocks[uniform_index(rng, k)];
      const std::size_t t = b.clusters.size();
      const std::size_t j = uniform_index(rng, t);
      const std::uint64_t s = b.clusters[j].weight;
      if (s < 2) return std::nullopt;
      const std::uint64_t d = 1 + uniform_index(rng, s - 1);
      const std::size_t at = uniform_index(rng, t + 1);
      Cluster fresh{d, {}};
      double added = 0.0, removed = 0.0;
      for (std::size_t v = 0; v < b.columns.size(); ++v) {
        const std::size_t c = b.columns[v];
        fresh.dists.push_back(draw(c));
        added += q(c, fresh.dists.back());
        if (refit) {
          Dist& old = b.clusters[j].dists[v];
          removed += q(c, old);
          old = draw(c);
          added += q(c, old);
        }
      }
      b.clusters[j].weight -= d;
      b.clusters.insert(b.clusters.begin() + static_cast<std::ptrdiff_t>(at), std::move(fresh));
      ratio = std::log(static_cast<double>(s - 1)) + removed - added;
      return cand;
    }
    case MoveKind::kMerge: {
      const bool refit = uniform01(rng) < 0.5;
      Block& b = p.blocks[uniform_index(rng, k)];
      const std::size_t t = b.clusters.size();
      if (t < 2) return std::nullopt;
      const std::size_t i = uniform_index(rng, t);
      std::size_t r = uniform_index(rng, t - 1);
      if (r >= i) ++r;
      double removed = 0.0, added = 0.0;
      for (std::size_t v = 0; v < b.columns.size(); ++v) {
        const std::size_t c = b.columns[v];
        removed += q(c, b.clusters[i].dists[v]);
        if (refit) {
          Dist& kept = b.clusters[r].dists[v];
          removed += q(c, kept);
          kept = draw(c);
          added += q(c, kept);
        }
      }
      b.clusters[r].weight += b.clusters[i].weight;
      const std::uint64_t merged = b.clusters[r].weight;
      b.clusters.erase(b.clusters.begin() + static_cast<std::ptrdiff_t>(i));
      ratio = removed - added - std::log(static_cast<double>(merged - 1));
      return cand;
    }
    case MoveKind::kTransfer: {
      Block& b = p.blocks[uniform_index(rng, k)];
      const std::size_t t = b.clusters.size();
      if (t < 2) return std::nullopt;
      const std::size_t a = uniform_index(rng, t);
      std::size_t to = uniform_index(rng, t - 1);
      if (to >= a) ++to;
      const std::uint64_t s = b.clusters[a].weight;
      if (s < 2) return std::nullopt;
      const std::uint64_t d = 1 + uniform_index(rng, s - 1);
      b.clusters[a].weight -= d;
      b.clusters[to].weight += d;
      ratio = std::log(static_cast<double>(s - 1)) -
              std::log(static_cast<double>(b.clusters[to].weight - 1));
      return cand;
    }
    case MoveKind::kResample:
    case MoveKind::kWalk:
      break;
  }

  Block& b = p.blocks[uniform_index(rng, k)];
  Cluster& cl = b.clusters[uniform_index(rng, b.clusters.size())];
  const std::size_t i = uniform_index(rng, b.columns.size());
  Dist& d = cl.dists[i];
  if (kind == MoveKind::kResample) {
    const Dist old = d;
    d = draw(b.columns[i]);
    ratio = q(b.columns[i], old) - q(b.columns[i], d);
    return cand;
  }
  std::normal_distribution<double> step(0.0, 1.0);
  if (auto* nd = std::get_if<NormalDist>(&d)) {
    if (uniform01(rng) < 0.5) {
      nd->mean += kMeanStep * nd->sd * step(rng);
    } else {
      const double eps = kLogStep * step(rng);
      nd->sd *= std::exp(eps);
      ratio = eps;
    }
  } else if (auto* pd = std::get_if<PoissonDist>(&d)) {
    const double eps = kLogStep * step(rng);
    pd->rate *= std::exp(eps);
    ratio = eps;
  } else {
    auto& w = std::get<CategoricalDist>(d).weights;
    const auto a_fwd = around(w);
    std::vector<double> next(w.size());
    double s = 0.0;
    for (std::size_t x = 0; x < w.size(); ++x) {
      s += (next[x] = std::gamma_distribution<double>(a_fwd[x], 1.0)(rng));
    }
    for (auto& x : next) x /= s;
    if (!std::all_of(next.begin(), next.end(), [](double x) { return x > 0; })) return std::nullopt;
    ratio = log_dirichlet(w, around(next)) - log_dirichlet(next, a_fwd);
    w = std::move(next);
  }
  if (const auto* nd = std::get_if<NormalDist>(&d); nd && !(nd->sd > 0 && std::isfinite(nd->sd))) {
    return std::nullopt;
  }
  if (const auto* pd = std::get_if<PoissonDist>(&d); pd && !(pd->rate > 0 && std::isfinite(pd->rate))) {
    return std::nullopt;
  }
  return cand;
}

bool MixtureState::mutate(MoveKind kind, Rng& rng, MoveStats* stats) {
  const auto idx = static_cast<std::size_t>(kind);
  if (stats) ++stats->proposed[idx];
  auto cand = propose(kind, rng);
  if (!cand) {
    if (stats) ++stats->noops;
    return false;
  }
  const double prior = mixture_prior_logdensity(cand->program, table_->rows(), constants_);
  std::vector<double> ll;
  ll.reserve(cand->program.blocks.size());
  for (const auto& b : cand->program.blocks) {
    double cached = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < program_.blocks.size(); ++i) {
      if (program_.blocks[i].columns == b.columns && program_.blocks[i] == b) {
        cached = block_ll_[i];
        break;
      }
    }
    ll.push_back(is_missing(cached) ? block_loglik(b, *table_) : cached);
  }
  double new_ll = 0.0;
  for (double x : ll) new_ll += x;
  const double log_accept = prior + new_ll - log_prior_ - loglik() + cand->log_proposal_ratio;
  const double u = uniform01(rng);
  if (!(std::log(u) < log_accept)) return false;
  program_ = std::move(cand->program);
  log_prior_ = prior;
  block_ll_ = std::move(ll);
  if (stats) ++stats->accepted[idx];
  return true;
}

bool MixtureState::mutate(Rng& rng, MoveStats* stats) {
  return mutate(static_cast<MoveKind>(uniform_index(rng, kMoveKinds)), rng, stats);
}

MixtureProgram initial_program(const TableSchema& schema, std::uint64_t n, Rng& rng,
                               const PriorConstants& c) {
  MixtureProgram p;
  for (std::size_t col = 1; col <= schema.size(); ++col) {
    Block b;
    b.columns = {col};
    b.clusters.push_back(Cluster{n, {sample_dist_prior(schema.columns[col - 1], rng, c)}});
    p.blocks.push_back(std::move(b));
  }
  return p;
}

Ensemble mixture_synthesize(const Table& t, const MixtureConfig& config) {
  t.validate();
  const std::size_t m = t.schema.size();
  const std::size_t mutations = config.sweeps * kMoveKinds * m;
  SynthConfig sc;
  sc.chains = config.chains;
  sc.steps = config.sweeps;
  sc.seed = config.seed;
  sc.threads = config.threads;
  Ensemble ens;
  ens.members = run_chains(sc, [&](std::size_t, Rng& rng) {
    MixtureState st(initial_program(t.schema, t.rows(), rng, config.constants), t,
                    config.constants);
    std::size_t accepts = 0;
    for (std::size_t i = 0; i < mutations; ++i) accepts += st.mutate(rng) ? 1 : 0;
    EnsembleMember mem;
    mem.program = to_expr(st.program());
    mem.log_prior = st.log_prior();
    mem.loglik = st.loglik();
    mem.steps = mutations;
    mem.accepts = accepts;
    return mem;
  });
  ens.set_meta("seed", std::to_string(config.seed));
  ens.set_meta("dsl", "mixture");
  ens.set_meta("chains", std::to_string(config.chains));
  ens.set_meta("steps", std::to_string(config.sweeps));
  ens.set_meta("schema", t.schema.to_string());
  ens.set_meta("rows", std::to_string(t.rows()));
  return ens;
}

}  // namespace bsynth::mixture
