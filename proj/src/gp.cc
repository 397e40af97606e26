// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/gp.hh"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace bsynth::gp {

Grammar gp_grammar() {
  const GammaDensity gamma11{1.0, 1.0, kParamFloor};
  std::vector<Rule> rules = {
      {"K", "const", {"H"}, 0.14, std::nullopt},
      {"K", "wn", {"H"}, 0.14, std::nullopt},
      {"K", "lin", {"H"}, 0.14, std::nullopt},
      {"K", "se", {"H"}, 0.14, std::nullopt},
      {"K", "per", {"H", "H"}, 0.14, std::nullopt},
      {"K", "+", {"K", "K"}, 0.135, std::nullopt},
      {"K", "*", {"K", "K"}, 0.135, std::nullopt},
      {"K", "cp", {"H", "K", "K"}, 0.03, std::nullopt},
      {"H", "gamma", {}, 1.0, TerminalDist{gamma11}},
  };
  return Grammar("K", std::move(rules));
}

namespace {

double gamma_param(const Expr& h) {
  if (h.tag() != "gamma" || h.num_children() != 0 || h.atoms().size() != 1) {
    throw std::invalid_argument("expected (gamma v), got " + print(h));
  }
  const double v = h.number(0);
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument("gamma parameter must be positive, got " + print(h));
  }
  return v;
}

std::size_t expected_children(const std::string& tag) {
  if (tag == "const" || tag == "wn" || tag == "lin" || tag == "se") return 1;
  if (tag == "per" || tag == "+" || tag == "*") return 2;
  if (tag == "cp") return 3;
  throw std::invalid_argument("unknown kernel tag '" + tag + "'");
}

}  // namespace

void validate_kernel(const Expr& k) {
  const std::size_t n = expected_children(k.tag());
  if (k.num_children() != n || !k.atoms().empty()) {
    throw std::invalid_argument("(" + k.tag() + " ...) takes " + std::to_string(n) +
                                " subexpressions: " + print(k));
  }
  if (k.tag() == "per") {
    gamma_param(k.child(0));
    gamma_param(k.child(1));
  } else if (k.tag() == "+" || k.tag() == "*") {
    validate_kernel(k.child(0));
    validate_kernel(k.child(1));
  } else if (k.tag() == "cp") {
    gamma_param(k.child(0));
    validate_kernel(k.child(1));
    validate_kernel(k.child(2));
  } else {
    gamma_param(k.child(0));
  }
}

void TimeSeries::validate() const {
  if (xs.size() != ys.size()) throw std::invalid_argument("xs and ys differ in length");
  if (xs.empty()) throw std::invalid_argument("time series is empty");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw std::invalid_argument("non-finite value at index " + std::to_string(i));
    }
  }
}

CompiledKernel::CompiledKernel(const Expr& k) {
  validate_kernel(k);
  compile(k);
}

int CompiledKernel::compile(const Expr& k) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Node n;
  const std::string& t = k.tag();
  if (t == "const") {
    n = {Op::kConst, gamma_param(k.child(0))};
  } else if (t == "wn") {
    n = {Op::kWhiteNoise, gamma_param(k.child(0))};
  } else if (t == "lin") {
    n = {Op::kLinear, gamma_param(k.child(0))};
  } else if (t == "se") {
    n = {Op::kSquaredExp, gamma_param(k.child(0))};
  } else if (t == "per") {
    n = {Op::kPeriodic, gamma_param(k.child(0)), gamma_param(k.child(1))};
  } else if (t == "+" || t == "*") {
    n.op = t == "+" ? Op::kSum : Op::kProduct;
    n.left = compile(k.child(0));
    n.right = compile(k.child(1));
  } else {
    n.op = Op::kChange;
    n.p1 = gamma_param(k.child(0));
    n.left = compile(k.child(1));
    n.right = compile(k.child(2));
  }
  nodes_[static_cast<std::size_t>(id)] = n;
  return id;
}

double CompiledKernel::eval(int id, double x, double x2) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  switch (n.op) {
    case Op::kConst:
      return n.p1;
    case Op::kWhiteNoise:
      return x == x2 ? n.p1 : 0.0;
    case Op::kLinear:
      return (x - n.p1) * (x2 - n.p1);
    case Op::kSquaredExp: {
      const double d = x - x2;
      return std::exp(-d * d / n.p1);
    }
    case Op::kPeriodic: {
      const double s = std::sin(2.0 * std::numbers::pi / n.p2 * std::abs(x - x2));
      return std::exp(-2.0 / n.p1 * s * s);
    }
    case Op::kSum:
      return eval(n.left, x, x2) + eval(n.right, x, x2);
    case Op::kProduct:
      return eval(n.left, x, x2) * eval(n.right, x, x2);
    case Op::kChange: {
      // Weight on the first kernel rises to 1 past the change location.
      const double d1 = 0.5 * (1.0 + std::tanh(10.0 * (x - n.p1)));
      const double d2 = 0.5 * (1.0 + std::tanh(10.0 * (x2 - n.p1)));
      return d1 * d2 * eval(n.left, x, x2) + (1.0 - d1) * (1.0 - d2) * eval(n.right, x, x2);
    }
  }
  return 0.0;
}

double cov_eval(const Expr& k, double x, double x2) { return CompiledKernel(k)(x, x2); }

namespace {

Eigen::MatrixXd build_cov(const CompiledKernel& kern, std::span<const double> xs, double jitter) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kern(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      c(i, j) = v;
      c(j, i) = v;
    }
    c(i, i) += jitter;
  }
  return c;
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& c, const Expr& k) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success || !c.allFinite()) {
    throw NumericalError("covariance is not positive definite for kernel " + print(k));
  }
  return llt;
}

double mvn_logdensity(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& resid) {
  const Eigen::VectorXd z = llt.matrixL().solve(resid);
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  const double n = static_cast<double>(resid.size());
  return -0.5 * z.squaredNorm() - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd to_vector(std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace

Eigen::MatrixXd cov_matrix(const Expr& k, std::span<const double> xs) {
  return build_cov(CompiledKernel(k), xs, kJitter);
}

double gp_loglik(const Expr& k, const TimeSeries& ts) {
  const Eigen::MatrixXd c = cov_matrix(k, ts.xs);
  return mvn_logdensity(factor(c, k), to_vector(ts.ys));
}

double gp_loglik_bound(std::size_t n) {
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * kJitter);
}

GpPredictive gp_predict(const Expr& k, const TimeSeries& train, std::span<const double> probe_xs) {
  const CompiledKernel kern(k);
  const Eigen::MatrixXd c = build_cov(kern, train.xs, kJitter);
  const auto llt = factor(c, k);
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto p = static_cast<Eigen::Index>(probe_xs.size());
  Eigen::MatrixXd cross(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      cross(i, j) = kern(train.xs[static_cast<std::size_t>(i)], probe_xs[static_cast<std::size_t>(j)]);
    }
  }
  GpPredictive out;
  out.mean = cross.transpose() * llt.solve(to_vector(train.ys));
  const Eigen::MatrixXd v = llt.matrixL().solve(cross);
  Eigen::MatrixXd cov = build_cov(kern, probe_xs, 0.0) - v.transpose() * v;
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() < 0.0) {
    const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
    cov = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
  out.cov = std::move(cov);
  return out;
}

double gp_heldout_loglik(const Expr& k, const TimeSeries& train, const TimeSeries& test) {
  const GpPredictive pred = gp_predict(k, train, test.xs);
  Eigen::MatrixXd c = pred.cov;
  c.diagonal().array() += kJitter;
  return mvn_logdensity(factor(c, k), to_vector(test.ys) - pred.mean);
}

std::vector<std::vector<double>> sample_predictive(const GpPredictive& pred, std::size_t count,
                                                   Rng& rng) {
  Eigen::MatrixXd c = pred.cov;
  c.diagonal().array() += kJitter;
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) throw NumericalError("predictive covariance not factorable");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s < count; ++s) {
    Eigen::VectorXd z(pred.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    const Eigen::VectorXd y = pred.mean + llt.matrixL() * z;
    out.emplace_back(y.data(), y.data() + y.size());
  }
  return out;
}

GpLikelihood::GpLikelihood(TimeSeries data) : data_(std::move(data)) { data_.validate(); }

double GpLikelihood::loglik(const Expr& program) const {
  try {
    return gp_loglik(program, data_);
  } catch (const NumericalError&) {
    // Treated as zero likelihood so the chain rejects the program.
    return kNegInf;
  }
}

double GpLikelihood::log_upper_bound() const { return gp_loglik_bound(data_.size()); }

Standardizer Standardizer::fit(const TimeSeries& ts) {
  ts.validate();
  Standardizer s;
  const auto [lo, hi] = std::minmax_element(ts.xs.begin(), ts.xs.end());
  s.x_offset = *lo;
  s.x_scale = *hi > *lo ? *hi - *lo : 1.0;
  double mean = 0.0;
  for (double y : ts.ys) mean += y;
  mean /= static_cast<double>(ts.size());
  double var = 0.0;
  for (double y : ts.ys) var += (y - mean) * (y - mean);
  var /= static_cast<double>(ts.size());
  s.y_offset = mean;
  s.y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

TimeSeries Standardizer::apply(const TimeSeries& ts) const {
  TimeSeries out;
  for (double x : ts.xs) out.xs.push_back(x_to_model(x));
  for (double y : ts.ys) out.ys.push_back((y - y_offset) / y_scale);
  return out;
}

}  // namespace bsynth::gp
