// Apache License, Version 2.0, refer to LICENSE.txt

// Gaussian-process time-series DSL.
//
//   H ::= (gamma v)
//   K ::= (const H) | (wn H) | (lin H) | (se H) | (per H H)
//       | (+ K K) | (* K K) | (cp H K K)
//
// A kernel expression denotes a covariance function; its likelihood is the
// zero-mean multivariate normal density of the observations with 0.01 added
// to the covariance diagonal.

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsynth/grammar.hh"
#include "bsynth/sexpr.hh"
#include "bsynth/synthesis.hh"

namespace bsynth::gp {

inline constexpr double kJitter = 0.01;
inline constexpr double kParamFloor = 1e-9;

inline const std::vector<std::string> kBaseKernels = {"const", "wn", "lin", "se", "per"};
inline const std::vector<std::string> kOperators = {"+", "*", "cp"};

Grammar gp_grammar();

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws std::invalid_argument describing the first arity or parameter
// violation.
void validate_kernel(const Expr& k);

struct TimeSeries {
  std::vector<double> xs;
  std::vector<double> ys;

  std::size_t size() const { return xs.size(); }
  void validate() const;  // equal lengths, n >= 1, finite values
};

// Flattened kernel for fast repeated evaluation.
class CompiledKernel {
 public:
  explicit CompiledKernel(const Expr& k);
  double operator()(double x, double x2) const { return eval(0, x, x2); }

 private:
  enum class Op { kConst, kWhiteNoise, kLinear, kSquaredExp, kPeriodic, kSum, kProduct, kChange };
  struct Node {
    Op op;
    double p1 = 0.0;
    double p2 = 0.0;
    int left = -1;
    int right = -1;
  };
  int compile(const Expr& k);
  double eval(int node, double x, double x2) const;

  std::vector<Node> nodes_;
};

double cov_eval(const Expr& k, double x, double x2);

// Covariance plus the 0.01 diagonal jitter; exactly symmetric.
Eigen::MatrixXd cov_matrix(const Expr& k, std::span<const double> xs);

double gp_loglik(const Expr& k, const TimeSeries& ts);

// Largest value gp_loglik can take on n observations: -n/2 log(2 pi 0.01).
double gp_loglik_bound(std::size_t n);

struct GpPredictive {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // latent function covariance, clipped to PSD
};

GpPredictive gp_predict(const Expr& k, const TimeSeries& train, std::span<const double> probe_xs);

// Log-density of test.ys given train under k, with observation jitter.
double gp_heldout_loglik(const Expr& k, const TimeSeries& train, const TimeSeries& test);

// Draws observation vectors (predictive plus jitter noise) at the probe points.
std::vector<std::vector<double>> sample_predictive(const GpPredictive& pred, std::size_t count,
                                                   Rng& rng);

class GpLikelihood : public LikelihoodModel {
 public:
  explicit GpLikelihood(TimeSeries data);
  double loglik(const Expr& program) const override;
  double log_upper_bound() const override;
  const TimeSeries& data() const { return data_; }

 private:
  TimeSeries data_;
};

// Affine rescaling: xs to [0, 1], ys to zero mean and unit variance.
struct Standardizer {
  double x_offset = 0.0;
  double x_scale = 1.0;
  double y_offset = 0.0;
  double y_scale = 1.0;

  static Standardizer identity() { return {}; }
  static Standardizer fit(const TimeSeries& ts);
  TimeSeries apply(const TimeSeries& ts) const;
  double x_to_model(double x) const { return (x - x_offset) / x_scale; }
  double y_from_model(double y) const { return y * y_scale + y_offset; }
  double var_from_model(double v) const { return v * y_scale * y_scale; }
};

}  // namespace bsynth::gp
