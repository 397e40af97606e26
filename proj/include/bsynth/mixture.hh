// Apache License, Version 2.0, refer to LICENSE.txt

// MultiMixture: tabular models that partition the columns into blocks, each
// block being an independent finite mixture over rows.
//
//   (partition
//     (block (1) (cluster 6 (var 1 (normal 0.6 2.1)))
//                (cluster 4 (var 1 (normal 0.3 1.7))))
//     (block (2 3) (cluster 10 (var 2 (normal 7.6 1.9)) (var 3 (poisson 4)))))
//
// Columns are 1-based. Cluster weights are positive integers that sum to the
// table's row count n within every block.

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bsynth/random.hh"
#include "bsynth/sexpr.hh"
#include "bsynth/synthesis.hh"

namespace bsynth::mixture {

class MixtureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ColumnType { kNumeric, kCount, kNominal };

struct Column {
  std::string name;
  ColumnType type = ColumnType::kNumeric;
  std::size_t arity = 0;  // nominal only: values are 1..arity
};

struct TableSchema {
  std::vector<Column> columns;

  std::size_t size() const { return columns.size(); }
  // 1-based index of `name`, or nullopt.
  std::optional<std::size_t> find(const std::string& name) const;
  // Compact form used in ensemble headers, e.g. "x:numeric,n:count,c:nominal:3".
  std::string to_string() const;
  static TableSchema parse(const std::string& text);
  void validate() const;
};

std::string type_name(ColumnType t);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return v != v; }

// Column-major storage; missing cells are NaN.
struct Table {
  TableSchema schema;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  double at(std::size_t row, std::size_t col) const { return columns[col - 1][row]; }
  // Throws MixtureError naming the row and column of the first bad cell.
  void validate() const;
};

// A single (possibly partial) record, indexed by 0-based column.
using Row = std::vector<double>;

struct NormalDist {
  double mean = 0.0;
  double sd = 1.0;
  bool operator==(const NormalDist&) const = default;
};
struct PoissonDist {
  double rate = 1.0;
  bool operator==(const PoissonDist&) const = default;
};
struct CategoricalDist {
  std::vector<double> weights;  // weights[i] is P(value = i + 1)
  bool operator==(const CategoricalDist&) const = default;
};
using Dist = std::variant<NormalDist, PoissonDist, CategoricalDist>;

struct Cluster {
  std::uint64_t weight = 1;
  std::vector<Dist> dists;  // one per block column, in block order
  bool operator==(const Cluster&) const = default;
};

struct Block {
  std::vector<std::size_t> columns;  // ascending, 1-based
  std::vector<Cluster> clusters;
  bool operator==(const Block&) const = default;
};

struct MixtureProgram {
  std::vector<Block> blocks;  // ordered by smallest column

  std::size_t block_of(std::size_t column) const;  // index into blocks
  bool operator==(const MixtureProgram&) const = default;
};

Expr to_expr(const MixtureProgram& p);
// Parses and validates against the schema and row count.
MixtureProgram from_expr(const Expr& e, const TableSchema& schema, std::uint64_t n);
// Checks the partition, weight and type invariants. Throws MixtureError.
void validate(const MixtureProgram& p, const TableSchema& schema, std::uint64_t n);
// Sorts block columns, vars and blocks into canonical order.
void canonicalize(MixtureProgram& p);

// Statistical constants of the distribution priors.
struct PriorConstants {
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 1.0;
  double eta = 0.0;
  double xi = 1.0;
  double nu = 1.0;
  double kappa = 1.0;
};

double dist_logpdf(const Dist& d, double x);
double dist_prior_logdensity(const Dist& d, const PriorConstants& c = {});
Dist sample_dist_prior(const Column& col, Rng& rng, const PriorConstants& c = {});
// Density of sample_dist_prior's draw, with respect to the same coordinates
// as dist_prior_logdensity.
double dist_proposal_logdensity(const Dist& d, const PriorConstants& c = {});
double sample_dist(const Dist& d, Rng& rng);

// Independent proposal for fresh distributions: an even mixture of the
// prior draw and a kernel centred on the table's observed values, so that
// new clusters land near the data whatever its scale. Numeric columns draw
// the mean around a random observed value and the deviation log-normally
// around a fraction of the column's spread; count columns draw the rate from
// a gamma around a random observed count. Nominal columns use the prior.
class DistProposal {
 public:
  DistProposal(const Table& t, const PriorConstants& c = {});

  Dist sample(std::size_t column, Rng& rng) const;  // 1-based column
  double logdensity(std::size_t column, const Dist& d) const;

 private:
  struct ColumnKernel {
    Column column;
    std::vector<double> observed;
    double mean_bandwidth = 1.0;   // numeric
    double log_sd_center = 0.0;    // numeric
  };
  double kernel_logdensity(const ColumnKernel& k, const Dist& d) const;

  std::vector<ColumnKernel> columns_;
  PriorConstants constants_;
};

double mixture_prior_logdensity(const MixtureProgram& p, std::uint64_t n,
                                const PriorConstants& c = {});
double block_loglik(const Block& b, const Table& t);
double mixture_loglik(const MixtureProgram& p, const Table& t);
double mixture_logpdf(const MixtureProgram& p, const Row& row);

// Draws `count` rows; cells present in `conditions` are held fixed and steer
// each block's cluster choice through its exact posterior.
std::vector<Row> mixture_simulate(const MixtureProgram& p, const TableSchema& schema,
                                  const Row& conditions, std::size_t count, Rng& rng);
// Posterior over a block's clusters given the present cells of `row`.
std::vector<double> cluster_posterior(const Block& b, const Row& row);

enum class MoveKind { kMoveColumn, kSplit, kMerge, kTransfer, kResample, kWalk };
inline constexpr std::size_t kMoveKinds = 6;
std::string move_name(MoveKind k);

struct MoveStats {
  std::size_t proposed[kMoveKinds] = {};
  std::size_t accepted[kMoveKinds] = {};
  std::size_t noops = 0;
};

// Chain state: the program plus cached per-block log-likelihoods.
class MixtureState {
 public:
  MixtureState(MixtureProgram p, const Table& t, const PriorConstants& c = {});

  const MixtureProgram& program() const { return program_; }
  double log_prior() const { return log_prior_; }
  double loglik() const;
  const std::vector<double>& block_logliks() const { return block_ll_; }

  // One MH mutation of the given kind. Returns true on acceptance.
  bool mutate(MoveKind kind, Rng& rng, MoveStats* stats = nullptr);
  // Picks the kind uniformly.
  bool mutate(Rng& rng, MoveStats* stats = nullptr);

 private:
  struct Candidate {
    MixtureProgram program;
    double log_proposal_ratio = 0.0;  // log q(reverse) - log q(forward)
  };
  std::optional<Candidate> propose(MoveKind kind, Rng& rng) const;

  MixtureProgram program_;
  const Table* table_;
  PriorConstants constants_;
  DistProposal proposal_;
  double log_prior_ = 0.0;
  std::vector<double> block_ll_;
};

// One block per column, one cluster of weight n, prior-drawn distributions.
MixtureProgram initial_program(const TableSchema& schema, std::uint64_t n, Rng& rng,
                               const PriorConstants& c = {});

struct MixtureConfig {
  std::size_t chains = 1;
  std::size_t sweeps = 0;  // one sweep = 6 * m mutations
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  PriorConstants constants;
};

Ensemble mixture_synthesize(const Table& t, const MixtureConfig& config);

}  // namespace bsynth::mixture
