// Apache License, Version 2.0, refer to LICENSE.txt

// Subcommands of the bsynth tool as library functions. Each returns the
// process exit code: 0 ok, 1 semantic failure, 2 usage or I/O error.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsynth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSemantic = 1;
inline constexpr int kExitUsage = 2;

// Bad arguments or unreadable inputs (exit 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Where command output goes; tests substitute string streams.
struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// A builtin name ("gp") or a grammar file path.
int cmd_check_grammar(const std::string& source, Streams io);

struct SynthOptions {
  std::string dsl = "gp";  // gp | mixture
  std::string data;        // CSV path
  std::string out;         // ensemble path; empty writes to stdout
  std::size_t chains = 1;
  std::size_t steps = 0;  // gp: MH steps; mixture: sweeps
  std::uint64_t seed = 0;
  std::string schedule = "uniform";
  bool standardize = false;
  std::size_t threads = 0;
};
int cmd_synth(const SynthOptions& o, Streams io);

struct QueryOptions {
  std::string ensemble;
  std::vector<std::string> properties;  // gp property expressions
  std::string property_file;
  std::vector<std::string> pairs;  // mixture "a,b" column pairs (names or 1-based)
  std::string format = "table";    // table | kv
};
int cmd_query(const QueryOptions& o, Streams io);

struct ForecastOptions {
  std::string ensemble;
  std::string train;     // series the ensemble was synthesized on
  std::string probe;     // "start:stop:count" grid
  std::string probe_file;  // or a CSV whose first column lists xs
  std::string heldout;   // optional series scored under the ensemble
  std::size_t samples = 0;  // sampled trajectories per member
  std::uint64_t seed = 0;
  std::string out;
};
int cmd_forecast(const ForecastOptions& o, Streams io);

struct SimulateOptions {
  std::string ensemble;
  std::size_t count = 100;
  std::vector<std::string> given;  // "column=value"
  std::uint64_t seed = 0;
  std::string out;
};
int cmd_simulate(const SimulateOptions& o, Streams io);

struct LogpdfOptions {
  std::string ensemble;
  std::string rows;  // two-header CSV; any subset of the schema's columns
  std::string out;
};
int cmd_logpdf(const LogpdfOptions& o, Streams io);

struct TranslateOptions {
  std::string input;  // ensemble file or a file holding one program
  std::string out;    // directory for member_NNN.vnts; empty prints to stdout
  std::optional<std::size_t> index;  // translate one member only
};
int cmd_translate(const TranslateOptions& o, Streams io);

}  // namespace bsynth::cli
