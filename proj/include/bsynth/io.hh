// Apache License, Version 2.0, refer to LICENSE.txt

// File formats: CSV tables and series, and ensemble files.
//
// Ensemble file:
//
//   #seed: 7
//   #dsl: gp
//   -3.2<TAB>-41.07<TAB>(+ (lin (gamma 1.2)) (wn (gamma 0.3)))
//
// Header lines come first; every program line holds the log prior, the log
// likelihood and the printed program.

#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsynth/gp.hh"
#include "bsynth/mixture.hh"
#include "bsynth/synthesis.hh"

namespace bsynth::io {

// Positions are 1-based; column 0 means the whole line.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line, std::size_t column = 0);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

using CsvRecord = std::vector<std::string>;

// Comma-separated fields, whitespace-trimmed; double quotes may enclose
// commas, with "" for a literal quote. Blank lines are skipped but counted.
struct CsvLine {
  std::size_t line = 0;
  CsvRecord fields;
};
std::vector<CsvLine> read_csv(std::istream& in);

// Two header lines (names, then types: numeric, count, nominal or
// nominal:q), then one row per record. '?' or an empty cell is missing.
mixture::Table read_table(std::istream& in);
void write_rows(std::ostream& out, const mixture::TableSchema& schema,
                const std::vector<mixture::Row>& rows);

// Two columns x,y with an optional header line.
gp::TimeSeries read_series(std::istream& in);

void write_ensemble(std::ostream& out, const Ensemble& e);
Ensemble read_ensemble(std::istream& in);

// Parses a full double, rejecting trailing junk. Throws std::invalid_argument.
double parse_double(const std::string& s);

}  // namespace bsynth::io
