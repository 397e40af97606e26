// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/io.hh"

#include <charconv>
#include <cmath>
#include <optional>

namespace bsynth::io {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

std::optional<double> try_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

CsvRecord split_csv(const std::string& line, std::size_t lineno) {
  CsvRecord out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw FormatError("unterminated quote", lineno, out.size() + 1);
  out.push_back(trim(cur));
  return out;
}

bool is_missing_cell(const std::string& s) { return s.empty() || s == "?"; }

}  // namespace

FormatError::FormatError(const std::string& what, std::size_t line, std::size_t column)
    : std::runtime_error("line " + std::to_string(line) +
                         (column ? ", column " + std::to_string(column) : std::string()) + ": " +
                         what),
      line_(line),
      column_(column) {}

double parse_double(const std::string& s) {
  auto v = try_double(s);
  if (!v) throw std::invalid_argument("not a number: '" + s + "'");
  return *v;
}

std::vector<CsvLine> read_csv(std::istream& in) {
  std::vector<CsvLine> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (trim(line).empty()) continue;
    out.push_back({n, split_csv(line, n)});
  }
  return out;
}

mixture::Table read_table(std::istream& in) {
  using mixture::ColumnType;
  const auto lines = read_csv(in);
  if (lines.size() < 2) throw FormatError("expected a name line and a type line", lines.size() + 1);
  mixture::Table t;
  const auto& names = lines[0];
  const auto& types = lines[1];
  if (types.fields.size() != names.fields.size()) {
    throw FormatError("type line has " + std::to_string(types.fields.size()) + " fields, expected " +
                          std::to_string(names.fields.size()),
                      types.line);
  }
  std::vector<bool> infer_arity;
  for (std::size_t c = 0; c < names.fields.size(); ++c) {
    const std::string& ty = types.fields[c];
    mixture::Column col{names.fields[c], ColumnType::kNumeric, 0};
    if (col.name.empty()) throw FormatError("empty column name", names.line, c + 1);
    bool infer = false;
    if (ty == "count") {
      col.type = ColumnType::kCount;
    } else if (ty == "nominal") {
      col.type = ColumnType::kNominal;
      infer = true;
    } else if (ty.rfind("nominal:", 0) == 0) {
      col.type = ColumnType::kNominal;
      auto q = try_double(ty.substr(8));
      if (!q || *q != std::floor(*q) || *q < 2) {
        throw FormatError("bad nominal arity '" + ty + "'", types.line, c + 1);
      }
      col.arity = static_cast<std::size_t>(*q);
    } else if (ty != "numeric") {
      throw FormatError("unknown column type '" + ty + "'", types.line, c + 1);
    }
    t.schema.columns.push_back(col);
    t.columns.emplace_back();
    infer_arity.push_back(infer);
  }
  for (std::size_t r = 2; r < lines.size(); ++r) {
    const auto& rec = lines[r];
    if (rec.fields.size() != t.schema.size()) {
      throw FormatError("expected " + std::to_string(t.schema.size()) + " fields, found " +
                            std::to_string(rec.fields.size()),
                        rec.line);
    }
    for (std::size_t c = 0; c < rec.fields.size(); ++c) {
      const std::string& cell = rec.fields[c];
      if (is_missing_cell(cell)) {
        t.columns[c].push_back(mixture::kMissing);
        continue;
      }
      auto v = try_double(cell);
      if (!v || !std::isfinite(*v)) throw FormatError("not a number: '" + cell + "'", rec.line, c + 1);
      const auto& col = t.schema.columns[c];
      if (col.type != ColumnType::kNumeric && (*v != std::floor(*v) || *v < 0)) {
        throw FormatError(type_name(col.type) + " value must be a non-negative integer: '" + cell +
                              "'",
                          rec.line, c + 1);
      }
      if (col.type == ColumnType::kNominal) {
        if (*v < 1) throw FormatError("nominal values start at 1: '" + cell + "'", rec.line, c + 1);
        if (infer_arity[c]) {
          t.schema.columns[c].arity = std::max(t.schema.columns[c].arity, std::size_t(*v));
        } else if (*v > double(col.arity)) {
          throw FormatError("value " + cell + " exceeds nominal arity " + std::to_string(col.arity),
                            rec.line, c + 1);
        }
      }
      t.columns[c].push_back(*v);
    }
  }
  if (t.rows() == 0) throw FormatError("table has no rows", lines.back().line);
  for (std::size_t c = 0; c < t.schema.size(); ++c) {
    if (infer_arity[c]) t.schema.columns[c].arity = std::max<std::size_t>(2, t.schema.columns[c].arity);
  }
  try {
    t.schema.validate();
  } catch (const mixture::MixtureError& e) {
    throw FormatError(e.what(), names.line);
  }
  return t;
}

void write_rows(std::ostream& out, const mixture::TableSchema& schema,
                const std::vector<mixture::Row>& rows) {
  for (std::size_t c = 0; c < schema.size(); ++c) out << (c ? "," : "") << schema.columns[c].name;
  out << "\n";
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& col = schema.columns[c];
    out << (c ? "," : "") << type_name(col.type);
    if (col.type == mixture::ColumnType::kNominal) out << ":" << col.arity;
  }
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << (c ? "," : "") << (mixture::is_missing(r[c]) ? "?" : format_number(r[c]));
    }
    out << "\n";
  }
}

gp::TimeSeries read_series(std::istream& in) {
  const auto lines = read_csv(in);
  gp::TimeSeries ts;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& rec = lines[i];
    if (rec.fields.size() != 2) {
      throw FormatError("expected 2 fields (x,y), found " + std::to_string(rec.fields.size()),
                        rec.line);
    }
    auto x = try_double(rec.fields[0]);
    auto y = try_double(rec.fields[1]);
    if (i == 0 && !x && !y) continue;  // header
    if (!x || !std::isfinite(*x)) throw FormatError("not a number: '" + rec.fields[0] + "'", rec.line, 1);
    if (!y || !std::isfinite(*y)) throw FormatError("not a number: '" + rec.fields[1] + "'", rec.line, 2);
    ts.xs.push_back(*x);
    ts.ys.push_back(*y);
  }
  if (ts.size() == 0) throw FormatError("series has no observations", lines.empty() ? 1 : lines.back().line);
  return ts;
}

void write_ensemble(std::ostream& out, const Ensemble& e) {
  for (const auto& [k, v] : e.metadata) out << "#" << k << ": " << v << "\n";
  for (const auto& m : e.members) {
    out << format_number(m.log_prior) << "\t" << format_number(m.loglik) << "\t" << print(m.program)
        << "\n";
  }
}

Ensemble read_ensemble(std::istream& in) {
  Ensemble e;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!e.members.empty()) throw FormatError("header line after program lines", n);
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw FormatError("header line lacks ':'", n);
      e.set_meta(trim(line.substr(1, colon - 1)), trim(line.substr(colon + 1)));
      continue;
    }
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw FormatError("expected logprior<TAB>loglik<TAB>program", n);
    EnsembleMember m;
    auto lp = try_double(line.substr(0, t1));
    auto ll = try_double(line.substr(t1 + 1, t2 - t1 - 1));
    if (!lp) throw FormatError("bad log prior", n, 1);
    if (!ll) throw FormatError("bad log likelihood", n, 2);
    m.log_prior = *lp;
    m.loglik = *ll;
    try {
      m.program = parse(line.substr(t2 + 1));
    } catch (const ParseError& err) {
      throw FormatError(err.what(), n, 3);
    }
    e.members.push_back(std::move(m));
  }
  if (e.members.empty()) throw FormatError("ensemble has no programs", 1);
  return e;
}

}  // namespace bsynth::io
