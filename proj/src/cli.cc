// Apache License, Version 2.0, refer to LICENSE.txt

#include "bsynth/cli.hh"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "bsynth/grammar.hh"
#include "bsynth/gp.hh"
#include "bsynth/hash.hh"
#include "bsynth/io.hh"
#include "bsynth/mixture.hh"
#include "bsynth/queries.hh"
#include "bsynth/synthesis.hh"
#include "bsynth/translate.hh"

namespace bsynth::cli {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Wraps a command body, mapping exceptions to exit codes.
int guarded(Streams io, const std::function<int()>& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::FormatError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const GrammarParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const queries::PropertyParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitSemantic;
  }
}

// Writes `text` to `path`, or to the stream when the path is empty.
void emit(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
  if (!out) throw UsageError("error writing '" + path + "'");
}

// Human-readable summaries go to stdout unless stdout carries the data.
std::ostream& summary_stream(const std::string& out_path, Streams io) {
  return out_path.empty() ? io.err : io.out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Ensemble load_ensemble(const std::string& path) {
  std::istringstream in(read_file(path));
  try {
    return io::read_ensemble(in);
  } catch (const io::FormatError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::string require_meta(const Ensemble& e, const std::string& key) {
  auto v = e.meta(key);
  if (!v) throw UsageError("ensemble lacks '#" + key + "' header");
  return *v;
}

std::string ensemble_dsl(const Ensemble& e) {
  const std::string dsl = require_meta(e, "dsl");
  if (dsl != "gp" && dsl != "mixture") throw UsageError("unknown dsl '" + dsl + "'");
  return dsl;
}

void require_dsl(const Ensemble& e, const std::string& want, const std::string& command) {
  if (ensemble_dsl(e) != want) throw UsageError(command + " needs a " + want + " ensemble");
}

gp::TimeSeries load_series(const std::string& path) {
  std::istringstream in(read_file(path));
  try {
    return io::read_series(in);
  } catch (const io::FormatError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

mixture::Table load_table(const std::string& path) {
  std::istringstream in(read_file(path));
  try {
    return io::read_table(in);
  } catch (const io::FormatError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

gp::Standardizer standardizer_of(const Ensemble& e) {
  if (e.meta("standardize").value_or("0") != "1") return gp::Standardizer::identity();
  auto num = [&](const std::string& k) { return io::parse_double(require_meta(e, k)); };
  return {num("x-offset"), num("x-scale"), num("y-offset"), num("y-scale")};
}

struct MixtureEnsemble {
  mixture::TableSchema schema;
  std::uint64_t rows = 0;
  std::vector<mixture::MixtureProgram> programs;
};

MixtureEnsemble mixture_programs(const Ensemble& e) {
  MixtureEnsemble m;
  m.schema = mixture::TableSchema::parse(require_meta(e, "schema"));
  m.rows = static_cast<std::uint64_t>(io::parse_double(require_meta(e, "rows")));
  for (const auto& mem : e.members) m.programs.push_back(mixture::from_expr(mem.program, m.schema, m.rows));
  return m;
}

// Schema and row count implied by a standalone mixture program.
std::pair<mixture::TableSchema, std::uint64_t> infer_schema(const Expr& program) {
  using mixture::ColumnType;
  std::map<std::size_t, mixture::Column> cols;
  std::uint64_t n = 0;
  for (std::size_t b = 0; b < program.num_children(); ++b) {
    const Expr& blk = program.child(b);
    std::uint64_t total = 0;
    for (std::size_t c = 1; c < blk.num_children(); ++c) {
      const Expr& cl = blk.child(c);
      if (!cl.atoms().empty()) total += static_cast<std::uint64_t>(cl.number(0));
      for (const auto& var : cl.children()) {
        if (var.atoms().empty() || var.num_children() != 1) continue;
        const auto col = static_cast<std::size_t>(var.number(0));
        const Expr& d = var.child(0);
        mixture::Column column{"var" + std::to_string(col), ColumnType::kNumeric, 0};
        if (d.tag() == "poisson") column.type = ColumnType::kCount;
        if (d.tag() == "categorical") {
          column.type = ColumnType::kNominal;
          column.arity = d.atoms().size();
        }
        cols[col] = column;
      }
    }
    if (b == 0) n = total;
  }
  mixture::TableSchema schema;
  for (std::size_t c = 1; c <= cols.size(); ++c) {
    auto it = cols.find(c);
    if (it == cols.end()) throw UsageError("program does not mention column " + std::to_string(c));
    schema.columns.push_back(it->second);
  }
  return {schema, n};
}

std::size_t resolve_column(const mixture::TableSchema& schema, const std::string& token) {
  if (auto c = schema.find(token)) return *c;
  if (!token.empty() && std::all_of(token.begin(), token.end(), ::isdigit)) {
    const std::size_t c = std::stoul(token);
    if (c >= 1 && c <= schema.size()) return c;
  }
  throw UsageError("unknown column '" + token + "'");
}

std::vector<double> probe_points(const ForecastOptions& o) {
  std::vector<double> xs;
  if (!o.probe_file.empty()) {
    std::istringstream in(read_file(o.probe_file));
    const auto lines = io::read_csv(in);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string& cell = lines[i].fields.at(0);
      try {
        xs.push_back(io::parse_double(cell));
      } catch (const std::invalid_argument&) {
        if (i == 0) continue;  // header
        throw io::FormatError("not a number: '" + cell + "'", lines[i].line, 1);
      }
    }
  } else if (!o.probe.empty()) {
    std::istringstream in(o.probe);
    std::string a, b, c;
    if (!std::getline(in, a, ':') || !std::getline(in, b, ':') || !std::getline(in, c) ||
        c.find(':') != std::string::npos) {
      throw UsageError("probe must look like start:stop:count");
    }
    double start, stop, count;
    try {
      start = io::parse_double(a);
      stop = io::parse_double(b);
      count = io::parse_double(c);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("bad probe: ") + e.what());
    }
    if (count < 1 || count != std::floor(count)) throw UsageError("probe count must be a positive integer");
    const auto k = static_cast<std::size_t>(count);
    for (std::size_t i = 0; i < k; ++i) {
      xs.push_back(k == 1 ? start : start + (stop - start) * double(i) / double(k - 1));
    }
  }
  if (xs.empty()) throw UsageError("no probe points (use --probe or --probe-file)");
  return xs;
}

}  // namespace

int cmd_check_grammar(const std::string& source, Streams io) {
  return guarded(io, [&] {
    Grammar g = source == "gp" ? gp::gp_grammar() : parse_grammar(read_file(source));
    io.out << "grammar: " << source << "\n";
    io.out << "nonterminals: " << g.nonterminals().size() << ", rules: " << g.rules().size() << "\n";
    const auto report = validate(g);
    if (report.ok()) {
      io.out << "validation: ok\n";
    } else {
      io.out << "validation: " << report.violations.size() << " problem(s)\n";
      for (const auto& v : report.violations) io.out << "  " << v << "\n";
      return kExitSemantic;
    }
    const auto c = check_consistency(g);
    io.out << "spectral radius: " << fmt("%.8f", c.spectral_radius) << "\n";
    io.out << "eigenvalue moduli:";
    for (const auto& ev : c.eigenvalues) io.out << " " << fmt("%.8f", std::abs(ev));
    io.out << "\nconsistent: " << (c.consistent ? "yes" : "no") << "\n";
    return c.consistent ? kExitOk : kExitSemantic;
  });
}

int cmd_synth(const SynthOptions& o, Streams io) {
  return guarded(io, [&] {
    if (o.chains == 0) throw UsageError("--chains must be at least 1");
    if (o.data.empty()) throw UsageError("synth needs a data file");
    MoveSchedule schedule;
    try {
      schedule = MoveSchedule::parse(o.schedule);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const std::string raw = read_file(o.data);
    Ensemble ens;
    if (o.dsl == "gp") {
      const gp::TimeSeries ts = load_series(o.data);
      const auto st = o.standardize ? gp::Standardizer::fit(ts) : gp::Standardizer::identity();
      gp::GpLikelihood lik(st.apply(ts));
      SynthConfig cfg{o.chains, o.steps, o.seed, schedule, o.threads};
      ens = synthesize(gp::gp_grammar(), lik, cfg);
      ens.set_meta("dsl", "gp");
      ens.set_meta("standardize", o.standardize ? "1" : "0");
      if (o.standardize) {
        ens.set_meta("x-offset", format_number(st.x_offset));
        ens.set_meta("x-scale", format_number(st.x_scale));
        ens.set_meta("y-offset", format_number(st.y_offset));
        ens.set_meta("y-scale", format_number(st.y_scale));
      }
    } else if (o.dsl == "mixture") {
      if (o.standardize) throw UsageError("--standardize applies to gp only");
      if (o.schedule != "uniform") throw UsageError("--schedule applies to gp only");
      const mixture::Table t = load_table(o.data);
      mixture::MixtureConfig cfg;
      cfg.chains = o.chains;
      cfg.sweeps = o.steps;
      cfg.seed = o.seed;
      cfg.threads = o.threads;
      ens = mixture::mixture_synthesize(t, cfg);
    } else {
      throw UsageError("unknown dsl '" + o.dsl + "' (expected gp or mixture)");
    }
    ens.set_meta("data-hash", hex64(fnv1a(raw)));

    std::ostringstream text;
    io::write_ensemble(text, ens);
    emit(o.out, text.str(), io.out);

    std::size_t steps = 0, accepts = 0;
    double ll_sum = 0, joint_sum = 0, joint_max = -INFINITY;
    for (const auto& m : ens.members) {
      steps += m.steps;
      accepts += m.accepts;
      ll_sum += m.loglik;
      joint_sum += m.log_prior + m.loglik;
      joint_max = std::max(joint_max, m.log_prior + m.loglik);
    }
    const double k = static_cast<double>(ens.members.size());
    std::ostream& s = summary_stream(o.out, io);
    s << "programs: " << ens.members.size() << "\n";
    s << "acceptance rate: " << fmt("%.4f", steps ? double(accepts) / double(steps) : 0.0) << "\n";
    s << "mean loglik: " << fmt("%.6g", ll_sum / k) << "\n";
    s << "mean log joint: " << fmt("%.6g", joint_sum / k) << "\n";
    s << "max log joint: " << fmt("%.6g", joint_max) << "\n";
    return kExitOk;
  });
}

int cmd_query(const QueryOptions& o, Streams io) {
  return guarded(io, [&] {
    if (o.format != "table" && o.format != "kv") throw UsageError("--format is table or kv");
    const Ensemble ens = load_ensemble(o.ensemble);
    std::vector<queries::ReportRow> rows;
    std::string header;
    if (ensemble_dsl(ens) == "gp") {
      if (!o.pairs.empty()) throw UsageError("--same-block needs a mixture ensemble");
      std::vector<queries::Property> props;
      if (!o.property_file.empty()) props = queries::parse_property_file(read_file(o.property_file));
      for (const auto& p : o.properties) props.push_back(queries::parse_property(p));
      if (props.empty()) throw UsageError("no properties given");
      for (const auto& p : props) rows.push_back({p.name, queries::estimate_property(ens, p)});
      header = "property";
    } else {
      if (!o.properties.empty() || !o.property_file.empty()) {
        throw UsageError("properties apply to gp ensembles; use --same-block");
      }
      if (o.pairs.empty()) throw UsageError("no column pairs given");
      const auto schema = mixture::TableSchema::parse(require_meta(ens, "schema"));
      for (const auto& pair : o.pairs) {
        const auto comma = pair.find(',');
        if (comma == std::string::npos) throw UsageError("column pair must look like a,b");
        const std::size_t a = resolve_column(schema, pair.substr(0, comma));
        const std::size_t b = resolve_column(schema, pair.substr(comma + 1));
        rows.push_back({schema.columns[a - 1].name + "~" + schema.columns[b - 1].name,
                        queries::mixture_same_block(ens, a, b)});
      }
      header = "pair";
    }
    if (o.format == "kv") {
      io.out << queries::format_key_value(rows);
    } else {
      io.out << queries::format_table(rows, header);
      if (header == "pair") {
        for (const auto& r : rows) {
          io.out << r.name << ": "
                 << (r.probability >= queries::kDependenceThreshold ? "dependent" : "not detected")
                 << "\n";
        }
      }
    }
    return kExitOk;
  });
}

int cmd_forecast(const ForecastOptions& o, Streams io) {
  return guarded(io, [&] {
    const Ensemble ens = load_ensemble(o.ensemble);
    require_dsl(ens, "gp", "forecast");
    if (o.train.empty()) throw UsageError("forecast needs the training series (--train)");
    const std::string raw = read_file(o.train);
    if (auto h = ens.meta("data-hash"); h && *h != hex64(fnv1a(raw))) {
      io.err << "warning: training file differs from the one the ensemble was synthesized on\n";
    }
    const gp::TimeSeries train_raw = load_series(o.train);
    const auto st = standardizer_of(ens);
    const gp::TimeSeries train = st.apply(train_raw);
    const std::vector<double> xs = probe_points(o);
    std::vector<double> probe;
    for (double x : xs) probe.push_back(st.x_to_model(x));

    const std::size_t p = xs.size();
    std::vector<double> mean_sum(p, 0.0), second_sum(p, 0.0);
    std::vector<std::vector<std::vector<double>>> samples;  // member -> draw -> point
    std::vector<std::size_t> used;
    Rng rng(o.seed);
    for (std::size_t m = 0; m < ens.members.size(); ++m) {
      gp::GpPredictive pred;
      try {
        pred = gp::gp_predict(ens.members[m].program, train, probe);
      } catch (const gp::NumericalError& e) {
        io.err << "warning: member " << m << " skipped: " << e.what() << "\n";
        continue;
      }
      used.push_back(m);
      for (std::size_t i = 0; i < p; ++i) {
        const double mu = st.y_from_model(pred.mean(i));
        const double var = st.var_from_model(pred.cov(i, i) + gp::kJitter);
        mean_sum[i] += mu;
        second_sum[i] += var + mu * mu;
      }
      if (o.samples) {
        auto draws = gp::sample_predictive(pred, o.samples, rng);
        for (auto& d : draws) {
          for (auto& v : d) v = st.y_from_model(v);
        }
        samples.push_back(std::move(draws));
      }
    }
    if (used.empty()) throw std::runtime_error("no ensemble member could be conditioned on the data");

    const double k = static_cast<double>(used.size());
    std::ostringstream csv;
    csv << "probe_x,mean,var";
    for (std::size_t j = 0; j < samples.size(); ++j) {
      for (std::size_t s = 0; s < o.samples; ++s) csv << ",m" << used[j] << "_s" << s;
    }
    csv << "\n";
    for (std::size_t i = 0; i < p; ++i) {
      const double mean = mean_sum[i] / k;
      const double var = std::max(0.0, second_sum[i] / k - mean * mean);
      csv << format_number(xs[i]) << "," << format_number(mean) << "," << format_number(var);
      for (const auto& member : samples) {
        for (const auto& draw : member) csv << "," << format_number(draw[i]);
      }
      csv << "\n";
    }
    emit(o.out, csv.str(), io.out);

    std::ostream& s = summary_stream(o.out, io);
    s << "members used: " << used.size() << " of " << ens.members.size() << "\n";
    if (!o.heldout.empty()) {
      const gp::TimeSeries test_raw = load_series(o.heldout);
      const gp::TimeSeries test = st.apply(test_raw);
      // Report densities in data units.
      const double jac = static_cast<double>(test.size()) * std::log(st.y_scale);
      double total = 0.0;
      for (std::size_t m : used) total += gp::gp_heldout_loglik(ens.members[m].program, train, test) - jac;
      s << "held-out loglik (ensemble mean): " << fmt("%.6f", total / k) << "\n";
    }
    return kExitOk;
  });
}

int cmd_simulate(const SimulateOptions& o, Streams io) {
  return guarded(io, [&] {
    const Ensemble ens = load_ensemble(o.ensemble);
    require_dsl(ens, "mixture", "simulate");
    const MixtureEnsemble me = mixture_programs(ens);
    mixture::Row cond(me.schema.size(), mixture::kMissing);
    for (const auto& g : o.given) {
      const auto eq = g.find('=');
      if (eq == std::string::npos) throw UsageError("condition must look like column=value");
      const std::size_t c = resolve_column(me.schema, g.substr(0, eq));
      try {
        cond[c - 1] = io::parse_double(g.substr(eq + 1));
      } catch (const std::invalid_argument& e) {
        throw UsageError("condition '" + g + "': " + e.what());
      }
    }
    // Members are reweighted by how well they explain the conditions.
    std::vector<double> logw;
    for (const auto& p : me.programs) logw.push_back(mixture::mixture_logpdf(p, cond));
    if (*std::max_element(logw.begin(), logw.end()) == kNegInf) {
      throw std::runtime_error("the conditions have zero probability under every member");
    }
    Rng rng(o.seed);
    std::vector<mixture::Row> rows;
    for (std::size_t i = 0; i < o.count; ++i) {
      const std::size_t m = sample_log_categorical(rng, logw);
      rows.push_back(mixture::mixture_simulate(me.programs[m], me.schema, cond, 1, rng).front());
    }
    std::ostringstream csv;
    io::write_rows(csv, me.schema, rows);
    emit(o.out, csv.str(), io.out);
    return kExitOk;
  });
}

int cmd_logpdf(const LogpdfOptions& o, Streams io) {
  return guarded(io, [&] {
    const Ensemble ens = load_ensemble(o.ensemble);
    require_dsl(ens, "mixture", "logpdf");
    const MixtureEnsemble me = mixture_programs(ens);
    const mixture::Table t = load_table(o.rows);
    std::vector<std::size_t> target;
    for (const auto& col : t.schema.columns) {
      const auto c = me.schema.find(col.name);
      if (!c) throw UsageError("unknown column '" + col.name + "'");
      const auto& want = me.schema.columns[*c - 1];
      if (want.type != col.type) {
        throw UsageError("column '" + col.name + "' is " + mixture::type_name(want.type) + ", not " +
                         mixture::type_name(col.type));
      }
      target.push_back(*c - 1);
    }
    std::ostringstream csv;
    csv << "row,logpdf,sd,min,max\n";
    double sum = 0.0;
    const double m = static_cast<double>(me.programs.size());
    for (std::size_t r = 0; r < t.rows(); ++r) {
      mixture::Row row(me.schema.size(), mixture::kMissing);
      for (std::size_t c = 0; c < target.size(); ++c) row[target[c]] = t.at(r, c + 1);
      std::vector<double> l;
      for (const auto& p : me.programs) l.push_back(mixture::mixture_logpdf(p, row));
      const double pooled = log_sum_exp(l) - std::log(m);
      const double mean = std::accumulate(l.begin(), l.end(), 0.0) / m;
      double ss = 0.0;
      for (double v : l) ss += (v - mean) * (v - mean);
      const auto [lo, hi] = std::minmax_element(l.begin(), l.end());
      csv << (r + 1) << "," << format_number(pooled) << "," << format_number(std::sqrt(ss / m)) << ","
          << format_number(*lo) << "," << format_number(*hi) << "\n";
      sum += pooled;
    }
    emit(o.out, csv.str(), io.out);
    summary_stream(o.out, io) << "rows: " << t.rows() << ", mean logpdf: "
                              << fmt("%.6f", sum / static_cast<double>(t.rows())) << "\n";
    return kExitOk;
  });
}

int cmd_translate(const TranslateOptions& o, Streams io) {
  return guarded(io, [&] {
    const std::string raw = read_file(o.input);
    const auto first = raw.find_first_not_of(" \t\r\n");
    std::vector<VentureText> texts;
    if (first != std::string::npos && raw[first] == '(') {
      Expr program;
      try {
        program = parse(raw);
      } catch (const ParseError& e) {
        throw UsageError(o.input + ": " + e.what());
      }
      if (program.tag() == "partition") {
        const auto [schema, n] = infer_schema(program);
        texts.push_back(mixture_to_venture(mixture::from_expr(program, schema, n)));
      } else {
        texts.push_back(gp_to_venture(program));
      }
    } else {
      const Ensemble ens = load_ensemble(o.input);
      if (ensemble_dsl(ens) == "gp") {
        for (const auto& m : ens.members) texts.push_back(gp_to_venture(m.program));
      } else {
        for (const auto& p : mixture_programs(ens).programs) texts.push_back(mixture_to_venture(p));
      }
    }
    std::vector<std::size_t> which(texts.size());
    std::iota(which.begin(), which.end(), 0);
    if (o.index) {
      if (*o.index >= texts.size()) {
        throw UsageError("index " + std::to_string(*o.index) + " out of range (" +
                         std::to_string(texts.size()) + " programs)");
      }
      which = {*o.index};
    }
    auto render = [&](std::size_t i) {
      return "// source " + hex64(texts[i].source_hash) + "\n" + texts[i].text;
    };
    if (o.out.empty()) {
      for (std::size_t j = 0; j < which.size(); ++j) io.out << (j ? "\n" : "") << render(which[j]);
      return kExitOk;
    }
    std::error_code ec;
    std::filesystem::create_directories(o.out, ec);
    if (ec) throw UsageError("cannot create '" + o.out + "': " + ec.message());
    for (std::size_t i : which) {
      char name[32];
      std::snprintf(name, sizeof name, "member_%03zu.vnts", i);
      emit((std::filesystem::path(o.out) / name).string(), render(i), io.out);
    }
    io.out << "wrote " << which.size() << " file(s) to " << o.out << "\n";
    return kExitOk;
  });
}

}  // namespace bsynth::cli
