// Apache License, Version 2.0, refer to LICENSE.txt

#include <iostream>

#include <CLI11.hpp>

#include "bsynth/cli.hh"

namespace cli = bsynth::cli;

int main(int argc, char** argv) {
  CLI::App app{"Bayesian synthesis of probabilistic programs for time series and tables"};
  app.require_subcommand(1);
  cli::Streams io{std::cout, std::cerr};
  std::function<int()> run;

  std::string grammar;
  auto* check = app.add_subcommand("check-grammar", "Validate a grammar and test PCFG consistency");
  check->add_option("grammar", grammar, "Builtin name (gp) or grammar file")->required();
  check->callback([&] { run = [&] { return cli::cmd_check_grammar(grammar, io); }; });

  cli::SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Synthesize an ensemble of programs from data");
  synth->add_option("data", so.data, "CSV data file")->required();
  synth->add_option("--dsl", so.dsl, "gp or mixture")->check(CLI::IsMember({"gp", "mixture"}));
  synth->add_option("--chains", so.chains, "Independent chains (ensemble size)");
  synth->add_option("--steps", so.steps, "MH steps per chain (mixture: sweeps)");
  synth->add_option("--seed", so.seed, "Random seed");
  synth->add_option("--schedule", so.schedule, "uniform or alternating:S,P (gp)");
  synth->add_flag("--standardize", so.standardize, "Rescale xs to [0,1] and ys to unit variance (gp)");
  synth->add_option("--threads", so.threads, "Worker threads (0: all cores)");
  synth->add_option("--out", so.out, "Ensemble file (default: stdout)");
  synth->callback([&] { run = [&] { return cli::cmd_synth(so, io); }; });

  cli::QueryOptions qo;
  auto* query = app.add_subcommand("query", "Estimate structure probabilities over an ensemble");
  query->add_option("ensemble", qo.ensemble, "Ensemble file")->required();
  query->add_option("--property,-p", qo.properties, "Property expression, e.g. 'per or cp' (gp)");
  query->add_option("--properties", qo.property_file, "File of 'label: property' lines (gp)");
  query->add_option("--same-block", qo.pairs, "Column pair a,b (mixture)");
  query->add_option("--format", qo.format, "table or kv")->check(CLI::IsMember({"table", "kv"}));
  query->callback([&] { run = [&] { return cli::cmd_query(qo, io); }; });

  cli::ForecastOptions fo;
  auto* forecast = app.add_subcommand("forecast", "Pooled GP predictions at probe points");
  forecast->add_option("ensemble", fo.ensemble, "GP ensemble file")->required();
  forecast->add_option("--train", fo.train, "Training series CSV")->required();
  forecast->add_option("--probe", fo.probe, "Probe grid start:stop:count");
  forecast->add_option("--probe-file", fo.probe_file, "CSV whose first column lists probe xs");
  forecast->add_option("--heldout", fo.heldout, "Held-out series to score");
  forecast->add_option("--samples", fo.samples, "Sampled trajectories per member");
  forecast->add_option("--seed", fo.seed, "Random seed");
  forecast->add_option("--out", fo.out, "Output CSV (default: stdout)");
  forecast->callback([&] { run = [&] { return cli::cmd_forecast(fo, io); }; });

  cli::SimulateOptions mo;
  auto* simulate = app.add_subcommand("simulate", "Sample rows from a mixture ensemble");
  simulate->add_option("ensemble", mo.ensemble, "Mixture ensemble file")->required();
  simulate->add_option("--count,-n", mo.count, "Rows to draw");
  simulate->add_option("--given", mo.given, "Condition column=value");
  simulate->add_option("--seed", mo.seed, "Random seed");
  simulate->add_option("--out", mo.out, "Output CSV (default: stdout)");
  simulate->callback([&] { run = [&] { return cli::cmd_simulate(mo, io); }; });

  cli::LogpdfOptions lo;
  auto* logpdf = app.add_subcommand("logpdf", "Ensemble log-density of table rows");
  logpdf->add_option("ensemble", lo.ensemble, "Mixture ensemble file")->required();
  logpdf->add_option("rows", lo.rows, "CSV with name and type header lines")->required();
  logpdf->add_option("--out", lo.out, "Output CSV (default: stdout)");
  logpdf->callback([&] { run = [&] { return cli::cmd_logpdf(lo, io); }; });

  cli::TranslateOptions to;
  std::size_t index = 0;
  auto* translate = app.add_subcommand("translate", "Emit Venture programs");
  translate->add_option("input", to.input, "Ensemble file or a file holding one program")->required();
  auto* index_opt = translate->add_option("--index", index, "Translate only this member");
  translate->add_option("--out", to.out, "Output directory (default: stdout)");
  translate->callback([&] {
    if (*index_opt) to.index = index;
    run = [&] { return cli::cmd_translate(to, io); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }
  return run();
}
