// Command-line front end. Uses only the C interface of the library.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iqcmpc/iqcmpc.h"

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kParse = 3,
  kInfeasibleDesign = 4,
  kInfeasibleStart = 5,
  kVerifyFailed = 6,
  kIo = 7,
};

int exit_code(iqcmpc_status s) {
  switch (s) {
    case IQCMPC_OK:
      return kOk;
    case IQCMPC_ERR_PARSE:
      return kParse;
    case IQCMPC_ERR_IO:
      return kIo;
    case IQCMPC_ERR_INFEASIBLE:
      return kInfeasibleDesign;
    case IQCMPC_ERR_INFEASIBLE_START:
      return kInfeasibleStart;
    case IQCMPC_ERR_INVALID_ARGUMENT:
      return kUsage;
    default:
      return kInternal;
  }
}

// Thrown to unwind with a status already reported.
struct Failed {
  int code;
};

void check(iqcmpc_status s, const std::string& what) {
  if (s == IQCMPC_OK) return;
  std::cerr << "error: " << what << ": " << iqcmpc_status_name(s) << ": " << iqcmpc_last_error() << '\n';
  throw Failed{exit_code(s)};
}

struct ConfigFree {
  void operator()(iqcmpc_config* p) const { iqcmpc_config_free(p); }
};
struct DesignFree {
  void operator()(iqcmpc_design* p) const { iqcmpc_design_free(p); }
};
struct ReportFree {
  void operator()(iqcmpc_report* p) const { iqcmpc_report_free(p); }
};
struct TraceFree {
  void operator()(iqcmpc_trace* p) const { iqcmpc_trace_free(p); }
};
using Config = std::unique_ptr<iqcmpc_config, ConfigFree>;
using Design = std::unique_ptr<iqcmpc_design, DesignFree>;
using Report = std::unique_ptr<iqcmpc_report, ReportFree>;
using Trace = std::unique_ptr<iqcmpc_trace, TraceFree>;

Config load_config(const std::string& path) {
  iqcmpc_config* raw = nullptr;
  check(iqcmpc_config_load(path.c_str(), &raw), "loading config");
  return Config(raw);
}

Design load_design(const std::string& path) {
  iqcmpc_design* raw = nullptr;
  check(iqcmpc_design_load(path.c_str(), &raw), "loading design");
  return Design(raw);
}

// Initial state from the command line, or entry `index` of the config.
std::vector<double> initial_state(const iqcmpc_config* cfg, const std::vector<double>& given, std::size_t index) {
  const std::size_t nx = iqcmpc_config_state_dim(cfg);
  if (!given.empty()) {
    if (given.size() != nx) {
      std::cerr << "error: --x0 needs " << nx << " values\n";
      throw Failed{kUsage};
    }
    return given;
  }
  std::vector<double> x(nx);
  check(iqcmpc_config_initial_state(cfg, index, x.data(), nx), "reading initial state from config");
  return x;
}

std::string format_state(const std::vector<double>& x) {
  std::string out = "[";
  for (std::size_t i = 0; i < x.size(); ++i) out += (i ? ", " : "") + std::to_string(x[i]);
  return out + "]";
}

struct RunArgs {
  std::string config, design;
  std::vector<double> x0;
  std::size_t state_index = 0;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
};

Trace run(const RunArgs& args, const iqcmpc_config* cfg, const iqcmpc_design* design, int keep_every,
          std::vector<double>& x0) {
  x0 = initial_state(cfg, args.x0, args.state_index);
  iqcmpc_run_options opts{args.steps.value_or(iqcmpc_config_steps(cfg)), args.seed.value_or(iqcmpc_config_seed(cfg)),
                          keep_every};
  iqcmpc_trace* raw = nullptr;
  const iqcmpc_status s = iqcmpc_simulate(cfg, design, x0.data(), x0.size(), &opts, &raw);
  if (s == IQCMPC_ERR_INFEASIBLE_START) {
    std::cout << "x0 = " << format_state(x0) << "\nstatus = infeasible at t = 0\n";
    throw Failed{kInfeasibleStart};
  }
  check(s, "simulation");
  return Trace(raw);
}

int cmd_synthesize(const std::string& config_path, const std::string& out_path) {
  const Config cfg = load_config(config_path);
  iqcmpc_design* raw = nullptr;
  check(iqcmpc_synthesize(cfg.get(), &raw), "synthesis");
  const Design design(raw);
  check(iqcmpc_design_save(design.get(), out_path.c_str()), "writing design");

  iqcmpc_design_info info{};
  check(iqcmpc_design_get_info(design.get(), &info), "reading design");
  std::vector<double> c(info.rows);
  check(iqcmpc_design_tightening(design.get(), c.data(), c.size()), "reading tightening");
  std::vector<double> s(info.nx * info.nx);
  check(iqcmpc_design_terminal_cost(design.get(), s.data(), s.size()), "reading terminal cost");

  std::printf("rho = %.6g\ngamma = %.6g\nlmi_margin = %.6g\nx_omega = %.6g\ns_omega = %.6g\n", info.rho, info.gamma,
              info.lmi_margin, info.x_omega, info.s_omega);
  std::printf("tightening =");
  for (double v : c) std::printf(" %.6g", v);
  std::printf("\nterminal_cost =");
  for (std::size_t i = 0; i < info.nx; ++i) {
    std::printf(" [");
    for (std::size_t j = 0; j < info.nx; ++j) std::printf("%s%.6g", j ? ", " : "", s[i * info.nx + j]);
    std::printf("]");
  }
  std::printf("\ndesign written to %s\n", out_path.c_str());
  return kOk;
}

int cmd_verify(const std::string& config_path, const std::string& design_path, const std::string& json_path) {
  const Config cfg = load_config(config_path);
  const Design design = load_design(design_path);
  iqcmpc_report* raw = nullptr;
  check(iqcmpc_verify(cfg.get(), design.get(), &raw), "verification");
  const Report report(raw);
  const char* json = iqcmpc_report_json(report.get());
  if (json_path.empty()) {
    std::cout << json;
  } else {
    std::FILE* f = std::fopen(json_path.c_str(), "w");
    if (!f || std::fputs(json, f) < 0) {
      if (f) std::fclose(f);
      std::cerr << "error: cannot write " << json_path << '\n';
      return kIo;
    }
    std::fclose(f);
    for (std::size_t i = 0; i < iqcmpc_report_count(report.get()); ++i) {
      const char* name = nullptr;
      int passed = 0;
      check(iqcmpc_report_check(report.get(), i, &name, &passed, nullptr, nullptr), "reading report");
      std::printf("%s %s\n", passed ? "PASS" : "FAIL", name);
    }
  }
  return iqcmpc_report_passed(report.get()) ? kOk : kVerifyFailed;
}

int cmd_simulate(const RunArgs& args, const std::string& out_path) {
  const Config cfg = load_config(args.config);
  const Design design = load_design(args.design);
  std::vector<double> x0;
  const Trace trace = run(args, cfg.get(), design.get(), 0, x0);
  if (!out_path.empty()) check(iqcmpc_trace_export(trace.get(), out_path.c_str()), "writing trace");

  iqcmpc_run_summary sum{};
  check(iqcmpc_trace_summary(trace.get(), &sum), "summarizing run");
  std::printf("x0 = %s\nsteps = %d\n", format_state(x0).c_str(), sum.steps);
  std::printf("max_constraint_violation = %.6e\n", sum.max_violation);
  std::printf("min_containment_slack = %.6e\ncontainment_violations = %d\n", sum.min_containment_slack,
              sum.containment_violations);
  std::printf("s_T_at_t0 = %.6g\ns_omega = %.6g\n", sum.s_terminal0, sum.s_omega);
  std::printf("suboptimal_steps = %d\nworst_candidate_gap = %.6e\n", sum.suboptimal_steps, sum.worst_candidate_gap);
  std::printf("replay_residual = %.3e\nfinal_state_norm = %.6e\n", sum.replay_residual, sum.final_norm);
  const bool ok = sum.max_violation <= 0.0 && sum.containment_violations == 0 && sum.replay_residual == 0.0 &&
                  sum.s_terminal0 <= sum.s_omega;
  std::printf("status = %s\n", ok ? "ok" : "guarantee violated");
  return ok ? kOk : kVerifyFailed;
}

int cmd_export(const RunArgs& args, int every, const std::string& trace_path, const std::string& predictions_path,
               const std::string& config_out) {
  const Config cfg = load_config(args.config);
  if (!config_out.empty()) check(iqcmpc_config_save(cfg.get(), config_out.c_str()), "writing config");
  if (predictions_path.empty() && trace_path.empty()) return kOk;
  if (args.design.empty()) {
    std::cerr << "error: --design is required to export run data\n";
    return kUsage;
  }
  const Design design = load_design(args.design);
  std::vector<double> x0;
  const Trace trace = run(args, cfg.get(), design.get(), every, x0);
  if (!trace_path.empty()) check(iqcmpc_trace_export(trace.get(), trace_path.c_str()), "writing trace");
  if (!predictions_path.empty())
    check(iqcmpc_trace_export_predictions(trace.get(), predictions_path.c_str()), "writing predictions");
  return kOk;
}

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--x0", args.x0, "initial state (overrides the config)")->delimiter(',');
  cmd->add_option("--state-index", args.state_index, "entry of simulation.initial_states to use");
  cmd->add_option("--steps", args.steps, "number of closed-loop steps");
  cmd->add_option("--seed", args.seed, "disturbance seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tube MPC for uncertain linear systems with IQC-described uncertainty"};
  app.require_subcommand(1);
  app.set_version_flag("--version", iqcmpc_version());

  std::string config, design, out, json;
  auto* synth = app.add_subcommand("synthesize", "offline design: tube metric, tightening, terminal set");
  synth->add_option("-c,--config", config, "problem configuration (YAML)")->required();
  synth->add_option("-o,--out", out, "design artifact to write (JSON)")->required();

  auto* verify = app.add_subcommand("verify", "re-check a design against its configuration");
  verify->add_option("-c,--config", config, "problem configuration (YAML)")->required();
  verify->add_option("-d,--design", design, "design artifact (JSON)")->required();
  verify->add_option("--json", json, "write the report here instead of stdout");

  RunArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "closed-loop run with a CSV trace and a summary");
  simulate->add_option("-c,--config", sim_args.config, "problem configuration (YAML)")->required();
  simulate->add_option("-d,--design", sim_args.design, "design artifact (JSON)")->required();
  simulate->add_option("-o,--out", out, "trace CSV to write");
  add_run_options(simulate, sim_args);

  RunArgs exp_args;
  int every = 5;
  std::string predictions, config_out;
  auto* exporter = app.add_subcommand("export", "write plotting data and the canonical configuration");
  exporter->add_option("-c,--config", exp_args.config, "problem configuration (YAML)")->required();
  exporter->add_option("-d,--design", exp_args.design, "design artifact (JSON)");
  exporter->add_option("--trace", out, "trace CSV to write");
  exporter->add_option("--predictions", predictions, "predicted tubes CSV to write");
  exporter->add_option("--every", every, "keep predicted tubes every n steps")->check(CLI::NonNegativeNumber);
  exporter->add_option("--config-out", config_out, "canonical configuration to write");
  add_run_options(exporter, exp_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synthesize(config, out);
    if (*verify) return cmd_verify(config, design, json);
    if (*simulate) return cmd_simulate(sim_args, out);
    if (*exporter) return cmd_export(exp_args, every, out, predictions, config_out);
  } catch (const Failed& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
