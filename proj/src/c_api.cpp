#include "iqcmpc/iqcmpc.h"

#include <exception>
#include <new>
#include <string>

#include "iqcmpc/pipeline.hpp"

struct iqcmpc_config {
  iqcmpc::ProblemConfig cfg;
  std::string text;
};

struct iqcmpc_design {
  iqcmpc::DesignArtifact art;
};

struct iqcmpc_report {
  iqcmpc::VerifyReport report;
  std::string json;
};

struct iqcmpc_trace {
  iqcmpc::SimTrace trace;
  iqcmpc::RunSummary summary;
};

namespace {

thread_local std::string last_error;

iqcmpc_status status_of(iqcmpc::ErrorCode code) {
  using iqcmpc::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
      return IQCMPC_ERR_INVALID_ARGUMENT;
    case ErrorCode::Parse:
      return IQCMPC_ERR_PARSE;
    case ErrorCode::Io:
      return IQCMPC_ERR_IO;
    case ErrorCode::Infeasible:
    case ErrorCode::NoTerminalSet:
    case ErrorCode::NotStabilizable:
    case ErrorCode::NotSchurStable:
      return IQCMPC_ERR_INFEASIBLE;
    case ErrorCode::NumericalFailure:
    case ErrorCode::IllConditioned:
    case ErrorCode::MaxIterations:
    case ErrorCode::EnumerationBudget:
      return IQCMPC_ERR_NUMERICAL;
    case ErrorCode::ContainmentBroken:
      return IQCMPC_ERR_CONTAINMENT;
    case ErrorCode::UnsupportedMode:
      return IQCMPC_ERR_UNSUPPORTED;
  }
  return IQCMPC_ERR_INTERNAL;
}

iqcmpc_status failure(iqcmpc_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs body, translating exceptions into status codes.
template <typename F>
iqcmpc_status guarded(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const iqcmpc::Error& e) {
    return failure(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return failure(IQCMPC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return failure(IQCMPC_ERR_INTERNAL, e.what());
  } catch (...) {
    return failure(IQCMPC_ERR_INTERNAL, "unknown failure");
  }
}

bool missing(const void* p) { return p == nullptr; }

}  // namespace

extern "C" {

const char* iqcmpc_version(void) { return "1.0.0"; }

const char* iqcmpc_status_name(iqcmpc_status status) {
  switch (status) {
    case IQCMPC_OK:
      return "ok";
    case IQCMPC_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case IQCMPC_ERR_PARSE:
      return "parse error";
    case IQCMPC_ERR_IO:
      return "i/o error";
    case IQCMPC_ERR_INFEASIBLE:
      return "infeasible design";
    case IQCMPC_ERR_INFEASIBLE_START:
      return "infeasible initial state";
    case IQCMPC_ERR_NUMERICAL:
      return "numerical failure";
    case IQCMPC_ERR_CONTAINMENT:
      return "containment broken";
    case IQCMPC_ERR_UNSUPPORTED:
      return "unsupported";
    case IQCMPC_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown";
}

const char* iqcmpc_last_error(void) { return last_error.c_str(); }

iqcmpc_status iqcmpc_config_load(const char* path, iqcmpc_config** out) {
  if (missing(path) || missing(out)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new iqcmpc_config{iqcmpc::load_config(path), {}};
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_config_parse(const char* text, iqcmpc_config** out) {
  if (missing(text) || missing(out)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new iqcmpc_config{iqcmpc::parse_config(text), {}};
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_config_save(const iqcmpc_config* cfg, const char* path) {
  if (missing(cfg) || missing(path)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    iqcmpc::save_config(cfg->cfg, path);
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_config_serialize(iqcmpc_config* cfg, const char** text) {
  if (missing(cfg) || missing(text)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    cfg->text = iqcmpc::serialize_config(cfg->cfg);
    *text = cfg->text.c_str();
    return IQCMPC_OK;
  });
}

int iqcmpc_config_equal(const iqcmpc_config* a, const iqcmpc_config* b) {
  if (missing(a) || missing(b)) return 0;
  return iqcmpc::same_config(a->cfg, b->cfg) ? 1 : 0;
}

size_t iqcmpc_config_state_dim(const iqcmpc_config* cfg) {
  return missing(cfg) ? 0 : static_cast<size_t>(cfg->cfg.sys.nx());
}

int iqcmpc_config_steps(const iqcmpc_config* cfg) { return missing(cfg) ? 0 : cfg->cfg.steps; }

uint64_t iqcmpc_config_seed(const iqcmpc_config* cfg) { return missing(cfg) ? 0 : cfg->cfg.seed; }

size_t iqcmpc_config_initial_state_count(const iqcmpc_config* cfg) {
  return missing(cfg) ? 0 : cfg->cfg.initial_states.size();
}

iqcmpc_status iqcmpc_config_initial_state(const iqcmpc_config* cfg, size_t index, double* x, size_t nx) {
  if (missing(cfg) || missing(x)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  if (index >= cfg->cfg.initial_states.size()) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "no such initial state");
  const iqcmpc::Vector& x0 = cfg->cfg.initial_states[index];
  if (nx != static_cast<size_t>(x0.size())) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "state length mismatch");
  for (size_t i = 0; i < nx; ++i) x[i] = x0(static_cast<iqcmpc::Index>(i));
  last_error.clear();
  return IQCMPC_OK;
}

void iqcmpc_config_free(iqcmpc_config* cfg) { delete cfg; }

iqcmpc_status iqcmpc_synthesize(const iqcmpc_config* cfg, iqcmpc_design** out) {
  if (missing(cfg) || missing(out)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new iqcmpc_design{iqcmpc::synthesize(cfg->cfg)};
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_design_load(const char* path, iqcmpc_design** out) {
  if (missing(path) || missing(out)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new iqcmpc_design{iqcmpc::load_design(path)};
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_design_save(const iqcmpc_design* design, const char* path) {
  if (missing(design) || missing(path)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    iqcmpc::save_design(design->art, path);
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_design_get_info(const iqcmpc_design* design, iqcmpc_design_info* info) {
  if (missing(design) || missing(info)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  const auto& art = design->art;
  *info = {art.tube.rho,
           art.tube.gamma,
           art.lmi_margin,
           art.terminal.x_omega,
           art.terminal.s_omega,
           static_cast<size_t>(art.tube.nx()),
           static_cast<size_t>(art.tube.c.size())};
  last_error.clear();
  return IQCMPC_OK;
}

iqcmpc_status iqcmpc_design_tightening(const iqcmpc_design* design, double* c, size_t rows) {
  if (missing(design) || missing(c)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  const iqcmpc::Vector& tight = design->art.tube.c;
  if (rows != static_cast<size_t>(tight.size())) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "row count mismatch");
  for (size_t i = 0; i < rows; ++i) c[i] = tight(static_cast<iqcmpc::Index>(i));
  last_error.clear();
  return IQCMPC_OK;
}

iqcmpc_status iqcmpc_design_terminal_cost(const iqcmpc_design* design, double* s, size_t len) {
  if (missing(design) || missing(s)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  const iqcmpc::Matrix& m = design->art.terminal.s_mat.mat();
  if (len != static_cast<size_t>(m.size())) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "length mismatch");
  for (iqcmpc::Index i = 0; i < m.rows(); ++i)
    for (iqcmpc::Index j = 0; j < m.cols(); ++j) s[i * m.cols() + j] = m(i, j);
  last_error.clear();
  return IQCMPC_OK;
}

void iqcmpc_design_free(iqcmpc_design* design) { delete design; }

iqcmpc_status iqcmpc_verify(const iqcmpc_config* cfg, const iqcmpc_design* design, iqcmpc_report** out) {
  if (missing(cfg) || missing(design) || missing(out)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    iqcmpc::VerifyReport rep = iqcmpc::verify_design(cfg->cfg, design->art);
    std::string json = rep.to_json();
    *out = new iqcmpc_report{std::move(rep), std::move(json)};
    return IQCMPC_OK;
  });
}

int iqcmpc_report_passed(const iqcmpc_report* report) {
  return !missing(report) && report->report.passed() ? 1 : 0;
}

size_t iqcmpc_report_count(const iqcmpc_report* report) { return missing(report) ? 0 : report->report.checks.size(); }

iqcmpc_status iqcmpc_report_check(const iqcmpc_report* report, size_t index, const char** name, int* passed,
                                  double* value, double* bound) {
  if (missing(report)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  if (index >= report->report.checks.size()) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "no such check");
  const iqcmpc::CheckResult& c = report->report.checks[index];
  if (name) *name = c.name.c_str();
  if (passed) *passed = c.passed ? 1 : 0;
  if (value) *value = c.value;
  if (bound) *bound = c.bound;
  last_error.clear();
  return IQCMPC_OK;
}

const char* iqcmpc_report_json(const iqcmpc_report* report) { return missing(report) ? "" : report->json.c_str(); }

void iqcmpc_report_free(iqcmpc_report* report) { delete report; }

iqcmpc_status iqcmpc_simulate(const iqcmpc_config* cfg, const iqcmpc_design* design, const double* x0, size_t nx,
                              const iqcmpc_run_options* opts, iqcmpc_trace** out) {
  if (missing(cfg) || missing(design) || missing(x0) || missing(opts) || missing(out))
    return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  if (nx != static_cast<size_t>(cfg->cfg.sys.nx())) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "state length mismatch");
  if (opts->steps < 0 || opts->keep_every < 0) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "negative step count");
  return guarded([&] {
    iqcmpc::RunRequest req;
    req.x0 = Eigen::Map<const iqcmpc::Vector>(x0, static_cast<iqcmpc::Index>(nx));
    req.steps = opts->steps;
    req.seed = opts->seed;
    req.keep_every = opts->keep_every;
    iqcmpc::SimTrace trace = iqcmpc::run_closed_loop(cfg->cfg, design->art, req);
    if (trace.infeasible_start)
      return failure(IQCMPC_ERR_INFEASIBLE_START, "the online problem is infeasible at t = 0");
    const iqcmpc::RunSummary summary = iqcmpc::summarize(trace, cfg->cfg, design->art);
    *out = new iqcmpc_trace{std::move(trace), summary};
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_trace_summary(const iqcmpc_trace* trace, iqcmpc_run_summary* out) {
  if (missing(trace) || missing(out)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  const iqcmpc::RunSummary& s = trace->summary;
  *out = {s.steps,           s.max_violation,       s.min_containment_slack, s.containment_violations,
          s.s_terminal0,     s.s_omega,             s.suboptimal_steps,      s.worst_candidate_gap,
          s.replay_residual, s.final_norm};
  last_error.clear();
  return IQCMPC_OK;
}

size_t iqcmpc_trace_length(const iqcmpc_trace* trace) { return missing(trace) ? 0 : trace->trace.size(); }

iqcmpc_status iqcmpc_trace_export(const iqcmpc_trace* trace, const char* path) {
  if (missing(trace) || missing(path)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    iqcmpc::export_trace(trace->trace, path);
    return IQCMPC_OK;
  });
}

iqcmpc_status iqcmpc_trace_export_predictions(const iqcmpc_trace* trace, const char* path) {
  if (missing(trace) || missing(path)) return failure(IQCMPC_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    iqcmpc::export_predictions(trace->trace, trace->summary.s_omega, path);
    return IQCMPC_OK;
  });
}

void iqcmpc_trace_free(iqcmpc_trace* trace) { delete trace; }

}  // extern "C"
