/**
 * @file
 * @brief C interface to the tube MPC library.
 *
 * Objects are opaque handles created by the library and released with the
 * matching *_free function. Every fallible call returns an iqcmpc_status;
 * the message of the last failure on the calling thread is available from
 * iqcmpc_last_error(). Strings returned by the library stay valid until the
 * owning handle is freed.
 */
#ifndef IQCMPC_H
#define IQCMPC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define IQCMPC_API __declspec(dllexport)
#else
#define IQCMPC_API __attribute__((visibility("default")))
#endif

typedef enum iqcmpc_status {
  IQCMPC_OK = 0,
  IQCMPC_ERR_INVALID_ARGUMENT = 1, /**< null handle, bad size or value */
  IQCMPC_ERR_PARSE = 2,            /**< malformed config, design or trace */
  IQCMPC_ERR_IO = 3,               /**< file cannot be read or written */
  IQCMPC_ERR_INFEASIBLE = 4,       /**< offline design has no solution */
  IQCMPC_ERR_INFEASIBLE_START = 5, /**< online problem infeasible at t = 0 */
  IQCMPC_ERR_NUMERICAL = 6,        /**< solver breakdown or iteration limit */
  IQCMPC_ERR_CONTAINMENT = 7,      /**< the plant left a certified tube */
  IQCMPC_ERR_UNSUPPORTED = 8,      /**< option not available for this plant */
  IQCMPC_ERR_INTERNAL = 9
} iqcmpc_status;

typedef struct iqcmpc_config iqcmpc_config;
typedef struct iqcmpc_design iqcmpc_design;
typedef struct iqcmpc_report iqcmpc_report;
typedef struct iqcmpc_trace iqcmpc_trace;

IQCMPC_API const char* iqcmpc_version(void);
IQCMPC_API const char* iqcmpc_status_name(iqcmpc_status status);
/** Message of the last failed call on this thread, empty after a success. */
IQCMPC_API const char* iqcmpc_last_error(void);

/* Problem configuration. */
IQCMPC_API iqcmpc_status iqcmpc_config_load(const char* path, iqcmpc_config** out);
IQCMPC_API iqcmpc_status iqcmpc_config_parse(const char* text, iqcmpc_config** out);
IQCMPC_API iqcmpc_status iqcmpc_config_save(const iqcmpc_config* cfg, const char* path);
/** Canonical YAML text of the configuration, owned by the handle. */
IQCMPC_API iqcmpc_status iqcmpc_config_serialize(iqcmpc_config* cfg, const char** text);
/** 1 when both configurations are identical matrix by matrix, 0 otherwise. */
IQCMPC_API int iqcmpc_config_equal(const iqcmpc_config* a, const iqcmpc_config* b);
IQCMPC_API size_t iqcmpc_config_state_dim(const iqcmpc_config* cfg);
IQCMPC_API int iqcmpc_config_steps(const iqcmpc_config* cfg);
IQCMPC_API uint64_t iqcmpc_config_seed(const iqcmpc_config* cfg);
IQCMPC_API size_t iqcmpc_config_initial_state_count(const iqcmpc_config* cfg);
/** Copies initial state `index` into `x` of length `nx`. */
IQCMPC_API iqcmpc_status iqcmpc_config_initial_state(const iqcmpc_config* cfg, size_t index, double* x, size_t nx);
IQCMPC_API void iqcmpc_config_free(iqcmpc_config* cfg);

/* Offline design. */
IQCMPC_API iqcmpc_status iqcmpc_synthesize(const iqcmpc_config* cfg, iqcmpc_design** out);
IQCMPC_API iqcmpc_status iqcmpc_design_load(const char* path, iqcmpc_design** out);
IQCMPC_API iqcmpc_status iqcmpc_design_save(const iqcmpc_design* design, const char* path);

typedef struct iqcmpc_design_info {
  double rho;
  double gamma;
  double lmi_margin;
  double x_omega;
  double s_omega;
  size_t nx;
  size_t rows; /**< number of constraint rows */
} iqcmpc_design_info;

IQCMPC_API iqcmpc_status iqcmpc_design_get_info(const iqcmpc_design* design, iqcmpc_design_info* info);
/** Copies the per-row tightening into `c` of length `rows`. */
IQCMPC_API iqcmpc_status iqcmpc_design_tightening(const iqcmpc_design* design, double* c, size_t rows);
/** Copies the row-major terminal cost S into `s` of length nx * nx. */
IQCMPC_API iqcmpc_status iqcmpc_design_terminal_cost(const iqcmpc_design* design, double* s, size_t len);
IQCMPC_API void iqcmpc_design_free(iqcmpc_design* design);

/* Verification. */
IQCMPC_API iqcmpc_status iqcmpc_verify(const iqcmpc_config* cfg, const iqcmpc_design* design, iqcmpc_report** out);
/** 1 when every check passed. */
IQCMPC_API int iqcmpc_report_passed(const iqcmpc_report* report);
IQCMPC_API size_t iqcmpc_report_count(const iqcmpc_report* report);
/** Name, outcome, measured value and bound of check `index`. */
IQCMPC_API iqcmpc_status iqcmpc_report_check(const iqcmpc_report* report, size_t index, const char** name,
                                             int* passed, double* value, double* bound);
/** JSON rendering, owned by the handle. */
IQCMPC_API const char* iqcmpc_report_json(const iqcmpc_report* report);
IQCMPC_API void iqcmpc_report_free(iqcmpc_report* report);

/* Closed-loop runs. */
typedef struct iqcmpc_run_options {
  int steps;
  uint64_t seed;
  int keep_every; /**< keep predicted tubes every n steps, 0 keeps only t = 0 */
} iqcmpc_run_options;

/**
 * Runs the controller from `x0`. When the online problem is infeasible at
 * t = 0 the call returns IQCMPC_ERR_INFEASIBLE_START and no trace.
 */
IQCMPC_API iqcmpc_status iqcmpc_simulate(const iqcmpc_config* cfg, const iqcmpc_design* design, const double* x0,
                                         size_t nx, const iqcmpc_run_options* opts, iqcmpc_trace** out);

typedef struct iqcmpc_run_summary {
  int steps;
  double max_violation;
  double min_containment_slack;
  int containment_violations;
  double s_terminal0;
  double s_omega;
  int suboptimal_steps;
  double worst_candidate_gap;
  double replay_residual;
  double final_norm;
} iqcmpc_run_summary;

IQCMPC_API iqcmpc_status iqcmpc_trace_summary(const iqcmpc_trace* trace, iqcmpc_run_summary* out);
IQCMPC_API size_t iqcmpc_trace_length(const iqcmpc_trace* trace);
/** CSV with columns t, x.., u, d, tau, w, s0, z0.., v0, status, cost. */
IQCMPC_API iqcmpc_status iqcmpc_trace_export(const iqcmpc_trace* trace, const char* path);
/** CSV of the kept predicted tubes with columns t, k, s, z.., s_omega. */
IQCMPC_API iqcmpc_status iqcmpc_trace_export_predictions(const iqcmpc_trace* trace, const char* path);
IQCMPC_API void iqcmpc_trace_free(iqcmpc_trace* trace);

#ifdef __cplusplus
}
#endif

#endif /* IQCMPC_H */
