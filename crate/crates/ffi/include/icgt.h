#ifndef ICGT_H
#define ICGT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Outcome of a call.
 */
typedef enum IcgtStatus {
  ICGT_STATUS_OK = 0,
  ICGT_STATUS_NULL_POINTER = 1,
  ICGT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Step size, attenuation weight or horizon outside its admissible range.
   */
  ICGT_STATUS_PARAMETER_VIOLATION = 3,
  ICGT_STATUS_CONFIG_ERROR = 4,
  ICGT_STATUS_IO_ERROR = 5,
  /**
   * The iterates became non-finite.
   */
  ICGT_STATUS_DIVERGED = 6,
  /**
   * The caller's buffer is too small; the error message names the required size.
   */
  ICGT_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * The simulator failed for another reason (solver, data format, ...).
   */
  ICGT_STATUS_INTERNAL = 8,
  ICGT_STATUS_PANIC = 9,
} IcgtStatus;

typedef enum IcgtTopology {
  ICGT_TOPOLOGY_RING = 0,
  ICGT_TOPOLOGY_STAR = 1,
  ICGT_TOPOLOGY_COMPLETE = 2,
  ICGT_TOPOLOGY_ERDOS_RENYI = 3,
} IcgtTopology;

typedef enum IcgtChannelKind {
  ICGT_CHANNEL_KIND_EXACT = 0,
  ICGT_CHANNEL_KIND_AWGN = 1,
  ICGT_CHANNEL_KIND_QUANTIZER = 2,
} IcgtChannelKind;

typedef enum IcgtRunStatus {
  ICGT_RUN_STATUS_CONVERGED = 0,
  ICGT_RUN_STATUS_BUDGET_EXHAUSTED = 1,
  ICGT_RUN_STATUS_DIVERGED = 2,
} IcgtRunStatus;

/**
 * Opaque communication channel handle.
 */
typedef struct IcgtChannel IcgtChannel;

/**
 * Opaque experiment configuration handle.
 */
typedef struct IcgtConfig IcgtConfig;

/**
 * Opaque mixing matrix handle.
 */
typedef struct IcgtMixing IcgtMixing;

/**
 * Opaque finished-run handle.
 */
typedef struct IcgtRun IcgtRun;

/**
 * Inputs of the closed-form convergence bound. Noise levels are per-vector
 * standard deviations.
 */
typedef struct IcgtBoundInputs {
  double dist0;
  double deviation0_norm_sq;
  double alpha;
  double gamma;
  uint64_t tau;
  double l;
  double mu;
  size_t n;
  double sigma_g;
  double sigma_c;
  size_t iterations;
} IcgtBoundInputs;

typedef struct IcgtBoundReport {
  double total;
  double geometric;
  double gradient_noise;
  double communication_noise;
  /**
   * Nonzero when the inputs satisfy the bound's admissibility conditions.
   */
  uint8_t domain_ok;
} IcgtBoundReport;

typedef struct IcgtSpectrum {
  double lambda2;
  double lambda_n;
  double spectral_gap;
} IcgtSpectrum;

/**
 * Channel description; fields not used by `kind` are ignored.
 */
typedef struct IcgtChannelSpec {
  enum IcgtChannelKind kind;
  /**
   * AWGN per-coordinate noise deviation.
   */
  double sigma_c;
  /**
   * AWGN channel gain.
   */
  double h;
  /**
   * Quantizer levels per unit.
   */
  uint32_t delta_p;
} IcgtChannelSpec;

typedef struct IcgtRunSummary {
  double alpha;
  double gamma;
  double final_opt_err;
  double final_consensus;
  enum IcgtRunStatus status;
  /**
   * Iteration of convergence or divergence; 0 when the budget ran out.
   */
  size_t status_iteration;
  size_t rows;
} IcgtRunSummary;

/**
 * One logged metric row. `psi_norm_sq` is NaN for non-tracking algorithms.
 */
typedef struct IcgtMetricRow {
  size_t iter;
  double opt_err;
  double avg_consensus;
  double stacked_consensus;
  double psi_norm_sq;
} IcgtMetricRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *icgt_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL, so
 * callers can size a buffer with `icgt_last_error_message(NULL, 0)`.
 *
 * # Safety
 * `buf` must be NULL or point to at least `len` writable bytes.
 */
size_t icgt_last_error_message(char *buf, size_t len);

/**
 * Contraction horizon τ for attenuation `gamma`, second eigenvalue `lambda2`
 * and target `delta` (use 0.0625 for the default).
 *
 * # Safety
 * `out_tau` must be NULL or valid for writes.
 */
enum IcgtStatus icgt_compute_tau(double gamma, double lambda2, double delta, uint64_t *out_tau);

/**
 * Largest step size admitted by the convergence bound.
 */
double icgt_max_step_size(uint64_t tau, double l);

/**
 * Attenuation weight `min(alpha ln T, 0.2499)`.
 */
double icgt_gamma_schedule(double alpha, size_t iterations);

/**
 * Evaluates the closed-form bound on the expected squared distance of the
 * average iterate to the optimum.
 *
 * # Safety
 * `inputs` and `report` must be NULL or valid pointers.
 */
enum IcgtStatus icgt_bound(const struct IcgtBoundInputs *inputs, struct IcgtBoundReport *report);

/**
 * Builds Metropolis weights on a `topology` graph of `n` nodes. `er_prob` is
 * the edge probability for Erdős–Rényi graphs and ignored otherwise.
 *
 * # Safety
 * `out_mixing` must be NULL or valid for writes.
 */
enum IcgtStatus icgt_mixing_new(enum IcgtTopology topology,
                                size_t n,
                                double er_prob,
                                uint64_t seed,
                                struct IcgtMixing **out_mixing);

/**
 * Wraps a caller-supplied row-major `n × n` matrix after validating it.
 *
 * # Safety
 * `weights` must point to `n * n` doubles; `out_mixing` must be valid for writes.
 */
enum IcgtStatus icgt_mixing_from_weights(const double *weights,
                                         size_t n,
                                         struct IcgtMixing **out_mixing);

/**
 * # Safety
 * `mixing` must be NULL or a handle from `icgt_mixing_new`/`icgt_mixing_from_weights`.
 */
void icgt_mixing_free(struct IcgtMixing *mixing);

/**
 * Number of nodes, or 0 for a NULL handle.
 *
 * # Safety
 * `mixing` must be NULL or a live handle.
 */
size_t icgt_mixing_size(const struct IcgtMixing *mixing);

/**
 * # Safety
 * `mixing` must be a live handle; `spectrum` must be valid for writes.
 */
enum IcgtStatus icgt_mixing_spectrum(const struct IcgtMixing *mixing,
                                     struct IcgtSpectrum *spectrum);

/**
 * Copies the weights row-major into `buf`, which must hold `n * n` values.
 *
 * # Safety
 * `mixing` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum IcgtStatus icgt_mixing_weights(const struct IcgtMixing *mixing, double *buf, size_t len);

/**
 * Creates a channel whose noise is drawn from substreams of `seed`.
 *
 * # Safety
 * `spec` must be valid for reads; `out_channel` valid for writes.
 */
enum IcgtStatus icgt_channel_new(const struct IcgtChannelSpec *spec,
                                 uint64_t seed,
                                 struct IcgtChannel **out_channel);

/**
 * # Safety
 * `channel` must be NULL or a handle from `icgt_channel_new`.
 */
void icgt_channel_free(struct IcgtChannel *channel);

/**
 * Per-coordinate bound on the received-value variance, or NaN for NULL.
 *
 * # Safety
 * `channel` must be NULL or a live handle.
 */
double icgt_channel_variance_bound(const struct IcgtChannel *channel);

/**
 * Transmits `len` values as `sender` at `iteration`, writing what the
 * receivers see into `received`. Identical arguments give identical output.
 *
 * # Safety
 * `x` and `received` must each point to `len` doubles.
 */
enum IcgtStatus icgt_channel_transmit(const struct IcgtChannel *channel,
                                      const double *x,
                                      size_t len,
                                      size_t sender,
                                      size_t iteration,
                                      double *received);

/**
 * Parses configuration text (`key = value` lines).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out_config` valid for writes.
 */
enum IcgtStatus icgt_config_parse(const char *text, struct IcgtConfig **out_config);

/**
 * Reads and parses a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_config` valid for writes.
 */
enum IcgtStatus icgt_config_load(const char *path, struct IcgtConfig **out_config);

/**
 * Replaces the master seed.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum IcgtStatus icgt_config_set_seed(struct IcgtConfig *config, uint64_t seed);

/**
 * Sets the iteration budget.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum IcgtStatus icgt_config_set_iterations(struct IcgtConfig *config, size_t iterations);

/**
 * # Safety
 * `config` must be NULL or a handle from `icgt_config_parse`/`icgt_config_load`.
 */
void icgt_config_free(struct IcgtConfig *config);

/**
 * Runs the configured experiment (including any step-size search) and
 * returns the selected run. The config's `output` key is ignored; use
 * `icgt_run_write_csv`.
 *
 * # Safety
 * `config` must be a live handle; `out_run` valid for writes.
 */
enum IcgtStatus icgt_run(const struct IcgtConfig *config, struct IcgtRun **out_run);

/**
 * # Safety
 * `run` must be NULL or a handle from `icgt_run`.
 */
void icgt_run_free(struct IcgtRun *run);

/**
 * # Safety
 * `run` must be a live handle; `summary` valid for writes.
 */
enum IcgtStatus icgt_run_summary(const struct IcgtRun *run, struct IcgtRunSummary *summary);

/**
 * Copies logged row `index`.
 *
 * # Safety
 * `run` must be a live handle; `row` valid for writes.
 */
enum IcgtStatus icgt_run_row(const struct IcgtRun *run, size_t index, struct IcgtMetricRow *row);

/**
 * Writes the run's metric CSV to `path`.
 *
 * # Safety
 * `run` must be a live handle; `path` a NUL-terminated string.
 */
enum IcgtStatus icgt_run_write_csv(const struct IcgtRun *run, const char *path);

/**
 * Runs the numerical verification grid (`full` nonzero for the large grid)
 * and reports how many checks passed out of how many ran.
 *
 * # Safety
 * `passed` and `total` must be valid for writes.
 */
enum IcgtStatus icgt_run_checks(uint8_t full, size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICGT_H */
