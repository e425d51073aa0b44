#include <math.h>
#include <stdio.h>
#include <string.h>

#include "icgt.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      char msg[256];                                                  \
      icgt_last_error_message(msg, sizeof msg);                       \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, msg); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  uint64_t tau = 0;
  CHECK(icgt_compute_tau(0.1, 2.0 / 3.0, 0.0625, &tau) == ICGT_STATUS_OK);
  CHECK(tau == 983);
  CHECK(icgt_compute_tau(0.5, 0.5, 0.0625, &tau) == ICGT_STATUS_PARAMETER_VIOLATION);
  CHECK(icgt_last_error_message(NULL, 0) > 0);

  IcgtMixing *w = NULL;
  CHECK(icgt_mixing_new(ICGT_TOPOLOGY_STAR, 3, 0.0, 1, &w) == ICGT_STATUS_OK);
  IcgtSpectrum s;
  CHECK(icgt_mixing_spectrum(w, &s) == ICGT_STATUS_OK);
  CHECK(fabs(s.lambda2 - 2.0 / 3.0) < 1e-12);
  double weights[9];
  CHECK(icgt_mixing_weights(w, weights, 4) == ICGT_STATUS_BUFFER_TOO_SMALL);
  CHECK(icgt_mixing_weights(w, weights, 9) == ICGT_STATUS_OK);
  icgt_mixing_free(w);

  const char *cfg_text =
      "topology = ring\nn = 4\nseed = 2\nobjective.dim = 2\n"
      "channel.type = awgn\nchannel.sigma_c = 0.01\nalpha = 0.05\nT = 200\nmetric.cadence = 20\n";
  IcgtConfig *cfg = NULL;
  CHECK(icgt_config_parse(cfg_text, &cfg) == ICGT_STATUS_OK);
  IcgtRun *run = NULL;
  CHECK(icgt_run(cfg, &run) == ICGT_STATUS_OK);
  IcgtRunSummary sum;
  CHECK(icgt_run_summary(run, &sum) == ICGT_STATUS_OK);
  CHECK(sum.rows > 0 && sum.status != ICGT_RUN_STATUS_DIVERGED);
  IcgtMetricRow row;
  CHECK(icgt_run_row(run, sum.rows - 1, &row) == ICGT_STATUS_OK);
  CHECK(row.iter == 200);
  icgt_run_free(run);
  icgt_config_free(cfg);

  CHECK(icgt_config_parse("gamma = 0.5\n", &cfg) == ICGT_STATUS_CONFIG_ERROR);
  icgt_config_free(NULL);
  printf("ok %s\n", icgt_version());
  return 0;
}
