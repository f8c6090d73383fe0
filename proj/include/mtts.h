/* C API for the MTTS workbench shared library.
 *
 * All functions operate through an opaque context handle and return a
 * status code. On failure, mtts_last_error() holds a description; on
 * success, mtts_last_summary() holds a short human-readable result line.
 */
#ifndef MTTS_H
#define MTTS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define MTTS_OK 0
#define MTTS_ERR_INTERNAL 1
#define MTTS_ERR_CONFIG 2        /* bad config / invalid input data */
#define MTTS_ERR_MISSING_INPUT 3 /* dataset, checkpoint, or file absent */
#define MTTS_ERR_NUMERIC 4       /* non-finite value during computation */

typedef struct mtts_ctx mtts_ctx;

mtts_ctx* mtts_ctx_new(void);
void mtts_ctx_free(mtts_ctx* ctx);

const char* mtts_last_error(const mtts_ctx* ctx);
const char* mtts_last_summary(const mtts_ctx* ctx);

/* 0 = errors only, 1 = info, 2 = debug. Default 1. */
void mtts_set_log_level(mtts_ctx* ctx, int level);
void mtts_set_threads(mtts_ctx* ctx, int threads);
/* Overrides the seed found in config files for subsequent commands. */
void mtts_set_seed_override(mtts_ctx* ctx, uint64_t seed);
void mtts_clear_seed_override(mtts_ctx* ctx);

/* Generates train/ and test/ dataset directories under out_dir from a
 * generator config file. Refuses a non-empty out_dir unless force != 0. */
int mtts_generate(mtts_ctx* ctx, const char* config_path, const char* out_dir,
                  int force);

/* Trains every spec in the experiment config; writes <type>_<method>.ckpt
 * and <type>_<method>_history.csv into out_dir. */
int mtts_train(mtts_ctx* ctx, const char* config_path, const char* out_dir);

/* Evaluates previously trained checkpoints on the pooled test set; writes
 * eval.csv into out_dir. */
int mtts_eval(mtts_ctx* ctx, const char* config_path, const char* out_dir);

/* Trains every spec and evaluates it per test-grid cell; writes checkpoints,
 * history CSVs and metrics.csv into out_dir. */
int mtts_grid(mtts_ctx* ctx, const char* config_path, const char* out_dir);

/* Reads metrics.csv from results_dir and writes marginal_ec.csv,
 * marginal_ce.csv and heatmap_<metric>.csv beside it. */
int mtts_report(mtts_ctx* ctx, const char* results_dir);

const char* mtts_version(void);

#ifdef __cplusplus
}
#endif

#endif /* MTTS_H */
