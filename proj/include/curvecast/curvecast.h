#ifndef CURVECAST_H
#define CURVECAST_H

/* C API for the curvecast library.
 *
 * A cc_run wraps one run configuration and an output directory; executing a
 * stage reads its inputs from and writes its artifacts into that directory,
 * so stages can be driven one process at a time or all at once ("run").
 * Every entry point returns a cc_status; on error, cc_run_last_error holds a
 * human-readable message until the next call on the same handle.
 */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CC_API __declspec(dllexport)
#elif defined(CURVECAST_BUILD_SHARED)
#define CC_API __attribute__((visibility("default")))
#else
#define CC_API
#endif

typedef enum cc_status {
    CC_OK = 0,
    CC_ERR_CONFIG = 1,  /* invalid configuration or arguments */
    CC_ERR_DATA = 2,    /* missing/malformed input or artifact */
    CC_ERR_NUMERIC = 3  /* numerical failure (divergence, non-finite values) */
} cc_status;

typedef struct cc_run cc_run;

CC_API const char* cc_version(void);

/* Creates a run from a JSON config file. Returns NULL only on allocation
 * failure; config errors are reported by the first cc_run_* call. */
CC_API cc_run* cc_run_create(const char* config_path);

/* Same, from an in-memory JSON document. */
CC_API cc_run* cc_run_create_from_json(const char* config_json);

/* Applies a dotted-path override, e.g. "training.max_epochs=50". The value
 * is parsed as JSON when possible, else taken as a string. */
CC_API cc_status cc_run_set(cc_run* run, const char* assignment);

CC_API cc_status cc_run_set_seed(cc_run* run, uint64_t seed);
CC_API cc_status cc_run_set_output_dir(cc_run* run, const char* dir);

/* stage: "synth" | "ingest" | "sample" | "train" | "predict" | "backtest" |
 * "report" | "run" (all stages in order). */
CC_API cc_status cc_run_execute(cc_run* run, const char* stage);

/* Message from the most recent failing call; empty string if none.
 * Owned by the handle. */
CC_API const char* cc_run_last_error(const cc_run* run);

CC_API void cc_run_destroy(cc_run* run);

#ifdef __cplusplus
}
#endif

#endif /* CURVECAST_H */
