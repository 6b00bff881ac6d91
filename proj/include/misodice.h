/* C interface to the misodice pipeline: preference-driven expert
 * identification followed by occupancy-matching imitation with value
 * decomposition, on small cooperative team MDPs.
 *
 * Usage: create a run from a config file or JSON string, optionally apply
 * dotted-key overrides, then drive the pipeline stages. Every command
 * returns MISO_OK or an error code; miso_last_error / miso_last_output
 * return strings owned by the handle, valid until the next call on it.
 */
#ifndef MISODICE_H
#define MISODICE_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MISO_API __declspec(dllexport)
#else
#define MISO_API __attribute__((visibility("default")))
#endif

typedef struct miso_run miso_run; /* opaque pipeline handle */

enum {
  MISO_OK = 0,
  MISO_ERR_CONFIG = 2,     /* bad config file, key, value, or combination */
  MISO_ERR_DIVERGENCE = 3, /* a training loss went non-finite */
  MISO_ERR_VERIFY = 4,     /* at least one property check failed */
  MISO_ERR_IO = 5,         /* missing, unwritable, or corrupted artifact */
  MISO_ERR_INVALID = 6,    /* null handle or argument */
  MISO_ERR_INTERNAL = 7    /* anything else; see miso_last_error */
};

/* NULL on failure; pass NULL to miso_last_error for the creation error. */
MISO_API miso_run* miso_run_create(const char* config_path);
MISO_API miso_run* miso_run_create_from_string(const char* config_json);
MISO_API void miso_run_destroy(miso_run* run);

/* Last error / last command summary for this handle. Never NULL. */
MISO_API const char* miso_last_error(const miso_run* run);
MISO_API const char* miso_last_output(const miso_run* run);

/* Dotted-key config override, e.g. ("phase2.alpha", "0.1"). */
MISO_API int miso_set_override(miso_run* run, const char* key,
                               const char* value);

/* Pipeline stages. Artifacts land under out_dir with fixed names:
 * dataset.bin, manifest.txt, policy.ckpt, metrics.csv. */
MISO_API int miso_gen_data(miso_run* run, const char* out_dir);
MISO_API int miso_label(miso_run* run, const char* dataset_path,
                        const char* out_dir);
MISO_API int miso_train(miso_run* run, const char* dataset_path,
                        const char* manifest_path, const char* out_dir);
MISO_API int miso_eval(miso_run* run, const char* checkpoint_path);

/* Runs the full property suite; the rendered table is in miso_last_output
 * even on failure. */
MISO_API int miso_verify(miso_run* run);

/* Aggregates n metrics CSVs into a learning-curve CSV at out_path. */
MISO_API int miso_plot(miso_run* run, const char* const* metrics_csvs, int n,
                       const char* out_path);

MISO_API const char* miso_version(void);

#ifdef __cplusplus
}
#endif
#endif /* MISODICE_H */
