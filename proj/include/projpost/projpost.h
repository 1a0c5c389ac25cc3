/* projpost: projected Bayesian posteriors for small neural networks.
 *
 * C API over the C++ core. All functions returning pp_status report failure
 * details through pp_last_error(), which is thread-local. Handles are opaque
 * and must be released with the matching *_free function.
 */
#ifndef PROJPOST_H
#define PROJPOST_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PP_API __declspec(dllexport)
#else
#define PP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pp_status {
    PP_OK = 0,
    PP_ERR_CONFIG = 2,  /* bad config, bad input file, shape mismatch */
    PP_ERR_NUMERIC = 3, /* divergence or other numeric failure */
    PP_ERR_INTERNAL = 4
} pp_status;

PP_API const char* pp_version(void);

/* Message for the most recent failure on this thread; empty string if none. */
PP_API const char* pp_last_error(void);

/* ------------------------------------------------------------------ */
/* Pipeline commands. Each reads a JSON run config, writes its artifacts
 * under out_dir, and returns a status that doubles as the CLI exit code. */

typedef struct pp_run_options {
    int threads;        /* <= 1 means single-threaded */
    int has_seed;       /* nonzero to apply seed_override */
    uint64_t seed_override;
} pp_run_options;

PP_API pp_status pp_run_train(const char* config_path, const char* out_dir,
                              const pp_run_options* options);
PP_API pp_status pp_run_sample(const char* config_path, const char* checkpoint_path,
                               const char* out_dir, const pp_run_options* options);
PP_API pp_status pp_run_eval(const char* config_path, const char* checkpoint_path,
                             const char* samples_path, const char* role, const char* out_dir,
                             const pp_run_options* options);
PP_API pp_status pp_run_ood(const char* config_path, const char* checkpoint_path,
                            const char* samples_path, const char* out_dir,
                            const pp_run_options* options);
PP_API pp_status pp_run_diagnose(const char* config_path, const char* checkpoint_path,
                                 const char* out_dir, const pp_run_options* options);
PP_API pp_status pp_run_plot(const char* config_path, const char* checkpoint_path,
                             const char* samples_path, const char* out_dir,
                             const pp_run_options* options);

/* ------------------------------------------------------------------ */
/* Networks. A handle owns an architecture plus a current parameter vector. */

typedef struct pp_network pp_network;

/* arch_json example:
 *   {"input_dim":2,"hidden":[16,16],"output_dim":2,
 *    "activation":"tanh","bias":true}
 * Parameters are initialized deterministically from init_seed. */
PP_API pp_status pp_network_create(const char* arch_json, uint64_t init_seed, pp_network** out);
PP_API void pp_network_free(pp_network* net);

PP_API int64_t pp_network_param_count(const pp_network* net);
PP_API int pp_network_input_dim(const pp_network* net);
PP_API int pp_network_output_dim(const pp_network* net);

PP_API pp_status pp_network_get_params(const pp_network* net, double* buf /* P */);
PP_API pp_status pp_network_set_params(pp_network* net, const double* buf /* P */);

PP_API pp_status pp_network_forward(const pp_network* net, const double* x /* I */,
                                    double* y /* O */);
/* Jacobian-vector product J(x) v, v of length P. */
PP_API pp_status pp_network_jvp(const pp_network* net, const double* x /* I */,
                                const double* v /* P */, double* out /* O */);
/* Vector-Jacobian product J(x)^T u, u of length O. */
PP_API pp_status pp_network_vjp(const pp_network* net, const double* x /* I */,
                                const double* u /* O */, double* out /* P */);

/* Checkpoint container (version 1). Loading creates a fresh handle. */
PP_API pp_status pp_network_save_checkpoint(const pp_network* net, const char* path);
PP_API pp_status pp_network_load_checkpoint(const char* path, pp_network** out);

/* ------------------------------------------------------------------ */
/* Datasets. */

typedef struct pp_dataset pp_dataset;

PP_API pp_status pp_dataset_toy_regression(int n_per_cluster, double noise_sd, uint64_t seed,
                                           pp_dataset** out);
PP_API pp_status pp_dataset_two_moons(int n, double noise_sd, uint64_t seed, pp_dataset** out);
PP_API pp_status pp_dataset_blob(int n, const double* center, int dim, double sd, uint64_t seed,
                                 pp_dataset** out);
/* kind: "regression" or "classification" (then output_dim = class count). */
PP_API pp_status pp_dataset_from_csv(const char* path, int input_dim, int output_dim,
                                     const char* kind, pp_dataset** out);
PP_API pp_status pp_dataset_from_idx(const char* images_path, const char* labels_path,
                                     int num_classes, int64_t limit, double scale,
                                     pp_dataset** out);
PP_API void pp_dataset_free(pp_dataset* dataset);
PP_API int64_t pp_dataset_size(const pp_dataset* dataset);
PP_API int pp_dataset_input_dim(const pp_dataset* dataset);

/* ------------------------------------------------------------------ */
/* Training. Updates the handle's parameters in place; the loss follows the
 * dataset kind (MSE for regression, softmax cross-entropy otherwise).
 * train_json example:
 *   {"optimizer":"adam","learning_rate":1e-3,"epochs":500,
 *    "batch_size":16,"weight_decay":1e-4,"seed":7} */
PP_API pp_status pp_train(pp_network* net, const pp_dataset* dataset, const char* train_json,
                          double* final_mean_loss /* optional */);

/* ------------------------------------------------------------------ */
/* Kernel projector. options_json example:
 *   {"mode":"output-jacobian","batch_size":16,"t_max":1000,
 *    "residual_tol":0.0,"rank_tol":1e-10,"partition_seed":3} */

typedef struct pp_projector pp_projector;

PP_API pp_status pp_projector_create(const pp_network* net, const pp_dataset* dataset,
                                     const char* options_json, pp_projector** out);
PP_API void pp_projector_free(pp_projector* projector);
/* Alternating-projections estimate of the kernel projection of v. */
PP_API pp_status pp_projector_project(const pp_projector* projector, const double* v /* P */,
                                      double* out /* P */);

/* ------------------------------------------------------------------ */
/* Posterior samples. options_json example:
 *   {"kind":"projected","alpha":"auto","k":30,"seed":9,"probes":64,
 *    "alpha_convention":"rank-over-norm","threads":1}
 * kind: projected | loss-projected | lla-dense | diag-laplace | map-delta.
 * The projector argument is required for the kernel kinds and ignored
 * otherwise (pass NULL). */

typedef struct pp_samples pp_samples;

PP_API pp_status pp_samples_draw(const pp_network* net, const pp_dataset* dataset,
                                 const pp_projector* projector, const char* options_json,
                                 pp_samples** out);
PP_API void pp_samples_free(pp_samples* samples);
PP_API int64_t pp_samples_count(const pp_samples* samples);
PP_API double pp_samples_alpha(const pp_samples* samples);
PP_API pp_status pp_samples_get(const pp_samples* samples, int64_t index, double* buf /* P */);
PP_API pp_status pp_samples_save(const pp_samples* samples, const pp_network* net,
                                 const char* path);
PP_API pp_status pp_samples_load(const char* path, pp_samples** out);

/* Mean and per-dimension variance of the linearized predictive at x. */
PP_API pp_status pp_predict_linearized(const pp_network* net, const pp_samples* samples,
                                       const double* x /* I */, double* mean /* O */,
                                       double* variance /* O */);

#ifdef __cplusplus
}
#endif

#endif /* PROJPOST_H */
