#ifndef GGSP_H
#define GGSP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum GgspStatus {
  GGSP_STATUS_OK = 0,
  // Invalid parameter or unsupported operation.
  GGSP_STATUS_USAGE = 1,
  // Input data violates a structural precondition.
  GGSP_STATUS_DATA = 2,
  // A factorization or solve failed.
  GGSP_STATUS_NUMERICAL = 3,
  GGSP_STATUS_NULL_POINTER = 4,
  GGSP_STATUS_INVALID_UTF8 = 5,
  GGSP_STATUS_PANIC = 6,
} GgspStatus;

// Graph shift operator selector.
typedef enum GgspGso {
  GGSP_GSO_COMBINATORIAL = 0,
  GGSP_GSO_NORMALIZED = 1,
} GgspGso;

// Opaque weighted undirected graph.
typedef struct GgspGraph GgspGraph;

// Opaque fitted kernel ridge regression model.
typedef struct GgspKrr GgspKrr;

// Opaque online random-feature predictor.
typedef struct GgspRff GgspRff;

// Parameters of the asymptotic variance bound.
typedef struct GgspBoundParams {
  double kt;
  double l;
  double m0;
  double c0;
  uint32_t dim;
  double c_d;
  uint32_t n_d;
  double c1;
  double c2;
  double c3;
} GgspBoundParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy of the last error message on this thread, or NULL if the last call
// succeeded. Release with [`ggsp_string_free`].
char *ggsp_last_error(void);

// # Safety
// `s` must come from this library or be NULL.
void ggsp_string_free(char *s);

// Build a graph from `n_edges` weighted edges given as parallel arrays.
//
// # Safety
// Each array must hold `n_edges` elements; `out` must be writable.
enum GgspStatus ggsp_graph_new(size_t n_vertices,
                               const size_t *us,
                               const size_t *vs,
                               const double *ws,
                               size_t n_edges,
                               enum GgspGso gso,
                               struct GgspGraph **out);

// Parse a whitespace-separated `u v w` edge list.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum GgspStatus ggsp_graph_parse(const char *text, enum GgspGso gso, struct GgspGraph **out);

// # Safety
// `graph` must be a live handle; `out` must be writable.
enum GgspStatus ggsp_graph_n_vertices(const struct GgspGraph *graph, size_t *out);

// # Safety
// `graph` must come from this library or be NULL, and not be used afterwards.
void ggsp_graph_free(struct GgspGraph *graph);

// Fit kernel ridge regression. `kernel_json` is a kernel spec document
// such as `{"graph":{"type":"quadratic","b":0.5},"time":{"type":"gaussian","gamma":0.1}}`.
//
// # Safety
// Sample arrays must hold `n_samples` elements; pointers must be valid.
enum GgspStatus ggsp_krr_fit(const struct GgspGraph *graph,
                             const char *kernel_json,
                             const size_t *vertices,
                             const double *times,
                             const double *values,
                             size_t n_samples,
                             double mu,
                             struct GgspKrr **out);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum GgspStatus ggsp_krr_predict(const struct GgspKrr *model,
                                 size_t vertex,
                                 double time,
                                 double *out);

// Serialize the model as bit-exact JSON. Release with [`ggsp_string_free`].
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum GgspStatus ggsp_krr_to_json(const struct GgspKrr *model, char **out);

// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum GgspStatus ggsp_krr_from_json(const char *json, struct GgspKrr **out);

// # Safety
// `model` must come from this library or be NULL, and not be used afterwards.
void ggsp_krr_free(struct GgspKrr *model);

// Posterior variance of the Gaussian process with the given kernel at
// `(vertex, time)` after observing the samples with noise variance `noise`.
//
// # Safety
// Sample arrays must hold `n_samples` elements; pointers must be valid.
enum GgspStatus ggsp_posterior_variance(const struct GgspGraph *graph,
                                        const char *kernel_json,
                                        const size_t *vertices,
                                        const double *times,
                                        size_t n_samples,
                                        double noise,
                                        size_t vertex,
                                        double time,
                                        double *out);

// Create an online predictor with `features` random features per vertex.
// A non-positive `step` selects `0.05 / max ||eta||^2` over the features of
// `(vertex, 0)` and `(vertex, 1)` for every vertex.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum GgspStatus ggsp_rff_new(const struct GgspGraph *graph,
                             const char *kernel_json,
                             size_t features,
                             uint64_t seed,
                             double ridge,
                             size_t horizon,
                             double step,
                             struct GgspRff **out);

// One stochastic gradient update on `(vertex, time, value)`. The prediction
// made before the update is written to `prediction` when it is not NULL.
//
// # Safety
// `rff` must be a live handle.
enum GgspStatus ggsp_rff_step(struct GgspRff *rff,
                              size_t vertex,
                              double time,
                              double value,
                              double *prediction);

// # Safety
// `rff` must be a live handle; `out` must be writable.
enum GgspStatus ggsp_rff_predict(const struct GgspRff *rff,
                                 size_t vertex,
                                 double time,
                                 double *out);

// # Safety
// `rff` must come from this library or be NULL, and not be used afterwards.
void ggsp_rff_free(struct GgspRff *rff);

// # Safety
// `params` must be readable; outputs must be writable.
enum GgspStatus ggsp_var_bound(const struct GgspBoundParams *params,
                               double *bound,
                               double *probability);

// Correlation between the first two time steps under the first-difference
// prior with `steps` samples and boundary precision `delta0`.
//
// # Safety
// `out` must be writable.
enum GgspStatus ggsp_gtrss_prior_correlation(size_t steps, double delta0, double *out);

// Solve the joint first-difference reconstruction on a `steps`-column grid.
// `mask` and `observations` are `n_vertices * steps` column-major arrays
// (index `t * n_vertices + v`); `out` receives the estimate in the same layout.
//
// # Safety
// Arrays must hold `n_vertices * steps` elements.
enum GgspStatus ggsp_gtrss_solve(const struct GgspGraph *graph,
                                 const uint8_t *mask,
                                 const double *observations,
                                 size_t steps,
                                 double mu_tv,
                                 double alpha,
                                 double beta,
                                 double delta0,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GGSP_H */
