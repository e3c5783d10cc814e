/* C interface to the copyforge library.
 *
 * Every function returns a cf_status. On failure the message for the calling
 * thread is available from cf_last_error() until the next failing call.
 * Strings handed out through char** parameters are NUL-terminated, owned by
 * the caller, and released with cf_free_string(). Handles are released with
 * their matching *_destroy function; passing NULL to a destroy function is a
 * no-op.
 */
#ifndef COPYFORGE_H
#define COPYFORGE_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(COPYFORGE_BUILDING_LIBRARY)
#    define CF_API __declspec(dllexport)
#  else
#    define CF_API __declspec(dllimport)
#  endif
#else
#  define CF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
  CF_OK = 0,
  CF_ERR_CONFIG = 1,      /* invalid configuration, template or threshold */
  CF_ERR_DATA = 2,        /* bad input data: shapes, ranges, labels, corrupt records */
  CF_ERR_INTERNAL = 3,    /* unexpected failure */
  CF_ERR_IO = 4,          /* missing or unreadable file */
  CF_ERR_STALE_INDEX = 5, /* gallery index built with a different fuser */
  CF_ERR_INVALID_ARGUMENT = 6
} cf_status;

typedef struct cf_engine cf_engine;
typedef struct cf_image cf_image;
typedef struct cf_index cf_index;

CF_API const char* cf_version(void);
CF_API const char* cf_last_error(void);
CF_API const char* cf_status_name(cf_status status);
CF_API void cf_free_string(char* s);

/* ---- engine ------------------------------------------------------------ */

/* config_json may be NULL or empty for the default configuration. When the
 * configuration leaves cache_dir unset, the COPYFORGE_CACHE_DIR environment
 * variable supplies it. */
CF_API cf_status cf_engine_create(const char* config_json, cf_engine** out);
CF_API void cf_engine_destroy(cf_engine* engine);
/* Fully resolved configuration, including defaults. */
CF_API cf_status cf_engine_config_json(const cf_engine* engine, char** out_json);

/* ---- images ------------------------------------------------------------ */

CF_API cf_status cf_image_load(const char* path, cf_image** out);
/* rgb holds height*width*3 floats in [0,1], row-major, channels interleaved. */
CF_API cf_status cf_image_from_rgb(int height, int width, const float* rgb, cf_image** out);
CF_API cf_status cf_image_save(const cf_image* image, const char* path);
CF_API cf_status cf_image_size(const cf_image* image, int* height, int* width);
/* Copies height*width*3 floats into out; capacity is the length of out. */
CF_API cf_status cf_image_pixels(const cf_image* image, float* out, size_t capacity);
CF_API void cf_image_destroy(cf_image* image);

/* ---- copy detection ---------------------------------------------------- */

/* Verdict object {query, reference, s_fus, s_vis, s_clip, s_tex, s_bar,
 * is_copy, copy_type}. The names are copied into the output verbatim. */
CF_API cf_status cf_decide(const cf_engine* engine, const cf_image* query,
                           const cf_image* reference, const char* query_name,
                           const char* reference_name, char** out_json);
/* Gate and type rule on precomputed similarities. */
CF_API cf_status cf_classify_scores(const cf_engine* engine, double s_fus, double s_vis,
                                    double s_clip, double s_tex, char** out_json);
/* One verdict line per manifest pair, plus a summary object with per-class
 * counts and gate metrics. */
CF_API cf_status cf_detect_manifest(const cf_engine* engine, const char* manifest_path,
                                    char** out_verdicts_jsonl, char** out_summary_json);
/* Scores every manifest pair: JSONL {s_fus, s_vis, s_clip, s_tex, label}. */
CF_API cf_status cf_manifest_scores(const cf_engine* engine, const char* manifest_path,
                                    char** out_scores_jsonl);
CF_API cf_status cf_evaluate_manifest(const cf_engine* engine, const char* manifest_path,
                                      char** out_report_json);

/* ---- calibration ------------------------------------------------------- */

/* Tunes tau1 on s_fus, omega on the weight simplex and tau2 on the
 * retrieve/style entries. Writes sweep.csv, weights.csv and calibration.json
 * (a decision config fragment) into out_dir; with render != 0 also
 * sweep.ppm and weights.ppm. */
CF_API cf_status cf_calibrate(const cf_engine* engine, const char* scores_jsonl,
                              const char* out_dir, int render, char** out_summary_json);
/* JSON array of violation messages; empty when the decision config is valid. */
CF_API cf_status cf_validate_decision_config(const char* decision_json, char** out_json);

/* ---- gallery ----------------------------------------------------------- */

/* Indexes every image in image_dir into index_dir. The report lists the
 * entry count and per-image failures. */
CF_API cf_status cf_index_build(const cf_engine* engine, const char* image_dir,
                                const char* index_dir, char** out_report_json);
/* Fails with CF_ERR_STALE_INDEX when the index was built by another fuser. */
CF_API cf_status cf_index_open(const cf_engine* engine, const char* index_dir, cf_index** out);
CF_API cf_status cf_index_size(const cf_index* index, size_t* out);
CF_API void cf_index_destroy(cf_index* index);
/* JSON array of {rank, id, s_fus}. */
CF_API cf_status cf_retrieve(const cf_engine* engine, const cf_index* index,
                             const cf_image* query, size_t k, char** out_json);
/* {rate, copies, queries, tau1, matches: [{query, match, s_fus, is_copy}]} */
CF_API cf_status cf_copy_rate(const cf_engine* engine, const cf_index* index,
                              const char* const* query_paths, size_t count, char** out_json);

/* ---- perturbations and augmentation ------------------------------------ */

/* JSON array of the configured attack suite. */
CF_API cf_status cf_standard_suite_json(const cf_engine* engine, char** out_json);
/* spec_json: {"kind": "...", "params": {...}, "seed": n}. */
CF_API cf_status cf_perturb(const cf_image* image, const char* spec_json, cf_image** out);
/* CSV table: clean row then one row per attack. side is "query",
 * "reference" or NULL for the configured side. */
CF_API cf_status cf_robustness(const cf_engine* engine, const cf_image* query,
                               const cf_image* reference, const char* side, char** out_csv);
/* Augmentation trace for one (image, prompt) pair. detections_json is the
 * scripted detector output ([{box, label, confidence}], NULL for none);
 * templates_text replaces the configured templates when non-NULL. */
CF_API cf_status cf_augment(const cf_engine* engine, const cf_image* image, const char* prompt,
                            const char* detections_json, const char* templates_text,
                            char** out_trace_json);

/* ---- numeric helpers --------------------------------------------------- */

CF_API cf_status cf_ssim(const cf_image* a, const cf_image* b, double* out);
CF_API cf_status cf_cosine(const float* a, const float* b, size_t n, double* out);
CF_API cf_status cf_weighted_score(const double streams[3], const double omega[3], double* out);
CF_API cf_status cf_diffusion_loss(const double* noise, const double* prediction, size_t n,
                                   double* out);

#ifdef __cplusplus
}
#endif

#endif /* COPYFORGE_H */
