#ifndef KBQA_H
#define KBQA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KbqaStatus {
  KBQA_STATUS_OK = 0,
  KBQA_STATUS_NULL_ARGUMENT = 1,
  KBQA_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed s-expression, SPARQL, JSON or triples.
   */
  KBQA_STATUS_PARSE = 3,
  /**
   * Well-formed input outside the supported fragment.
   */
  KBQA_STATUS_UNSUPPORTED = 4,
  KBQA_STATUS_IO = 5,
  /**
   * Invalid argument value.
   */
  KBQA_STATUS_INVALID = 6,
  KBQA_STATUS_PANIC = 7,
} KbqaStatus;

typedef enum KbqaVerdict {
  KBQA_VERDICT_EQUIVALENT = 0,
  KBQA_VERDICT_NON_EQUIVALENT = 1,
  KBQA_VERDICT_NO_DECISION = 2,
} KbqaVerdict;

/**
 * A schema: class and relation manifests, or open.
 */
typedef struct KbqaSchema KbqaSchema;

/**
 * An in-memory triple store.
 */
typedef struct KbqaStore KbqaStore;

typedef struct KbqaPrf {
  double precision;
  double recall;
  double f1;
} KbqaPrf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The last error raised on this thread, as a new string, or null.
 */
char *kbqa_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void kbqa_string_free(char *s);

/**
 * Library version; static, do not free.
 */
const char *kbqa_version(void);

/**
 * Loads a triples file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KbqaStatus kbqa_store_load(const char *path, struct KbqaStore **out);

/**
 * Parses triples from text, one `subject predicate object .` per line.
 *
 * # Safety
 * `triples` must be a NUL-terminated string; `out` must be writable.
 */
enum KbqaStatus kbqa_store_parse(const char *triples, struct KbqaStore **out);

/**
 * Number of triples; 0 for a null handle.
 *
 * # Safety
 * `store` must be null or a live handle.
 */
size_t kbqa_store_len(const struct KbqaStore *store);

/**
 * # Safety
 * `store` must be null or a handle from this library, freed once.
 */
void kbqa_store_free(struct KbqaStore *store);

/**
 * An open schema. Null arguments take the defaults.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum KbqaStatus kbqa_schema_open(const char *entity_pattern,
                                 const char *type_relation,
                                 struct KbqaSchema **out);

/**
 * A closed schema from class and relation manifests, one IRI per line.
 *
 * # Safety
 * Paths must be NUL-terminated; the other strings null or NUL-terminated;
 * `out` must be writable.
 */
enum KbqaStatus kbqa_schema_load(const char *classes_path,
                                 const char *relations_path,
                                 const char *entity_pattern,
                                 const char *type_relation,
                                 struct KbqaSchema **out);

/**
 * # Safety
 * `schema` must be null or a handle from this library, freed once.
 */
void kbqa_schema_free(struct KbqaSchema *schema);

/**
 * Compiles an s-expression to single-line SPARQL. A null schema uses the
 * default entity pattern and type relation.
 *
 * # Safety
 * `sexpr` must be NUL-terminated; `schema` null or live; `out` writable.
 */
enum KbqaStatus kbqa_translate(const struct KbqaSchema *schema, const char *sexpr, char **out);

/**
 * Runs a SPARQL query on the store; writes a JSON array of answer
 * strings (a one-element array for COUNT).
 *
 * # Safety
 * `store` must be live; `sparql` NUL-terminated; `out` writable.
 */
enum KbqaStatus kbqa_execute(const struct KbqaStore *store, const char *sparql, char **out);

/**
 * Three-valued logical-form match of two SPARQL queries given the answer
 * F1 of the prediction. `out_detail` may be null; otherwise it receives
 * the verdict with its reason and element bags as JSON.
 *
 * # Safety
 * `schema` must be live; queries NUL-terminated; `out_verdict` writable;
 * `out_detail` null or writable.
 */
enum KbqaStatus kbqa_equiv(const struct KbqaSchema *schema,
                           const char *pred,
                           const char *gold,
                           double f1,
                           enum KbqaVerdict *out_verdict,
                           char **out_detail);

/**
 * Set precision, recall and F1 of two JSON string arrays.
 *
 * # Safety
 * Both strings NUL-terminated; `out` writable.
 */
enum KbqaStatus kbqa_answer_f1(const char *pred_json, const char *gold_json, struct KbqaPrf *out);

/**
 * Jensen-Shannon divergence of two distributions over `len` outcomes.
 *
 * # Safety
 * `p` and `q` must point to `len` doubles each; `out` writable.
 */
enum KbqaStatus kbqa_js_divergence(const double *p,
                                   const double *q,
                                   size_t len,
                                   double base,
                                   double *out);

/**
 * Parses an `@@`-separated re-rank reply against a JSON array of
 * candidates; writes the selected JSON array.
 *
 * # Safety
 * Strings NUL-terminated; `out` writable.
 */
enum KbqaStatus kbqa_rerank_parse(const char *response,
                                  const char *candidates_json,
                                  size_t k,
                                  char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KBQA_H */
