/*
 * ctiforge C interface.
 *
 * Every function returns a ctf_status. On failure a description of the last
 * error on the calling thread is available from ctf_last_error() until the
 * next call on that thread.
 */
#ifndef CTIFORGE_H
#define CTIFORGE_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(CTIFORGE_BUILDING)
#    define CTF_API __declspec(dllexport)
#  else
#    define CTF_API __declspec(dllimport)
#  endif
#else
#  define CTF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctf_status {
    CTF_OK = 0,
    CTF_ERR_IO = 1,
    CTF_ERR_CONFIG = 2,
    CTF_ERR_FIXTURE_MISS = 3,
    CTF_ERR_PROVIDER = 4,
    CTF_ERR_INVALID_ARG = 6,
    CTF_ERR_INTERNAL = 7
} ctf_status;

typedef struct ctf_config ctf_config;

/* Version string of the library, e.g. "0.1.0". */
CTF_API const char* ctf_version(void);

/* Log verbosity: 0 errors only, 1 warnings, 2 info (default), 3 debug. */
CTF_API void ctf_set_log_level(int level);

/* Thread-local message for the last failed call; never NULL. */
CTF_API const char* ctf_last_error(void);

/* Default configuration; relative paths resolve against base_dir. */
CTF_API ctf_status ctf_config_new(const char* base_dir, ctf_config** out);

/* Configuration from a JSON file; relative paths resolve against its directory. */
CTF_API ctf_status ctf_config_load(const char* path, ctf_config** out);

CTF_API void ctf_config_free(ctf_config* config);

/*
 * Setters. Integer keys: runs, vote_threshold, max_attempts, max_reidentify,
 * concurrency, target_sentences, seed. Double keys: similarity_threshold,
 * extraction_temperature. String keys: mode, store, seed_knowledge,
 * fixtures, prompts, data, output.
 */
CTF_API ctf_status ctf_config_set_int(ctf_config* config, const char* key, long long value);
CTF_API ctf_status ctf_config_set_double(ctf_config* config, const char* key, double value);
CTF_API ctf_status ctf_config_set_string(ctf_config* config, const char* key, const char* value);

/*
 * Runs the full pipeline over `count` report files and writes the artifacts
 * to out_dir (or the configured output directory when out_dir is NULL).
 */
CTF_API ctf_status ctf_analyze(const ctf_config* config, const char* const* reports, size_t count,
                               const char* out_dir);

/* Embeds a seed knowledge file and saves the serialized store. */
CTF_API ctf_status ctf_kb_build(const ctf_config* config, const char* seed_path, const char* out_path);

/*
 * Segments a report into paragraphs. *out_jsonl receives one JSON object per
 * line ({report_id, index, sentence_count, text}); release it with
 * ctf_string_free.
 */
CTF_API ctf_status ctf_segment(const char* report_path, int target_sentences, char** out_jsonl);

CTF_API void ctf_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* CTIFORGE_H */
