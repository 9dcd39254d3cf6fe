#ifndef FCTF_FCTF_H
#define FCTF_FCTF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define FCTF_API __attribute__((visibility("default")))
#else
#define FCTF_API
#endif

typedef enum fctf_status {
  FCTF_OK = 0,
  FCTF_INVALID_ARGUMENT = 1,
  FCTF_IO = 2,
  FCTF_PRECONDITION = 3,
  FCTF_NUMERIC = 4,
  FCTF_INTERNAL = 5
} fctf_status;

typedef struct fctf_dataset fctf_dataset;
typedef struct fctf_aux fctf_aux;
typedef struct fctf_model fctf_model;

/* Message of the last failed call on this thread; empty after success. */
FCTF_API const char* fctf_last_error(void);
FCTF_API const char* fctf_version(void);
/* Frees strings returned through char** out-parameters. */
FCTF_API void fctf_string_free(char* s);

/* ---- corpus ---- */
typedef struct fctf_corpus_spec {
  int identities;
  int clips_per_identity;
  int frames_per_clip;
  uint64_t seed;
} fctf_corpus_spec;

FCTF_API void fctf_corpus_spec_default(fctf_corpus_spec* spec);
/* Builds (or verifies) a corpus; manifest_hash may be NULL. */
FCTF_API fctf_status fctf_synth_data(const fctf_corpus_spec* spec, const char* out_dir, int force, uint64_t* manifest_hash);
FCTF_API fctf_status fctf_dataset_open(const char* corpus_dir, fctf_dataset** out);
FCTF_API void fctf_dataset_free(fctf_dataset* ds);
FCTF_API fctf_status fctf_dataset_info(const fctf_dataset* ds, int* clips, int* test_identities, uint64_t* fingerprint);
/* Test-split identity indices; writes up to cap entries, count receives the total. */
FCTF_API fctf_status fctf_dataset_test_identities(const fctf_dataset* ds, int* ids, int cap, int* count);

/* ---- auxiliary networks ---- */
typedef struct fctf_pretrain_options {
  int sync_steps;
  int sync_batch;
  int id_steps;
  int id_batch;
  double sync_lr;
  double id_lr;
  uint64_t seed;
  int eval_pairs;
} fctf_pretrain_options;

FCTF_API void fctf_pretrain_options_default(fctf_pretrain_options* opt);
/* Writes syncnet.fctf, idnet.fctf, perceptual.fctf and aux_report.json to out_dir. */
FCTF_API fctf_status fctf_pretrain_aux(const fctf_dataset* ds, const fctf_pretrain_options* opt, const char* out_dir,
                                       char** report_json);
FCTF_API fctf_status fctf_aux_load(const char* dir, fctf_aux** out);
FCTF_API void fctf_aux_free(fctf_aux* aux);

/* ---- configuration (JSON text mirroring the TrainConfig fields) ---- */
FCTF_API fctf_status fctf_config_default(char** json);
/* Parses and validates; the normalised text is returned. */
FCTF_API fctf_status fctf_config_normalize(const char* json_in, char** json_out);
/* Sets a dotted key ("weights.sync") to a JSON literal or bare string. */
FCTF_API fctf_status fctf_config_set(const char* json_in, const char* key, const char* value, char** json_out);

/* ---- training ---- */
/* parts: ortho, sync, id, rec, lpips, gan_g, gan_d, total */
typedef void (*fctf_progress_fn)(int64_t step, int64_t total, const double* parts, void* user);

FCTF_API fctf_status fctf_train(const fctf_dataset* ds, const fctf_aux* aux, const char* config_json, const char* out_dir,
                                int resume, fctf_progress_fn progress, void* user, fctf_model** out);
/* Fresh, untrained model over the aux networks, for baselines. */
FCTF_API fctf_status fctf_model_init(const fctf_dataset* ds, const fctf_aux* aux, const char* config_json, fctf_model** out);
FCTF_API fctf_status fctf_model_load(const char* checkpoint, fctf_model** out);
FCTF_API fctf_status fctf_model_save(const fctf_model* m, const char* checkpoint);
FCTF_API void fctf_model_free(fctf_model* m);
FCTF_API fctf_status fctf_model_info(const fctf_model* m, int64_t* step, uint64_t* generator_checksum, char** config_json);
/* FNV-1a of the checkpoint bytes. */
FCTF_API fctf_status fctf_file_checksum(const char* path, uint64_t* checksum);

/* ---- inference and evaluation ---- */
/* source PNG, directory of frame_*.png, 16-bit WAV (16/22.05/44.1/48 kHz).
   Writes out_dir/frame_NNNN.png; frames receives the count. */
FCTF_API fctf_status fctf_generate(fctf_model* m, const char* source_png, const char* driving_dir, const char* audio_wav,
                                   const char* out_dir, int* frames);
/* strips_dir may be NULL; max_clips < 0 evaluates every test clip. */
FCTF_API fctf_status fctf_evaluate(fctf_model* m, const fctf_dataset* ds, const char* strips_dir, int max_clips,
                                   char** report_json);
FCTF_API fctf_status fctf_probes(fctf_model* m, const fctf_dataset* ds, char** report_json);
/* ids NULL or n == 0 selects the test identities. */
FCTF_API fctf_status fctf_canonical_grid(fctf_model* m, const fctf_dataset* ds, const int* ids, int n, int frames_per_id,
                                         const char* png_path, double* variance_ratio);

/* ---- ablation ---- */
/* Runs the temporal x discriminator x ortho matrix for `steps` steps each and writes a CSV. */
FCTF_API fctf_status fctf_ablate(const fctf_dataset* ds, const fctf_aux* aux, const char* config_json, int steps,
                                 int eval_clips, const char* out_dir, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif
