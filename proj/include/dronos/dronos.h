#ifndef DRONOS_H
#define DRONOS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DRONOS_API __declspec(dllexport)
#else
#define DRONOS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dronos_status {
  DRONOS_OK = 0,
  DRONOS_E_INVALID_ARGUMENT = 1,
  DRONOS_E_DEGENERATE_ORIENTATION = 2,
  DRONOS_E_RANGE = 3,
  DRONOS_E_SHAPE = 4,
  DRONOS_E_CORRUPT_FRAME = 5,
  DRONOS_E_PROTOCOL = 6,
  DRONOS_E_PARSE = 7,
  DRONOS_E_RECORDING_TOO_SHORT = 8,
  DRONOS_E_ILLEGAL_TRANSITION = 9,
  DRONOS_E_CONFIG = 10,
  DRONOS_E_IO = 11,
  DRONOS_E_VIOLATION = 12,
  DRONOS_E_TIMEOUT = 13,
  DRONOS_E_EMPTY = 14,
  DRONOS_E_BUFFER_TOO_SMALL = 15,
  DRONOS_E_INTERNAL = 99
} dronos_status;

DRONOS_API const char* dronos_version(void);
DRONOS_API const char* dronos_status_string(dronos_status status);
/* Message of the last failure on the calling thread ("" if none). */
DRONOS_API const char* dronos_last_error(void);
/* Frees strings returned through char** out-parameters. */
DRONOS_API void dronos_string_free(char* s);

/* ---- MSP link ---- */

/* Encodes MSP_SET_RAW_RC; 8 or 16 channels, each in [1000, 2000]. */
DRONOS_API dronos_status dronos_msp_encode_rc(const uint16_t* channels, size_t count,
                                              uint8_t* out, size_t capacity, size_t* written);

typedef struct dronos_msp_decoder dronos_msp_decoder;
DRONOS_API dronos_status dronos_msp_decoder_create(dronos_msp_decoder** out);
DRONOS_API void dronos_msp_decoder_destroy(dronos_msp_decoder* decoder);
/* Queues every complete SET_RAW_RC frame found in the bytes. */
DRONOS_API dronos_status dronos_msp_decoder_feed(dronos_msp_decoder* decoder, const uint8_t* bytes,
                                                 size_t length, size_t* queued);
/* Pops the oldest decoded command; DRONOS_E_EMPTY when none is queued. */
DRONOS_API dronos_status dronos_msp_decoder_next(dronos_msp_decoder* decoder, uint16_t* channels,
                                                 size_t capacity, size_t* count);
DRONOS_API dronos_status dronos_msp_decoder_stats(const dronos_msp_decoder* decoder,
                                                  uint64_t* frames, uint64_t* resyncs);

/* ---- flight paths ---- */

typedef struct dronos_path dronos_path;
DRONOS_API dronos_status dronos_path_load(const char* file, dronos_path** out);
DRONOS_API dronos_status dronos_path_parse(const char* json, dronos_path** out);
DRONOS_API void dronos_path_destroy(dronos_path* path);
DRONOS_API dronos_status dronos_path_duration(const dronos_path* path, double* seconds);
DRONOS_API dronos_status dronos_path_waypoint_count(const dronos_path* path, size_t* count);
/* position receives x, y, z; yaw is in radians. */
DRONOS_API dronos_status dronos_path_sample(const dronos_path* path, double t, double position[3],
                                            double* yaw, int* done);
DRONOS_API dronos_status dronos_path_to_json(const dronos_path* path, char** json);

/* Ramer-Douglas-Peucker over n points (xyz triples). kept must hold n indices. */
DRONOS_API dronos_status dronos_simplify(const double* xyz, size_t n, double epsilon, size_t* kept,
                                         size_t* kept_count);

/* ---- tools ---- */

/* Static check of a path against zones and the fence (fence from config_file
   when given). DRONOS_E_VIOLATION when the path is unsafe; report is always
   set on OK or VIOLATION. */
DRONOS_API dronos_status dronos_validate_files(const char* path_file, const char* zones_file,
                                               const char* config_file, char** report);

/* Headless closed-loop run of a scenario file. Writes logs to out_dir when
   non-NULL. DRONOS_E_VIOLATION on a safety violation or an unfinished path. */
DRONOS_API dronos_status dronos_replay_file(const char* scenario_file, const char* out_dir,
                                            char** report);

/* ---- service ---- */

typedef struct dronos_service_options {
  const char* config_file; /* NULL = defaults */
  const char* host;        /* NULL = config value */
  int api_port;            /* -1 = config/env value, 0 = ephemeral */
  int track_port;          /* -1 = config/env value, 0 = ephemeral */
  int sim_drones;          /* embedded simulator drones, 0 = none */
  double sim_noise_sigma;
  uint64_t sim_seed;
} dronos_service_options;

DRONOS_API void dronos_service_options_init(dronos_service_options* options);

typedef struct dronos_service dronos_service;
DRONOS_API dronos_status dronos_service_create(const dronos_service_options* options,
                                               dronos_service** out);
DRONOS_API dronos_status dronos_service_start(dronos_service* service);
DRONOS_API dronos_status dronos_service_ports(const dronos_service* service, int* api_port,
                                              int* track_port);
DRONOS_API dronos_status dronos_service_stop(dronos_service* service);
/* Blocks until dronos_service_stop is called from another thread. */
DRONOS_API dronos_status dronos_service_wait(dronos_service* service);
DRONOS_API void dronos_service_destroy(dronos_service* service);

/* ---- client ---- */

/* Uploads a path to a running service and flies it with one drone: arm and
   take off if idle, start the path once hovering, wait for completion. */
DRONOS_API dronos_status dronos_fly(const char* host, int port, const char* path_file,
                                    int drone_id, double timeout_seconds, char** report);

#ifdef __cplusplus
}
#endif

#endif
