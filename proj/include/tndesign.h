/* tndesign — transit route network design toolkit.
 *
 * C interface of the shared library. All handles are opaque; every function
 * returns a status code and reports details through tnd_last_error(). Strings
 * returned through char** out-parameters are heap-allocated JSON documents
 * and must be released with tnd_string_free().
 */
#ifndef TNDESIGN_H
#define TNDESIGN_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tnd_status {
  TND_OK = 0,
  TND_ERR_IO = 1,
  TND_ERR_PARSE = 2,
  TND_ERR_INVALID = 3,
  TND_ERR_STATE = 4,
  TND_ERR_INTERNAL = 5,
} tnd_status;

typedef struct tnd_ctx tnd_ctx;
typedef struct tnd_network tnd_network;

const char* tnd_version(void);

tnd_status tnd_ctx_create(tnd_ctx** out);
void tnd_ctx_destroy(tnd_ctx* ctx);

/* Message of the last failed call on this context; empty string if none. */
const char* tnd_last_error(const tnd_ctx* ctx);

void tnd_string_free(char* text);

/* params_json: {"kind":"grid"|"geometric", "rows","cols","spacing","nodes",
 * "radius","extent","free_speed","demand_pairs","rate_min","rate_max","seed"}.
 * Returns the network file content (deterministic per seed). */
tnd_status tnd_generate_city(tnd_ctx* ctx, const char* params_json, char** network_json_out);

tnd_status tnd_network_load_file(tnd_ctx* ctx, const char* path, tnd_network** out);
tnd_status tnd_network_parse(tnd_ctx* ctx, const char* json_text, tnd_network** out);
void tnd_network_destroy(tnd_network* network);

/* {"nodes":n,"edges":m,"arcs":2m,"transit_center":id,"demand_pairs":p,
 *  "total_demand":trips_per_hour,"has_real_routes":bool} */
tnd_status tnd_network_info(tnd_ctx* ctx, const tnd_network* network, char** info_json_out);
tnd_status tnd_network_to_json(tnd_ctx* ctx, const tnd_network* network, char** json_out);

/* params_json: {"routes":K,"max_len":L,"hub_start":bool}; result carries the
 * per-route count and total log10 for the requested start rule. */
tnd_status tnd_search_space(tnd_ctx* ctx, const tnd_network* network, const char* params_json,
                            char** result_json_out);

/* config_json (all fields optional unless noted):
 * {"method":"alphatransit|ppo|pure-mcts|ga|random|demand-cover|shortest-path|real-routes",
 *  "seed":N or "seeds":[...], "checkpoint":"path", "trace":bool,
 *  "env":{...,"sim":{...}}, "search":{...}, "ga":{...}}
 * Result: {"runs":[{method,seed,routes,evaluation,...}],"resolved_config":{...}} */
tnd_status tnd_design(tnd_ctx* ctx, const tnd_network* network, const char* config_json,
                      char** result_json_out);

/* design_json: {"routes":[[node ids]]} (node ids in the network file's id
 * space). Evaluates through the standard pipeline once per seed. */
tnd_status tnd_evaluate(tnd_ctx* ctx, const tnd_network* network, const char* design_json,
                        const char* config_json, char** result_json_out);

/* config_json adds {"methods":[...],"seeds":[...]}; result carries the
 * per-method metric table plus "csv" with the comparison spreadsheet. */
tnd_status tnd_compare(tnd_ctx* ctx, const tnd_network* network, const char* config_json,
                       char** result_json_out);

/* config_json: {"algorithm":"alphatransit"|"ppo","out_dir":"...",
 *  "resume":"checkpoint", "train":{...},"net":{...},"env":{...},"search":{...}}.
 * Writes checkpoints and a JSONL log under out_dir; returns a summary. */
tnd_status tnd_train(tnd_ctx* ctx, const tnd_network* network, const char* config_json,
                     char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif /* TNDESIGN_H */
