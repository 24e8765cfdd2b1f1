#pragma once

#include <string>

#include "json.hpp"

#include "cral/tagger.h"

namespace cral {

inline constexpr int kCheckpointSchemaVersion = 1;

nlohmann::json config_to_json(const TaggerConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
TaggerConfig config_from_json(const nlohmann::json& j, TaggerConfig base = {});

// Container layout: 8-byte magic, 8-byte little-endian header length, a JSON
// header (schema version, config, character hashing scheme, tensor shapes),
// then every tensor as little-endian doubles in header order.
std::string serialize_checkpoint(const TaggerParams& params);
// Throws Error when the magic, schema version or any tensor shape disagrees
// with the stored config.
TaggerParams deserialize_checkpoint(const std::string& bytes);

// Writes through a temporary file and rename.
void save_checkpoint(const TaggerParams& params, const std::string& path);
TaggerParams load_checkpoint(const std::string& path);

}  // namespace cral
