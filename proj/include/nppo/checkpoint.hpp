#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "nppo/param_set.hpp"

namespace nppo {

// On-disk layout:
//   "NPPO1\n"
//   one line of JSON: {"names": [...], "shapes": [[...], ...], "dtype": "f64le", "meta": {...}}
//   "\n"
//   parameter data, little-endian f64, concatenated in `names` order.
// `meta` is optional free-form metadata (model kind, init mode, ...).
struct Checkpoint {
  ParamSet params;
  nlohmann::json meta = nlohmann::json::object();
};

inline constexpr char kCheckpointMagic[] = "NPPO1\n";

std::string encode_checkpoint(const ParamSet& params, const nlohmann::json& meta = {});
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// FNV-1a 64 of a file's bytes, as 16 lowercase hex digits.
std::string file_hash(const std::filesystem::path& path);
std::string bytes_hash(const std::string& bytes);

}  // namespace nppo
