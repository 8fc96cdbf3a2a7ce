#pragma once

// Attention map exports: one CSV matrix and one 8-bit PGM per head, plus a
// JSON sidecar describing which rows and columns belong to which stream.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pulse/model.hpp"

namespace pulse {

/// Rows of comma-separated values, "%.9g".
std::string attention_csv(const Tensor& weights);

/// Binary PGM (P5, maxval 255): width = columns, height = rows, pixel =
/// round(255 * a) with a clamped to [0, 1].
std::string attention_pgm(const Tensor& weights);

nlohmann::json attention_sidecar(const AttentionMap& map);

/// Writes PREFIX.headH.csv, PREFIX.headH.pgm for every head and PREFIX.json
/// (the sidecar merged with `extra`). Returns the written paths.
std::vector<std::filesystem::path> write_attention(const AttentionMap& map, const std::string& prefix,
                                                   const nlohmann::json& extra = nlohmann::json::object());

}  // namespace pulse
