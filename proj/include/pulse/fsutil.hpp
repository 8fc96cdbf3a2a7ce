#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pulse {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Headerless little-endian float32 arrays.
std::vector<float> read_f32le(const std::filesystem::path& path);
std::string encode_f32le(std::span<const float> values);
std::vector<float> decode_f32le(std::string_view bytes);

}  // namespace pulse
