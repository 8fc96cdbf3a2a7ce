#pragma once

// Weight file layout:
//   bytes 0..7   magic "PULSEW1\n"
//   bytes 8..15  header length N, uint64 little-endian
//   next N bytes UTF-8 JSON {"config": {...}, "tensors": [{"name", "shape", "offset"}]}
//   payload      float32 little-endian tensors, concatenated in header order;
//                "offset" is the byte offset of each tensor within the payload

#include <filesystem>
#include <stdexcept>
#include <string>

#include "pulse/model.hpp"

namespace pulse {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kWeightMagic[] = "PULSEW1\n";

std::string serialize_params(const PulseParams& params);
/// Throws FormatError on a bad magic, truncated data, or a header that does
/// not match the layout implied by its config.
PulseParams parse_params(const std::string& bytes);

void save_params(const PulseParams& params, const std::filesystem::path& path);
PulseParams load_params(const std::filesystem::path& path);

}  // namespace pulse
