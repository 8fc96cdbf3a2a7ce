#include "pulse/weights_io.hpp"

#include <cstdint>
#include <cstring>

#include "pulse/fsutil.hpp"

namespace pulse {

namespace {

constexpr std::size_t kMagicLen = sizeof(kWeightMagic) - 1;

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64le(const std::string& in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

}  // namespace

std::string serialize_params(const PulseParams& params) {
    const auto layout = param_layout(params.config);
    if (layout.size() != params.tensors.size()) {
        throw FormatError("parameter list has " + std::to_string(params.tensors.size()) + " tensors, layout has " +
                          std::to_string(layout.size()));
    }
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params.tensors[i].shape() != layout[i].shape) {
            throw FormatError("tensor " + layout[i].name + " has shape " + shape_string(params.tensors[i].shape()));
        }
        tensors.push_back({{"name", layout[i].name}, {"shape", layout[i].shape}, {"offset", offset}});
        offset += params.tensors[i].size() * 4;
    }
    const nlohmann::json header = {{"config", config_to_json(params.config)}, {"tensors", tensors}};
    const std::string header_text = header.dump();

    std::string out(kWeightMagic, kMagicLen);
    put_u64le(out, header_text.size());
    out += header_text;
    out.reserve(out.size() + offset);
    for (const Tensor& t : params.tensors) out += encode_f32le(t.data());
    return out;
}

PulseParams parse_params(const std::string& bytes) {
    if (bytes.size() < kMagicLen + 8 || std::memcmp(bytes.data(), kWeightMagic, kMagicLen) != 0) {
        throw FormatError("not a PULSEW1 weight file (bad magic)");
    }
    const std::uint64_t header_len = get_u64le(bytes, kMagicLen);
    const std::size_t payload_start = kMagicLen + 8 + header_len;
    if (header_len > bytes.size() || payload_start > bytes.size()) throw FormatError("weight header truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(kMagicLen + 8, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("weight header is not valid JSON: ") + e.what());
    }
    if (!header.contains("config") || !header.contains("tensors")) {
        throw FormatError("weight header needs 'config' and 'tensors'");
    }

    PulseParams params;
    try {
        params.config = config_from_json(header.at("config"));
    } catch (const std::exception& e) {
        throw FormatError(std::string("weight header config: ") + e.what());
    }
    const auto layout = param_layout(params.config);
    const auto& entries = header.at("tensors");
    if (!entries.is_array() || entries.size() != layout.size()) {
        throw FormatError("weight header lists " + std::to_string(entries.size()) + " tensors, config implies " +
                          std::to_string(layout.size()));
    }
    const std::string_view payload(bytes.data() + payload_start, bytes.size() - payload_start);
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& e = entries[i];
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        const auto offset = e.at("offset").get<std::size_t>();
        if (name != layout[i].name || shape != layout[i].shape) {
            throw FormatError("tensor " + std::to_string(i) + " is " + name + shape_string(shape) + ", expected " +
                              layout[i].name + shape_string(layout[i].shape));
        }
        const std::size_t len = shape_size(shape) * 4;
        if (offset != expected_offset) {
            throw FormatError("tensor " + name + " offset " + std::to_string(offset) + ", expected " +
                              std::to_string(expected_offset));
        }
        if (offset + len > payload.size()) throw FormatError("payload truncated in tensor " + name);
        params.tensors.emplace_back(shape, decode_f32le(payload.substr(offset, len)));
        expected_offset += len;
    }
    if (expected_offset != payload.size()) {
        throw FormatError("payload has " + std::to_string(payload.size() - expected_offset) + " trailing bytes");
    }
    return params;
}

void save_params(const PulseParams& params, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_params(params));
}

PulseParams load_params(const std::filesystem::path& path) {
    return parse_params(read_file(path));
}

}  // namespace pulse
