#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pulse/dataset_io.hpp"
#include "pulse/fsutil.hpp"
#include "pulse/harness.hpp"
#include "pulse/weights_io.hpp"
#include "support.hpp"

using namespace pulse;
namespace fs = std::filesystem;

namespace {

PulseParams some_params() {
    PulseConfig c;
    c.block_channels = {4, 6, 8};
    c.d_model = 8;
    c.attention_mode = AttentionMode::MhcaPpgKeyValue;
    PulseParams p = init_params(c, 71);
    Rng rng(72);
    for (Tensor& t : p.tensors) {
        for (auto& v : t.data()) v += static_cast<float>(rng.normal());
    }
    return p;
}

std::uint64_t header_length(const std::string& bytes) {
    std::uint64_t n = 0;
    for (int i = 7; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
    return n;
}

}  // namespace

TEST_CASE("float32 little-endian encoding") {
    const std::vector<float> v{1.0f, -2.5f, NAN};
    const std::string bytes = encode_f32le(v);
    REQUIRE(bytes.size() == 12);
    // 1.0f = 0x3f800000
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[3]) == 0x3f);
    const auto back = decode_f32le(bytes);
    CHECK(back[0] == 1.0f);
    CHECK(back[1] == -2.5f);
    CHECK(std::isnan(back[2]));
    CHECK_THROWS(decode_f32le("abc"));
}

TEST_CASE("weights save, load, save gives identical bytes") {
    const PulseParams p = some_params();
    const fs::path dir = test::scratch_dir("weights");
    save_params(p, dir / "a.pw");
    const PulseParams q = load_params(dir / "a.pw");
    CHECK(q.config == p.config);
    CHECK(q.tensors == p.tensors);
    save_params(q, dir / "b.pw");
    CHECK(read_file(dir / "a.pw") == read_file(dir / "b.pw"));
}

TEST_CASE("weight header matches the payload") {
    const PulseParams p = some_params();
    const std::string bytes = serialize_params(p);
    CHECK(bytes.compare(0, 8, "PULSEW1\n") == 0);
    const std::uint64_t n = header_length(bytes);
    const auto header = nlohmann::json::parse(bytes.substr(16, n));
    const std::size_t payload = bytes.size() - 16 - n;
    std::size_t expected_offset = 0, elements = 0;
    const auto layout = param_layout(p.config);
    REQUIRE(header.at("tensors").size() == layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& t = header["tensors"][i];
        CHECK(t.at("name") == layout[i].name);
        CHECK(t.at("offset").get<std::size_t>() == expected_offset);
        std::size_t count = 1;
        for (auto d : t.at("shape")) count *= d.get<std::size_t>();
        expected_offset += 4 * count;
        elements += count;
        float first;
        std::memcpy(&first, bytes.data() + 16 + n + t.at("offset").get<std::size_t>(), 4);
        CHECK(first == p.tensors[i][0]);
    }
    CHECK(payload == expected_offset);
    CHECK(elements == param_count(p.config));
    CHECK(config_from_json(header.at("config")) == p.config);
}

TEST_CASE("corrupted weight files are rejected") {
    const std::string good = serialize_params(some_params());
    std::string bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_params(bad), FormatError);
    CHECK_THROWS_AS(parse_params(good.substr(0, good.size() - 4)), FormatError);
    CHECK_THROWS_AS(parse_params(good + "1234"), FormatError);
    CHECK_THROWS_AS(parse_params(good.substr(0, 12)), FormatError);
    bad = good;
    bad[17] = '#';
    CHECK_THROWS_AS(parse_params(bad), FormatError);
    CHECK_THROWS_AS(load_params(test::scratch_dir("weights_missing") / "none.pw"), std::runtime_error);
}

TEST_CASE("dataset round trip through manifests") {
    const auto records = synth_generate(2, 1.0, 73);
    const fs::path dir = test::scratch_dir("dataset");
    write_dataset(records, dir);
    const auto back = read_dataset(dir);
    REQUIRE(back.size() == 2);
    for (std::size_t s = 0; s < 2; ++s) {
        CHECK(back[s].subject_id == records[s].subject_id);
        REQUIRE(back[s].channels.size() == records[s].channels.size());
        for (std::size_t c = 0; c < back[s].channels.size(); ++c) {
            CHECK(back[s].channels[c].name == records[s].channels[c].name);
            CHECK(back[s].channels[c].sample_rate_hz == records[s].channels[c].sample_rate_hz);
            CHECK(back[s].channels[c].samples == records[s].channels[c].samples);
        }
        CHECK(back[s].hr_labels == records[s].hr_labels);
        CHECK(back[s].activities.size() == records[s].activities.size());
        const auto m = nlohmann::json::parse(read_file(dir / records[s].subject_id / "manifest.json"));
        CHECK(validate_manifest(m, dir / records[s].subject_id).empty());
    }
    const auto windows = load_windows(dir);
    CHECK(windows.size() == 2);
    // 60 s at 32 Hz: floor((60 - 8) / 2) + 1 windows.
    for (const auto& [id, w] : windows) CHECK(w.size() == 27);
}

TEST_CASE("manifest validation flags inconsistencies") {
    const auto records = synth_generate(1, 1.0, 74);
    const fs::path dir = test::scratch_dir("manifest");
    write_subject(records[0], dir);
    const auto good = nlohmann::json::parse(read_file(dir / "manifest.json"));

    auto m = good;
    m["channels"][0]["n_samples"] = m["channels"][0]["n_samples"].get<std::size_t>() + 1;
    CHECK(validate_manifest(m, dir).size() >= 1);

    m = good;
    m["labels"]["n_windows"] = 5;
    CHECK_FALSE(validate_manifest(m, dir).empty());

    m = good;
    m.erase("labels");
    CHECK_FALSE(validate_manifest(m, dir).empty());

    m = good;
    m["activities"]["encoding"] = "per_sample";
    CHECK_FALSE(validate_manifest(m, dir).empty());

    // A truncated channel file is a length mismatch.
    const std::string file = good["channels"][1]["file"];
    const std::string bytes = read_file(dir / file);
    write_file_atomic(dir / file, bytes.substr(0, bytes.size() - 8));
    const auto problems = validate_manifest(good, dir);
    REQUIRE(problems.size() == 1);
    CHECK(problems[0].find("n_samples") != std::string::npos);
    CHECK_THROWS_AS(read_subject(dir), ManifestError);
}

TEST_CASE("reading a missing or empty dataset is an error") {
    CHECK_THROWS_AS(read_dataset(test::scratch_dir("empty_ds") / "nope"), ManifestError);
    CHECK_THROWS_AS(read_dataset(test::scratch_dir("empty_ds2")), ManifestError);
}
