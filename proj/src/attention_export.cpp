#include "pulse/attention_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pulse/fsutil.hpp"

namespace pulse {

std::string attention_csv(const Tensor& a) {
    require_rank(a, 2, "attention_csv weights");
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        for (std::size_t j = 0; j < a.dim(1); ++j) {
            std::snprintf(buf, sizeof buf, j ? ",%.9g" : "%.9g", static_cast<double>(a.at(i, j)));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::string attention_pgm(const Tensor& a) {
    require_rank(a, 2, "attention_pgm weights");
    std::string out = "P5\n" + std::to_string(a.dim(1)) + " " + std::to_string(a.dim(0)) + "\n255\n";
    for (const float v : a.data()) {
        const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
        out += static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * clamped)));
    }
    return out;
}

nlohmann::json attention_sidecar(const AttentionMap& map) {
    auto segments = [](const std::vector<Segment>& segs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Segment& s : segs) arr.push_back({{"name", s.name}, {"begin", s.begin}, {"end", s.end}});
        return arr;
    };
    nlohmann::json j;
    j["heads"] = map.heads.size();
    j["rows"] = map.heads.empty() ? 0 : map.heads.front().dim(0);
    j["cols"] = map.heads.empty() ? 0 : map.heads.front().dim(1);
    j["row_segments"] = segments(map.row_segments);
    j["col_segments"] = segments(map.col_segments);
    return j;
}

std::vector<std::filesystem::path> write_attention(const AttentionMap& map, const std::string& prefix,
                                                   const nlohmann::json& extra) {
    std::vector<std::filesystem::path> paths;
    nlohmann::json side = attention_sidecar(map);
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t h = 0; h < map.heads.size(); ++h) {
        const std::string stem = prefix + ".head" + std::to_string(h);
        write_file_atomic(stem + ".csv", attention_csv(map.heads[h]));
        write_file_atomic(stem + ".pgm", attention_pgm(map.heads[h]));
        paths.emplace_back(stem + ".csv");
        paths.emplace_back(stem + ".pgm");
        const std::string base = std::filesystem::path(stem).filename().string();
        files.push_back({{"head", h}, {"csv", base + ".csv"}, {"pgm", base + ".pgm"}});
    }
    side["files"] = files;
    side.update(extra);
    write_file_atomic(prefix + ".json", side.dump(2) + "\n");
    paths.emplace_back(prefix + ".json");
    return paths;
}

}  // namespace pulse
