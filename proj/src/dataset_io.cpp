#include "pulse/dataset_io.hpp"

#include <algorithm>
#include <cmath>

#include "pulse/fsutil.hpp"

namespace fs = std::filesystem;

namespace pulse {

namespace {

std::string channel_file(const std::string& name) { return name + ".f32"; }

}  // namespace

void write_subject(const SignalRecord& record, const fs::path& subject_dir) {
    record.validate();
    fs::create_directories(subject_dir);
    nlohmann::json channels = nlohmann::json::array();
    for (const Channel& ch : record.channels) {
        const std::string file = channel_file(ch.name);
        write_file_atomic(subject_dir / file, encode_f32le(ch.samples));
        channels.push_back(
            {{"name", ch.name}, {"sample_rate_hz", ch.sample_rate_hz}, {"file", file}, {"n_samples", ch.samples.size()}});
    }
    write_file_atomic(subject_dir / "hr.f32", encode_f32le(record.hr_labels));
    nlohmann::json manifest = {
        {"subject_id", record.subject_id},
        {"channels", channels},
        {"labels",
         {{"file", "hr.f32"},
          {"window_s", record.label_window_s},
          {"shift_s", record.label_shift_s},
          {"n_windows", record.hr_labels.size()}}},
    };
    if (!record.activities.empty()) {
        nlohmann::json spans = nlohmann::json::array();
        for (const ActivitySpan& s : record.activities) {
            spans.push_back({{"id", s.id}, {"start_s", s.start_s}, {"end_s", s.end_s}});
        }
        write_file_atomic(subject_dir / "activities.json", spans.dump(1));
        manifest["activities"] = {{"file", "activities.json"}, {"encoding", "spans_json"}};
    }
    write_file_atomic(subject_dir / kManifestName, manifest.dump(2) + "\n");
}

void write_dataset(const std::vector<SignalRecord>& records, const fs::path& dir) {
    for (const SignalRecord& r : records) write_subject(r, dir / r.subject_id);
}

std::vector<std::string> validate_manifest(const nlohmann::json& m, const fs::path& subject_dir) {
    std::vector<std::string> problems;
    auto need = [&](const nlohmann::json& obj, const char* key, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) {
            problems.push_back(where + ": missing '" + key + "'");
            return false;
        }
        return true;
    };
    if (!need(m, "subject_id", "manifest") || !need(m, "channels", "manifest") || !need(m, "labels", "manifest")) {
        return problems;
    }
    double min_duration = INFINITY;
    for (const auto& ch : m.at("channels")) {
        const std::string where = "channel " + ch.value("name", std::string("?"));
        if (!need(ch, "name", where) || !need(ch, "sample_rate_hz", where) || !need(ch, "file", where) ||
            !need(ch, "n_samples", where)) {
            continue;
        }
        const fs::path file = subject_dir / ch.at("file").get<std::string>();
        const auto n = ch.at("n_samples").get<std::size_t>();
        const double rate = ch.at("sample_rate_hz").get<double>();
        if (!(rate > 0.0)) problems.push_back(where + ": sample_rate_hz must be positive");
        std::error_code ec;
        const auto bytes = fs::file_size(file, ec);
        if (ec) {
            problems.push_back(where + ": cannot stat " + file.string());
        } else if (bytes != n * 4) {
            problems.push_back(where + ": n_samples " + std::to_string(n) + " but file holds " +
                               std::to_string(bytes) + " bytes");
        }
        if (rate > 0.0) min_duration = std::min(min_duration, static_cast<double>(n) / rate);
    }
    const auto& labels = m.at("labels");
    if (need(labels, "file", "labels") && need(labels, "window_s", "labels") && need(labels, "shift_s", "labels") &&
        need(labels, "n_windows", "labels")) {
        const auto n = labels.at("n_windows").get<std::size_t>();
        std::error_code ec;
        const fs::path file = subject_dir / labels.at("file").get<std::string>();
        const auto bytes = fs::file_size(file, ec);
        if (ec) {
            problems.push_back("labels: cannot stat " + file.string());
        } else if (bytes != n * 4) {
            problems.push_back("labels: n_windows " + std::to_string(n) + " but file holds " + std::to_string(bytes) +
                               " bytes");
        }
        const double w = labels.at("window_s").get<double>(), s = labels.at("shift_s").get<double>();
        if (std::isfinite(min_duration) && w > 0 && s > 0) {
            const double expected = min_duration < w ? 0.0 : std::floor((min_duration - w) / s + 1e-9) + 1.0;
            // Source datasets sometimes carry one label more or less than the
            // shortest channel supports.
            if (std::abs(static_cast<double>(n) - expected) > 1.0) {
                problems.push_back("labels: n_windows " + std::to_string(n) + " inconsistent with channel duration " +
                                   std::to_string(min_duration) + " s (expected " +
                                   std::to_string(static_cast<long long>(expected)) + ")");
            }
        }
    }
    if (m.contains("activities")) {
        const auto& a = m.at("activities");
        if (need(a, "file", "activities") && need(a, "encoding", "activities")) {
            if (a.at("encoding") != "spans_json") {
                problems.push_back("activities: unsupported encoding " + a.at("encoding").dump());
            }
            if (!fs::exists(subject_dir / a.at("file").get<std::string>())) {
                problems.push_back("activities: missing file " + a.at("file").get<std::string>());
            }
        }
    }
    return problems;
}

SignalRecord read_subject(const fs::path& subject_dir) {
    const fs::path manifest_path = subject_dir / kManifestName;
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(manifest_path.string() + ": " + e.what());
    }
    const auto problems = validate_manifest(m, subject_dir);
    if (!problems.empty()) {
        std::string msg = manifest_path.string() + ":";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ManifestError(msg);
    }

    SignalRecord r;
    r.subject_id = m.at("subject_id").get<std::string>();
    for (const auto& ch : m.at("channels")) {
        r.channels.push_back({ch.at("name").get<std::string>(), ch.at("sample_rate_hz").get<double>(),
                              read_f32le(subject_dir / ch.at("file").get<std::string>())});
    }
    const auto& labels = m.at("labels");
    r.hr_labels = read_f32le(subject_dir / labels.at("file").get<std::string>());
    r.label_window_s = labels.at("window_s").get<double>();
    r.label_shift_s = labels.at("shift_s").get<double>();
    if (m.contains("activities")) {
        const auto spans = nlohmann::json::parse(read_file(subject_dir / m["activities"]["file"].get<std::string>()));
        for (const auto& s : spans) {
            r.activities.push_back({s.at("id").get<int>(), s.at("start_s").get<double>(), s.at("end_s").get<double>()});
        }
    }
    r.validate();
    return r;
}

std::vector<SignalRecord> read_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ManifestError("dataset directory " + dir.string() + " does not exist");
    std::vector<fs::path> subjects;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / kManifestName)) subjects.push_back(entry.path());
    }
    if (subjects.empty()) throw ManifestError("no subject manifests under " + dir.string());
    std::sort(subjects.begin(), subjects.end());
    std::vector<SignalRecord> out;
    for (const auto& s : subjects) out.push_back(read_subject(s));
    return out;
}

std::map<std::string, WindowSet> load_windows(const fs::path& dir, const SegmentOptions& opts) {
    std::map<std::string, WindowSet> out;
    for (const SignalRecord& r : read_dataset(dir)) {
        SegmentOptions o = opts;
        o.window_s = r.label_window_s;
        o.shift_s = r.label_shift_s;
        out[r.subject_id] = prepare(r, o);
    }
    return out;
}

}  // namespace pulse
