#pragma once

// On-disk dataset: one directory per subject holding manifest.json plus raw
// channel files (headerless float32 little-endian).
//
//   {
//     "subject_id": "S1",
//     "channels": [{"name": "ppg", "sample_rate_hz": 64, "file": "ppg.f32", "n_samples": 76800}, ...],
//     "labels": {"file": "hr.f32", "window_s": 8, "shift_s": 2, "n_windows": 597},
//     "activities": {"file": "activities.json", "encoding": "spans_json"}    (optional)
//   }
//
// The label file holds one float32 per window, NaN where the label is
// missing. "spans_json" activity files are [{"id", "start_s", "end_s"}, ...].

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pulse/preprocess.hpp"

namespace pulse {

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kManifestName[] = "manifest.json";

void write_subject(const SignalRecord& record, const std::filesystem::path& subject_dir);
void write_dataset(const std::vector<SignalRecord>& records, const std::filesystem::path& dir);

/// Reads and checks one subject directory.
SignalRecord read_subject(const std::filesystem::path& subject_dir);
/// Every subdirectory containing a manifest, sorted by directory name.
std::vector<SignalRecord> read_dataset(const std::filesystem::path& dir);

/// Checks the manifest's internal consistency against the files next to it;
/// returns one message per problem (empty when valid).
std::vector<std::string> validate_manifest(const nlohmann::json& manifest, const std::filesystem::path& subject_dir);

/// read_dataset + prepare, keyed by subject id.
std::map<std::string, WindowSet> load_windows(const std::filesystem::path& dir, const SegmentOptions& opts = {});

}  // namespace pulse
