#pragma once

// Leave-one-session-out orchestration, the +-10% output clipper, MAE tables,
// and a synthetic PPG/accelerometer generator.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pulse/preprocess.hpp"
#include "pulse/training.hpp"

namespace pulse {

struct FoldSpec {
    std::size_t iteration = 0;
    std::size_t held_out_group = 0;
    std::string test_subject;
    std::vector<std::string> validation_subjects;
    std::vector<std::string> train_subjects;
    /// Held-out group was a singleton: validation comes from a window split of
    /// the training subjects instead.
    bool validation_from_train_split = false;
};

inline constexpr std::size_t kFoldGroups = 4;

/// Seeded partition into four groups (sizes differ by at most one, larger
/// groups first), then one iteration per subject in input order.
std::vector<FoldSpec> loso_folds(std::span<const std::string> subject_ids, std::uint64_t seed);

struct FoldData {
    WindowSet train, validation, test;
};

/// Materializes a fold from per-subject windows. In the fallback mode the last
/// `split_fraction` of each training subject's windows become validation.
FoldData split_fold(const FoldSpec& fold, const std::map<std::string, WindowSet>& by_subject,
                    double split_fraction = 0.2);

inline constexpr std::size_t kClipHistory = 10;
inline constexpr double kClipBand = 0.10;

/// Clamps each prediction to +-10% of the mean of up to the 10 previous
/// *output* values. The first value passes through.
std::vector<float> postprocess_clip(std::span<const float> predictions);

/// Applies postprocess_clip separately to each subject's run of windows,
/// preserving window order.
std::vector<float> postprocess_by_subject(std::span<const float> predictions,
                                          std::span<const std::string> subject_ids);

struct MaeRow {
    std::string key;
    std::size_t n_windows = 0;
    double mae_bpm = 0.0;
};

struct MaeReport {
    MaeRow overall;
    std::vector<MaeRow> per_subject;   // sorted by key
    std::vector<MaeRow> per_activity;  // sorted by activity id
};

MaeReport report(std::span<const float> predictions, std::span<const float> targets,
                 std::span<const std::string> subjects, std::span<const int> activities);

/// "key,n_windows,mae_bpm" CSV text.
std::string mae_csv(std::span<const MaeRow> rows);

/// Writes mae_overall.csv, mae_per_subject.csv and mae_per_activity.csv.
void write_report(const MaeReport& r, const std::filesystem::path& dir);

/// Raw and per-subject clipped predictions for a window set, with MAE tables
/// for both.
struct EvalReport {
    std::vector<float> raw, postprocessed;
    MaeReport raw_report, post_report;
};

EvalReport evaluate_report(const PulseParams& params, const WindowSet& windows);

struct IterationResult {
    FoldSpec fold;
    TrainResult training;
    EvalReport test;
};

/// One LOSO iteration: split, initialize from train.seed, train, then
/// evaluate on the held-out subject.
IterationResult run_iteration(const FoldSpec& fold, const std::map<std::string, WindowSet>& by_subject,
                              const PulseConfig& model, const TrainConfig& train, const EpochCallback& on_epoch = {});

struct SynthOptions {
    double ppg_rate_hz = 64.0;
    double acc_rate_hz = 32.0;
    double window_s = 8.0;
    double shift_s = 2.0;
};

/// Activity ids used by the generator.
enum SynthActivity : int { kSitting = 1, kWalking = 2, kStairs = 3, kCycling = 4, kDriving = 5 };

/// Synthetic subjects: HR(t) is a smooth random walk in [50, 160] BPM pulled
/// toward an activity-dependent level; PPG is a pulse wave at HR/60 Hz with a
/// harmonic, noise and a motion artifact tied to the accelerometer magnitude.
/// Labels are the mean of HR(t) over each 8 s / 2 s window.
std::vector<SignalRecord> synth_generate(std::size_t n_subjects, double minutes, std::uint64_t seed,
                                         const SynthOptions& opts = {});

/// HR(t) on the PPG sample grid for a generated record (kept for checking
/// the label construction).
std::vector<double> synth_hr_trace(std::size_t subject, double minutes, std::uint64_t seed,
                                   const SynthOptions& opts = {});

}  // namespace pulse
