#pragma once

// Raw recordings -> model-ready windows: linear resampling to a common rate,
// 8 s / 2 s segmentation on the label grid, and per-channel z-scoring.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pulse/tensor.hpp"

namespace pulse {

struct Channel {
    std::string name;  // "ppg", "ppg0", "acc_x", ...
    double sample_rate_hz = 0.0;
    std::vector<float> samples;
};

/// Activity label covering [start_s, end_s) of the recording.
struct ActivitySpan {
    int id = 0;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct SignalRecord {
    std::string subject_id;
    std::vector<Channel> channels;
    /// One ground-truth HR per label window; NaN marks a missing label.
    std::vector<float> hr_labels;
    double label_window_s = 8.0;
    double label_shift_s = 2.0;
    std::vector<ActivitySpan> activities;

    double duration_s(std::size_t channel) const;
    /// Channel durations agree within one label shift; labels in (0, 300) or NaN.
    void validate() const;
};

/// Windows are [C, T] with the PPG channels first, then the accelerometer axes.
struct WindowSet {
    std::vector<Tensor> windows;
    std::vector<float> targets;
    std::vector<std::string> subject_ids;
    std::vector<int> activity_ids;  // -1 when unlabeled

    std::size_t size() const { return windows.size(); }
    bool empty() const { return windows.empty(); }
    void append(const WindowSet& other);
    WindowSet subset(std::span<const std::size_t> indices) const;
};

struct SegmentOptions {
    double window_s = 8.0;
    double shift_s = 2.0;
    double rate_hz = 32.0;
};

/// Linear interpolation onto a uniform dst_hz grid over the same time span.
/// Output length is floor(n * dst_hz / src_hz). Requires src_hz >= dst_hz > 0.
std::vector<float> resample(std::span<const float> samples, double src_hz, double dst_hz);

/// Number of windows for a recording of `length` samples; 0 if too short.
std::size_t window_count(std::size_t length, std::size_t window, std::size_t shift);

/// Cuts a record whose channels are already at opts.rate_hz. Windows without
/// a label are dropped. Output is not z-scored.
WindowSet segment(const SignalRecord& record, const SegmentOptions& opts = {});

/// Per channel: subtract the mean, divide by the population std. Channels
/// with std < 1e-8 become zeros.
Tensor zscore(const Tensor& window);

/// resample -> segment -> zscore.
WindowSet prepare(const SignalRecord& record, const SegmentOptions& opts = {});

/// Indices of the PPG channels followed by the accelerometer channels.
std::vector<std::size_t> model_channel_order(const SignalRecord& record);

}  // namespace pulse
