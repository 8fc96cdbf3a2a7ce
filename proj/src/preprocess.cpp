#include "pulse/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pulse {

double SignalRecord::duration_s(std::size_t channel) const {
    const Channel& c = channels.at(channel);
    return static_cast<double>(c.samples.size()) / c.sample_rate_hz;
}

void SignalRecord::validate() const {
    if (channels.empty()) throw std::invalid_argument("record " + subject_id + " has no channels");
    for (const Channel& c : channels) {
        if (!(c.sample_rate_hz > 0.0)) {
            throw std::invalid_argument("record " + subject_id + " channel " + c.name + " has nonpositive rate");
        }
    }
    double lo = duration_s(0), hi = lo;
    for (std::size_t i = 1; i < channels.size(); ++i) {
        lo = std::min(lo, duration_s(i));
        hi = std::max(hi, duration_s(i));
    }
    if (hi - lo > label_shift_s) {
        throw std::invalid_argument("record " + subject_id + ": channel durations differ by " +
                                    std::to_string(hi - lo) + " s, more than one window shift");
    }
    for (std::size_t i = 0; i < hr_labels.size(); ++i) {
        const float v = hr_labels[i];
        if (std::isnan(v)) continue;
        if (!(v > 0.0f && v < 300.0f)) {
            throw std::invalid_argument("record " + subject_id + ": HR label " + std::to_string(i) + " = " +
                                        std::to_string(v) + " outside (0, 300) BPM");
        }
    }
}

void WindowSet::append(const WindowSet& other) {
    windows.insert(windows.end(), other.windows.begin(), other.windows.end());
    targets.insert(targets.end(), other.targets.begin(), other.targets.end());
    subject_ids.insert(subject_ids.end(), other.subject_ids.begin(), other.subject_ids.end());
    activity_ids.insert(activity_ids.end(), other.activity_ids.begin(), other.activity_ids.end());
}

WindowSet WindowSet::subset(std::span<const std::size_t> indices) const {
    WindowSet out;
    for (std::size_t i : indices) {
        out.windows.push_back(windows.at(i));
        out.targets.push_back(targets.at(i));
        out.subject_ids.push_back(subject_ids.at(i));
        out.activity_ids.push_back(activity_ids.at(i));
    }
    return out;
}

std::vector<float> resample(std::span<const float> samples, double src_hz, double dst_hz) {
    if (samples.empty()) throw std::invalid_argument("resample: empty input");
    if (!(dst_hz > 0.0) || !(src_hz > 0.0)) throw std::invalid_argument("resample: rates must be positive");
    if (src_hz < dst_hz) throw std::invalid_argument("resample: only downsampling is supported (src < dst)");
    if (src_hz == dst_hz) return {samples.begin(), samples.end()};

    const double ratio = src_hz / dst_hz;
    // Small slack so exact products like 1000 * 32 / 125 = 256 are not lost to rounding.
    const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) / ratio + 1e-9));
    std::vector<float> out(n_out);
    const std::size_t last = samples.size() - 1;
    for (std::size_t k = 0; k < n_out; ++k) {
        const double pos = static_cast<double>(k) * ratio;
        const auto i = std::min(static_cast<std::size_t>(pos), last);
        const double frac = pos - static_cast<double>(i);
        const double a = samples[i];
        const double b = samples[std::min(i + 1, last)];
        out[k] = static_cast<float>(a + (b - a) * frac);
    }
    return out;
}

std::size_t window_count(std::size_t length, std::size_t window, std::size_t shift) {
    if (window == 0 || shift == 0) throw std::invalid_argument("window_count: window and shift must be positive");
    if (length < window) return 0;
    return (length - window) / shift + 1;
}

std::vector<std::size_t> model_channel_order(const SignalRecord& record) {
    std::vector<std::size_t> ppg, acc;
    for (std::size_t i = 0; i < record.channels.size(); ++i) {
        const std::string& name = record.channels[i].name;
        if (name.rfind("ppg", 0) == 0) {
            ppg.push_back(i);
        } else if (name.rfind("acc", 0) == 0) {
            acc.push_back(i);
        }
    }
    if (ppg.empty()) throw std::invalid_argument("record " + record.subject_id + " has no ppg channel");
    ppg.insert(ppg.end(), acc.begin(), acc.end());
    return ppg;
}

namespace {

std::size_t samples_for(double seconds, double rate_hz, const char* what) {
    const double n = seconds * rate_hz;
    const double r = std::round(n);
    if (r < 1.0 || std::abs(n - r) > 1e-9) {
        throw std::invalid_argument(std::string("segment: ") + what + " is not a whole number of samples");
    }
    return static_cast<std::size_t>(r);
}

int activity_at(const std::vector<ActivitySpan>& spans, double t) {
    for (const ActivitySpan& s : spans) {
        if (t >= s.start_s && t < s.end_s) return s.id;
    }
    return -1;
}

}  // namespace

WindowSet segment(const SignalRecord& record, const SegmentOptions& opts) {
    const std::size_t window = samples_for(opts.window_s, opts.rate_hz, "window");
    const std::size_t shift = samples_for(opts.shift_s, opts.rate_hz, "shift");
    const auto order = model_channel_order(record);

    std::size_t length = SIZE_MAX;
    for (std::size_t c : order) {
        const Channel& ch = record.channels[c];
        if (ch.sample_rate_hz != opts.rate_hz) {
            throw std::invalid_argument("segment: channel " + ch.name + " is at " + std::to_string(ch.sample_rate_hz) +
                                        " Hz, expected " + std::to_string(opts.rate_hz));
        }
        length = std::min(length, ch.samples.size());
    }
    const std::size_t n = window_count(length, window, shift);
    if (n == 0) {
        throw std::invalid_argument("segment: record " + record.subject_id + " (" + std::to_string(length) +
                                    " samples) is shorter than one window");
    }

    WindowSet out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= record.hr_labels.size() || std::isnan(record.hr_labels[i])) continue;
        Tensor w({order.size(), window});
        for (std::size_t c = 0; c < order.size(); ++c) {
            const auto& src = record.channels[order[c]].samples;
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * shift), window,
                        w.data().begin() + static_cast<std::ptrdiff_t>(c * window));
        }
        out.windows.push_back(std::move(w));
        out.targets.push_back(record.hr_labels[i]);
        out.subject_ids.push_back(record.subject_id);
        const double center = static_cast<double>(i) * opts.shift_s + opts.window_s / 2.0;
        out.activity_ids.push_back(activity_at(record.activities, center));
    }
    return out;
}

Tensor zscore(const Tensor& window) {
    require_rank(window, 2, "zscore window");
    const std::size_t channels = window.dim(0), len = window.dim(1);
    Tensor out(window.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        const float* x = window.data().data() + c * len;
        double mean = 0.0;
        for (std::size_t t = 0; t < len; ++t) mean += x[t];
        mean /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t t = 0; t < len; ++t) var += (x[t] - mean) * (x[t] - mean);
        const double sd = std::sqrt(var / static_cast<double>(len));
        float* y = out.data().data() + c * len;
        if (sd < 1e-8) continue;
        for (std::size_t t = 0; t < len; ++t) y[t] = static_cast<float>((x[t] - mean) / sd);
    }
    return out;
}

WindowSet prepare(const SignalRecord& record, const SegmentOptions& opts) {
    record.validate();
    SignalRecord at_rate = record;
    for (Channel& ch : at_rate.channels) {
        if (ch.sample_rate_hz != opts.rate_hz) {
            ch.samples = resample(ch.samples, ch.sample_rate_hz, opts.rate_hz);
            ch.sample_rate_hz = opts.rate_hz;
        }
    }
    WindowSet out = segment(at_rate, opts);
    for (Tensor& w : out.windows) w = zscore(w);
    return out;
}

}  // namespace pulse
