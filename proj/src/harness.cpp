#include "pulse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "pulse/fsutil.hpp"
#include "pulse/rng.hpp"

namespace pulse {

std::vector<FoldSpec> loso_folds(std::span<const std::string> subject_ids, std::uint64_t seed) {
    const std::size_t n = subject_ids.size();
    if (n < kFoldGroups) {
        throw std::invalid_argument("loso_folds: need at least " + std::to_string(kFoldGroups) + " subjects, got " +
                                    std::to_string(n));
    }
    std::vector<std::string> sorted(subject_ids.begin(), subject_ids.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("loso_folds: duplicate subject ids");
    }

    std::vector<std::string> shuffled(subject_ids.begin(), subject_ids.end());
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(shuffled));

    std::vector<std::vector<std::string>> groups(kFoldGroups);
    const std::size_t base = n / kFoldGroups, extra = n % kFoldGroups;
    std::size_t pos = 0;
    for (std::size_t g = 0; g < kFoldGroups; ++g) {
        const std::size_t size = base + (g < extra ? 1 : 0);
        groups[g].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                         shuffled.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    auto group_of = [&](const std::string& s) {
        for (std::size_t g = 0; g < kFoldGroups; ++g) {
            if (std::find(groups[g].begin(), groups[g].end(), s) != groups[g].end()) return g;
        }
        throw std::logic_error("subject missing from groups");
    };

    std::vector<FoldSpec> folds;
    for (std::size_t it = 0; it < n; ++it) {
        FoldSpec f;
        f.iteration = it;
        f.test_subject = subject_ids[it];
        f.held_out_group = group_of(f.test_subject);
        for (const std::string& s : groups[f.held_out_group]) {
            if (s != f.test_subject) f.validation_subjects.push_back(s);
        }
        for (const std::string& s : subject_ids) {
            if (group_of(s) != f.held_out_group) f.train_subjects.push_back(s);
        }
        f.validation_from_train_split = f.validation_subjects.empty();
        folds.push_back(std::move(f));
    }
    return folds;
}

FoldData split_fold(const FoldSpec& fold, const std::map<std::string, WindowSet>& by_subject,
                    double split_fraction) {
    auto windows_of = [&](const std::string& s) -> const WindowSet& {
        auto it = by_subject.find(s);
        if (it == by_subject.end()) throw std::invalid_argument("split_fold: no windows for subject " + s);
        return it->second;
    };
    FoldData d;
    d.test = windows_of(fold.test_subject);
    for (const std::string& s : fold.validation_subjects) d.validation.append(windows_of(s));
    for (const std::string& s : fold.train_subjects) {
        const WindowSet& w = windows_of(s);
        if (!fold.validation_from_train_split) {
            d.train.append(w);
            continue;
        }
        const auto n_val = static_cast<std::size_t>(std::ceil(static_cast<double>(w.size()) * split_fraction));
        std::vector<std::size_t> head, tail;
        for (std::size_t i = 0; i < w.size(); ++i) (i + n_val < w.size() ? head : tail).push_back(i);
        d.train.append(w.subset(head));
        d.validation.append(w.subset(tail));
    }
    return d;
}

std::vector<float> postprocess_clip(std::span<const float> predictions) {
    std::vector<float> out;
    out.reserve(predictions.size());
    for (std::size_t t = 0; t < predictions.size(); ++t) {
        if (t == 0) {
            out.push_back(predictions[0]);
            continue;
        }
        const std::size_t from = t > kClipHistory ? t - kClipHistory : 0;
        double avg = 0.0;
        for (std::size_t k = from; k < t; ++k) avg += out[k];
        avg /= static_cast<double>(t - from);
        const double lo = (1.0 - kClipBand) * avg, hi = (1.0 + kClipBand) * avg;
        const double a = std::min(lo, hi), b = std::max(lo, hi);
        float v = static_cast<float>(std::clamp(static_cast<double>(predictions[t]), a, b));
        // Rounding to float may step just outside the band; pull it back in.
        if (v > b) v = std::nextafter(v, -INFINITY);
        if (v < a) v = std::nextafter(v, INFINITY);
        out.push_back(v);
    }
    return out;
}

std::vector<float> postprocess_by_subject(std::span<const float> predictions,
                                          std::span<const std::string> subject_ids) {
    if (predictions.size() != subject_ids.size()) {
        throw std::invalid_argument("postprocess_by_subject: predictions and subject ids differ in length");
    }
    std::vector<float> out;
    out.reserve(predictions.size());
    std::size_t start = 0;
    while (start < predictions.size()) {
        std::size_t end = start;
        while (end < predictions.size() && subject_ids[end] == subject_ids[start]) ++end;
        const auto clipped = postprocess_clip(predictions.subspan(start, end - start));
        out.insert(out.end(), clipped.begin(), clipped.end());
        start = end;
    }
    return out;
}

MaeReport report(std::span<const float> predictions, std::span<const float> targets,
                 std::span<const std::string> subjects, std::span<const int> activities) {
    const std::size_t n = predictions.size();
    if (targets.size() != n || subjects.size() != n || activities.size() != n) {
        throw std::invalid_argument("report: input arrays differ in length");
    }
    struct Acc {
        std::size_t n = 0;
        double sum = 0.0;
    };
    Acc all;
    std::map<std::string, Acc> by_subject;
    std::map<int, Acc> by_activity;
    for (std::size_t i = 0; i < n; ++i) {
        const double err = std::abs(static_cast<double>(predictions[i]) - static_cast<double>(targets[i]));
        for (Acc* a : {&all, &by_subject[subjects[i]], &by_activity[activities[i]]}) {
            ++a->n;
            a->sum += err;
        }
    }
    auto row = [](std::string key, const Acc& a) {
        return MaeRow{std::move(key), a.n, a.n ? a.sum / static_cast<double>(a.n) : 0.0};
    };
    MaeReport r;
    r.overall = row("all", all);
    for (const auto& [k, a] : by_subject) r.per_subject.push_back(row(k, a));
    for (const auto& [k, a] : by_activity) r.per_activity.push_back(row(std::to_string(k), a));
    return r;
}

std::string mae_csv(std::span<const MaeRow> rows) {
    std::string out = "key,n_windows,mae_bpm\n";
    char buf[64];
    for (const MaeRow& r : rows) {
        std::snprintf(buf, sizeof buf, ",%zu,%.6f\n", r.n_windows, r.mae_bpm);
        out += r.key;
        out += buf;
    }
    return out;
}

void write_report(const MaeReport& r, const std::filesystem::path& dir) {
    write_file_atomic(dir / "mae_overall.csv", mae_csv(std::span(&r.overall, 1)));
    write_file_atomic(dir / "mae_per_subject.csv", mae_csv(r.per_subject));
    write_file_atomic(dir / "mae_per_activity.csv", mae_csv(r.per_activity));
}

EvalReport evaluate_report(const PulseParams& params, const WindowSet& windows) {
    EvalReport r;
    r.raw = evaluate(params, windows).predictions;
    r.postprocessed = postprocess_by_subject(r.raw, windows.subject_ids);
    r.raw_report = report(r.raw, windows.targets, windows.subject_ids, windows.activity_ids);
    r.post_report = report(r.postprocessed, windows.targets, windows.subject_ids, windows.activity_ids);
    return r;
}

IterationResult run_iteration(const FoldSpec& fold, const std::map<std::string, WindowSet>& by_subject,
                              const PulseConfig& model, const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
    const FoldData data = split_fold(fold, by_subject);
    IterationResult r{fold, train(init_params(model, train_cfg.seed), data.train, data.validation, train_cfg, on_epoch),
                      {}};
    r.test = evaluate_report(r.training.best, data.test);
    return r;
}

namespace {

struct ActivityProfile {
    int id;
    double hr_offset;   // BPM above the subject's resting level
    double amplitude;   // g
    double step_hz;     // dominant movement frequency
};

constexpr ActivityProfile kProfiles[] = {
    {kSitting, 0.0, 0.02, 0.3},
    {kWalking, 25.0, 0.45, 1.8},
    {kStairs, 40.0, 0.6, 1.6},
    {kCycling, 30.0, 0.25, 1.2},
    {kDriving, 6.0, 0.08, 0.6},
};

struct GeneratedSubject {
    SignalRecord record;
    std::vector<double> hr;  // on the PPG grid
};

GeneratedSubject generate_subject(std::size_t index, double minutes, std::uint64_t seed, const SynthOptions& opts) {
    Rng rng(seed ^ (0x9E3779B97F4A7C15ull * (index + 1)));
    const double duration = minutes * 60.0;
    const auto n_ppg = static_cast<std::size_t>(std::floor(duration * opts.ppg_rate_hz));
    const auto n_acc = static_cast<std::size_t>(std::floor(duration * opts.acc_rate_hz));

    // Activity schedule.
    std::vector<ActivitySpan> spans;
    std::vector<const ActivityProfile*> span_profile;
    for (double t = 0.0; t < duration;) {
        const ActivityProfile& p = kProfiles[rng.below(std::size(kProfiles))];
        const double len = rng.uniform(60.0, 180.0);
        spans.push_back({p.id, t, std::min(duration, t + len)});
        span_profile.push_back(&p);
        t += len;
    }
    auto profile_at = [&](double t) -> const ActivityProfile& {
        for (std::size_t k = 0; k < spans.size(); ++k) {
            if (t < spans[k].end_s) return *span_profile[k];
        }
        return *span_profile.back();
    };

    const double rest = rng.uniform(58.0, 82.0);
    const double axis_weight[3] = {rng.uniform(0.5, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.2, 0.8)};
    const double axis_phase[3] = {rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28)};
    const double gravity[3] = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.9};
    const double artifact_gain = rng.uniform(0.3, 0.6);
    const double harmonic_phase = rng.uniform(0.0, 6.28);

    auto clean_acc = [&](std::size_t axis, double t) {
        const ActivityProfile& p = profile_at(t);
        const double w = 2.0 * std::numbers::pi * p.step_hz * t + axis_phase[axis];
        return gravity[axis] + p.amplitude * axis_weight[axis] * (std::sin(w) + 0.3 * std::sin(2.0 * w));
    };

    GeneratedSubject out;
    SignalRecord& rec = out.record;
    char name[32];
    std::snprintf(name, sizeof name, "S%zu", index + 1);
    rec.subject_id = name;
    rec.label_window_s = opts.window_s;
    rec.label_shift_s = opts.shift_s;
    rec.activities = spans;

    // HR random walk with first-order pull toward the activity level.
    const double dt = 1.0 / opts.ppg_rate_hz;
    out.hr.resize(n_ppg);
    double hr = rest;
    double phase = 0.0;
    Channel ppg{"ppg", opts.ppg_rate_hz, std::vector<float>(n_ppg)};
    for (std::size_t k = 0; k < n_ppg; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double level = std::clamp(rest + profile_at(t).hr_offset, 50.0, 160.0);
        hr += (level - hr) * dt / 25.0 + 0.6 * std::sqrt(dt) * rng.normal();
        hr = std::clamp(hr, 50.0, 160.0);
        out.hr[k] = hr;
        phase += 2.0 * std::numbers::pi * hr / 60.0 * dt;

        double mag2 = 0.0;
        for (std::size_t a = 0; a < 3; ++a) mag2 += clean_acc(a, t) * clean_acc(a, t);
        const double artifact = artifact_gain * (std::sqrt(mag2) - 1.0);
        const double wander = 0.2 * std::sin(2.0 * std::numbers::pi * 0.15 * t);
        const double v = std::sin(phase) + 0.4 * std::sin(2.0 * phase + harmonic_phase) + artifact + wander +
                         0.08 * rng.normal();
        ppg.samples[k] = static_cast<float>(v);
    }
    rec.channels.push_back(std::move(ppg));

    static const char* axis_names[] = {"acc_x", "acc_y", "acc_z"};
    for (std::size_t a = 0; a < 3; ++a) {
        Channel ch{axis_names[a], opts.acc_rate_hz, std::vector<float>(n_acc)};
        for (std::size_t k = 0; k < n_acc; ++k) {
            const double t = static_cast<double>(k) / opts.acc_rate_hz;
            ch.samples[k] = static_cast<float>(clean_acc(a, t) + 0.01 * rng.normal());
        }
        rec.channels.push_back(std::move(ch));
    }

    const auto win = static_cast<std::size_t>(std::llround(opts.window_s * opts.ppg_rate_hz));
    const auto shift = static_cast<std::size_t>(std::llround(opts.shift_s * opts.ppg_rate_hz));
    const std::size_t n_labels = window_count(n_ppg, win, shift);
    for (std::size_t i = 0; i < n_labels; ++i) {
        double s = 0.0;
        for (std::size_t k = i * shift; k < i * shift + win; ++k) s += out.hr[k];
        rec.hr_labels.push_back(static_cast<float>(s / static_cast<double>(win)));
    }
    return out;
}

}  // namespace

std::vector<SignalRecord> synth_generate(std::size_t n_subjects, double minutes, std::uint64_t seed,
                                         const SynthOptions& opts) {
    if (!(minutes * 60.0 >= opts.window_s)) throw std::invalid_argument("synth_generate: recording too short");
    std::vector<SignalRecord> out;
    for (std::size_t i = 0; i < n_subjects; ++i) out.push_back(generate_subject(i, minutes, seed, opts).record);
    return out;
}

std::vector<double> synth_hr_trace(std::size_t subject, double minutes, std::uint64_t seed, const SynthOptions& opts) {
    return generate_subject(subject, minutes, seed, opts).hr;
}

}  // namespace pulse
