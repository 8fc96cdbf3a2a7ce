// pulse: command-line front end (train, eval, attn, synth, selftest).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pulse/attention_export.hpp"
#include "pulse/dataset_io.hpp"
#include "pulse/fsutil.hpp"
#include "pulse/harness.hpp"
#include "pulse/selftest.hpp"
#include "pulse/weights_io.hpp"

namespace fs = std::filesystem;
using namespace pulse;

namespace {

constexpr int kUsageError = 2;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Windows for the requested subjects (all when the list is empty).
std::map<std::string, WindowSet> load_subjects(const fs::path& dir, const std::vector<std::string>& wanted) {
    auto all = load_windows(dir);
    if (wanted.empty()) return all;
    std::map<std::string, WindowSet> out;
    for (const std::string& s : wanted) {
        auto it = all.find(s);
        if (it == all.end()) throw std::invalid_argument("subject " + s + " not found under " + dir.string());
        out[s] = std::move(it->second);
    }
    return out;
}

WindowSet concat(const std::map<std::string, WindowSet>& by_subject) {
    WindowSet out;
    for (const auto& [id, w] : by_subject) out.append(w);
    return out;
}

void check_window_shape(const PulseConfig& c, const WindowSet& w) {
    if (w.empty()) throw std::invalid_argument("no labeled windows in dataset");
    const Tensor& first = w.windows.front();
    if (first.dim(0) != c.input_channels() || first.dim(1) != c.window_length) {
        throw std::invalid_argument("dataset windows are " + shape_string(first.shape()) + " but the model expects [" +
                                    std::to_string(c.input_channels()) + "," + std::to_string(c.window_length) + "]");
    }
}

void print_mae(const char* label, const MaeReport& r) {
    std::printf("%s MAE %.3f BPM over %zu windows\n", label, r.overall.mae_bpm, r.overall.n_windows);
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string data, subjects, config, out;
    std::size_t iteration = 0;
    std::uint64_t seed = 1;
};

int cmd_train(const TrainArgs& a) {
    nlohmann::json cfg_json = nlohmann::json::object();
    if (!a.config.empty()) cfg_json = nlohmann::json::parse(read_file(a.config));
    const PulseConfig model = config_from_json(cfg_json);
    TrainConfig tc = train_config_from_json(cfg_json);
    tc.seed = a.seed;

    const auto by_subject = load_subjects(a.data, split_list(a.subjects));
    std::vector<std::string> ids;
    for (const auto& [id, w] : by_subject) {
        check_window_shape(model, w);
        ids.push_back(id);
    }
    const auto folds = loso_folds(ids, a.seed);
    if (a.iteration >= folds.size()) {
        throw std::invalid_argument("--iteration " + std::to_string(a.iteration) + " out of range; " +
                                    std::to_string(folds.size()) + " iterations");
    }
    const FoldSpec& fold = folds[a.iteration];
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
        return s.empty() ? std::string("-") : s;
    };
    std::printf("iteration %zu: test %s, validation %s%s, train %s\n", fold.iteration, fold.test_subject.c_str(),
                join(fold.validation_subjects).c_str(),
                fold.validation_from_train_split ? " (20% tail split of training subjects)" : "",
                join(fold.train_subjects).c_str());
    std::printf("model parameters: %zu\n", param_count(model));

    const IterationResult r = run_iteration(fold, by_subject, model, tc, [](const EpochRecord& e) {
        std::fprintf(stderr, "epoch %4zu  train_loss %8.4f  val_mae %8.4f  (%.1f s)\n", e.epoch, e.train_loss,
                     e.val_mae, e.seconds);
        return true;
    });

    const fs::path out(a.out);
    save_params(r.training.best, out);
    fs::path hist = out;
    hist.replace_extension(".history.csv");
    write_file_atomic(hist, history_csv(r.training.history));
    std::printf("best epoch %zu, val MAE %.3f BPM, %zu optimizer steps\n", r.training.history.best_epoch,
                r.training.history.best_val_mae(), r.training.history.optimizer_steps);
    print_mae("test raw", r.test.raw_report);
    print_mae("test post-processed", r.test.post_report);
    std::printf("wrote %s and %s\n", out.string().c_str(), hist.string().c_str());
    return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string data, model, postprocess = "on", report, subjects;
};

int cmd_eval(const EvalArgs& a) {
    const PulseParams params = load_params(a.model);
    const WindowSet windows = concat(load_subjects(a.data, split_list(a.subjects)));
    check_window_shape(params.config, windows);
    const bool post = a.postprocess == "on";
    const EvalReport r = evaluate_report(params, windows);

    const fs::path dir(a.report);
    write_report(r.raw_report, dir / "raw");
    print_mae("raw", r.raw_report);
    if (post) {
        write_report(r.post_report, dir / "postprocessed");
        print_mae("post-processed", r.post_report);
    }

    std::string csv = post ? "subject,window,activity,target_bpm,raw_bpm,post_bpm\n"
                           : "subject,window,activity,target_bpm,raw_bpm\n";
    char line[160];
    std::size_t index_in_subject = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (i > 0 && windows.subject_ids[i] != windows.subject_ids[i - 1]) index_in_subject = 0;
        std::snprintf(line, sizeof line, "%s,%zu,%d,%.4f,%.4f", windows.subject_ids[i].c_str(), index_in_subject++,
                      windows.activity_ids[i], static_cast<double>(windows.targets[i]),
                      static_cast<double>(r.raw[i]));
        csv += line;
        if (post) {
            std::snprintf(line, sizeof line, ",%.4f", static_cast<double>(r.postprocessed[i]));
            csv += line;
        }
        csv += '\n';
    }
    write_file_atomic(dir / "predictions.csv", csv);
    std::printf("wrote reports under %s\n", dir.string().c_str());
    return 0;
}

// ---- attn -----------------------------------------------------------------

struct AttnArgs {
    std::string data, model, out, subject;
    std::size_t window = 0;
};

int cmd_attn(const AttnArgs& a) {
    const PulseParams params = load_params(a.model);
    const WindowSet windows =
        concat(load_subjects(a.data, a.subject.empty() ? std::vector<std::string>{} : std::vector{a.subject}));
    check_window_shape(params.config, windows);
    if (a.window >= windows.size()) {
        throw std::invalid_argument("--window " + std::to_string(a.window) + " out of range; " +
                                    std::to_string(windows.size()) + " windows");
    }
    const ForwardResult f = forward(params, windows.windows[a.window], true);
    const nlohmann::json extra = {{"window", a.window},
                                  {"subject", windows.subject_ids[a.window]},
                                  {"target_bpm", windows.targets[a.window]},
                                  {"predicted_bpm", f.hr_bpm},
                                  {"attention_mode", std::string(to_string(params.config.attention_mode))}};
    for (const auto& p : write_attention(*f.attention, a.out, extra)) std::printf("wrote %s\n", p.string().c_str());
    return 0;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::size_t subjects = 6;
    double minutes = 20.0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    const auto records = synth_generate(a.subjects, a.minutes, a.seed);
    write_dataset(records, a.out);
    std::size_t labels = 0;
    for (const auto& r : records) labels += r.hr_labels.size();
    std::printf("wrote %zu subjects (%zu labeled windows) to %s\n", records.size(), labels, a.out.c_str());
    return 0;
}

// ---- selftest -------------------------------------------------------------

int cmd_selftest(const std::string& model, std::uint64_t seed) {
    std::optional<PulseParams> params;
    if (!model.empty()) params = load_params(model);
    bool ok = true;
    for (const CheckResult& r : run_selftest(params ? &*params : nullptr, seed)) {
        std::printf("%s\n", format_result(r).c_str());
        ok = ok && r.passed;
    }
    std::printf("%s\n", ok ? "selftest passed" : "selftest FAILED");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPG heart-rate estimation with attention fusion of accelerometer data"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Run one leave-one-session-out iteration");
    train->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--subjects", ta.subjects, "Comma-separated subject ids (default: all)");
    train->add_option("--iteration", ta.iteration, "LOSO iteration index")->capture_default_str();
    train->add_option("--config", ta.config, "JSON with model and training fields")->check(CLI::ExistingFile);
    train->add_option("--seed", ta.seed, "Seed for folds, initialization and shuffling")->capture_default_str();
    train->add_option("--out", ta.out, "Output weight file (.pw)")->required();

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a model and write MAE reports");
    eval->add_option("--data", ea.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--model", ea.model, "Weight file")->required()->check(CLI::ExistingFile);
    eval->add_option("--postprocess", ea.postprocess, "Also report clipped predictions")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    eval->add_option("--report", ea.report, "Report directory")->required();
    eval->add_option("--subjects", ea.subjects, "Comma-separated subject ids (default: all)");

    AttnArgs aa;
    auto* attn = app.add_subcommand("attn", "Export attention maps for one window");
    attn->add_option("--data", aa.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    attn->add_option("--model", aa.model, "Weight file")->required()->check(CLI::ExistingFile);
    attn->add_option("--window", aa.window, "Window index")->required();
    attn->add_option("--subject", aa.subject, "Index windows of this subject only (default: all, sorted by id)");
    attn->add_option("--out", aa.out, "Output path prefix")->required();

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--subjects", sa.subjects, "Number of subjects")->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--minutes", sa.minutes, "Minutes per subject")->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--seed", sa.seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", sa.out, "Output directory")->required();

    std::string st_model;
    std::uint64_t st_seed = 1;
    auto* selftest = app.add_subcommand("selftest", "Run oracle, gradient and property checks");
    selftest->add_option("--model", st_model, "Also check this weight file")->check(CLI::ExistingFile);
    selftest->add_option("--seed", st_seed, "Seed for random cases")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*eval) return cmd_eval(ea);
        if (*attn) return cmd_attn(aa);
        if (*synth) return cmd_synth(sa);
        if (*selftest) return cmd_selftest(st_model, st_seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kUsageError;
}
