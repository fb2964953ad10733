// Command-line driver for the longitudinal EMA pipeline. Every command
// reads and writes plain files under --data-dir so runs are scriptable
// and byte-reproducible for a fixed seed.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "longema/data.hpp"
#include "longema/embeddings.hpp"
#include "longema/eval.hpp"
#include "longema/trends.hpp"

namespace fs = std::filesystem;
using namespace longema;

namespace {

// Exit codes; 1 is reserved for unexpected internal failures.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;       // unknown flag, bad value
constexpr int kExitMissingInput = 3;
constexpr int kExitBadCheckpoint = 4;

struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string default_data_dir() {
    const char* env = std::getenv("LONGEMA_DATA_DIR");
    return env && *env ? env : "data";
}

EmaDataset load_dataset_checked(const std::string& dir) {
    if (!fs::exists(fs::path(dir) / "records.csv"))
        throw CliError(kExitMissingInput, "no dataset at " + dir + " (records.csv missing)");
    return load_dataset(dir);
}

Checkpoint load_checkpoint_checked(const std::string& path) {
    if (!fs::exists(path))
        throw CliError(kExitMissingInput, "checkpoint not found: " + path);
    try {
        return load_checkpoint(path);
    } catch (const FormatError& e) {
        throw CliError(kExitBadCheckpoint, std::string("incompatible checkpoint: ") + e.what());
    }
}

std::vector<LongitudinalSample> labeled_samples(const EmaDataset& ds, std::size_t horizon,
                                                double delta_max_days) {
    auto samples = build_samples(ds, horizon, delta_max_days);
    assign_labels(samples, ds, student_medians(ds));
    return samples;
}

void add_common(CLI::App* cmd, std::string& data_dir, std::uint64_t& seed) {
    cmd->add_option("--data-dir", data_dir, "Dataset directory")->capture_default_str();
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->set_config("--config", "", "Key-value config file; flags override it");
}

void write_samples_csv(const std::vector<LongitudinalSample>& samples,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "student_id,record_index,label,valid_steps,horizon,deltas,mask\n";
    for (const auto& s : samples) {
        out << s.student_id << ',' << s.record_index << ',' << s.label << ','
            << s.valid_steps() << ',' << s.horizon() << ",\"";
        for (std::size_t h = 0; h < s.deltas.size(); ++h) {
            if (h) out << ';';
            if (s.step_mask[h]) out << s.deltas[h];
        }
        out << "\",\"";
        for (std::size_t h = 0; h < s.step_mask.size(); ++h) {
            if (h) out << ';';
            out << static_cast<int>(s.step_mask[h]);
        }
        out << "\"\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-aware longitudinal prediction from irregular self-reports"};
    app.require_subcommand(1);

    std::string data_dir = default_data_dir();
    std::uint64_t seed = 0;
    std::string variant_name = "ema2vec";
    std::size_t horizon = 4;
    double delta_max_days = kDefaultDeltaMaxDays;
    std::size_t folds = 5;
    std::size_t jobs = 1;

    // generate
    auto* gen = app.add_subcommand("generate", "Write a deterministic synthetic dataset");
    SyntheticConfig gen_cfg;
    add_common(gen, data_dir, seed);
    gen->add_option("--students", gen_cfg.n_students, "Number of students")
        ->capture_default_str();
    gen->add_option("--days", gen_cfg.study_days, "Study length in days")
        ->capture_default_str();
    gen->add_option("--channels", gen_cfg.channels, "Sensing channels")
        ->capture_default_str();
    gen->add_option("--noise", gen_cfg.noise_level, "Noise level")->capture_default_str();

    // features
    auto* feat = app.add_subcommand("features", "Assemble longitudinal samples");
    std::string feat_out = "samples.csv";
    add_common(feat, data_dir, seed);
    feat->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    feat->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    feat->add_option("--out", feat_out, "Output CSV (relative to --data-dir)")
        ->capture_default_str();

    // trends
    auto* trends_cmd = app.add_subcommand("trends", "Export the delay-trend distribution");
    std::string trends_out = "trends.csv";
    add_common(trends_cmd, data_dir, seed);
    trends_cmd->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    trends_cmd->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    trends_cmd->add_option("--out", trends_out, "Output CSV (relative to --data-dir)")
        ->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train one model and save a checkpoint");
    TrainConfig tc;
    std::string ckpt_out = "model.json";
    std::string history_out = "history.csv";
    add_common(train_cmd, data_dir, seed);
    train_cmd->add_option("--variant", variant_name,
                          "Model variant: lstm|long|timeconcat|time2vec|ema2vec")
        ->capture_default_str();
    train_cmd->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    train_cmd->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    train_cmd->add_option("--epochs", tc.max_epochs, "Max training epochs")
        ->capture_default_str();
    train_cmd->add_option("--patience", tc.patience, "Early stopping patience")
        ->capture_default_str();
    train_cmd->add_option("--batch-size", tc.batch_size, "Mini-batch size")
        ->capture_default_str();
    train_cmd->add_option("--hidden", tc.hidden_dim, "LSTM hidden width")
        ->capture_default_str();
    train_cmd->add_option("--lr-main", tc.lr_main, "Main learning rate")
        ->capture_default_str();
    train_cmd->add_option("--lr-embedding", tc.lr_embedding, "Embedding learning rate")
        ->capture_default_str();
    train_cmd->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
    train_cmd->add_flag("--class-weights", tc.class_weighting,
                        "Weight the loss by inverse class frequency");
    train_cmd->add_option("--out", ckpt_out, "Checkpoint path (relative to --data-dir)")
        ->capture_default_str();
    train_cmd->add_option("--history", history_out, "History CSV (relative to --data-dir)")
        ->capture_default_str();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Chronological cross-validation");
    std::string eval_out = "evaluate.csv";
    bool strict_causal = false;
    add_common(eval_cmd, data_dir, seed);
    eval_cmd->add_option("--variant", variant_name,
                         "Model variant: lstm|long|timeconcat|time2vec|ema2vec")
        ->capture_default_str();
    eval_cmd->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    eval_cmd->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    eval_cmd->add_option("--folds", folds, "Number of folds")->capture_default_str();
    eval_cmd->add_option("--epochs", tc.max_epochs, "Max training epochs")
        ->capture_default_str();
    eval_cmd->add_option("--patience", tc.patience, "Early stopping patience")
        ->capture_default_str();
    eval_cmd->add_option("--hidden", tc.hidden_dim, "LSTM hidden width")
        ->capture_default_str();
    eval_cmd->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
    eval_cmd->add_flag("--strict-causal", strict_causal,
                       "Train only on blocks earlier than the test block");
    eval_cmd->add_option("--out", eval_out, "Output CSV (relative to --data-dir)")
        ->capture_default_str();

    // forecast
    auto* fc_cmd = app.add_subcommand("forecast", "Zero-finetune next-day forecasting");
    std::string fc_ckpt = "model.json";
    std::string fc_out = "forecast.csv";
    add_common(fc_cmd, data_dir, seed);
    fc_cmd->add_option("--checkpoint", fc_ckpt, "Checkpoint path (relative to --data-dir)")
        ->capture_default_str();
    fc_cmd->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    fc_cmd->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    fc_cmd->add_option("--out", fc_out, "Output CSV (relative to --data-dir)")
        ->capture_default_str();

    // similarity
    auto* sim_cmd = app.add_subcommand("similarity",
                                       "Per-trend-class embedding similarity profiles");
    std::string sim_ckpt = "model.json";
    std::string sim_out = "similarity.csv";
    add_common(sim_cmd, data_dir, seed);
    sim_cmd->add_option("--checkpoint", sim_ckpt, "Checkpoint path (relative to --data-dir)")
        ->capture_default_str();
    sim_cmd->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    sim_cmd->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    sim_cmd->add_option("--out", sim_out, "Output CSV (relative to --data-dir)")
        ->capture_default_str();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Delay histogram of the dataset");
    std::string stats_out = "delays.csv";
    double bin_width = 1.0;
    add_common(stats_cmd, data_dir, seed);
    stats_cmd->add_option("--H", horizon, "Lookback horizon H")->capture_default_str();
    stats_cmd->add_option("--delta-max-days", delta_max_days, "Masking cutoff in days")
        ->capture_default_str();
    stats_cmd->add_option("--bin-width", bin_width, "Histogram bin width in days")
        ->capture_default_str();
    stats_cmd->add_option("--out", stats_out, "Output CSV (relative to --data-dir)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        std::cerr << "error code=" << kExitUsage << " msg=\"" << e.what() << "\"\n";
        return kExitUsage;
    }

    const auto in_dir = [&](const std::string& rel) {
        return (fs::path(data_dir) / rel).string();
    };

    try {
        if (gen->parsed()) {
            gen_cfg.seed = seed;
            fs::create_directories(data_dir);
            save_dataset(generate_synthetic(gen_cfg), data_dir);
            std::cout << "wrote dataset to " << data_dir << "\n";
        } else if (feat->parsed()) {
            const auto ds = load_dataset_checked(data_dir);
            const auto samples = labeled_samples(ds, horizon, delta_max_days);
            write_samples_csv(samples, in_dir(feat_out));
            std::cout << samples.size() << " samples -> " << in_dir(feat_out) << "\n";
        } else if (trends_cmd->parsed()) {
            const auto ds = load_dataset_checked(data_dir);
            const auto samples = labeled_samples(ds, horizon, delta_max_days);
            write_trend_distribution_csv(trend_distribution(samples), in_dir(trends_out));
            std::cout << "trend distribution -> " << in_dir(trends_out) << "\n";
        } else if (train_cmd->parsed()) {
            tc.variant = variant_from_string(variant_name);
            tc.horizon = horizon;
            tc.delta_max_days = delta_max_days;
            tc.seed = seed;
            tc.jobs = jobs;
            tc.validate();
            const auto ds = load_dataset_checked(data_dir);
            auto samples = labeled_samples(ds, horizon, delta_max_days);
            if (tc.variant == Variant::LstmDay) {
                const auto ranges = student_ranges(ds);
                for (auto& s : samples) {
                    auto day = standard_sample_from_record(
                        ds.records[ranges.at(s.student_id).first + s.record_index]);
                    day.record_index = s.record_index;
                    day.label = s.label;
                    s = std::move(day);
                }
            }
            // validation = last chronological eighth of each student's records
            std::vector<LongitudinalSample> tr, va;
            const auto ranges = student_ranges(ds);
            for (const auto& [sid, range] : ranges) {
                const std::size_t n = range.second - range.first;
                const std::size_t n_val = std::max<std::size_t>(1, n / 8);
                for (std::size_t i = range.first; i < range.second; ++i)
                    (i >= range.second - n_val ? va : tr).push_back(samples[i]);
            }
            const auto result = train(tr, va, tc);
            Checkpoint ckpt{result.params, result.normalizer, tc.digest()};
            save_checkpoint(ckpt, in_dir(ckpt_out));
            write_history_csv(result.history, in_dir(history_out));
            std::cout << "checkpoint -> " << in_dir(ckpt_out) << " (best epoch "
                      << result.history.best_epoch << ")\n";
        } else if (eval_cmd->parsed()) {
            tc.variant = variant_from_string(variant_name);
            tc.horizon = horizon;
            tc.delta_max_days = delta_max_days;
            tc.seed = seed;
            tc.jobs = jobs;
            tc.validate();
            const auto ds = load_dataset_checked(data_dir);
            const auto report = cross_validate(ds, tc, folds, strict_causal);
            write_metric_report_csv(report, to_string(tc.variant), in_dir(eval_out));
            std::cout << format_metric_table({{to_string(tc.variant), report}});
        } else if (fc_cmd->parsed()) {
            const auto ckpt = load_checkpoint_checked(in_dir(fc_ckpt));
            const auto ds = load_dataset_checked(data_dir);
            const auto samples = labeled_samples(ds, horizon, delta_max_days);
            MetricReport report;
            try {
                report = forecast_evaluate(ckpt, samples);
            } catch (const ContractViolationError& e) {
                throw CliError(kExitBadCheckpoint,
                               std::string("incompatible checkpoint: ") + e.what());
            }
            write_metric_report_csv(report, "forecast", in_dir(fc_out));
            std::cout << format_metric_table({{"forecast", report}})
                      << "skipped " << report.skipped_samples << " unusable samples\n";
        } else if (sim_cmd->parsed()) {
            const auto ckpt = load_checkpoint_checked(in_dir(sim_ckpt));
            const auto emb = ckpt.params.embedding_params();
            if (emb.kind == EmbeddingKind::TimeConcat)
                throw CliError(kExitBadCheckpoint,
                               "incompatible checkpoint: variant has no time embedding");
            const auto ds = load_dataset_checked(data_dir);
            const auto samples = labeled_samples(ds, horizon, delta_max_days);
            std::vector<Vec> sequences;
            std::vector<int> classes;
            for (const auto& s : samples) {
                if (s.valid_steps() != s.deltas.size()) continue; // need the full horizon
                try {
                    classes.push_back(static_cast<int>(classify_trend(s).cls));
                    sequences.push_back(s.deltas);
                } catch (const InsufficientDataError&) {
                }
            }
            const auto profiles = class_average_profiles(sequences, classes, 3, emb);
            write_profiles_csv(profiles, in_dir(sim_out));
            std::cout << sequences.size() << " profiles -> " << in_dir(sim_out) << "\n";
        } else if (stats_cmd->parsed()) {
            const auto ds = load_dataset_checked(data_dir);
            const auto samples = build_samples(ds, horizon, delta_max_days);
            write_delta_histogram_csv(delta_histogram(samples, bin_width), in_dir(stats_out));
            std::cout << "delay histogram -> " << in_dir(stats_out) << "\n";
        }
    } catch (const CliError& e) {
        std::cerr << "error code=" << e.code << " msg=\"" << e.what() << "\"\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error code=" << kExitInternal << " msg=\"" << e.what() << "\"\n";
        return kExitInternal;
    }
    return kExitOk;
}
