#include "longema/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "longema/trends.hpp"

namespace longema {

namespace {

using nlohmann::json;

std::string record_id(const std::string& student, std::size_t k) {
    return student + "#" + std::to_string(k);
}

double median_of(std::vector<int> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace

int map_label(int raw_stress, double student_median) {
    if (raw_stress < student_median) return 0;
    if (raw_stress > student_median) return 2;
    return 1;
}

std::map<std::string, double> student_medians(const EmaDataset& dataset,
                                              const std::vector<std::uint8_t>& visible) {
    if (!visible.empty() && visible.size() != dataset.records.size())
        throw ContractViolationError("student_medians: visibility mask length mismatch");
    std::map<std::string, std::vector<int>> seen, all;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& r = dataset.records[i];
        all[r.student_id].push_back(r.raw_stress);
        if (visible.empty() || visible[i]) seen[r.student_id].push_back(r.raw_stress);
    }
    std::map<std::string, double> medians;
    for (auto& [sid, values] : all) {
        auto it = seen.find(sid);
        // a student with nothing visible falls back to all of their reports
        medians[sid] = median_of(it != seen.end() && !it->second.empty() ? it->second
                                                                         : values);
    }
    return medians;
}

EmaDataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.session_length < 2 || cfg.channels < 2 || cfg.n_students == 0)
        throw ContractViolationError("generate_synthetic: invalid configuration");
    const double mix_sum = cfg.regime_mix[0] + cfg.regime_mix[1] + cfg.regime_mix[2];
    if (std::abs(mix_sum - 1.0) > 1e-9)
        throw ContractViolationError("generate_synthetic: regime mix must sum to 1");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Two exam windows: mid-study and near the end.
    const double exam1 = cfg.study_days * 0.4, exam2 = cfg.study_days * 0.8;
    auto in_exam = [&](double day) {
        return (day >= exam1 && day < exam1 + 5.0) || (day >= exam2 && day < exam2 + 5.0);
    };
    // week resolution: coarse enough that differencing the channel across
    // a lookback window does not reconstruct the report gaps
    auto days_to_deadline = [&](double day) {
        const double d = day < exam1 ? exam1 - day
                                     : (day < exam2 ? std::max(0.0, exam2 - day) : 14.0);
        return std::round(d / 7.0) * 7.0;
    };

    EmaDataset out;
    const std::size_t L = cfg.session_length;
    for (std::size_t s = 0; s < cfg.n_students; ++s) {
        std::ostringstream sid;
        sid << "s" << (s < 10 ? "0" : "") << s;

        // one linear pace per student so all-linear mixes have no kinks
        const double g_lin = 0.7 + 0.4 * unit(rng);
        double t = 1.0 + 0.5 * unit(rng);
        bool done = false;
        // regimes dealt from a shuffled mix-proportional deck so each
        // student's stress levels stay balanced around the median
        std::vector<int> deck;
        while (!done && t < static_cast<double>(cfg.study_days)) {
            if (deck.empty()) {
                for (int i = 0; i < 6; ++i) {
                    const double q = (i + 0.5) / 6.0;
                    deck.push_back(q < cfg.regime_mix[0]
                                       ? 0
                                       : (q < cfg.regime_mix[0] + cfg.regime_mix[1] ? 1 : 2));
                }
                std::shuffle(deck.begin(), deck.end(), rng);
            }
            const int regime = deck.back();
            deck.pop_back();

            // Inter-report gaps for the phase. Geometric gaps are
            // self-similar, so every target inside the phase sees the same
            // delay-vs-lag shape: constant gaps give a linear curve,
            // backward-growing gaps a convex one, backward-shrinking gaps
            // a concave one.
            Vec gaps(L);
            if (regime == 0) {
                for (std::size_t k = 0; k < L; ++k) gaps[k] = g_lin;
            } else {
                const double r = 1.9 + 0.4 * unit(rng);
                // scale so the widest 4-gap window stays under delta_max
                const double window = 1.0 + 1.0 / r + 1.0 / (r * r) + 1.0 / (r * r * r);
                const double g_small =
                    4.5 / (std::pow(r, static_cast<double>(L - 1)) * window) *
                    (0.75 + 0.25 * unit(rng));
                for (std::size_t k = 0; k < L; ++k) {
                    const double e = regime == 1 ? static_cast<double>(L - 1 - k)
                                                 : static_cast<double>(k);
                    gaps[k] = g_small * std::pow(r, e);
                }
            }

            for (std::size_t k = 0; k < L; ++k) {
                t += gaps[k] * std::exp(0.05 * cfg.noise_level * gauss(rng));
                const double day = t;
                if (day >= static_cast<double>(cfg.study_days)) { done = true; break; }

                EmaRecord rec;
                rec.student_id = sid.str();
                rec.timestamp = static_cast<std::int64_t>(std::llround(day * kSecondsPerDay));
                rec.exam_period = in_exam(day);
                rec.sleep_rating = std::clamp(3.0 + std::round(gauss(rng)), 1.0, 5.0);
                rec.sleep_duration = 7.0 + gauss(rng);

                // noisy utility model: trend class dominates, covariates nudge
                double cov_score[3] = {0.2 * (rec.sleep_rating - 3.0), 0.3,
                                       (rec.exam_period ? 1.0 : 0.0) +
                                           0.2 * (3.0 - rec.sleep_rating)};
                int intent = 0;
                double best = -1e300;
                for (int c = 0; c < 3; ++c) {
                    const double util = cfg.trend_label_weight * (c == regime ? 1.0 : 0.0) +
                                        cfg.covariate_label_weight * cov_score[c] +
                                        cfg.noise_level * gauss(rng);
                    if (util > best) { best = util; intent = c; }
                }
                rec.raw_stress = 2 + intent;
                if (unit(rng) < 0.1 * cfg.noise_level)
                    rec.raw_stress += unit(rng) < 0.5 ? -1 : 1;
                rec.raw_stress = std::clamp(rec.raw_stress, 1, 5);

                rec.day = DaySequence(cfg.day_steps, cfg.channels);
                for (std::size_t tt = 0; tt < cfg.day_steps; ++tt) {
                    for (std::size_t f = 0; f + 1 < cfg.channels; ++f) {
                        const double gain = f < 3 ? 1.0 : 0.0;
                        const double shift = cfg.functional_label_weight * 0.4 *
                                             static_cast<double>(intent - 1) * gain;
                        rec.day.values(tt, f) = 0.5 * static_cast<double>(f) + shift + gauss(rng);
                        if (unit(rng) < 0.05)
                            rec.day.observed[tt * cfg.channels + f] = 0;
                    }
                    // deadline channel, constant over the day
                    rec.day.values(tt, cfg.channels - 1) = days_to_deadline(day);
                }
                out.records.push_back(std::move(rec));
            }
            // inter-phase break beyond delta_max; keeps each lookback
            // window inside a single regime
            t += 7.5 + 2.0 * unit(rng);
        }
    }
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const EmaRecord& a, const EmaRecord& b) {
                         return a.student_id != b.student_id ? a.student_id < b.student_id
                                                             : a.timestamp < b.timestamp;
                     });
    return out;
}

void save_dataset(const EmaDataset& dataset, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir + "/records.csv");
    std::ofstream days(dir + "/days.jsonl");
    if (!csv || !days) throw FormatError("cannot open dataset files in " + dir);
    csv << "student_id,timestamp,raw_stress,sleep_rating,sleep_duration,exam_flag\n";
    csv.precision(17);
    std::map<std::string, std::size_t> per_student_index;
    for (const auto& r : dataset.records) {
        csv << r.student_id << ',' << r.timestamp << ',' << r.raw_stress << ','
            << r.sleep_rating << ',' << r.sleep_duration << ',' << (r.exam_period ? 1 : 0)
            << '\n';
        json line;
        line["id"] = record_id(r.student_id, per_student_index[r.student_id]++);
        json values = json::array(), mask = json::array();
        for (std::size_t t = 0; t < r.day.steps(); ++t) {
            json vrow = json::array(), mrow = json::array();
            for (std::size_t f = 0; f < r.day.channels(); ++f) {
                vrow.push_back(r.day.values(t, f));
                mrow.push_back(r.day.is_observed(t, f) ? 1 : 0);
            }
            values.push_back(std::move(vrow));
            mask.push_back(std::move(mrow));
        }
        line["values"] = std::move(values);
        line["mask"] = std::move(mask);
        days << line.dump() << '\n';
    }
}

EmaDataset load_dataset(const std::string& dir) {
    std::ifstream csv(dir + "/records.csv");
    if (!csv) throw FormatError("cannot open " + dir + "/records.csv");
    EmaDataset out;
    std::string line;
    std::getline(csv, line); // header
    if (line != "student_id,timestamp,raw_stress,sleep_rating,sleep_duration,exam_flag")
        throw FormatError("records.csv: unexpected header");
    std::size_t row = 1;
    std::map<std::string, std::int64_t> last_time;
    while (std::getline(csv, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw FormatError("records.csv row " + std::to_string(row) + ": expected 6 fields");
        EmaRecord rec;
        try {
            rec.student_id = fields[0];
            rec.timestamp = std::stoll(fields[1]);
            rec.raw_stress = std::stoi(fields[2]);
            rec.sleep_rating = std::stod(fields[3]);
            rec.sleep_duration = std::stod(fields[4]);
            rec.exam_period = std::stoi(fields[5]) != 0;
        } catch (const std::exception&) {
            throw FormatError("records.csv row " + std::to_string(row) + ": parse error");
        }
        if (rec.raw_stress < 1 || rec.raw_stress > 5)
            throw FormatError("records.csv row " + std::to_string(row) +
                              ": raw_stress out of range 1..5");
        auto it = last_time.find(rec.student_id);
        if (it != last_time.end() && rec.timestamp <= it->second)
            throw FormatError("records.csv row " + std::to_string(row) +
                              ": timestamps not strictly increasing for student " +
                              rec.student_id);
        last_time[rec.student_id] = rec.timestamp;
        out.records.push_back(std::move(rec));
    }

    std::ifstream days(dir + "/days.jsonl");
    if (!days) throw FormatError("cannot open " + dir + "/days.jsonl");
    std::map<std::string, DaySequence> by_id;
    row = 0;
    while (std::getline(days, line)) {
        ++row;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("days.jsonl line " + std::to_string(row) + ": " + e.what());
        }
        const auto& values = j.at("values");
        const auto& mask = j.at("mask");
        const std::size_t T = values.size();
        if (T == 0 || mask.size() != T)
            throw FormatError("days.jsonl line " + std::to_string(row) + ": bad shape");
        const std::size_t F = values[0].size();
        DaySequence day(T, F);
        for (std::size_t t = 0; t < T; ++t) {
            if (values[t].size() != F || mask[t].size() != F)
                throw FormatError("days.jsonl line " + std::to_string(row) + ": ragged rows");
            for (std::size_t f = 0; f < F; ++f) {
                day.values(t, f) = values[t][f].get<double>();
                day.observed[t * F + f] = mask[t][f].get<int>() != 0;
            }
        }
        by_id.emplace(j.at("id").get<std::string>(), std::move(day));
    }

    std::map<std::string, std::size_t> per_student_index;
    for (auto& rec : out.records) {
        const std::string id = record_id(rec.student_id, per_student_index[rec.student_id]++);
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw FormatError("days.jsonl: missing day sequence for record " + id);
        rec.day = std::move(it->second);
    }
    return out;
}

std::map<std::string, std::pair<std::size_t, std::size_t>> student_ranges(
    const EmaDataset& dataset) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> ranges;
    std::size_t i = 0;
    while (i < dataset.records.size()) {
        std::size_t j = i;
        while (j < dataset.records.size() &&
               dataset.records[j].student_id == dataset.records[i].student_id)
            ++j;
        ranges[dataset.records[i].student_id] = {i, j};
        i = j;
    }
    return ranges;
}

std::vector<LongitudinalSample> build_samples(const EmaDataset& dataset,
                                              std::size_t horizon,
                                              double delta_max_days) {
    std::vector<LongitudinalSample> samples;
    samples.reserve(dataset.records.size());
    for (const auto& [sid, range] : student_ranges(dataset)) {
        const std::vector<EmaRecord> student_records(
            dataset.records.begin() + static_cast<std::ptrdiff_t>(range.first),
            dataset.records.begin() + static_cast<std::ptrdiff_t>(range.second));
        for (std::size_t k = 0; k < student_records.size(); ++k)
            samples.push_back(
                build_longitudinal_sample(student_records, k, horizon, delta_max_days));
    }
    return samples;
}

void assign_labels(std::vector<LongitudinalSample>& samples, const EmaDataset& dataset,
                   const std::map<std::string, double>& medians) {
    auto ranges = student_ranges(dataset);
    for (auto& s : samples) {
        const auto range = ranges.at(s.student_id);
        const EmaRecord& rec = dataset.records[range.first + s.record_index];
        s.label = map_label(rec.raw_stress, medians.at(s.student_id));
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["format_version"] = 1;
    j["variant"] = to_string(ckpt.params.shape.variant);
    j["channels"] = ckpt.params.shape.channels;
    j["hidden_dim"] = ckpt.params.shape.hidden_dim;
    j["covariate_dim"] = ckpt.params.shape.covariate_dim;
    j["mlp_dims"] = ckpt.params.shape.mlp_dims;
    j["embed_K"] = ckpt.params.shape.embed_K;
    j["dropout"] = {ckpt.params.shape.dropout_lstm, ckpt.params.shape.dropout_dense1,
                    ckpt.params.shape.dropout_dense2};
    j["flat"] = ckpt.params.flat;
    j["normalizer"] = {{"feature_mean", ckpt.normalizer.feature_mean},
                       {"feature_std", ckpt.normalizer.feature_std},
                       {"cov_mean", ckpt.normalizer.cov_mean},
                       {"cov_std", ckpt.normalizer.cov_std}};
    j["config_digest"] = ckpt.config_digest;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint parse error: ") + e.what());
    }
    if (j.value("format_version", 0) != 1)
        throw FormatError("checkpoint: unsupported format version");
    Checkpoint ckpt;
    ModelShape& shape = ckpt.params.shape;
    shape.variant = variant_from_string(j.at("variant").get<std::string>());
    shape.channels = j.at("channels").get<std::size_t>();
    shape.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    shape.covariate_dim = j.at("covariate_dim").get<std::size_t>();
    shape.mlp_dims = j.at("mlp_dims").get<std::vector<std::size_t>>();
    shape.embed_K = j.at("embed_K").get<std::size_t>();
    const auto dropout = j.at("dropout").get<std::vector<double>>();
    if (dropout.size() == 3) {
        shape.dropout_lstm = dropout[0];
        shape.dropout_dense1 = dropout[1];
        shape.dropout_dense2 = dropout[2];
    }
    ckpt.params.flat = j.at("flat").get<Vec>();
    if (ckpt.params.flat.size() != shape.param_count())
        throw FormatError("checkpoint: parameter count does not match declared shape");
    const auto& n = j.at("normalizer");
    ckpt.normalizer.feature_mean = n.at("feature_mean").get<Vec>();
    ckpt.normalizer.feature_std = n.at("feature_std").get<Vec>();
    ckpt.normalizer.cov_mean = n.at("cov_mean").get<Vec>();
    ckpt.normalizer.cov_std = n.at("cov_std").get<Vec>();
    ckpt.config_digest = j.value("config_digest", "");
    return ckpt;
}

} // namespace longema
