#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "longema/data.hpp"
#include "longema/trends.hpp"

using namespace longema;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("longema_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("label mapping against the student median") {
    CHECK(map_label(1, 3.0) == 0);
    CHECK(map_label(3, 3.0) == 1);
    CHECK(map_label(5, 3.0) == 2);
    CHECK(map_label(2, 2.5) == 0);
    CHECK(map_label(3, 2.5) == 2);
}

TEST_CASE("student medians over visible records only") {
    EmaDataset ds;
    auto add = [&](const std::string& sid, std::int64_t t, int stress) {
        EmaRecord r;
        r.student_id = sid;
        r.timestamp = t;
        r.raw_stress = stress;
        r.day = DaySequence(1, 1);
        ds.records.push_back(r);
    };
    add("a", 100, 1);
    add("a", 200, 3);
    add("a", 300, 5);
    add("b", 100, 2);
    add("b", 200, 4);

    const auto all = student_medians(ds);
    CHECK(all.at("a") == doctest::Approx(3.0));
    CHECK(all.at("b") == doctest::Approx(3.0)); // even count: mean of middles

    // hide a's last record: median of {1,3} is 2
    const auto masked = student_medians(ds, {1, 1, 0, 1, 1});
    CHECK(masked.at("a") == doctest::Approx(2.0));
}

TEST_CASE("synthetic generator is deterministic per seed") {
    SyntheticConfig cfg;
    cfg.n_students = 4;
    cfg.study_days = 30;
    cfg.seed = 91;
    const EmaDataset a = generate_synthetic(cfg);
    const EmaDataset b = generate_synthetic(cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].student_id == b.records[i].student_id);
        CHECK(a.records[i].timestamp == b.records[i].timestamp);
        CHECK(a.records[i].raw_stress == b.records[i].raw_stress);
        CHECK(a.records[i].day.values.data == b.records[i].day.values.data);
        CHECK(a.records[i].day.observed == b.records[i].day.observed);
    }
    cfg.seed = 92;
    const EmaDataset c = generate_synthetic(cfg);
    bool any_diff = c.records.size() != a.records.size();
    for (std::size_t i = 0; !any_diff && i < a.records.size(); ++i)
        any_diff = a.records[i].timestamp != c.records[i].timestamp;
    CHECK(any_diff);
}

TEST_CASE("generator respects basic invariants") {
    SyntheticConfig cfg;
    cfg.n_students = 5;
    cfg.study_days = 40;
    cfg.seed = 7;
    const EmaDataset ds = generate_synthetic(cfg);
    CHECK(ds.records.size() > cfg.n_students * 3);
    std::string prev_sid;
    std::int64_t prev_t = 0;
    for (const auto& r : ds.records) {
        CHECK(r.raw_stress >= 1);
        CHECK(r.raw_stress <= 5);
        CHECK(r.day.values.rows == cfg.day_steps);
        CHECK(r.day.values.cols == cfg.channels);
        if (r.student_id == prev_sid) CHECK(r.timestamp > prev_t);
        prev_sid = r.student_id;
        prev_t = r.timestamp;
    }
}

TEST_CASE("pure linear regime mix yields mostly linear trend classes") {
    SyntheticConfig cfg;
    cfg.n_students = 8;
    cfg.study_days = 60;
    cfg.regime_mix = {1.0, 0.0, 0.0};
    cfg.seed = 13;
    const EmaDataset ds = generate_synthetic(cfg);
    auto samples = build_samples(ds, 4);
    std::size_t linear = 0, classified = 0;
    for (const auto& s : samples) {
        try {
            const auto fit = classify_trend(s);
            ++classified;
            if (fit.cls == TrendClass::Linear) ++linear;
        } catch (const InsufficientDataError&) {
        }
    }
    REQUIRE(classified > 50);
    CHECK(static_cast<double>(linear) / classified >= 0.95);
}

TEST_CASE("dataset save then load is an identity") {
    SyntheticConfig cfg;
    cfg.n_students = 3;
    cfg.study_days = 25;
    cfg.seed = 21;
    const EmaDataset ds = generate_synthetic(cfg);
    TempDir dir("roundtrip");
    save_dataset(ds, dir.path.string());
    const EmaDataset back = load_dataset(dir.path.string());
    REQUIRE(back.records.size() == ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(back.records[i].student_id == ds.records[i].student_id);
        CHECK(back.records[i].timestamp == ds.records[i].timestamp);
        CHECK(back.records[i].raw_stress == ds.records[i].raw_stress);
        CHECK(back.records[i].sleep_rating == ds.records[i].sleep_rating);
        CHECK(back.records[i].sleep_duration ==
              doctest::Approx(ds.records[i].sleep_duration).epsilon(1e-12));
        CHECK(back.records[i].exam_period == ds.records[i].exam_period);
        CHECK(back.records[i].day.observed == ds.records[i].day.observed);
        REQUIRE(back.records[i].day.values.data.size() ==
                ds.records[i].day.values.data.size());
        for (std::size_t j = 0; j < ds.records[i].day.values.data.size(); ++j)
            CHECK(back.records[i].day.values.data[j] ==
                  doctest::Approx(ds.records[i].day.values.data[j]).epsilon(1e-12));
    }
}

TEST_CASE("save-load-save produces byte-identical files") {
    SyntheticConfig cfg;
    cfg.n_students = 2;
    cfg.study_days = 20;
    cfg.seed = 33;
    const EmaDataset ds = generate_synthetic(cfg);
    TempDir a("bytes_a"), b("bytes_b");
    save_dataset(ds, a.path.string());
    save_dataset(load_dataset(a.path.string()), b.path.string());
    CHECK(read_file(a.path / "records.csv") == read_file(b.path / "records.csv"));
    CHECK(read_file(a.path / "days.jsonl") == read_file(b.path / "days.jsonl"));
}

TEST_CASE("loader rejects out-of-range stress with the row number") {
    TempDir dir("badstress");
    {
        std::ofstream csv(dir.path / "records.csv");
        csv << "student_id,timestamp,raw_stress,sleep_rating,sleep_duration,exam_flag\n";
        csv << "s00,1000,3,2,7.0,0\n";
        csv << "s00,2000,6,2,7.0,0\n";
        std::ofstream jsonl(dir.path / "days.jsonl");
        jsonl << R"({"id":"s00#0","values":[[0.1]],"mask":[[1]]})" << "\n";
        jsonl << R"({"id":"s00#1","values":[[0.1]],"mask":[[1]]})" << "\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir.path.string()), doctest::Contains("row 3"),
                         FormatError);
}

TEST_CASE("loader rejects non-monotone timestamps per student") {
    TempDir dir("badorder");
    {
        std::ofstream csv(dir.path / "records.csv");
        csv << "student_id,timestamp,raw_stress,sleep_rating,sleep_duration,exam_flag\n";
        csv << "s00,2000,3,2,7.0,0\n";
        csv << "s00,1000,3,2,7.0,0\n";
        std::ofstream jsonl(dir.path / "days.jsonl");
        jsonl << R"({"id":"s00#0","values":[[0.1]],"mask":[[1]]})" << "\n";
        jsonl << R"({"id":"s00#1","values":[[0.1]],"mask":[[1]]})" << "\n";
    }
    CHECK_THROWS_AS(load_dataset(dir.path.string()), FormatError);
}

TEST_CASE("loader rejects a wrong header") {
    TempDir dir("badheader");
    {
        std::ofstream csv(dir.path / "records.csv");
        csv << "student,time,stress\n";
        std::ofstream jsonl(dir.path / "days.jsonl");
    }
    CHECK_THROWS_AS(load_dataset(dir.path.string()), FormatError);
}

TEST_CASE("build_samples makes one sample per record with matching targets") {
    SyntheticConfig cfg;
    cfg.n_students = 3;
    cfg.study_days = 30;
    cfg.seed = 44;
    const EmaDataset ds = generate_synthetic(cfg);
    const auto samples = build_samples(ds, 4);
    const auto ranges = student_ranges(ds);
    REQUIRE(samples.size() == ds.records.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].student_id == ds.records[i].student_id);
        CHECK(samples[i].target_time == ds.records[i].timestamp);
        // record_index is the position within the student's own records
        CHECK(samples[i].record_index == i - ranges.at(samples[i].student_id).first);
        CHECK(samples[i].step_mask[0] == 1);
        CHECK(samples[i].label == -1);
    }
}

TEST_CASE("assign_labels matches map_label per record") {
    SyntheticConfig cfg;
    cfg.n_students = 3;
    cfg.study_days = 30;
    cfg.seed = 55;
    const EmaDataset ds = generate_synthetic(cfg);
    auto samples = build_samples(ds, 4);
    const auto medians = student_medians(ds);
    assign_labels(samples, ds, medians);
    for (std::size_t i = 0; i < samples.size(); ++i)
        CHECK(samples[i].label ==
              map_label(ds.records[i].raw_stress, medians.at(ds.records[i].student_id)));
}

TEST_CASE("checkpoint round trip is bit exact") {
    ModelShape shape;
    shape.variant = Variant::Ema2Vec;
    shape.channels = 3;
    shape.hidden_dim = 6;
    shape.covariate_dim = 10;
    shape.mlp_dims = {5, 4, 3};
    shape.embed_K = 8;
    std::mt19937_64 rng(66);
    Checkpoint ckpt;
    ckpt.params = init_params(shape, rng);
    ckpt.normalizer.feature_mean.assign(shape.feature_dim(), 0.25);
    ckpt.normalizer.feature_std.assign(shape.feature_dim(), 1.5);
    ckpt.normalizer.cov_mean.assign(shape.covariate_dim, -0.5);
    ckpt.normalizer.cov_std.assign(shape.covariate_dim, 2.0);
    ckpt.config_digest = "deadbeef";

    TempDir dir("ckpt");
    const std::string path = (dir.path / "model.json").string();
    save_checkpoint(ckpt, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.params.shape == ckpt.params.shape);
    CHECK(back.params.flat == ckpt.params.flat);
    CHECK(back.normalizer.feature_mean == ckpt.normalizer.feature_mean);
    CHECK(back.normalizer.feature_std == ckpt.normalizer.feature_std);
    CHECK(back.normalizer.cov_mean == ckpt.normalizer.cov_mean);
    CHECK(back.normalizer.cov_std == ckpt.normalizer.cov_std);
    CHECK(back.config_digest == ckpt.config_digest);
}

TEST_CASE("checkpoint loader refuses a flat vector of the wrong size") {
    ModelShape shape;
    shape.variant = Variant::LongLstm;
    shape.channels = 2;
    shape.hidden_dim = 4;
    shape.covariate_dim = 3;
    shape.mlp_dims = {4, 3, 3};
    std::mt19937_64 rng(77);
    Checkpoint ckpt;
    ckpt.params = init_params(shape, rng);
    ckpt.params.flat.pop_back();

    TempDir dir("badckpt");
    const std::string path = (dir.path / "model.json").string();
    save_checkpoint(ckpt, path);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("loader accepts hand-written wide day matrices") {
    TempDir dir("wide");
    {
        std::ofstream csv(dir.path / "records.csv");
        csv << "student_id,timestamp,raw_stress,sleep_rating,sleep_duration,exam_flag\n";
        csv << "s00,5000,4,3,8.0,1\n";
        std::ofstream jsonl(dir.path / "days.jsonl");
        jsonl << R"({"id":"s00#0","values":[)";
        for (int t = 0; t < 2; ++t) {
            if (t) jsonl << ",";
            jsonl << "[";
            for (int f = 0; f < 76; ++f) jsonl << (f ? "," : "") << "0.5";
            jsonl << "]";
        }
        jsonl << R"(],"mask":[)";
        for (int t = 0; t < 2; ++t) {
            if (t) jsonl << ",";
            jsonl << "[";
            for (int f = 0; f < 76; ++f) jsonl << (f ? "," : "") << "1";
            jsonl << "]";
        }
        jsonl << "]}\n";
    }
    const EmaDataset ds = load_dataset(dir.path.string());
    REQUIRE(ds.records.size() == 1);
    CHECK(ds.records[0].day.values.cols == 76);
    CHECK(ds.records[0].day.values.rows == 2);
    CHECK(ds.records[0].exam_period);
}

TEST_CASE("student_ranges covers the dataset exactly") {
    SyntheticConfig cfg;
    cfg.n_students = 4;
    cfg.study_days = 20;
    cfg.seed = 88;
    const EmaDataset ds = generate_synthetic(cfg);
    const auto ranges = student_ranges(ds);
    std::size_t covered = 0;
    for (const auto& [sid, range] : ranges) {
        for (std::size_t i = range.first; i < range.second; ++i)
            CHECK(ds.records[i].student_id == sid);
        covered += range.second - range.first;
    }
    CHECK(covered == ds.records.size());
}
