#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "cvr/errors.hpp"
#include "cvr/serialization.hpp"
#include "cvr/synthetic_data.hpp"

using namespace cvr;

namespace {

GeneratorConfig small_config(std::uint64_t seed, std::size_t n_cases) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.n_cases = n_cases;
    cfg.d_f = 16;
    cfg.d_sig = 12;
    return cfg;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "cvr_test_synthetic";
    std::filesystem::create_directories(dir);
    return dir / name;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace

TEST_CASE("noiseless lesions look identical in both views") {
    GeneratorConfig cfg = small_config(5, 1);
    cfg.feature_noise_sigma = 0.0;
    cfg.geometry_noise_sigma = 0.0;
    cfg.distractors_per_view = {0, 0};
    cfg.lesions_per_case = {1, 1};
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s);
        const GeneratedCase gc = generate_case_detailed(cfg, rng);
        const auto& smp = gc.sample;
        REQUIRE(smp.view1.size() == 1);
        REQUIRE(smp.view2.size() == 1);
        CHECK(smp.view1[0].feature == smp.view2[0].feature);
        CHECK(smp.view1[0].geometry.x == smp.view2[0].geometry.x);
        CHECK(smp.view1[0].geometry.w == smp.view2[0].geometry.w);
        CHECK(smp.gt1[0].geometry.x == doctest::Approx(gc.lesions[0].depth * cfg.image_extent));
        CHECK(smp.targets1[0].label == Label::kPositive);
        CHECK(smp.targets1[0].regression == Vector{0, 0, 0, 0});
        for (std::size_t k = 0; k < cfg.d_sig; ++k) CHECK(smp.view1[0].feature[k] == gc.lesions[0].shared_signature[k]);
        for (std::size_t k = cfg.d_sig; k < cfg.d_f; ++k) CHECK(smp.view1[0].feature[k] == 0.0);
    }
}

TEST_CASE("generation is deterministic in the seed") {
    const GeneratorConfig cfg = small_config(77, 10);
    CHECK(generate_dataset(cfg) == generate_dataset(cfg));
    GeneratorConfig other = cfg;
    other.seed = 78;
    CHECK_FALSE(generate_dataset(cfg) == generate_dataset(other));
    const auto a = generate_dataset(cfg);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].case_id == static_cast<std::int64_t>(i));
}

TEST_CASE("fully confusable distractors copy a lesion signature") {
    GeneratorConfig cfg = small_config(1, 1);
    cfg.feature_noise_sigma = 0.0;
    cfg.distractor_confusability = 1.0;
    cfg.lesions_per_case = {1, 2};
    cfg.distractors_per_view = {2, 4};
    std::size_t seen = 0;
    for (std::uint64_t s = 0; seen < 1000; ++s) {
        Rng rng(s);
        const GeneratedCase gc = generate_case_detailed(cfg, rng);
        auto check_view = [&](const std::vector<RoiCandidate>& cands, const std::vector<char>& flags) {
            for (std::size_t i = 0; i < cands.size(); ++i) {
                if (!flags[i]) continue;
                double best = std::numeric_limits<double>::infinity();
                for (const auto& l : gc.lesions) {
                    double d2 = 0.0;
                    for (std::size_t k = 0; k < cfg.d_sig; ++k) {
                        const double d = cands[i].feature[k] - l.shared_signature[k];
                        d2 += d * d;
                    }
                    best = std::min(best, std::sqrt(d2));
                }
                CHECK(best <= 1e-12);
                ++seen;
            }
        };
        check_view(gc.sample.view1, gc.distractor1);
        check_view(gc.sample.view2, gc.distractor2);
    }
}

TEST_CASE("distractors without confusability stay far from lesions") {
    GeneratorConfig cfg = small_config(1, 1);
    cfg.feature_noise_sigma = 0.0;
    cfg.distractor_confusability = 0.0;
    cfg.signature_prominence = 4.0;
    double sum_proj = 0.0;
    std::size_t n = 0;
    const Vector proto = lesion_prototype(cfg.d_sig);
    for (std::uint64_t s = 0; s < 300; ++s) {
        Rng rng(s);
        const GeneratedCase gc = generate_case_detailed(cfg, rng);
        for (std::size_t i = 0; i < gc.sample.view1.size(); ++i) {
            if (!gc.distractor1[i]) continue;
            double p = 0.0;
            for (std::size_t k = 0; k < cfg.d_sig; ++k) p += proto[k] * gc.sample.view1[i].feature[k];
            sum_proj += p;
            ++n;
        }
    }
    CHECK(std::abs(sum_proj / static_cast<double>(n)) < 0.3);
}

TEST_CASE("cross-view x coordinates are strongly correlated") {
    GeneratorConfig cfg = small_config(3, 400);
    std::vector<double> x1;
    std::vector<double> x2;
    std::vector<double> y1;
    std::vector<double> y2;
    for (const auto& s : generate_dataset(cfg)) {
        for (const auto& g1 : s.gt1) {
            for (const auto& g2 : s.gt2) {
                if (g1.lesion != g2.lesion) continue;
                x1.push_back(g1.geometry.x);
                x2.push_back(g2.geometry.x);
                y1.push_back(g1.geometry.y);
                y2.push_back(g2.geometry.y);
            }
        }
    }
    REQUIRE(x1.size() > 100);
    CHECK(pearson(x1, x2) > 0.9);
    CHECK(std::abs(pearson(y1, y2)) < 0.2);

    cfg.geometry_noise_sigma = 0.0;
    cfg.n_cases = 30;
    for (const auto& s : generate_dataset(cfg)) {
        for (const auto& g1 : s.gt1) {
            for (const auto& g2 : s.gt2) {
                if (g1.lesion == g2.lesion) CHECK(g1.geometry.x == g2.geometry.x);
            }
        }
    }
}

TEST_CASE("lesion identities are consistent across views") {
    for (const auto& s : generate_dataset(small_config(9, 100))) {
        std::multiset<int> a;
        std::multiset<int> b;
        for (const auto& g : s.gt1) a.insert(g.lesion);
        for (const auto& g : s.gt2) b.insert(g.lesion);
        CHECK(a == b);
        CHECK(std::set<int>(a.begin(), a.end()).size() == a.size());
        CHECK(s.targets1.size() == s.view1.size());
        CHECK(s.targets2.size() == s.view2.size());
        for (const auto& c : s.view1) CHECK(c.view == View::kView1);
        for (const auto& c : s.view2) CHECK(c.view == View::kView2);
        CHECK_NOTHROW(s.validate());
    }
}

TEST_CASE("assign_target thresholds") {
    const std::vector<RoiGeometry> gts{{50, 50, 20, 20}};
    CHECK(assign_target({50, 50, 20, 20}, gts).label == Label::kPositive);
    CHECK(assign_target({500, 500, 20, 20}, gts).label == Label::kNegative);
    CHECK(assign_target({58, 50, 20, 20}, gts).label == Label::kIgnore);
    CHECK(assign_target({50, 50, 20, 20}, {}).label == Label::kNegative);
}

TEST_CASE("dataset files round-trip exactly") {
    const auto cases = generate_dataset(small_config(21, 12));
    const auto path = scratch("round_trip.jsonl");
    write_dataset(cases, path);
    CHECK(read_dataset(path) == cases);
}

TEST_CASE("an empty dataset file reads as zero cases") {
    const auto path = scratch("empty.jsonl");
    std::ofstream(path).close();
    CHECK(read_dataset(path).empty());
}

TEST_CASE("malformed records are reported with their line number") {
    const auto cases = generate_dataset(small_config(4, 2));
    const auto path = scratch("broken.jsonl");
    write_dataset(cases, path);
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"case_id\": 3, \"view1\": [}\n";
    }
    try {
        read_dataset(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }

    auto mixed = cases;
    mixed[1].view1[0].feature = Vector(3);
    const auto bad_dim = scratch("bad_dim.jsonl");
    write_dataset(mixed, bad_dim);
    CHECK_THROWS_AS(read_dataset(bad_dim), SchemaError);

    CHECK_THROWS_AS(read_dataset(scratch("does_not_exist.jsonl")), IoError);
}

TEST_CASE("split keeps order and sizes") {
    const auto cases = generate_dataset(small_config(2, 25));
    const DatasetSplit split = split_dataset(cases, 0.2);
    CHECK(split.train.size() == 20);
    CHECK(split.test.size() == 5);
    CHECK(split.test.front().case_id == 20);
    CHECK_THROWS_AS(split_dataset(cases, 1.0), ConfigError);
}

TEST_CASE("generator config validation") {
    auto invalid = [](auto mutate) {
        GeneratorConfig cfg;
        mutate(cfg);
        return cfg;
    };
    CHECK_THROWS_AS(invalid([](auto& c) { c.distractor_confusability = 1.5; }).validate(), ConfigError);
    CHECK_THROWS_AS(invalid([](auto& c) { c.feature_noise_sigma = -0.1; }).validate(), ConfigError);
    CHECK_THROWS_AS(invalid([](auto& c) { c.d_sig = 200; }).validate(), ConfigError);
    CHECK_THROWS_AS(invalid([](auto& c) { c.lesion_size = {0.0, 10.0}; }).validate(), ConfigError);
    CHECK_THROWS_AS(invalid([](auto& c) { c.lesions_per_case = {3, 1}; }).validate(), ConfigError);
    CHECK_NOTHROW(GeneratorConfig{}.validate());

    const GeneratorConfig cfg = small_config(8, 3);
    CHECK(generator_config_from_json(to_json(cfg)) == cfg);

    nlohmann::json missing = to_json(cfg);
    missing.erase("seed");
    try {
        generator_config_from_json(missing);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("seed") != std::string::npos);
    }
    nlohmann::json unknown = to_json(cfg);
    unknown["bogus"] = 1;
    CHECK_THROWS_AS(generator_config_from_json(unknown), ConfigError);
}
