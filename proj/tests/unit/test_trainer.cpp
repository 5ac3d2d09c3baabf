#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cvr/errors.hpp"
#include "cvr/synthetic_data.hpp"
#include "cvr/trainer.hpp"

using namespace cvr;

namespace {

std::vector<PairedSample> small_dataset(std::uint64_t seed, std::size_t n) {
    GeneratorConfig g;
    g.seed = seed;
    g.n_cases = n;
    g.d_f = 16;
    g.d_sig = 16;
    return generate_dataset(g);
}

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.n_blocks = 1;
    cfg.d_k = 8;
    cfg.d_emb = 16;
    cfg.seed = 4;
    return cfg;
}

std::vector<PairedSample> noiseless_case(std::uint64_t seed) {
    GeneratorConfig g;
    g.seed = seed;
    g.n_cases = 1;
    g.feature_noise_sigma = 0.0;
    g.geometry_noise_sigma = 0.0;
    g.distractor_confusability = 0.0;
    return generate_dataset(g);
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "cvr_test_trainer";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("train config validation") {
    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](auto& c) { c.epochs = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto& c) { c.learning_rate = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto& c) { c.momentum = 1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto& c) { c.batch_size = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](auto& c) { c.d_emb = 12; }).validate(), ConfigError);
    CHECK_NOTHROW(TrainConfig{}.validate());

    const auto data = small_dataset(1, 2);
    TrainConfig zero = small_train_config();
    zero.epochs = 0;
    CHECK_THROWS_AS(train(data, zero), ConfigError);
    CHECK_THROWS_AS(train(std::span<const PairedSample>{}, small_train_config()), DomainError);
}

TEST_CASE("a vanishing learning rate leaves parameters unchanged") {
    const auto data = small_dataset(2, 4);
    TrainConfig cfg = small_train_config();
    cfg.learning_rate = 1e-300;
    const Checkpoint ckpt = train(data, cfg);
    const ModelParams init = initial_model(data.front().feature_dim(), cfg);
    const auto before = tensor_refs(init);
    const auto after = tensor_refs(ckpt.model);
    REQUIRE(before.size() == after.size());
    double worst = 0.0;
    for (std::size_t t = 0; t < before.size(); ++t) {
        for (std::size_t k = 0; k < before[t].values.size(); ++k) {
            worst = std::max(worst, std::abs(before[t].values[k] - after[t].values[k]));
        }
    }
    CHECK(worst <= 1e-290);
    CHECK(ckpt.epoch == cfg.epochs);
    CHECK(ckpt.train_loss_history.size() == cfg.epochs);
}

TEST_CASE("training is bit-reproducible") {
    const auto data = small_dataset(3, 6);
    const TrainConfig cfg = small_train_config();
    const Checkpoint a = train(data, cfg);
    const Checkpoint b = train(data, cfg);
    CHECK(a == b);
    TrainConfig other = cfg;
    other.seed = 5;
    CHECK_FALSE(train(data, other).model == a.model);
}

TEST_CASE("epoch callback reports every epoch") {
    const auto data = small_dataset(3, 3);
    std::vector<double> seen;
    const Checkpoint ckpt = train(data, small_train_config(), [&](std::size_t e, double loss) {
        CHECK(e == seen.size());
        seen.push_back(loss);
    });
    CHECK(seen == ckpt.train_loss_history);
}

TEST_CASE("a single noiseless case is memorized") {
    for (std::size_t n_blocks : {std::size_t{0}, std::size_t{3}}) {
        const auto data = noiseless_case(1);
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.n_blocks = n_blocks;
        cfg.seed = 1;
        const Checkpoint ckpt = train(data, cfg);
        INFO("N = " << n_blocks);
        CHECK(ckpt.train_loss_history.back() < 0.05);
        CHECK(evaluate(ckpt.model, data).f1 == 1.0);
    }
}

TEST_CASE("full-batch descent without momentum never climbs more than 5%") {
    const auto data = noiseless_case(2);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.momentum = 0.0;
    cfg.n_blocks = 0;
    cfg.seed = 2;
    const Checkpoint ckpt = train(data, cfg);
    const auto& h = ckpt.train_loss_history;
    for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= 1.05 * h[i - 1]);
    CHECK(h.back() < h.front());
}

TEST_CASE("zero relation blocks reduce to the heads on raw features") {
    const auto data = small_dataset(7, 4);
    TrainConfig cfg = small_train_config();
    cfg.n_blocks = 0;
    const Checkpoint ckpt = train(data, cfg);
    CHECK(ckpt.model.stack.n_blocks() == 0);
    for (const auto& s : data) {
        const Prediction p = predict(s, ckpt.model);
        std::vector<Vector> raw1;
        for (const auto& c : s.view1) raw1.push_back(c.feature);
        std::vector<Vector> raw2;
        for (const auto& c : s.view2) raw2.push_back(c.feature);
        const ViewPrediction d1 = detail::predict_view(raw1, ckpt.model.head1);
        const ViewPrediction d2 = detail::predict_view(raw2, ckpt.model.head2);
        CHECK(p.view1.probs == d1.probs);
        CHECK(p.view1.offsets == d1.offsets);
        CHECK(p.view2.probs == d2.probs);
        CHECK(p.view2.offsets == d2.offsets);
    }
}

TEST_CASE("checkpoints round-trip exactly") {
    const auto data = small_dataset(8, 3);
    const Checkpoint ckpt = train(data, small_train_config());
    const auto path = scratch("model.json");
    write_checkpoint(ckpt, path);
    CHECK(read_checkpoint(path) == ckpt);
    CHECK(evaluate(read_checkpoint(path).model, data).f1 == evaluate(ckpt.model, data).f1);
}

TEST_CASE("checkpoints with a foreign version or broken content are rejected") {
    const auto data = small_dataset(8, 2);
    const Checkpoint ckpt = train(data, small_train_config());
    const auto path = scratch("versioned.json");
    write_checkpoint(ckpt, path);
    std::ifstream in(path);
    nlohmann::json j = nlohmann::json::parse(in);
    in.close();

    j["version"] = kCheckpointVersion + 1;
    const auto bumped = scratch("bumped.json");
    std::ofstream(bumped) << j.dump();
    CHECK_THROWS_AS(read_checkpoint(bumped), SchemaError);

    const auto garbage = scratch("garbage.json");
    std::ofstream(garbage) << "not json";
    CHECK_THROWS_AS(read_checkpoint(garbage), SchemaError);
    CHECK_THROWS_AS(read_checkpoint(scratch("missing.json")), IoError);
}

TEST_CASE("training rejects mixed feature lengths") {
    auto data = small_dataset(9, 2);
    auto other = small_dataset(9, 1);
    for (auto& c : other[0].view1) c.feature = Vector(4);
    for (auto& c : other[0].view2) c.feature = Vector(4);
    data.push_back(other[0]);
    CHECK_THROWS_AS(train(data, small_train_config()), ShapeError);
}

TEST_CASE("ablation produces one row per block count and seed") {
    const auto train_set = small_dataset(10, 4);
    const auto test_set = small_dataset(11, 2);
    const std::vector<std::size_t> ns{2, 0};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    TrainConfig cfg = small_train_config();
    cfg.epochs = 1;
    const auto rows = run_ablation(train_set, test_set, cfg, ns, seeds);
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].n_blocks == (i < 3 ? 0u : 2u));
        CHECK(rows[i].seed == seeds[i % 3]);
        CHECK(std::isfinite(rows[i].final_train_loss));
        CHECK(rows[i].metrics.images == 4);
    }
    const auto means = ablation_means(rows);
    REQUIRE(means.size() == 2);
    CHECK(means[0].n_blocks == 0);
    CHECK(means[0].runs == 3);
    CHECK(means[0].f1 == doctest::Approx((rows[0].metrics.f1 + rows[1].metrics.f1 + rows[2].metrics.f1) / 3));
    CHECK_THROWS_AS(run_ablation(train_set, test_set, cfg, std::span<const std::size_t>{}, seeds), ConfigError);
}
