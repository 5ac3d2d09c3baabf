#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cvr/evaluation.hpp"
#include "cvr/heads.hpp"
#include "cvr/model.hpp"
#include "cvr/sample.hpp"

namespace cvr {

struct TrainConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;
    std::size_t epochs = 20;
    std::size_t batch_size = 2;  // paired cases per step
    std::size_t n_blocks = 3;
    std::size_t d_k = 64;
    std::size_t d_emb = 64;
    LossWeights loss_weights;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ModelParams model;
    TrainConfig config;
    std::size_t epoch = 0;
    std::vector<double> train_loss_history;  // mean loss per completed epoch

    bool operator==(const Checkpoint&) const = default;
};

// Called after every epoch with (epoch index, mean training loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Mini-batch SGD with momentum (m = mu*m + g; theta -= lr*m) on gradients
/// averaged within each batch. The epoch order is a seeded shuffle and the
/// in-batch reduction runs in a fixed order, so runs are bit-reproducible.
/// Throws NumericalError naming the step when a loss is not finite.
Checkpoint train(std::span<const PairedSample> dataset, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

/// Model initialized exactly as train() initializes it.
ModelParams initial_model(std::size_t d_f, const TrainConfig& cfg);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

struct AblationRow {
    std::size_t n_blocks = 0;
    std::uint64_t seed = 0;
    MetricsReport metrics;
    double final_train_loss = 0.0;
};

struct AblationMean {
    std::size_t n_blocks = 0;
    std::size_t runs = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fpi = 0.0;
};

/// Trains one model per (N, seed) on identical data and evaluates each on the
/// test split. Rows come back sorted by N, then seed.
std::vector<AblationRow> run_ablation(std::span<const PairedSample> train_set,
                                      std::span<const PairedSample> test_set,
                                      const TrainConfig& base_cfg,
                                      std::span<const std::size_t> n_values,
                                      std::span<const std::uint64_t> seeds,
                                      const EvalConfig& eval_cfg = {});

std::vector<AblationMean> ablation_means(std::span<const AblationRow> rows);

} // namespace cvr
