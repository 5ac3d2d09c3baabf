#include "cvr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "cvr/errors.hpp"
#include "cvr/file_io.hpp"
#include "cvr/gradient.hpp"
#include "cvr/serialization.hpp"

namespace cvr {

namespace {

constexpr std::uint64_t kStackInitStream = 1;
constexpr std::uint64_t kHeadInitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

using nlohmann::json;

} // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate: must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum: must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs: must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
    if (d_k < 1) throw ConfigError("d_k: must be at least 1");
    if (d_emb == 0 || d_emb % 8 != 0) throw ConfigError("d_emb: must be a positive multiple of 8");
    loss_weights.validate();
}

ModelParams initial_model(std::size_t d_f, const TrainConfig& cfg) {
    // Heads draw from their own stream so models that differ only in N start
    // from identical heads.
    Rng stack_rng(cfg.seed, kStackInitStream);
    Rng head_rng(cfg.seed, kHeadInitStream);
    ModelParams m;
    m.stack = RelationStackParams::random(stack_rng, cfg.n_blocks, d_f, cfg.d_k, cfg.d_emb);
    m.head1 = HeadParams::random(head_rng, d_f);
    m.head2 = HeadParams::random(head_rng, d_f);
    m.validate();
    return m;
}

Checkpoint train(std::span<const PairedSample> dataset, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
    cfg.validate();
    if (dataset.empty()) throw DomainError("train: dataset is empty");
    const std::size_t d_f = dataset.front().feature_dim();
    for (const auto& s : dataset) {
        if (s.feature_dim() != d_f) {
            throw ShapeError("train: case " + std::to_string(s.case_id) + " has feature length " +
                             std::to_string(s.feature_dim()) + ", expected " + std::to_string(d_f));
        }
    }

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.model = initial_model(d_f, cfg);
    ModelParams velocity = ModelParams::zeros_like(ckpt.model);
    ParamGradients batch_grad = ModelParams::zeros_like(ckpt.model);
    auto params = tensor_refs(ckpt.model);
    auto vel = tensor_refs(velocity);
    auto acc = tensor_refs(batch_grad);

    Rng shuffle_rng(cfg.seed, kShuffleStream);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            for (auto& t : acc) std::fill(t.values.begin(), t.values.end(), 0.0);
            for (std::size_t b = start; b < end; ++b) {
                const auto& sample = dataset[order[b]];
                const BackwardResult r = backward(sample, ckpt.model, cfg.loss_weights);
                if (!std::isfinite(r.loss)) {
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                                         ", step " + std::to_string(step) + " (case " +
                                         std::to_string(sample.case_id) + ")");
                }
                epoch_loss += r.loss;
                const auto g = tensor_refs(r.grads);
                for (std::size_t t = 0; t < acc.size(); ++t) axpy(1.0, g[t].values, acc[t].values);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t t = 0; t < params.size(); ++t) {
                auto& p = params[t].values;
                auto& v = vel[t].values;
                const auto& g = acc[t].values;
                for (std::size_t k = 0; k < p.size(); ++k) {
                    v[k] = cfg.momentum * v[k] + scale * g[k];
                    p[k] -= cfg.learning_rate * v[k];
                }
                if (!all_finite(p)) {
                    throw NumericalError("non-finite parameter " + params[t].name + " after step " +
                                         std::to_string(step));
                }
            }
        }
        const double mean = epoch_loss / static_cast<double>(dataset.size());
        ckpt.train_loss_history.push_back(mean);
        ckpt.epoch = epoch + 1;
        if (on_epoch) on_epoch(epoch, mean);
    }
    return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const ModelDims dims = ckpt.model.dims();
    json j;
    j["format"] = "cvrnet-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config"] = to_json(ckpt.config);
    j["epoch"] = ckpt.epoch;
    j["train_loss_history"] = ckpt.train_loss_history;
    j["dims"] = {{"d_f", dims.d_f}, {"d_k", dims.d_k}, {"d_emb", dims.d_emb}, {"n_blocks", dims.n_blocks}};
    j["relation_options"] = {{"wavelength", ckpt.model.stack.options.wavelength},
                             {"offset_eps", ckpt.model.stack.options.offset_eps},
                             {"denom_eps", ckpt.model.stack.options.denom_eps}};
    json tensors = json::array();
    for (const auto& t : tensor_refs(ckpt.model)) {
        tensors.push_back({{"name", t.name},
                           {"rows", t.rows},
                           {"cols", t.cols},
                           {"data", std::vector<double>(t.values.begin(), t.values.end())}});
    }
    j["tensors"] = std::move(tensors);
    write_file_atomic(path, j.dump() + "\n");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const std::string where = path.string();
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw SchemaError(where + ": not a JSON checkpoint: " + e.what());
    }
    try {
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw SchemaError(where + ": unsupported checkpoint version " + j.at("version").dump());
        }
        Checkpoint ckpt;
        ckpt.config = train_config_from_json(j.at("config"));
        ckpt.epoch = j.at("epoch").get<std::size_t>();
        ckpt.train_loss_history = j.at("train_loss_history").get<std::vector<double>>();
        const auto& d = j.at("dims");
        const std::size_t d_f = d.at("d_f").get<std::size_t>();
        const std::size_t d_k = d.at("d_k").get<std::size_t>();
        const std::size_t d_emb = d.at("d_emb").get<std::size_t>();
        const std::size_t n_blocks = d.at("n_blocks").get<std::size_t>();
        for (std::size_t i = 0; i < n_blocks; ++i) {
            ckpt.model.stack.blocks_1from2.push_back(RelationBlockParams::zeros(d_f, d_k, d_emb));
            ckpt.model.stack.blocks_2from1.push_back(RelationBlockParams::zeros(d_f, d_k, d_emb));
        }
        if (j.contains("relation_options")) {
            const auto& o = j.at("relation_options");
            ckpt.model.stack.options = {o.at("wavelength").get<double>(),
                                        o.at("offset_eps").get<double>(),
                                        o.at("denom_eps").get<double>()};
        }
        ckpt.model.head1 = HeadParams::zeros(d_f);
        ckpt.model.head2 = HeadParams::zeros(d_f);

        auto refs = tensor_refs(ckpt.model);
        const auto& tensors = j.at("tensors");
        if (tensors.size() != refs.size()) {
            throw SchemaError(where + ": expected " + std::to_string(refs.size()) + " tensors, found " +
                              std::to_string(tensors.size()));
        }
        for (std::size_t t = 0; t < refs.size(); ++t) {
            const auto& jt = tensors[t];
            const auto name = jt.at("name").get<std::string>();
            const auto data = jt.at("data").get<std::vector<double>>();
            if (name != refs[t].name || data.size() != refs[t].values.size()) {
                throw SchemaError(where + ": tensor " + std::to_string(t) + " (" + name +
                                  ") does not match the expected layout " + refs[t].name);
            }
            std::copy(data.begin(), data.end(), refs[t].values.begin());
        }
        if (ckpt.train_loss_history.size() != ckpt.epoch) {
            throw SchemaError(where + ": loss history length differs from the epoch count");
        }
        ckpt.model.validate();
        return ckpt;
    } catch (const json::exception& e) {
        throw SchemaError(where + ": malformed checkpoint: " + e.what());
    } catch (const ConfigError& e) {
        throw SchemaError(where + ": bad config block: " + e.what());
    }
}

std::vector<AblationRow> run_ablation(std::span<const PairedSample> train_set,
                                      std::span<const PairedSample> test_set,
                                      const TrainConfig& base_cfg,
                                      std::span<const std::size_t> n_values,
                                      std::span<const std::uint64_t> seeds,
                                      const EvalConfig& eval_cfg) {
    if (n_values.empty()) throw ConfigError("ablation: list of block counts is empty");
    if (seeds.empty()) throw ConfigError("ablation: list of seeds is empty");
    std::vector<std::size_t> ns(n_values.begin(), n_values.end());
    std::sort(ns.begin(), ns.end());
    std::vector<AblationRow> rows;
    for (std::size_t n : ns) {
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base_cfg;
            cfg.n_blocks = n;
            cfg.seed = seed;
            const Checkpoint ckpt = train(train_set, cfg);
            rows.push_back({n, seed, evaluate(ckpt.model, test_set, eval_cfg),
                            ckpt.train_loss_history.back()});
        }
    }
    return rows;
}

std::vector<AblationMean> ablation_means(std::span<const AblationRow> rows) {
    std::map<std::size_t, AblationMean> by_n;
    for (const auto& r : rows) {
        auto& m = by_n[r.n_blocks];
        m.n_blocks = r.n_blocks;
        ++m.runs;
        m.precision += r.metrics.precision;
        m.recall += r.metrics.recall;
        m.f1 += r.metrics.f1;
        m.fpi += r.metrics.fpi;
    }
    std::vector<AblationMean> out;
    for (auto& [n, m] : by_n) {
        const double k = static_cast<double>(m.runs);
        m.precision /= k;
        m.recall /= k;
        m.f1 /= k;
        m.fpi /= k;
        out.push_back(m);
    }
    return out;
}

} // namespace cvr
