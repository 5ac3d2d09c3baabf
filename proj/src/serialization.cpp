#include "cvr/serialization.hpp"

#include <set>
#include <sstream>
#include <string>

#include "cvr/errors.hpp"
#include "cvr/file_io.hpp"

namespace cvr {

namespace {

using nlohmann::json;

class FieldReader {
public:
    FieldReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
        if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
    }

    template <class T>
    void required(const std::string& name, T& out) {
        if (!j_.contains(name)) throw ConfigError(context_ + ": missing required field '" + name + "'");
        read(name, out);
    }

    template <class T>
    void optional(const std::string& name, T& out) {
        if (j_.contains(name)) read(name, out);
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError(context_ + ": unknown field '" + key + "'");
        }
    }

private:
    template <class T>
    void read(const std::string& name, T& out) {
        seen_.insert(name);
        try {
            parse(j_.at(name), out);
        } catch (const json::exception&) {
            throw ConfigError(context_ + ": field '" + name + "' has the wrong type");
        } catch (const ConfigError& e) {
            throw ConfigError(context_ + ": field '" + name + "': " + e.what());
        }
    }

    static void parse(const json& v, double& out) { out = v.get<double>(); }
    static void parse(const json& v, std::size_t& out) {
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("expected a non-negative integer");
        out = v.get<std::size_t>();
    }
    static void parse(const json& v, IntRange& out) {
        if (!v.is_array() || v.size() != 2) throw ConfigError("expected [lo, hi]");
        if (!v[0].is_number_integer() || !v[1].is_number_integer()) throw ConfigError("expected integers");
        out = {v[0].get<int>(), v[1].get<int>()};
    }
    static void parse(const json& v, RealRange& out) {
        if (!v.is_array() || v.size() != 2) throw ConfigError("expected [lo, hi]");
        out = {v[0].get<double>(), v[1].get<double>()};
    }
    static void parse(const json& v, LossWeights& out) {
        FieldReader r(v, "loss_weights");
        r.optional("alpha", out.alpha);
        r.optional("beta", out.beta);
        r.optional("gamma", out.gamma);
        r.finish();
    }

    const json& j_;
    std::string context_;
    std::set<std::string> seen_;
};

} // namespace

json to_json(const GeneratorConfig& c) {
    return {{"image_extent", c.image_extent},
            {"lesions_per_case", {c.lesions_per_case.lo, c.lesions_per_case.hi}},
            {"distractors_per_view", {c.distractors_per_view.lo, c.distractors_per_view.hi}},
            {"lesion_size", {c.lesion_size.lo, c.lesion_size.hi}},
            {"feature_noise_sigma", c.feature_noise_sigma},
            {"geometry_noise_sigma", c.geometry_noise_sigma},
            {"distractor_confusability", c.distractor_confusability},
            {"signature_prominence", c.signature_prominence},
            {"d_f", c.d_f},
            {"d_sig", c.d_sig},
            {"seed", c.seed},
            {"n_cases", c.n_cases},
            {"test_fraction", c.test_fraction}};
}

GeneratorConfig generator_config_from_json(const json& j) {
    GeneratorConfig c;
    FieldReader r(j, "generator config");
    r.required("seed", c.seed);
    r.required("n_cases", c.n_cases);
    r.optional("image_extent", c.image_extent);
    r.optional("lesions_per_case", c.lesions_per_case);
    r.optional("distractors_per_view", c.distractors_per_view);
    r.optional("lesion_size", c.lesion_size);
    r.optional("feature_noise_sigma", c.feature_noise_sigma);
    r.optional("geometry_noise_sigma", c.geometry_noise_sigma);
    r.optional("distractor_confusability", c.distractor_confusability);
    r.optional("signature_prominence", c.signature_prominence);
    r.optional("d_f", c.d_f);
    r.optional("d_sig", c.d_sig);
    r.optional("test_fraction", c.test_fraction);
    r.finish();
    c.validate();
    return c;
}

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"n_blocks", c.n_blocks},
            {"d_k", c.d_k},
            {"d_emb", c.d_emb},
            {"loss_weights",
             {{"alpha", c.loss_weights.alpha}, {"beta", c.loss_weights.beta}, {"gamma", c.loss_weights.gamma}}},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    FieldReader r(j, "train config");
    r.optional("learning_rate", c.learning_rate);
    r.optional("momentum", c.momentum);
    r.optional("epochs", c.epochs);
    r.optional("batch_size", c.batch_size);
    r.optional("n_blocks", c.n_blocks);
    r.optional("d_k", c.d_k);
    r.optional("d_emb", c.d_emb);
    r.optional("loss_weights", c.loss_weights);
    r.optional("seed", c.seed);
    r.finish();
    c.validate();
    return c;
}

json to_json(const EvalConfig& c) {
    return {{"score_threshold", c.score_threshold},
            {"iou_threshold", c.iou_threshold},
            {"nms_iou", c.nms_iou}};
}

EvalConfig eval_config_from_json(const json& j) {
    EvalConfig c;
    FieldReader r(j, "eval config");
    r.optional("score_threshold", c.score_threshold);
    r.optional("iou_threshold", c.iou_threshold);
    r.optional("nms_iou", c.nms_iou);
    r.finish();
    return c;
}

json to_json(const MetricsReport& m) {
    json froc = json::array();
    for (const auto& p : m.froc) froc.push_back({{"fpi", p.fpi}, {"tpr", p.tpr}, {"threshold", p.threshold}});
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},   {"fpi", m.fpi},
            {"threshold", m.threshold}, {"tp", m.tp},         {"fp", m.fp},   {"fn", m.fn},
            {"images", m.images},       {"froc", std::move(froc)}};
}

json to_json(const GradCheckReport& r) {
    json tensors = json::array();
    for (const auto& t : r.tensors) {
        tensors.push_back({{"name", t.name}, {"entries", t.entries}, {"max_rel_error", t.max_rel_error}});
    }
    return {{"pass", r.pass},
            {"max_rel_error", r.max_rel_error},
            {"worst_tensor", r.worst_tensor},
            {"tolerance", r.tolerance},
            {"step", r.step},
            {"tensors", std::move(tensors)}};
}

std::string froc_csv(const MetricsReport& m) {
    std::ostringstream os;
    os << "fpi,tpr,threshold\n";
    for (const auto& p : m.froc) {
        os << format_real(p.fpi) << ',' << format_real(p.tpr) << ',' << format_real(p.threshold) << '\n';
    }
    return os.str();
}

} // namespace cvr
