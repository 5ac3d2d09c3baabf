#include "cvr/model.hpp"

#include <string>

#include "cvr/errors.hpp"

namespace cvr {

namespace {

template <class Model, class Ref>
std::vector<Ref> collect_tensors(Model& model) {
    std::vector<Ref> refs;
    auto add_matrix = [&refs](std::string name, auto& m) {
        refs.push_back({std::move(name), m.rows(), m.cols(), m.span()});
    };
    auto add_vector = [&refs](std::string name, auto& v) {
        refs.push_back({std::move(name), v.size(), 1, v.span()});
    };
    auto add_blocks = [&](const std::string& dir, auto& blocks) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = "stack." + dir + "[" + std::to_string(i) + "].";
            add_matrix(p + "query", blocks[i].query);
            add_matrix(p + "key", blocks[i].key);
            add_matrix(p + "value", blocks[i].value);
            add_vector(p + "gate", blocks[i].gate);
        }
    };
    add_blocks("1from2", model.stack.blocks_1from2);
    add_blocks("2from1", model.stack.blocks_2from1);
    auto add_head = [&](const std::string& name, auto& head) {
        add_matrix(name + ".cls_weight", head.cls_weight);
        add_vector(name + ".cls_bias", head.cls_bias);
        add_matrix(name + ".reg_weight", head.reg_weight);
        add_vector(name + ".reg_bias", head.reg_bias);
    };
    add_head("head1", model.head1);
    add_head("head2", model.head2);
    return refs;
}

} // namespace

ModelDims ModelParams::dims() const {
    ModelDims d;
    d.d_f = head1.feature_dim();
    d.n_blocks = stack.n_blocks();
    if (d.n_blocks > 0) {
        d.d_k = stack.blocks_1from2.front().key_dim();
        d.d_emb = stack.blocks_1from2.front().embed_dim();
    }
    return d;
}

void ModelParams::validate() const {
    stack.validate();
    head1.validate();
    head2.validate();
    const std::size_t d_f = head1.feature_dim();
    if (head2.feature_dim() != d_f) throw ShapeError("view heads disagree on feature dim");
    if (stack.n_blocks() > 0 && stack.blocks_1from2.front().feature_dim() != d_f) {
        throw ShapeError("relation stack and heads disagree on feature dim");
    }
}

ModelParams ModelParams::init(const ModelDims& dims, Rng& rng) {
    ModelParams m;
    m.stack = RelationStackParams::random(rng, dims.n_blocks, dims.d_f, dims.d_k, dims.d_emb);
    m.head1 = HeadParams::random(rng, dims.d_f);
    m.head2 = HeadParams::random(rng, dims.d_f);
    m.validate();
    return m;
}

ModelParams ModelParams::zeros_like(const ModelParams& shape) {
    ModelParams z = shape;
    for (auto& t : tensor_refs(z)) {
        for (double& v : t.values) v = 0.0;
    }
    return z;
}

std::vector<TensorRef> tensor_refs(ModelParams& model) {
    return collect_tensors<ModelParams, TensorRef>(model);
}

std::vector<ConstTensorRef> tensor_refs(const ModelParams& model) {
    return collect_tensors<const ModelParams, ConstTensorRef>(model);
}

namespace detail {

ViewPrediction predict_view(std::span<const Vector> features, const HeadParams& head) {
    ViewPrediction out;
    out.probs.reserve(features.size());
    out.offsets.reserve(features.size());
    for (const auto& f : features) {
        out.probs.push_back(classify(f, head));
        out.offsets.push_back(regress(f, head));
    }
    return out;
}

} // namespace detail

Prediction predict(const PairedSample& sample, const ModelParams& model) {
    model.validate();
    auto [f1, f2] = relation_stack_forward(sample.view1, sample.view2, model.stack);
    return {detail::predict_view(f1, model.head1), detail::predict_view(f2, model.head2)};
}

double forward_loss(const PairedSample& sample, const ModelParams& model, const LossWeights& weights) {
    const Prediction p = predict(sample, model);
    const ViewLoss l1 = view_loss(p.view1.probs, p.view1.offsets, sample.targets1);
    const ViewLoss l2 = view_loss(p.view2.probs, p.view2.offsets, sample.targets2);
    return total_loss(l1, l2, weights);
}

} // namespace cvr
