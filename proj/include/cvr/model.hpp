#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cvr/heads.hpp"
#include "cvr/relation_block.hpp"
#include "cvr/sample.hpp"

namespace cvr {

struct ModelDims {
    std::size_t d_f = 128;
    std::size_t d_k = 64;
    std::size_t d_emb = 64;
    std::size_t n_blocks = 3;

    bool operator==(const ModelDims&) const = default;
};

/// Relation stack plus one head pair per view.
struct ModelParams {
    RelationStackParams stack;
    HeadParams head1;
    HeadParams head2;

    ModelDims dims() const;
    void validate() const;

    static ModelParams init(const ModelDims& dims, Rng& rng);
    // Same shapes, all entries zero.
    static ModelParams zeros_like(const ModelParams& shape);

    bool operator==(const ModelParams&) const = default;
};

// Gradient buffers share the parameter layout.
using ParamGradients = ModelParams;

template <class T>
struct BasicTensorRef {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<T> values;
};
using TensorRef = BasicTensorRef<double>;
using ConstTensorRef = BasicTensorRef<const double>;

/// Every learnable tensor in a fixed order with a stable name such as
/// "stack.1from2[0].query" or "head2.cls_bias".
std::vector<TensorRef> tensor_refs(ModelParams& model);
std::vector<ConstTensorRef> tensor_refs(const ModelParams& model);

struct ViewPrediction {
    std::vector<Vector> probs;    // [p_background, p_mass] per candidate
    std::vector<Vector> offsets;  // box offsets per candidate
};

struct Prediction {
    ViewPrediction view1;
    ViewPrediction view2;
};

Prediction predict(const PairedSample& sample, const ModelParams& model);

/// Total weighted loss of one case.
double forward_loss(const PairedSample& sample, const ModelParams& model, const LossWeights& weights);

namespace detail {
ViewPrediction predict_view(std::span<const Vector> features, const HeadParams& head);
}

} // namespace cvr
