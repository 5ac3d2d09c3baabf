#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvr/model.hpp"

namespace cvr {

struct BackwardResult {
    double loss = 0.0;
    ParamGradients grads;
};

/// Exact gradient of the weighted two-view loss for one case, by manual
/// reverse-mode through the heads, the residual sums, the normalized
/// aggregation, the relu gate and the bilinear affinity. Geometry embeddings
/// are constants. Throws DomainError when either view has no candidates.
BackwardResult backward(const PairedSample& sample, const ModelParams& model,
                        const LossWeights& weights);

struct TensorCheck {
    std::string name;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    std::string worst_tensor;
    double tolerance = 1e-4;
    double step = 1e-5;
    bool pass = false;
};

/// Compares `analytic` against central differences of forward_loss for every
/// parameter entry; relative error |a-b| / max(|a|, |b|, 1e-8).
GradCheckReport compare_gradients(const PairedSample& sample, const ModelParams& model,
                                  const LossWeights& weights, const ParamGradients& analytic,
                                  double step = 1e-5, double tolerance = 1e-4);

GradCheckReport finite_difference_check(const PairedSample& sample, const ModelParams& model,
                                        const LossWeights& weights, double step = 1e-5,
                                        double tolerance = 1e-4);

struct ToyProblemDims {
    std::size_t d_f = 8;
    std::size_t d_k = 4;
    std::size_t d_emb = 8;
    std::size_t candidates_per_view = 3;
    std::size_t n_blocks = 2;
};

struct ToyProblem {
    PairedSample sample;
    ModelParams model;
};

/// Random small case and model for gradient checking. Every view gets at
/// least one positive and one negative candidate when it has two or more.
ToyProblem make_toy_problem(std::uint64_t seed, const ToyProblemDims& dims);

} // namespace cvr
