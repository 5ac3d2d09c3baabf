#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cvr/numerics.hpp"
#include "cvr/relation_block.hpp"

namespace cvr {

// Column of the mass class in classifier outputs; column 0 is background.
inline constexpr std::size_t kMassClass = 1;

/// One affine layer per head: 2-way classification and 4 box offsets.
struct HeadParams {
    Matrix cls_weight;  // 2 x d_f
    Vector cls_bias;    // 2
    Matrix reg_weight;  // 4 x d_f
    Vector reg_bias;    // 4

    std::size_t feature_dim() const { return cls_weight.cols(); }
    void validate() const;

    static HeadParams zeros(std::size_t d_f);
    static HeadParams random(Rng& rng, std::size_t d_f);

    bool operator==(const HeadParams&) const = default;
};

struct LossWeights {
    double alpha = 2.0;  // view-1 regression
    double beta = 1.0;   // view-2 classification
    double gamma = 2.0;  // view-2 regression

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

enum class Label { kPositive, kNegative, kIgnore };

struct CandidateTarget {
    Label label = Label::kNegative;
    Vector regression;  // t = [tx, ty, tw, th], non-empty iff positive

    bool operator==(const CandidateTarget&) const = default;
};

struct ViewLoss {
    double cls = 0.0;
    double reg = 0.0;
};

/// Softmax of cls_weight·f + cls_bias.
Vector classify(const Vector& feature, const HeadParams& params);
Vector softmax(std::span<const double> logits);

/// reg_weight·f + reg_bias.
Vector regress(const Vector& feature, const HeadParams& params);

Vector encode_regression_target(const RoiGeometry& anchor, const RoiGeometry& gt);
RoiGeometry decode_regression(const RoiGeometry& anchor, std::span<const double> offsets);

double smooth_l1(double x);
double smooth_l1_grad(double x);

/// Mean cross-entropy over non-ignored candidates and mean (over positives)
/// of the smooth-L1 offset error summed across the 4 components. Each mean
/// is 0 when its candidate set is empty.
ViewLoss view_loss(std::span<const Vector> probs, std::span<const Vector> regs,
                   std::span<const CandidateTarget> targets);

double total_loss(const ViewLoss& view1, const ViewLoss& view2, const LossWeights& weights);

} // namespace cvr
