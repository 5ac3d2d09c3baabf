#include "cvr/heads.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <string>

#include "cvr/errors.hpp"

namespace cvr {

void HeadParams::validate() const {
    const std::size_t d_f = cls_weight.cols();
    if (cls_weight.rows() != 2 || cls_bias.size() != 2) {
        throw ShapeError("classification head must have 2 outputs");
    }
    if (reg_weight.rows() != 4 || reg_bias.size() != 4) {
        throw ShapeError("regression head must have 4 outputs");
    }
    if (reg_weight.cols() != d_f) {
        throw ShapeError("heads disagree on feature dim");
    }
}

HeadParams HeadParams::zeros(std::size_t d_f) {
    return {Matrix(2, d_f), Vector(2), Matrix(4, d_f), Vector(4)};
}

HeadParams HeadParams::random(Rng& rng, std::size_t d_f) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d_f));
    HeadParams p = zeros(d_f);
    p.cls_weight = random_matrix(rng, 2, d_f, s);
    p.reg_weight = random_matrix(rng, 4, d_f, s);
    return p;
}

void LossWeights::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
        throw ConfigError("loss weights must be non-negative");
    }
}

Vector softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

Vector classify(const Vector& feature, const HeadParams& params) {
    Vector logits = matvec(params.cls_weight, feature);
    axpy(1.0, params.cls_bias.span(), logits.span());
    return softmax(logits.span());
}

Vector regress(const Vector& feature, const HeadParams& params) {
    Vector out = matvec(params.reg_weight, feature);
    axpy(1.0, params.reg_bias.span(), out.span());
    return out;
}

Vector encode_regression_target(const RoiGeometry& anchor, const RoiGeometry& gt) {
    validate_geometry(anchor);
    validate_geometry(gt);
    return Vector{(gt.x - anchor.x) / anchor.w, (gt.y - anchor.y) / anchor.h,
                  std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

RoiGeometry decode_regression(const RoiGeometry& anchor, std::span<const double> t) {
    validate_geometry(anchor);
    if (t.size() != 4) throw ShapeError("decode_regression: offsets must have length 4");
    return {anchor.x + t[0] * anchor.w, anchor.y + t[1] * anchor.h, anchor.w * std::exp(t[2]),
            anchor.h * std::exp(t[3])};
}

double smooth_l1(double x) {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
    if (x >= 1.0) return 1.0;
    if (x <= -1.0) return -1.0;
    return x;
}

ViewLoss view_loss(std::span<const Vector> probs, std::span<const Vector> regs,
                   std::span<const CandidateTarget> targets) {
    if (probs.size() != targets.size() || regs.size() != targets.size()) {
        throw ShapeError("view_loss: predictions and targets are misaligned (" +
                         std::to_string(probs.size()) + " probs, " + std::to_string(regs.size()) +
                         " offsets, " + std::to_string(targets.size()) + " targets)");
    }
    double cls_sum = 0.0;
    double reg_sum = 0.0;
    std::size_t n_cls = 0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& t = targets[i];
        if (t.label == Label::kIgnore) continue;
        const std::size_t cls = t.label == Label::kPositive ? kMassClass : 1 - kMassClass;
        cls_sum += -std::log(std::max(probs[i][cls], DBL_MIN));
        ++n_cls;
        if (t.label == Label::kPositive) {
            if (t.regression.size() != 4 || regs[i].size() != 4) {
                throw ShapeError("view_loss: positive candidate needs 4 regression offsets");
            }
            for (std::size_t k = 0; k < 4; ++k) reg_sum += smooth_l1(regs[i][k] - t.regression[k]);
            ++n_pos;
        }
    }
    ViewLoss out;
    out.cls = n_cls == 0 ? 0.0 : cls_sum / static_cast<double>(n_cls);
    out.reg = n_pos == 0 ? 0.0 : reg_sum / static_cast<double>(n_pos);
    return out;
}

double total_loss(const ViewLoss& v1, const ViewLoss& v2, const LossWeights& w) {
    return v1.cls + w.alpha * v1.reg + w.beta * v2.cls + w.gamma * v2.reg;
}

} // namespace cvr
