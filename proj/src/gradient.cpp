#include "cvr/gradient.hpp"

#include <algorithm>
#include <cmath>

#include "cvr/errors.hpp"

namespace cvr {

namespace {

// Adds the head gradients of one view and returns dL/d(features).
std::vector<Vector> head_backward(std::span<const Vector> features, const ViewPrediction& pred,
                                  std::span<const CandidateTarget> targets, const HeadParams& head,
                                  double cls_coef, double reg_coef, HeadParams& grad) {
    std::size_t n_cls = 0;
    std::size_t n_pos = 0;
    for (const auto& t : targets) {
        if (t.label != Label::kIgnore) ++n_cls;
        if (t.label == Label::kPositive) ++n_pos;
    }
    const double cls_scale = n_cls == 0 ? 0.0 : cls_coef / static_cast<double>(n_cls);
    const double reg_scale = n_pos == 0 ? 0.0 : reg_coef / static_cast<double>(n_pos);

    std::vector<Vector> grad_features;
    grad_features.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& t = targets[i];
        Vector g_feat(features[i].size());
        if (t.label != Label::kIgnore) {
            Vector g_logits = pred.probs[i];
            const std::size_t cls = t.label == Label::kPositive ? kMassClass : 1 - kMassClass;
            g_logits[cls] -= 1.0;
            for (double& v : g_logits) v *= cls_scale;
            add_outer(grad.cls_weight, 1.0, g_logits.span(), features[i].span());
            axpy(1.0, g_logits.span(), grad.cls_bias.span());
            axpy(1.0, matvec_transposed(head.cls_weight, g_logits.span()).span(), g_feat.span());
        }
        if (t.label == Label::kPositive) {
            Vector g_reg(4);
            for (std::size_t k = 0; k < 4; ++k) {
                g_reg[k] = reg_scale * smooth_l1_grad(pred.offsets[i][k] - t.regression[k]);
            }
            add_outer(grad.reg_weight, 1.0, g_reg.span(), features[i].span());
            axpy(1.0, g_reg.span(), grad.reg_bias.span());
            axpy(1.0, matvec_transposed(head.reg_weight, g_reg.span()).span(), g_feat.span());
        }
        grad_features.push_back(std::move(g_feat));
    }
    return grad_features;
}

double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

} // namespace

BackwardResult backward(const PairedSample& sample, const ModelParams& model,
                        const LossWeights& weights) {
    if (sample.view1.empty() || sample.view2.empty()) {
        throw DomainError("backward: case " + std::to_string(sample.case_id) +
                          " needs at least one candidate per view");
    }
    model.validate();
    weights.validate();

    const auto trace = detail::stack_forward(sample.view1, sample.view2, model.stack);
    const auto& out1 = trace.features1.back();
    const auto& out2 = trace.features2.back();
    const ViewPrediction p1 = detail::predict_view(out1, model.head1);
    const ViewPrediction p2 = detail::predict_view(out2, model.head2);
    const ViewLoss l1 = view_loss(p1.probs, p1.offsets, sample.targets1);
    const ViewLoss l2 = view_loss(p2.probs, p2.offsets, sample.targets2);

    BackwardResult result{total_loss(l1, l2, weights), ModelParams::zeros_like(model)};
    auto& g = result.grads;
    auto g1 = head_backward(out1, p1, sample.targets1, model.head1, 1.0, weights.alpha, g.head1);
    auto g2 = head_backward(out2, p2, sample.targets2, model.head2, weights.beta, weights.gamma,
                            g.head2);
    detail::stack_backward(trace, model.stack, std::move(g1), std::move(g2), g.stack);
    return result;
}

GradCheckReport compare_gradients(const PairedSample& sample, const ModelParams& model,
                                  const LossWeights& weights, const ParamGradients& analytic,
                                  double step, double tolerance) {
    if (!(step >= 1e-7 && step <= 1e-3)) {
        throw ConfigError("finite-difference step must lie in [1e-7, 1e-3]");
    }
    GradCheckReport report;
    report.step = step;
    report.tolerance = tolerance;

    ModelParams probe = model;
    auto params = tensor_refs(probe);
    const auto grads = tensor_refs(analytic);
    if (params.size() != grads.size()) throw ShapeError("gradient layout differs from the model");

    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].values.size() != grads[t].values.size()) {
            throw ShapeError("gradient tensor " + grads[t].name + " has the wrong size");
        }
        TensorCheck check{params[t].name, params[t].values.size(), 0.0};
        for (std::size_t i = 0; i < params[t].values.size(); ++i) {
            double& theta = params[t].values[i];
            const double saved = theta;
            theta = saved + step;
            const double up = forward_loss(sample, probe, weights);
            theta = saved - step;
            const double down = forward_loss(sample, probe, weights);
            theta = saved;
            const double numeric = (up - down) / (2.0 * step);
            check.max_rel_error = std::max(check.max_rel_error, rel_error(grads[t].values[i], numeric));
        }
        if (check.max_rel_error >= report.max_rel_error) {
            report.max_rel_error = check.max_rel_error;
            report.worst_tensor = check.name;
        }
        report.tensors.push_back(std::move(check));
    }
    report.pass = report.max_rel_error < tolerance;
    return report;
}

GradCheckReport finite_difference_check(const PairedSample& sample, const ModelParams& model,
                                        const LossWeights& weights, double step, double tolerance) {
    const auto analytic = backward(sample, model, weights);
    return compare_gradients(sample, model, weights, analytic.grads, step, tolerance);
}

ToyProblem make_toy_problem(std::uint64_t seed, const ToyProblemDims& dims) {
    Rng rng(seed, 0x70795ULL);
    ToyProblem toy;
    toy.model = ModelParams::init({dims.d_f, dims.d_k, dims.d_emb, dims.n_blocks}, rng);

    auto& s = toy.sample;
    s.case_id = static_cast<std::int64_t>(seed);
    auto fill_view = [&](std::vector<RoiCandidate>& cands, std::vector<CandidateTarget>& targets,
                         std::vector<GroundTruthBox>& gts, View view) {
        for (std::size_t i = 0; i < dims.candidates_per_view; ++i) {
            RoiCandidate c;
            c.view = view;
            c.geometry = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0), rng.uniform(5.0, 20.0),
                          rng.uniform(5.0, 20.0)};
            c.feature = Vector(dims.d_f);
            for (double& v : c.feature) v = rng.normal();
            Label label = Label::kNegative;
            if (i == 0) {
                label = Label::kPositive;
            } else if (i > 1) {
                label = static_cast<Label>(rng.uniform_index(3));
            }
            CandidateTarget t{label, {}};
            if (label == Label::kPositive) {
                t.regression = Vector(4);
                for (double& v : t.regression) v = 0.3 * rng.normal();
            }
            cands.push_back(std::move(c));
            targets.push_back(std::move(t));
        }
        gts.push_back({cands.empty() ? RoiGeometry{} : cands.front().geometry, 0});
    };
    fill_view(s.view1, s.targets1, s.gt1, View::kView1);
    fill_view(s.view2, s.targets2, s.gt2, View::kView2);
    return toy;
}

} // namespace cvr
