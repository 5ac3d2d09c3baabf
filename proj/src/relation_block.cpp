#include "cvr/relation_block.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cvr/errors.hpp"

namespace cvr {

namespace {

void require_feature_dim(std::span<const Vector> features, std::size_t d_f, const char* what) {
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != d_f) {
            throw ShapeError(std::string(what) + " feature " + std::to_string(i) + " has length " +
                             std::to_string(features[i].size()) + ", expected " +
                             std::to_string(d_f));
        }
    }
}

std::vector<RoiGeometry> geometries(std::span<const RoiCandidate> candidates) {
    std::vector<RoiGeometry> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.geometry);
    return out;
}

std::vector<Vector> features(std::span<const RoiCandidate> candidates) {
    std::vector<Vector> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.feature);
    return out;
}

void require_view(std::span<const RoiCandidate> candidates, View view, const char* what) {
    for (const auto& c : candidates) {
        if (c.view != view) {
            throw DomainError(std::string(what) + ": candidates from mixed views");
        }
    }
}

} // namespace

void validate_geometry(const RoiGeometry& g) {
    if (!std::isfinite(g.x) || !std::isfinite(g.y)) {
        throw DomainError("box center must be finite");
    }
    if (!(g.w > 0.0) || !(g.h > 0.0) || !std::isfinite(g.w) || !std::isfinite(g.h)) {
        throw DomainError("box width and height must be positive, got w=" + std::to_string(g.w) +
                          " h=" + std::to_string(g.h));
    }
}

void RelationBlockParams::validate() const {
    const std::size_t d_f = value.rows();
    if (value.cols() != d_f) throw ShapeError("relation block: value matrix must be square");
    if (query.cols() != d_f || key.cols() != d_f) {
        throw ShapeError("relation block: query/key input width differs from feature dim");
    }
    if (query.rows() != key.rows() || query.rows() == 0) {
        throw ShapeError("relation block: query and key must share a non-zero key dim");
    }
    if (gate.empty() || gate.size() % 8 != 0) {
        throw ConfigError("relation block: embedding dim must be a positive multiple of 8, got " +
                          std::to_string(gate.size()));
    }
}

RelationBlockParams RelationBlockParams::zeros(std::size_t d_f, std::size_t d_k, std::size_t d_emb) {
    return {Matrix(d_k, d_f), Matrix(d_k, d_f), Matrix(d_f, d_f), Vector(d_emb)};
}

RelationBlockParams RelationBlockParams::random(Rng& rng, std::size_t d_f, std::size_t d_k,
                                                std::size_t d_emb) {
    const double s_f = 1.0 / std::sqrt(static_cast<double>(d_f));
    RelationBlockParams p;
    p.query = random_matrix(rng, d_k, d_f, s_f);
    p.key = random_matrix(rng, d_k, d_f, s_f);
    p.value = random_matrix(rng, d_f, d_f, s_f);
    p.gate = random_vector(rng, d_emb, 1.0 / std::sqrt(static_cast<double>(d_emb)));
    p.validate();
    return p;
}

void RelationStackParams::validate() const {
    if (blocks_1from2.size() != blocks_2from1.size()) {
        throw ShapeError("relation stack: directions have different block counts");
    }
    const RelationBlockParams* first = nullptr;
    for (const auto* list : {&blocks_1from2, &blocks_2from1}) {
        for (const auto& b : *list) {
            b.validate();
            if (first == nullptr) {
                first = &b;
            } else if (b.feature_dim() != first->feature_dim() || b.key_dim() != first->key_dim() ||
                       b.embed_dim() != first->embed_dim()) {
                throw ShapeError("relation stack: blocks disagree on dimensions");
            }
        }
    }
}

RelationStackParams RelationStackParams::random(Rng& rng, std::size_t n_blocks, std::size_t d_f,
                                                std::size_t d_k, std::size_t d_emb) {
    RelationStackParams s;
    for (std::size_t i = 0; i < n_blocks; ++i) {
        s.blocks_1from2.push_back(RelationBlockParams::random(rng, d_f, d_k, d_emb));
        s.blocks_2from1.push_back(RelationBlockParams::random(rng, d_f, d_k, d_emb));
    }
    return s;
}

Vector geometric_normalize(const RoiGeometry& a, const RoiGeometry& b, double eps) {
    validate_geometry(a);
    validate_geometry(b);
    if (!(eps > 0.0)) throw DomainError("geometric_normalize: eps must be positive");
    return Vector{std::log(std::max(std::abs(a.x - b.x) / b.w, eps)),
                  std::log(std::max(std::abs(a.y - b.y) / b.h, eps)),
                  std::log(a.w / b.w),
                  std::log(a.h / b.h)};
}

Vector embed_geometry(std::span<const double> g, std::size_t d_emb, double wavelength) {
    if (g.size() != 4) throw ShapeError("embed_geometry: geometry vector must have length 4");
    if (d_emb == 0 || d_emb % 8 != 0) {
        throw ConfigError("embed_geometry: d_emb must be a positive multiple of 8, got " +
                          std::to_string(d_emb));
    }
    if (!(wavelength > 1.0)) throw ConfigError("embed_geometry: wavelength must exceed 1");

    const std::size_t per_component = d_emb / 4;
    const std::size_t n_freq = d_emb / 8;
    Vector out(d_emb);
    for (std::size_t k = 0; k < n_freq; ++k) {
        const double divisor =
            std::pow(wavelength, 8.0 * static_cast<double>(k) / static_cast<double>(d_emb));
        for (std::size_t c = 0; c < 4; ++c) {
            const double arg = g[c] / divisor;
            out[c * per_component + 2 * k] = std::sin(arg);
            out[c * per_component + 2 * k + 1] = std::cos(arg);
        }
    }
    return out;
}

double visual_affinity(const Vector& f_a, const Vector& f_b, const RelationBlockParams& params) {
    params.validate();
    const Vector q = matvec(params.query, f_a);
    const Vector k = matvec(params.key, f_b);
    return dot(q, k) / std::sqrt(static_cast<double>(params.key_dim()));
}

double geometric_gate(const Vector& g, const RelationBlockParams& params, double wavelength) {
    return relu(dot(params.gate, embed_geometry(g.span(), params.embed_dim(), wavelength)));
}

Vector aggregate(const RoiCandidate& target, std::span<const RoiCandidate> sources,
                 const RelationBlockParams& params, const RelationOptions& options) {
    require_view(sources, opposite(target.view), "aggregate sources");
    const std::vector<RoiGeometry> target_geom{target.geometry};
    const auto source_geom = geometries(sources);
    const detail::PairEmbedding embedding(target_geom, source_geom, params.embed_dim(), options);
    const std::vector<Vector> target_feat{target.feature};
    auto trace = detail::block_forward(target_feat, features(sources), embedding, params, options);
    return std::move(trace.relational.front());
}

std::vector<Vector> relation_block_forward(std::span<const RoiCandidate> targets,
                                           std::span<const RoiCandidate> sources,
                                           const RelationBlockParams& params,
                                           const RelationOptions& options) {
    if (!targets.empty()) {
        require_view(targets, targets.front().view, "relation_block_forward targets");
        require_view(sources, opposite(targets.front().view), "relation_block_forward sources");
    } else if (!sources.empty()) {
        require_view(sources, sources.front().view, "relation_block_forward sources");
    }
    const detail::PairEmbedding embedding(geometries(targets), geometries(sources),
                                          params.embed_dim(), options);
    auto trace = detail::block_forward(features(targets), features(sources), embedding, params,
                                       options);
    return std::move(trace.outputs);
}

std::pair<std::vector<Vector>, std::vector<Vector>>
relation_stack_forward(std::span<const RoiCandidate> view1, std::span<const RoiCandidate> view2,
                       const RelationStackParams& stack) {
    auto trace = detail::stack_forward(view1, view2, stack);
    return {std::move(trace.features1.back()), std::move(trace.features2.back())};
}

namespace detail {

PairEmbedding::PairEmbedding(std::span<const RoiGeometry> targets,
                             std::span<const RoiGeometry> sources, std::size_t d_emb,
                             const RelationOptions& options)
    : n_targets_(targets.size()), n_sources_(sources.size()), d_emb_(d_emb) {
    values_.reserve(n_targets_ * n_sources_ * d_emb_);
    for (const auto& t : targets) {
        for (const auto& s : sources) {
            const Vector g = geometric_normalize(t, s, options.offset_eps);
            const Vector e = embed_geometry(g.span(), d_emb, options.wavelength);
            values_.insert(values_.end(), e.begin(), e.end());
        }
    }
}

BlockTrace block_forward(std::span<const Vector> targets, std::span<const Vector> sources,
                         const PairEmbedding& embedding, const RelationBlockParams& params,
                         const RelationOptions& options) {
    params.validate();
    const std::size_t d_f = params.feature_dim();
    require_feature_dim(targets, d_f, "target");
    require_feature_dim(sources, d_f, "source");
    const std::size_t n_t = targets.size();
    const std::size_t n_s = sources.size();
    if (embedding.n_targets() != n_t || embedding.n_sources() != n_s ||
        (n_t * n_s > 0 && embedding.embed_dim() != params.embed_dim())) {
        throw ShapeError("block_forward: geometry embedding does not match the candidate lists");
    }

    BlockTrace tr;
    tr.queries.reserve(n_t);
    for (const auto& f : targets) tr.queries.push_back(matvec(params.query, f));
    tr.keys.reserve(n_s);
    tr.values.reserve(n_s);
    for (const auto& f : sources) {
        tr.keys.push_back(matvec(params.key, f));
        tr.values.push_back(matvec(params.value, f));
    }

    const double norm = std::sqrt(static_cast<double>(params.key_dim()));
    tr.gate_logits = Matrix(n_t, n_s);
    tr.exps = Matrix(n_t, n_s);
    tr.weights = Matrix(n_t, n_s);
    tr.denominators.assign(n_t, 0.0);
    tr.active.assign(n_t, 0);
    tr.relational.reserve(n_t);
    tr.outputs.reserve(n_t);

    std::vector<double> affinity(n_s);
    for (std::size_t n = 0; n < n_t; ++n) {
        // The maximum is taken over gated sources only; the shift cancels in
        // the normalized weights either way.
        double max_aff = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < n_s; ++m) {
            tr.gate_logits(n, m) = dot(params.gate.span(), embedding.at(n, m));
            affinity[m] = dot(tr.queries[n], tr.keys[m]) / norm;
            if (tr.gate_logits(n, m) > 0.0) max_aff = std::max(max_aff, affinity[m]);
        }

        double denom = 0.0;
        for (std::size_t m = 0; m < n_s; ++m) {
            const double gate = relu(tr.gate_logits(n, m));
            if (gate > 0.0) {
                tr.exps(n, m) = std::exp(affinity[m] - max_aff);
                denom += gate * tr.exps(n, m);
            }
        }
        tr.denominators[n] = denom;

        Vector rel(d_f);
        if (denom > options.denom_eps) {
            tr.active[n] = 1;
            for (std::size_t m = 0; m < n_s; ++m) {
                const double a = relu(tr.gate_logits(n, m)) * tr.exps(n, m);
                tr.weights(n, m) = a / denom;
                if (a > 0.0) axpy(tr.weights(n, m), tr.values[m].span(), rel.span());
            }
        }
        tr.outputs.push_back(add(targets[n], rel));
        tr.relational.push_back(std::move(rel));
    }
    return tr;
}

void block_backward(const BlockTrace& tr, std::span<const Vector> targets,
                    std::span<const Vector> sources, const PairEmbedding& embedding,
                    const RelationBlockParams& params, std::span<const Vector> grad_outputs,
                    RelationBlockParams& grad_params, std::span<Vector> grad_targets,
                    std::span<Vector> grad_sources) {
    const std::size_t n_t = targets.size();
    const std::size_t n_s = sources.size();
    const std::size_t d_k = params.key_dim();
    const double norm = std::sqrt(static_cast<double>(d_k));

    std::vector<Vector> grad_keys(n_s, Vector(d_k));
    std::vector<double> grad_weight(n_s);

    for (std::size_t n = 0; n < n_t; ++n) {
        const Vector& g_out = grad_outputs[n];
        axpy(1.0, g_out.span(), grad_targets[n].span()); // residual path
        if (!tr.active[n]) continue;

        const Vector value_back = matvec_transposed(params.value, g_out.span());
        double weighted = 0.0;
        for (std::size_t m = 0; m < n_s; ++m) {
            grad_weight[m] = dot(g_out, tr.values[m]);
            weighted += tr.weights(n, m) * grad_weight[m];
        }

        const double denom = tr.denominators[n];
        Vector grad_query(d_k);
        for (std::size_t m = 0; m < n_s; ++m) {
            const double w = tr.weights(n, m);
            if (w != 0.0) {
                add_outer(grad_params.value, w, g_out.span(), sources[m].span());
                axpy(w, value_back.span(), grad_sources[m].span());
            }
            const double z = tr.gate_logits(n, m);
            if (!(z > 0.0)) continue; // relu subgradient 0 at and below 0

            const double e = tr.exps(n, m);
            const double grad_a = (grad_weight[m] - weighted) / denom;
            axpy(grad_a * e, embedding.at(n, m), grad_params.gate.span());

            const double grad_aff = grad_a * z * e;
            axpy(grad_aff / norm, tr.keys[m].span(), grad_query.span());
            axpy(grad_aff / norm, tr.queries[n].span(), grad_keys[m].span());
        }
        add_outer(grad_params.query, 1.0, grad_query.span(), targets[n].span());
        const Vector query_back = matvec_transposed(params.query, grad_query.span());
        axpy(1.0, query_back.span(), grad_targets[n].span());
    }

    for (std::size_t m = 0; m < n_s; ++m) {
        add_outer(grad_params.key, 1.0, grad_keys[m].span(), sources[m].span());
        const Vector key_back = matvec_transposed(params.key, grad_keys[m].span());
        axpy(1.0, key_back.span(), grad_sources[m].span());
    }
}

StackTrace stack_forward(std::span<const RoiCandidate> view1, std::span<const RoiCandidate> view2,
                         const RelationStackParams& stack) {
    stack.validate();
    require_view(view1, View::kView1, "view 1");
    require_view(view2, View::kView2, "view 2");

    StackTrace tr;
    tr.features1.push_back(features(view1));
    tr.features2.push_back(features(view2));
    const std::size_t n_blocks = stack.n_blocks();
    if (n_blocks == 0) return tr;

    const std::size_t d_emb = stack.blocks_1from2.front().embed_dim();
    const auto geom1 = geometries(view1);
    const auto geom2 = geometries(view2);
    tr.embed_1from2 = PairEmbedding(geom1, geom2, d_emb, stack.options);
    tr.embed_2from1 = PairEmbedding(geom2, geom1, d_emb, stack.options);

    for (std::size_t i = 0; i < n_blocks; ++i) {
        auto b12 = block_forward(tr.features1[i], tr.features2[i], tr.embed_1from2,
                                 stack.blocks_1from2[i], stack.options);
        auto b21 = block_forward(tr.features2[i], tr.features1[i], tr.embed_2from1,
                                 stack.blocks_2from1[i], stack.options);
        tr.features1.push_back(b12.outputs);
        tr.features2.push_back(b21.outputs);
        tr.blocks_1from2.push_back(std::move(b12));
        tr.blocks_2from1.push_back(std::move(b21));
    }
    return tr;
}

std::pair<std::vector<Vector>, std::vector<Vector>>
stack_backward(const StackTrace& tr, const RelationStackParams& stack,
               std::vector<Vector> grad_out1, std::vector<Vector> grad_out2,
               RelationStackParams& grads) {
    for (std::size_t i = stack.n_blocks(); i-- > 0;) {
        const auto& f1 = tr.features1[i];
        const auto& f2 = tr.features2[i];
        std::vector<Vector> g1(f1.size(), Vector(stack.blocks_1from2[i].feature_dim()));
        std::vector<Vector> g2(f2.size(), Vector(stack.blocks_1from2[i].feature_dim()));
        block_backward(tr.blocks_1from2[i], f1, f2, tr.embed_1from2, stack.blocks_1from2[i],
                       grad_out1, grads.blocks_1from2[i], g1, g2);
        block_backward(tr.blocks_2from1[i], f2, f1, tr.embed_2from1, stack.blocks_2from1[i],
                       grad_out2, grads.blocks_2from1[i], g2, g1);
        grad_out1 = std::move(g1);
        grad_out2 = std::move(g2);
    }
    return {std::move(grad_out1), std::move(grad_out2)};
}

} // namespace detail

} // namespace cvr
