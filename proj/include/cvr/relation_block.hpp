#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cvr/numerics.hpp"

namespace cvr {

enum class View { kView1, kView2 };

inline View opposite(View v) {
    return v == View::kView1 ? View::kView2 : View::kView1;
}

/// Box in image units. (x, y) is the box center.
struct RoiGeometry {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    bool operator==(const RoiGeometry&) const = default;
};

void validate_geometry(const RoiGeometry& g);

struct RoiCandidate {
    RoiGeometry geometry;
    Vector feature;
    View view = View::kView1;

    bool operator==(const RoiCandidate&) const = default;
};

struct RelationOptions {
    double wavelength = 1000.0;
    double offset_eps = 1e-3;  // clamp inside the log of positional offsets
    double denom_eps = 1e-12;  // below this the aggregation falls back to zero

    bool operator==(const RelationOptions&) const = default;
};

/// Learnable tensors of one relation block (one flow direction).
///
/// The target candidate's feature goes through `query` (d_k x d_f), each
/// source feature through `key` (d_k x d_f) and `value` (d_f x d_f). `gate`
/// projects the sinusoidal geometry embedding (length d_emb) to a scalar.
struct RelationBlockParams {
    Matrix query;
    Matrix key;
    Matrix value;
    Vector gate;

    std::size_t feature_dim() const { return value.rows(); }
    std::size_t key_dim() const { return query.rows(); }
    std::size_t embed_dim() const { return gate.size(); }

    // Throws ShapeError/ConfigError on inconsistent dimensions.
    void validate() const;

    static RelationBlockParams zeros(std::size_t d_f, std::size_t d_k, std::size_t d_emb);
    // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per tensor.
    static RelationBlockParams random(Rng& rng, std::size_t d_f, std::size_t d_k, std::size_t d_emb);

    bool operator==(const RelationBlockParams&) const = default;
};

/// N blocks per direction. blocks_1from2[i] refines view-1 candidates using
/// view-2 candidates at stage i; blocks_2from1[i] does the converse.
struct RelationStackParams {
    std::vector<RelationBlockParams> blocks_1from2;
    std::vector<RelationBlockParams> blocks_2from1;
    RelationOptions options;

    std::size_t n_blocks() const { return blocks_1from2.size(); }
    void validate() const;

    static RelationStackParams random(Rng& rng, std::size_t n_blocks, std::size_t d_f,
                                      std::size_t d_k, std::size_t d_emb);

    bool operator==(const RelationStackParams&) const = default;
};

/// Log-space offset and scale of box `a` relative to box `b`:
/// [log max(|xa-xb|/wb, eps), log max(|ya-yb|/hb, eps), log(wa/wb), log(ha/hb)].
Vector geometric_normalize(const RoiGeometry& a, const RoiGeometry& b, double eps = 1e-3);

/// Sinusoidal embedding: each of the 4 components expands into d_emb/4
/// entries, pairs (sin, cos) of g[c] / wavelength^(8k/d_emb), k = 0..d_emb/8-1.
Vector embed_geometry(std::span<const double> g, std::size_t d_emb, double wavelength = 1000.0);

/// Scaled dot product (query·f_a)ᵀ(key·f_b) / sqrt(d_k).
double visual_affinity(const Vector& f_a, const Vector& f_b, const RelationBlockParams& params);

/// relu(gateᵀ E(g)), always >= 0.
double geometric_gate(const Vector& g, const RelationBlockParams& params, double wavelength = 1000.0);

/// Relational feature of `target`: the gate- and affinity-weighted average of
/// value·f over the sources. Returns zeros when there are no sources or when
/// every gate is (numerically) zero.
Vector aggregate(const RoiCandidate& target, std::span<const RoiCandidate> sources,
                 const RelationBlockParams& params, const RelationOptions& options = {});

/// One block: f_n + aggregate(n) for each target, in target order.
std::vector<Vector> relation_block_forward(std::span<const RoiCandidate> targets,
                                           std::span<const RoiCandidate> sources,
                                           const RelationBlockParams& params,
                                           const RelationOptions& options = {});

/// Applies the stack with synchronous updates: both directions at stage i read
/// the features that entered stage i. Returns refined (view1, view2) features.
std::pair<std::vector<Vector>, std::vector<Vector>>
relation_stack_forward(std::span<const RoiCandidate> view1, std::span<const RoiCandidate> view2,
                       const RelationStackParams& stack);

namespace detail {

/// Geometry embeddings E(g(target_n, source_m)) for one direction. They depend
/// on boxes only, so they are shared by every block and every training step.
class PairEmbedding {
public:
    PairEmbedding() = default;
    PairEmbedding(std::span<const RoiGeometry> targets, std::span<const RoiGeometry> sources,
                  std::size_t d_emb, const RelationOptions& options);

    std::size_t n_targets() const { return n_targets_; }
    std::size_t n_sources() const { return n_sources_; }
    std::size_t embed_dim() const { return d_emb_; }

    std::span<const double> at(std::size_t n, std::size_t m) const {
        return {values_.data() + (n * n_sources_ + m) * d_emb_, d_emb_};
    }

private:
    std::size_t n_targets_ = 0;
    std::size_t n_sources_ = 0;
    std::size_t d_emb_ = 0;
    std::vector<double> values_;
};

/// Forward intermediates of one block, kept for backpropagation.
struct BlockTrace {
    std::vector<Vector> queries;     // query · f_n
    std::vector<Vector> keys;        // key · s_m
    std::vector<Vector> values;      // value · s_m
    Matrix gate_logits;              // gateᵀ E_nm before relu
    Matrix exps;                     // exp(w_nm - max over gated m)
    std::vector<double> denominators;
    Matrix weights;                  // normalized a_nm / D_n, zero row when inactive
    std::vector<char> active;        // D_n > denom_eps
    std::vector<Vector> relational;  // f'_n
    std::vector<Vector> outputs;     // f_n + f'_n
};

BlockTrace block_forward(std::span<const Vector> targets, std::span<const Vector> sources,
                         const PairEmbedding& embedding, const RelationBlockParams& params,
                         const RelationOptions& options);

/// Accumulates parameter gradients into `grad_params` and input gradients into
/// `grad_targets` / `grad_sources` given dL/d(outputs).
void block_backward(const BlockTrace& trace, std::span<const Vector> targets,
                    std::span<const Vector> sources, const PairEmbedding& embedding,
                    const RelationBlockParams& params, std::span<const Vector> grad_outputs,
                    RelationBlockParams& grad_params, std::span<Vector> grad_targets,
                    std::span<Vector> grad_sources);

struct StackTrace {
    PairEmbedding embed_1from2;
    PairEmbedding embed_2from1;
    // stage inputs; entry N holds the final outputs
    std::vector<std::vector<Vector>> features1;
    std::vector<std::vector<Vector>> features2;
    std::vector<BlockTrace> blocks_1from2;
    std::vector<BlockTrace> blocks_2from1;
};

StackTrace stack_forward(std::span<const RoiCandidate> view1, std::span<const RoiCandidate> view2,
                         const RelationStackParams& stack);

/// Returns gradients w.r.t. the raw candidate features of both views.
std::pair<std::vector<Vector>, std::vector<Vector>>
stack_backward(const StackTrace& trace, const RelationStackParams& stack,
               std::vector<Vector> grad_out1, std::vector<Vector> grad_out2,
               RelationStackParams& grads);

} // namespace detail

} // namespace cvr
