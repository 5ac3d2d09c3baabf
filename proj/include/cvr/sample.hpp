#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cvr/heads.hpp"
#include "cvr/relation_block.hpp"

namespace cvr {

struct GroundTruthBox {
    RoiGeometry geometry;
    int lesion = 0;

    bool operator==(const GroundTruthBox&) const = default;
};

/// One two-view case: candidates per view, ground truth per view and the
/// per-candidate training targets. gt1/gt2 carry the same lesion ids.
struct PairedSample {
    std::int64_t case_id = 0;
    std::vector<RoiCandidate> view1;
    std::vector<RoiCandidate> view2;
    std::vector<GroundTruthBox> gt1;
    std::vector<GroundTruthBox> gt2;
    std::vector<CandidateTarget> targets1;
    std::vector<CandidateTarget> targets2;

    // Feature length of the first candidate, 0 when there are none.
    std::size_t feature_dim() const;

    // Throws SchemaError on misaligned targets, wrong views, inconsistent
    // feature lengths, invalid boxes or unpaired lesion ids.
    void validate() const;

    bool operator==(const PairedSample&) const = default;
};

std::vector<RoiGeometry> gt_boxes(const std::vector<GroundTruthBox>& gts);

} // namespace cvr
