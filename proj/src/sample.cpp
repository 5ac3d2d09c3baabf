#include "cvr/sample.hpp"

#include <algorithm>
#include <string>

#include "cvr/errors.hpp"

namespace cvr {

namespace {

void check_view(const std::vector<RoiCandidate>& cands, const std::vector<CandidateTarget>& targets,
                View view, std::size_t d_f, const std::string& name) {
    if (cands.size() != targets.size()) {
        throw SchemaError(name + ": " + std::to_string(cands.size()) + " candidates but " +
                          std::to_string(targets.size()) + " targets");
    }
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto& c = cands[i];
        if (c.view != view) throw SchemaError(name + ": candidate " + std::to_string(i) + " has the wrong view");
        if (c.feature.size() != d_f) {
            throw SchemaError(name + ": candidate " + std::to_string(i) + " has feature length " +
                              std::to_string(c.feature.size()) + ", expected " + std::to_string(d_f));
        }
        try {
            validate_geometry(c.geometry);
        } catch (const DomainError& e) {
            throw SchemaError(name + ": candidate " + std::to_string(i) + ": " + e.what());
        }
        const auto& t = targets[i];
        const bool has_reg = !t.regression.empty();
        if (has_reg != (t.label == Label::kPositive) || (has_reg && t.regression.size() != 4)) {
            throw SchemaError(name + ": candidate " + std::to_string(i) +
                              " regression target must be 4 offsets iff positive");
        }
    }
}

std::vector<int> lesion_ids(const std::vector<GroundTruthBox>& gts) {
    std::vector<int> ids;
    for (const auto& g : gts) ids.push_back(g.lesion);
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

std::size_t PairedSample::feature_dim() const {
    if (!view1.empty()) return view1.front().feature.size();
    if (!view2.empty()) return view2.front().feature.size();
    return 0;
}

void PairedSample::validate() const {
    const std::size_t d_f = feature_dim();
    const std::string name = "case " + std::to_string(case_id);
    check_view(view1, targets1, View::kView1, d_f, name + " view1");
    check_view(view2, targets2, View::kView2, d_f, name + " view2");
    for (const auto* gts : {&gt1, &gt2}) {
        for (const auto& g : *gts) {
            try {
                validate_geometry(g.geometry);
            } catch (const DomainError& e) {
                throw SchemaError(name + ": ground truth: " + e.what());
            }
        }
    }
    if (lesion_ids(gt1) != lesion_ids(gt2)) {
        throw SchemaError(name + ": ground-truth lesion ids differ between views");
    }
}

std::vector<RoiGeometry> gt_boxes(const std::vector<GroundTruthBox>& gts) {
    std::vector<RoiGeometry> out;
    out.reserve(gts.size());
    for (const auto& g : gts) out.push_back(g.geometry);
    return out;
}

} // namespace cvr
