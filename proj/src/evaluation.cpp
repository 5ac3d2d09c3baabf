#include "cvr/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "cvr/errors.hpp"

namespace cvr {

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    return order;
}

// Greedy matching; returns, per detection in descending-score order, its score
// and whether it was a true positive.
std::vector<std::pair<double, bool>> greedy_match(std::span<const Detection> dets,
                                                  std::span<const RoiGeometry> gts,
                                                  double iou_threshold) {
    std::vector<char> taken(gts.size(), 0);
    std::vector<std::pair<double, bool>> out;
    out.reserve(dets.size());
    for (std::size_t idx : score_order(dets)) {
        double best = -1.0;
        std::size_t best_gt = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double o = iou(dets[idx].geometry, gts[g]);
            if (o >= iou_threshold && o > best) {
                best = o;
                best_gt = g;
            }
        }
        const bool hit = best_gt < gts.size();
        if (hit) taken[best_gt] = 1;
        out.emplace_back(dets[idx].score, hit);
    }
    return out;
}

} // namespace

double iou(const RoiGeometry& a, const RoiGeometry& b) {
    const double ix = std::min(a.x + a.w / 2, b.x + b.w / 2) - std::max(a.x - a.w / 2, b.x - b.w / 2);
    const double iy = std::min(a.y + a.h / 2, b.y + b.h / 2) - std::max(a.y - a.h / 2, b.y - b.h / 2);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

MatchCounts match_detections(std::span<const Detection> dets, std::span<const RoiGeometry> gts,
                             double iou_threshold) {
    MatchCounts c;
    for (const auto& [score, hit] : greedy_match(dets, gts, iou_threshold)) {
        if (hit) {
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    c.fn = gts.size() - c.tp;
    return c;
}

std::vector<Detection> non_max_suppression(std::vector<Detection> dets, double nms_iou) {
    std::vector<Detection> kept;
    for (std::size_t idx : score_order(dets)) {
        const auto& d = dets[idx];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return iou(k.geometry, d.geometry) > nms_iou;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::pair<ImageDetections, ImageDetections> detect_case(const PairedSample& sample,
                                                        const ModelParams& model, double nms_iou) {
    const Prediction pred = predict(sample, model);
    auto build = [nms_iou](const std::vector<RoiCandidate>& cands, const ViewPrediction& p,
                           const std::vector<GroundTruthBox>& gts, View view) {
        std::vector<Detection> dets;
        dets.reserve(cands.size());
        for (std::size_t i = 0; i < cands.size(); ++i) {
            dets.push_back({decode_regression(cands[i].geometry, p.offsets[i].span()),
                            p.probs[i][kMassClass], view});
        }
        return ImageDetections{non_max_suppression(std::move(dets), nms_iou), gt_boxes(gts)};
    };
    return {build(sample.view1, pred.view1, sample.gt1, View::kView1),
            build(sample.view2, pred.view2, sample.gt2, View::kView2)};
}

double f1_score(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

MetricsReport score_detections(std::span<const ImageDetections> images, const EvalConfig& cfg) {
    MetricsReport r;
    r.threshold = cfg.score_threshold;
    r.images = images.size();
    std::size_t n_gt = 0;
    std::vector<std::pair<double, bool>> all;
    for (const auto& img : images) {
        n_gt += img.gts.size();
        std::vector<Detection> kept;
        for (const auto& d : img.detections) {
            if (d.score > cfg.score_threshold) kept.push_back(d);
        }
        const MatchCounts c = match_detections(kept, img.gts, cfg.iou_threshold);
        r.tp += c.tp;
        r.fp += c.fp;
        r.fn += c.fn;
        const auto matched = greedy_match(img.detections, img.gts, cfg.iou_threshold);
        all.insert(all.end(), matched.begin(), matched.end());
    }
    r.precision = r.tp + r.fp == 0 ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    r.recall = r.tp + r.fn == 0 ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    r.f1 = f1_score(r.precision, r.recall);
    const double n_images = static_cast<double>(std::max<std::size_t>(r.images, 1));
    r.fpi = static_cast<double>(r.fp) / n_images;

    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].second) {
            ++tp;
        } else {
            ++fp;
        }
        if (i + 1 == all.size() || all[i + 1].first != all[i].first) {
            r.froc.push_back({static_cast<double>(fp) / n_images,
                              n_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_gt),
                              all[i].first});
        }
    }
    return r;
}

MetricsReport evaluate(const ModelParams& model, std::span<const PairedSample> dataset,
                       const EvalConfig& cfg) {
    if (dataset.empty()) throw DomainError("evaluate: dataset is empty");
    std::vector<ImageDetections> images;
    images.reserve(2 * dataset.size());
    for (const auto& s : dataset) {
        auto [a, b] = detect_case(s, model, cfg.nms_iou);
        images.push_back(std::move(a));
        images.push_back(std::move(b));
    }
    return score_detections(images, cfg);
}

double froc_interpolate(std::span<const FrocPoint> froc, double fpi_query) {
    double best = 0.0;
    for (const auto& p : froc) {
        if (p.fpi <= fpi_query) best = std::max(best, p.tpr);
    }
    return best;
}

} // namespace cvr
