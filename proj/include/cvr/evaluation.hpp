#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cvr/model.hpp"
#include "cvr/relation_block.hpp"
#include "cvr/sample.hpp"

namespace cvr {

struct Detection {
    RoiGeometry geometry;
    double score = 0.0;  // mass probability
    View view = View::kView1;
};

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct FrocPoint {
    double fpi = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;  // detections with score >= threshold are counted
};

struct EvalConfig {
    double score_threshold = 0.5;  // detections kept when score > threshold
    double iou_threshold = 0.5;
    double nms_iou = 0.5;
};

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fpi = 0.0;
    std::vector<FrocPoint> froc;
    double threshold = 0.5;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t images = 0;
};

/// Detections and ground truth for one single-view image.
struct ImageDetections {
    std::vector<Detection> detections;
    std::vector<RoiGeometry> gts;
};

/// Intersection over union of two center-format boxes, in [0, 1].
double iou(const RoiGeometry& a, const RoiGeometry& b);

/// Greedy one-to-one matching in descending score order: each detection
/// claims the highest-IoU unmatched ground truth with IoU >= iou_threshold.
MatchCounts match_detections(std::span<const Detection> dets, std::span<const RoiGeometry> gts,
                             double iou_threshold = 0.5);

/// Greedy non-maximum suppression; result sorted by descending score.
std::vector<Detection> non_max_suppression(std::vector<Detection> dets, double nms_iou);

/// Decoded, suppressed detections for both views of one case.
std::pair<ImageDetections, ImageDetections> detect_case(const PairedSample& sample,
                                                         const ModelParams& model, double nms_iou);

/// Counts, headline metrics at cfg.score_threshold and the full FROC curve.
MetricsReport score_detections(std::span<const ImageDetections> images, const EvalConfig& cfg);

MetricsReport evaluate(const ModelParams& model, std::span<const PairedSample> dataset,
                       const EvalConfig& cfg = {});

/// Highest TPR among curve points with fpi <= fpi_query, 0 if none.
double froc_interpolate(std::span<const FrocPoint> froc, double fpi_query);

double f1_score(double precision, double recall);

} // namespace cvr
