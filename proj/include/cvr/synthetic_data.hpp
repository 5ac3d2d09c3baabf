#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cvr/numerics.hpp"
#include "cvr/sample.hpp"

namespace cvr {

struct IntRange {
    int lo = 0;
    int hi = 0;
    bool operator==(const IntRange&) const = default;
};

struct RealRange {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const RealRange&) const = default;
};

/// Paired-view case generator settings.
///
/// A lesion has one signature shared by both views. Its box center along x is
/// depth * image_extent in both views (the cross-view correlated coordinate);
/// y is drawn independently per view. Geometry noise is relative to box size.
/// Distractor features are (1 - confusability) * noise + confusability *
/// signature of one of the case's lesions, at uncorrelated positions.
struct GeneratorConfig {
    double image_extent = 1024.0;
    IntRange lesions_per_case{1, 2};
    IntRange distractors_per_view{1, 3};
    RealRange lesion_size{40.0, 100.0};
    double feature_noise_sigma = 0.3;
    double geometry_noise_sigma = 0.05;
    double distractor_confusability = 0.8;
    // Length of the shared "mass-like" direction in every lesion signature.
    double signature_prominence = 4.0;
    std::size_t d_f = 128;
    std::size_t d_sig = 128;
    std::uint64_t seed = 0;
    std::size_t n_cases = 250;
    double test_fraction = 0.2;

    void validate() const;
    bool operator==(const GeneratorConfig&) const = default;
};

struct LatentLesion {
    int identity = 0;
    Vector shared_signature;  // length d_sig
    double size = 0.0;
    double depth = 0.0;       // in [0, 1]
};

struct GeneratedCase {
    PairedSample sample;
    std::vector<LatentLesion> lesions;
    // Per view, true for candidates drawn as distractors.
    std::vector<char> distractor1;
    std::vector<char> distractor2;
};

/// Fixed unit-norm direction shared by all lesion signatures of length d_sig.
Vector lesion_prototype(std::size_t d_sig);

/// IoU >= positive_iou with the best ground truth is positive (offsets
/// encoded against that box), < negative_iou negative, otherwise ignored.
CandidateTarget assign_target(const RoiGeometry& candidate, std::span<const RoiGeometry> gts,
                              double positive_iou = 0.5, double negative_iou = 0.3);

GeneratedCase generate_case_detailed(const GeneratorConfig& cfg, Rng& rng, std::int64_t case_id = 0);
PairedSample generate_case(const GeneratorConfig& cfg, Rng& rng, std::int64_t case_id = 0);

/// cfg.n_cases cases; case i draws from Rng(cfg.seed, i).
std::vector<PairedSample> generate_dataset(const GeneratorConfig& cfg);

struct DatasetSplit {
    std::vector<PairedSample> train;
    std::vector<PairedSample> test;
};

/// The last round(test_fraction * n) cases form the test split.
DatasetSplit split_dataset(std::vector<PairedSample> cases, double test_fraction);

/// One JSON record per line; reals written with 17 significant digits.
void write_dataset(std::span<const PairedSample> samples, const std::filesystem::path& path);
std::vector<PairedSample> read_dataset(const std::filesystem::path& path);

} // namespace cvr
