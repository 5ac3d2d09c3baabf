#include "cvr/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvr/errors.hpp"
#include "cvr/evaluation.hpp"

namespace cvr {

namespace {

constexpr std::uint64_t kPrototypeSeed = 0xC0FFEE5EEDULL;

// Keeps box centers inside the image margin.
constexpr double kMarginFraction = 0.05;

Vector embed_signature(const Vector& signature, std::size_t d_f) {
    Vector f(d_f);
    std::copy(signature.begin(), signature.end(), f.begin());
    return f;
}

void add_noise(Vector& f, double sigma, Rng& rng) {
    if (sigma == 0.0) return;
    for (double& v : f) v += sigma * rng.normal();
}

template <class T>
void shuffle_together(std::vector<T>& items, std::vector<char>& flags, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(items[i - 1], items[j]);
        std::swap(flags[i - 1], flags[j]);
    }
}

struct ViewDraw {
    std::vector<RoiCandidate> candidates;
    std::vector<char> distractor;
    std::vector<GroundTruthBox> gts;
};

} // namespace

void GeneratorConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError(field + ": " + why);
    };
    if (!(image_extent > 0.0)) fail("image_extent", "must be positive");
    if (lesions_per_case.lo < 0 || lesions_per_case.hi < lesions_per_case.lo) {
        fail("lesions_per_case", "range must be non-empty and non-negative");
    }
    if (distractors_per_view.lo < 0 || distractors_per_view.hi < distractors_per_view.lo) {
        fail("distractors_per_view", "range must be non-empty and non-negative");
    }
    if (!(lesion_size.lo > 0.0) || lesion_size.hi < lesion_size.lo) {
        fail("lesion_size", "range must be non-empty with positive sizes");
    }
    if (!(feature_noise_sigma >= 0.0)) fail("feature_noise_sigma", "must be >= 0");
    if (!(geometry_noise_sigma >= 0.0)) fail("geometry_noise_sigma", "must be >= 0");
    if (!(distractor_confusability >= 0.0 && distractor_confusability <= 1.0)) {
        fail("distractor_confusability", "must lie in [0, 1]");
    }
    if (!(signature_prominence >= 0.0)) fail("signature_prominence", "must be >= 0");
    if (d_f == 0) fail("d_f", "must be positive");
    if (d_sig == 0 || d_sig > d_f) fail("d_sig", "must lie in [1, d_f]");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail("test_fraction", "must lie in [0, 1)");
}

Vector lesion_prototype(std::size_t d_sig) {
    Rng rng(kPrototypeSeed);
    Vector p(d_sig);
    double norm = 0.0;
    for (double& v : p) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : p) v /= norm;
    return p;
}

CandidateTarget assign_target(const RoiGeometry& candidate, std::span<const RoiGeometry> gts,
                              double positive_iou, double negative_iou) {
    double best = 0.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const double o = iou(candidate, gts[i]);
        if (o > best) {
            best = o;
            best_idx = i;
        }
    }
    if (best >= positive_iou) {
        return {Label::kPositive, encode_regression_target(candidate, gts[best_idx])};
    }
    if (best < negative_iou) return {Label::kNegative, {}};
    return {Label::kIgnore, {}};
}

GeneratedCase generate_case_detailed(const GeneratorConfig& cfg, Rng& rng, std::int64_t case_id) {
    cfg.validate();
    const double extent = cfg.image_extent;
    const double sg = cfg.geometry_noise_sigma;
    const double lo = kMarginFraction * extent;
    const double hi = (1.0 - kMarginFraction) * extent;
    const Vector prototype = lesion_prototype(cfg.d_sig);

    GeneratedCase out;
    const int n_lesions = rng.uniform_int(cfg.lesions_per_case.lo, cfg.lesions_per_case.hi);
    std::vector<RoiGeometry> shapes;
    for (int id = 0; id < n_lesions; ++id) {
        LatentLesion l;
        l.identity = id;
        l.size = rng.uniform(cfg.lesion_size.lo, cfg.lesion_size.hi);
        l.depth = rng.uniform(kMarginFraction, 1.0 - kMarginFraction);
        l.shared_signature = Vector(cfg.d_sig);
        for (std::size_t k = 0; k < cfg.d_sig; ++k) {
            l.shared_signature[k] = cfg.signature_prominence * prototype[k] + rng.normal();
        }
        out.lesions.push_back(std::move(l));
    }

    auto draw_view = [&](View view) {
        ViewDraw d;
        for (const auto& l : out.lesions) {
            RoiGeometry gt;
            gt.x = l.depth * extent + sg * l.size * rng.normal();
            gt.y = rng.uniform(lo, hi);
            gt.w = l.size * std::exp(sg * rng.normal());
            gt.h = l.size * std::exp(sg * rng.normal());
            d.gts.push_back({gt, l.identity});

            RoiCandidate c;
            c.view = view;
            c.geometry = {gt.x + sg * gt.w * rng.normal(), gt.y + sg * gt.h * rng.normal(),
                          gt.w * std::exp(sg * rng.normal()), gt.h * std::exp(sg * rng.normal())};
            c.feature = embed_signature(l.shared_signature, cfg.d_f);
            add_noise(c.feature, cfg.feature_noise_sigma, rng);
            d.candidates.push_back(std::move(c));
            d.distractor.push_back(0);
        }
        const int n_distractors =
            rng.uniform_int(cfg.distractors_per_view.lo, cfg.distractors_per_view.hi);
        const double c_mix = cfg.distractor_confusability;
        for (int i = 0; i < n_distractors; ++i) {
            RoiCandidate c;
            c.view = view;
            const double size = rng.uniform(cfg.lesion_size.lo, cfg.lesion_size.hi);
            c.geometry = {rng.uniform(lo, hi), rng.uniform(lo, hi),
                          size * std::exp(sg * rng.normal()), size * std::exp(sg * rng.normal())};
            Vector base(cfg.d_sig);
            for (double& v : base) v = rng.normal();
            if (!out.lesions.empty()) {
                const auto& mimic = out.lesions[rng.uniform_index(out.lesions.size())];
                for (std::size_t k = 0; k < cfg.d_sig; ++k) {
                    base[k] = (1.0 - c_mix) * base[k] + c_mix * mimic.shared_signature[k];
                }
            }
            c.feature = embed_signature(base, cfg.d_f);
            add_noise(c.feature, cfg.feature_noise_sigma, rng);
            d.candidates.push_back(std::move(c));
            d.distractor.push_back(1);
        }
        shuffle_together(d.candidates, d.distractor, rng);
        return d;
    };

    ViewDraw v1 = draw_view(View::kView1);
    ViewDraw v2 = draw_view(View::kView2);

    auto& s = out.sample;
    s.case_id = case_id;
    auto finish = [](ViewDraw& d, std::vector<RoiCandidate>& cands,
                     std::vector<CandidateTarget>& targets, std::vector<GroundTruthBox>& gts) {
        const auto boxes = gt_boxes(d.gts);
        for (const auto& c : d.candidates) targets.push_back(assign_target(c.geometry, boxes));
        cands = std::move(d.candidates);
        gts = std::move(d.gts);
    };
    finish(v1, s.view1, s.targets1, s.gt1);
    finish(v2, s.view2, s.targets2, s.gt2);
    out.distractor1 = std::move(v1.distractor);
    out.distractor2 = std::move(v2.distractor);
    return out;
}

PairedSample generate_case(const GeneratorConfig& cfg, Rng& rng, std::int64_t case_id) {
    return generate_case_detailed(cfg, rng, case_id).sample;
}

std::vector<PairedSample> generate_dataset(const GeneratorConfig& cfg) {
    cfg.validate();
    std::vector<PairedSample> cases;
    cases.reserve(cfg.n_cases);
    for (std::size_t i = 0; i < cfg.n_cases; ++i) {
        Rng rng(cfg.seed, i);
        cases.push_back(generate_case(cfg, rng, static_cast<std::int64_t>(i)));
    }
    return cases;
}

DatasetSplit split_dataset(std::vector<PairedSample> cases, double test_fraction) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie in [0, 1)");
    }
    const auto n_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(cases.size())));
    DatasetSplit split;
    const auto cut = cases.size() - n_test;
    split.train.assign(std::make_move_iterator(cases.begin()),
                       std::make_move_iterator(cases.begin() + static_cast<std::ptrdiff_t>(cut)));
    split.test.assign(std::make_move_iterator(cases.begin() + static_cast<std::ptrdiff_t>(cut)),
                      std::make_move_iterator(cases.end()));
    return split;
}

} // namespace cvr
