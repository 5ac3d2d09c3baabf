#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cvr/errors.hpp"
#include "cvr/heads.hpp"

using namespace cvr;

TEST_CASE("classify examples") {
    const HeadParams zero = HeadParams::zeros(3);
    const Vector p = classify({1, 2, 3}, zero);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);

    const Vector shifted = softmax(Vector{7.5, 7.5}.span());
    CHECK(shifted[0] == doctest::Approx(0.5).epsilon(1e-15));

    const Vector q = softmax(Vector{1, 0}.span());
    CHECK(q[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
    CHECK(q[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(q[1] == doctest::Approx(0.2689).epsilon(1e-3));
}

TEST_CASE("classify output is a probability vector") {
    Rng rng(9);
    for (int t = 0; t < 500; ++t) {
        HeadParams h = HeadParams::random(rng, 5);
        h.cls_bias = random_vector(rng, 2, 30.0);
        const Vector p = classify(random_vector(rng, 5, 20.0), h);
        CHECK(p[0] >= 0.0);
        CHECK(p[1] >= 0.0);
        CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
    }
    const Vector extreme = softmax(Vector{1000.0, -1000.0}.span());
    CHECK(std::isfinite(extreme[0]));
    CHECK(std::isfinite(extreme[1]));
}

TEST_CASE("classify and regress reject shape mismatch") {
    const HeadParams h = HeadParams::zeros(3);
    CHECK_THROWS_AS(classify({1, 2}, h), ShapeError);
    CHECK_THROWS_AS(regress({1, 2}, h), ShapeError);
}

TEST_CASE("regress examples") {
    const HeadParams zero = HeadParams::zeros(3);
    CHECK(regress({1, 2, 3}, zero) == Vector{0, 0, 0, 0});

    Rng rng(12);
    HeadParams h = HeadParams::random(rng, 3);
    h.reg_bias = Vector{0.1, -0.2, 0.3, 0.0};
    const Vector x{1, -2, 0.5};
    const Vector r = regress(x, h);
    for (std::size_t i = 0; i < 4; ++i) {
        double expect = h.reg_bias[i];
        for (std::size_t j = 0; j < 3; ++j) expect += h.reg_weight(i, j) * x[j];
        CHECK(r[i] == doctest::Approx(expect).epsilon(1e-14));
    }

    HeadParams lin = h;
    lin.reg_bias = Vector(4);
    const Vector a = regress({1, 0, 0}, lin);
    const Vector b = regress({0, 1, 0}, lin);
    const Vector ab = regress({2, 3, 0}, lin);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ab[i] == doctest::Approx(2 * a[i] + 3 * b[i]).epsilon(1e-14));
}

TEST_CASE("regression target encoding") {
    CHECK(encode_regression_target({3, 4, 5, 6}, {3, 4, 5, 6}) == Vector{0, 0, 0, 0});
    const Vector t = encode_regression_target({0, 0, 2, 2}, {1, 0, 4, 2});
    CHECK(t[0] == 0.5);
    CHECK(t[1] == 0.0);
    CHECK(t[2] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(t[3] == 0.0);
    CHECK_THROWS_AS(encode_regression_target({0, 0, 0, 2}, {1, 0, 4, 2}), DomainError);

    Rng rng(33);
    for (int i = 0; i < 1000; ++i) {
        const RoiGeometry a{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(1, 50), rng.uniform(1, 50)};
        const RoiGeometry g{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(1, 50), rng.uniform(1, 50)};
        const RoiGeometry back = decode_regression(a, encode_regression_target(a, g).span());
        CHECK(std::abs(back.x - g.x) <= 1e-12 * std::max(1.0, std::abs(g.x)));
        CHECK(std::abs(back.y - g.y) <= 1e-12 * std::max(1.0, std::abs(g.y)));
        CHECK(std::abs(back.w - g.w) <= 1e-12 * g.w);
        CHECK(std::abs(back.h - g.h) <= 1e-12 * g.h);
    }
}

TEST_CASE("smooth-L1 is continuous with a continuous slope at the knot") {
    CHECK(smooth_l1(0.0) == 0.0);
    CHECK(smooth_l1(0.5) == 0.125);
    CHECK(smooth_l1(-3.0) == 2.5);
    const double h = 1e-9;
    CHECK(std::abs(smooth_l1(1.0 - h) - smooth_l1(1.0 + h)) < 1e-8);
    CHECK(std::abs(smooth_l1_grad(1.0 - h) - smooth_l1_grad(1.0 + h)) < 1e-8);
    CHECK(std::abs(smooth_l1_grad(-1.0 - h) - smooth_l1_grad(-1.0 + h)) < 1e-8);
    for (double x : {-2.5, -0.7, 0.3, 0.99, 1.01, 4.0}) {
        const double fd = (smooth_l1(x + 1e-6) - smooth_l1(x - 1e-6)) / 2e-6;
        CHECK(smooth_l1_grad(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("view_loss examples") {
    const std::vector<CandidateTarget> targets{{Label::kPositive, Vector{0.1, -0.2, 0.0, 0.3}},
                                               {Label::kNegative, {}}};
    const std::vector<Vector> perfect_probs{{0.0, 1.0}, {1.0, 0.0}};
    const std::vector<Vector> perfect_regs{{0.1, -0.2, 0.0, 0.3}, {5, 5, 5, 5}};
    const ViewLoss zero = view_loss(perfect_probs, perfect_regs, targets);
    CHECK(zero.cls == 0.0);
    CHECK(zero.reg == 0.0);

    const std::vector<Vector> uniform{{0.5, 0.5}, {0.5, 0.5}};
    const ViewLoss u = view_loss(uniform, perfect_regs, targets);
    CHECK(u.cls == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(u.cls == doctest::Approx(0.6931).epsilon(1e-4));

    const std::vector<CandidateTarget> negatives{{Label::kNegative, {}}, {Label::kIgnore, {}}};
    CHECK(view_loss(uniform, perfect_regs, negatives).reg == 0.0);

    const std::vector<CandidateTarget> ignored{{Label::kIgnore, {}}, {Label::kIgnore, {}}};
    const ViewLoss none = view_loss(uniform, perfect_regs, ignored);
    CHECK(none.cls == 0.0);
    CHECK(none.reg == 0.0);

    const std::vector<Vector> regs{{1.1, -0.2, 0.0, 0.3}, {0, 0, 0, 0}};
    CHECK(view_loss(perfect_probs, regs, targets).reg == doctest::Approx(0.5).epsilon(1e-14));

    const std::vector<Vector> one{{0.5, 0.5}};
    CHECK_THROWS_AS(view_loss(one, perfect_regs, targets), ShapeError);
}

TEST_CASE("view_loss stays finite for a saturated wrong prediction") {
    const std::vector<CandidateTarget> targets{{Label::kPositive, Vector{0, 0, 0, 0}}};
    const std::vector<Vector> probs{{1.0, 0.0}};
    const std::vector<Vector> regs{{0, 0, 0, 0}};
    CHECK(std::isfinite(view_loss(probs, regs, targets).cls));
}

TEST_CASE("total_loss examples") {
    const LossWeights w;
    CHECK(w.alpha == 2.0);
    CHECK(w.beta == 1.0);
    CHECK(w.gamma == 2.0);
    CHECK(total_loss({1.0, 0.5}, {2.0, 0.25}, w) == 4.5);
    CHECK(total_loss({0, 0}, {0, 0}, w) == 0.0);
    CHECK(total_loss({1.5, 7.0}, {2.0, 3.0}, LossWeights{0, 0, 0}) == 1.5);
    CHECK_THROWS_AS((LossWeights{-1, 0, 0}.validate()), ConfigError);
}

TEST_CASE("total_loss is non-negative and monotone in every component") {
    Rng rng(14);
    const LossWeights w;
    for (int t = 0; t < 500; ++t) {
        ViewLoss a{rng.uniform(0, 5), rng.uniform(0, 5)};
        ViewLoss b{rng.uniform(0, 5), rng.uniform(0, 5)};
        const double base = total_loss(a, b, w);
        CHECK(base >= 0.0);
        const double bump = rng.uniform(0, 1);
        ViewLoss a2 = a;
        a2.cls += bump;
        CHECK(total_loss(a2, b, w) >= base);
        a2 = a;
        a2.reg += bump;
        CHECK(total_loss(a2, b, w) >= base);
        ViewLoss b2 = b;
        b2.cls += bump;
        CHECK(total_loss(a, b2, w) >= base);
        b2 = b;
        b2.reg += bump;
        CHECK(total_loss(a, b2, w) >= base);
    }
}
