#include "cvr/numerics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cvr/errors.hpp"

namespace cvr {

namespace {

__extension__ typedef unsigned __int128 u128;

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void require_len(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(got));
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_len(rows * cols, data_.size(), "Matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require_len(cols_, r.size(), "Matrix row");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(mix64(seed ^ mix64(stream + kGolden))) {}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw DomainError("uniform_index: empty range");
    const auto wide = static_cast<u128>(next_u64()) * n;
    return static_cast<std::size_t>(wide >> 64);
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw DomainError("uniform_int: empty range");
    const auto span = static_cast<std::size_t>(static_cast<long long>(hi) - lo + 1);
    return lo + static_cast<int>(uniform_index(span));
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(mix64(key_ ^ (stream_ * kGolden)), stream);
}

Vector matvec(const Matrix& m, const Vector& x) {
    return matvec(m, x.span());
}

Vector matvec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) {
        throw ShapeError("matvec: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " but vector has length " +
                         std::to_string(x.size()));
    }
    Vector y(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
    require_len(m.rows(), x.size(), "matvec_transposed");
    Vector y(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * xi;
    }
    return y;
}

double dot(const Vector& a, const Vector& b) {
    return dot(a.span(), b.span());
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_len(a.size(), b.size(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double relu(double x) {
    return x > 0.0 ? x : 0.0;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    require_len(y.size(), x.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void add_outer(Matrix& m, double scale, std::span<const double> a, std::span<const double> b) {
    require_len(m.rows(), a.size(), "add_outer rows");
    require_len(m.cols(), b.size(), "add_outer cols");
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double s = scale * a[i];
        if (s == 0.0) continue;
        auto r = m.row(i);
        for (std::size_t j = 0; j < b.size(); ++j) r[j] += s * b[j];
    }
}

Vector add(const Vector& a, const Vector& b) {
    require_len(a.size(), b.size(), "add");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    if (!(scale > 0.0)) throw DomainError("random_matrix: scale must be positive");
    Matrix m(rows, cols);
    for (double& v : m.span()) v = rng.uniform(-scale, scale);
    return m;
}

Vector random_vector(Rng& rng, std::size_t len, double scale) {
    if (!(scale > 0.0)) throw DomainError("random_vector: scale must be positive");
    Vector v(len);
    for (double& x : v) x = rng.uniform(-scale, scale);
    return v;
}

bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace cvr
