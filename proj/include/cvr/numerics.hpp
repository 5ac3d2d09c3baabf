#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace cvr {

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
    Vector(std::initializer_list<double> values) : data_(values) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool operator==(const Vector&) const = default;

private:
    std::vector<double> data_;
};

// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Counter-based deterministic generator. Output `k` depends only on
/// (seed, stream, k), so identical seeds and call sequences reproduce
/// bit-identical draws on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    double uniform();                        // [0, 1)
    double uniform(double lo, double hi);    // [lo, hi)
    double normal();                         // standard normal, Box-Muller
    std::size_t uniform_index(std::size_t n); // [0, n)
    int uniform_int(int lo, int hi);         // [lo, hi] inclusive

    // Independent generator for a sub-task (e.g. one generated case).
    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

Vector matvec(const Matrix& m, const Vector& x);
Vector matvec(const Matrix& m, std::span<const double> x);
// y = mᵀ x
Vector matvec_transposed(const Matrix& m, std::span<const double> x);
double dot(const Vector& a, const Vector& b);
double dot(std::span<const double> a, std::span<const double> b);
double relu(double x);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
// m += scale * a bᵀ
void add_outer(Matrix& m, double scale, std::span<const double> a, std::span<const double> b);

Vector add(const Vector& a, const Vector& b);

/// Entries i.i.d. uniform in [-scale, +scale]. scale must be positive.
Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale);
Vector random_vector(Rng& rng, std::size_t len, double scale);

bool all_finite(std::span<const double> values);

} // namespace cvr
