#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cedo/errors.hpp"

namespace cedo {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Deliberately minimal: this project's
// models are desk-scale, so clarity and exact reproducibility beat BLAS.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

std::string shape_str(const Matrix& m);

// C = A * B. Throws ShapeError naming both operand shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// y = A * x with x of length A.cols.
Vector matvec(const Matrix& a, const Vector& x);

double dot(const Vector& a, const Vector& b);
double l2_norm(const Vector& v);

Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scale(const Vector& v, double s);
// y += s * x, in place.
void axpy(double s, const Vector& x, Vector& y);

// Numerically stable softmax (max subtraction). Output sums to 1 within 1e-12.
Vector softmax(const Vector& logits);

// log(sum_i exp(z_i)) computed as m + log1p(sum of the non-peak exp terms),
// which keeps tiny tails exact: lse(10,-10) - 10 == exp(-20) to full precision.
double log_sum_exp(const Vector& z);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// Deterministic seeded random stream: xoshiro256++ core, state expanded from
// the single uint64 seed with splitmix64. No global state; two streams built
// from the same seed yield byte-identical draw sequences on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    // Uniform in [lo, hi). Requires lo < hi.
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (one spare cached).
    double normal();

    // Uniform integer in [0, n). Rejection sampling, so unbiased. Requires n > 0.
    std::uint64_t next_below(std::uint64_t n);

    // Fisher-Yates shuffle, high index down.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cedo
