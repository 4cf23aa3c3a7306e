#include "cedo/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cedo {

std::string shape_str(const Matrix& m) {
    return "(" + std::to_string(m.rows) + " x " + std::to_string(m.cols) + ")";
}

static std::string vec_shape(const Vector& v) {
    return "(" + std::to_string(v.size()) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols != x.size()) {
        throw ShapeError("matvec: " + shape_str(a) + " * " + vec_shape(x));
    }
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: length mismatch " + vec_shape(a) + " vs " + vec_shape(b));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(const Vector& v) {
    return std::sqrt(dot(v, v));
}

Vector add(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ShapeError("add: length mismatch " + vec_shape(a) + " vs " + vec_shape(b));
    }
    Vector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

Vector sub(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ShapeError("sub: length mismatch " + vec_shape(a) + " vs " + vec_shape(b));
    }
    Vector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
    return c;
}

Vector scale(const Vector& v, double s) {
    Vector c(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) c[i] = s * v[i];
    return c;
}

void axpy(double s, const Vector& x, Vector& y) {
    if (x.size() != y.size()) {
        throw ShapeError("axpy: length mismatch " + vec_shape(x) + " vs " + vec_shape(y));
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

Vector softmax(const Vector& logits) {
    if (logits.empty()) throw ArgumentError("softmax: empty input");
    double m = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

double log_sum_exp(const Vector& z) {
    if (z.empty()) throw ArgumentError("log_sum_exp: empty input");
    std::size_t peak = 0;
    for (std::size_t i = 1; i < z.size(); ++i) {
        if (z[i] > z[peak]) peak = i;
    }
    double rest = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (i != peak) rest += std::exp(z[i] - z[peak]);
    }
    return z[peak] + std::log1p(rest);
}

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    return all_finite(m.data);
}

static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t RngStream::next_u64() {
    std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    if (!(lo < hi)) throw ArgumentError("RngStream::uniform: requires lo < hi");
    return lo + uniform() * (hi - lo);
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("RngStream::next_below: n must be positive");
    std::uint64_t threshold = (0ULL - n) % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x < threshold);
    return x % n;
}

} // namespace cedo
