#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "aptf/errors.hpp"

namespace aptf {

/// Dense row-major float64 matrix. Deliberately minimal: just what the
/// models and data pipeline need, no view machinery.
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
    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

bool all_finite(const Matrix& m);
bool all_finite(const std::vector<double>& v);
void ensure_finite(const Matrix& m, const char* what);

/// Standard matrix product. Throws ShapeMismatch unless a.cols == b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// Self-contained xoshiro256++ stream seeded through splitmix64.
/// Identical seeds produce identical streams on every platform; the
/// platform RNG is never used, so experiment runs are reproducible
/// bit-for-bit across machines.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform draw in [0, 1).
    double uniform();

    /// One normal draw via Box-Muller (two uniforms consumed per call).
    double gauss(double mean, double stddev);

    /// Derives an independent stream; (seed, tag) fully determines it.
    Rng substream(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> state_{};
};

/// Deterministic seed derivation for named sub-streams ("model-init",
/// "shuffle", ...), so adding a consumer never shifts another's stream.
std::uint64_t derive_seed(std::uint64_t master, const char* tag, std::uint64_t index = 0);

/// Stable ascending argsort; ties keep original index order.
/// Throws NonFinite if any value is NaN or infinite.
std::vector<std::size_t> argsort_ascending(const std::vector<double>& values);

/// n i.i.d. normal draws. stddev must be >= 0.
std::vector<double> gauss(Rng& rng, std::size_t n, double mean, double stddev);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n);

}  // namespace aptf
