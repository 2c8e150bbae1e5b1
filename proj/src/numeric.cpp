#include "aptf/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace aptf {

bool all_finite(const Matrix& m) {
    return all_finite(m.data);
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void ensure_finite(const Matrix& m, const char* what) {
    if (!all_finite(m)) {
        throw NonFinite(std::string(what) + ": non-finite entry");
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeMismatch("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                            " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    Matrix out(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    ensure_finite(out, "matmul result");
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gauss(double mean, double stddev) {
    // u1 in (0, 1] so the log is always finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
}

Rng Rng::substream(std::uint64_t tag) const {
    std::uint64_t s = seed_ ^ (0xA0761D6478BD642FULL + tag * 0xE7037ED1A0B428DBULL);
    return Rng(splitmix64(s));
}

std::uint64_t derive_seed(std::uint64_t master, const char* tag, std::uint64_t index) {
    // FNV-1a over the tag, then one splitmix64 round with the index mixed in.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char* p = tag; *p; ++p) {
        h = (h ^ static_cast<unsigned char>(*p)) * 0x100000001B3ULL;
    }
    std::uint64_t s = master ^ h ^ (index * 0x9E3779B97F4A7C15ULL);
    return splitmix64(s);
}

std::vector<std::size_t> argsort_ascending(const std::vector<double>& values) {
    if (!all_finite(values)) {
        throw NonFinite("argsort_ascending: NaN or Inf in input");
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    return idx;
}

std::vector<double> gauss(Rng& rng, std::size_t n, double mean, double stddev) {
    if (stddev < 0.0) {
        throw BadSpec("gauss: negative stddev");
    }
    std::vector<double> out(n);
    for (auto& x : out) {
        x = rng.gauss(mean, stddev);
    }
    return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace aptf
