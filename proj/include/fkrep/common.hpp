#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fkrep {

/// Small fixed-capacity point/vector type. Spatial dimensions beyond 2 are
/// only reachable through the sampling path, but the cap leaves headroom.
struct Vec {
    static constexpr int capacity = 8;

    std::array<double, capacity> a{};
    int n = 0;

    Vec() = default;
    explicit Vec(int dim) : n(dim) {
        if (dim < 1 || dim > capacity) throw std::invalid_argument("Vec: dimension out of range");
    }
    Vec(std::initializer_list<double> xs) : n(static_cast<int>(xs.size())) {
        if (n < 1 || n > capacity) throw std::invalid_argument("Vec: dimension out of range");
        std::copy(xs.begin(), xs.end(), a.begin());
    }
    static Vec scalar(double x) { return Vec{x}; }

    int dim() const { return n; }
    double& operator[](int i) { return a[static_cast<size_t>(i)]; }
    double operator[](int i) const { return a[static_cast<size_t>(i)]; }

    double norm2() const {
        double s = 0;
        for (int i = 0; i < n; ++i) s += a[static_cast<size_t>(i)] * a[static_cast<size_t>(i)];
        return s;
    }
    double norm() const { return std::sqrt(norm2()); }

    Vec& operator+=(const Vec& o) {
        for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] += o.a[static_cast<size_t>(i)];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] -= o.a[static_cast<size_t>(i)];
        return *this;
    }
    Vec& operator*=(double c) {
        for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] *= c;
        return *this;
    }
    friend Vec operator+(Vec x, const Vec& y) { return x += y; }
    friend Vec operator-(Vec x, const Vec& y) { return x -= y; }
    friend Vec operator*(double c, Vec x) { return x *= c; }

    friend double dot(const Vec& x, const Vec& y) {
        double s = 0;
        for (int i = 0; i < x.n; ++i) s += x[i] * y[i];
        return s;
    }
    bool finite() const {
        for (int i = 0; i < n; ++i)
            if (!std::isfinite(a[static_cast<size_t>(i)])) return false;
        return true;
    }
};

/// Square matrix with the same small capacity as Vec. Row-major.
struct Mat {
    std::array<double, Vec::capacity * Vec::capacity> a{};
    int n = 0;

    Mat() = default;
    explicit Mat(int dim) : n(dim) {
        if (dim < 1 || dim > Vec::capacity) throw std::invalid_argument("Mat: dimension out of range");
    }
    static Mat identity(int dim) {
        Mat m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }
    static Mat diag(std::initializer_list<double> ds) {
        Mat m(static_cast<int>(ds.size()));
        int i = 0;
        for (double d : ds) m(i, i) = d, ++i;
        return m;
    }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i * n + j)]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i * n + j)]; }

    friend Vec operator*(const Mat& m, const Vec& x) {
        Vec y(m.n);
        for (int i = 0; i < m.n; ++i) {
            double s = 0;
            for (int j = 0; j < m.n; ++j) s += m(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }
    /// this * transpose(this)
    Mat aat() const {
        Mat r(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int k = 0; k < n; ++k) s += (*this)(i, k) * (*this)(j, k);
                r(i, j) = s;
            }
        return r;
    }
    /// transpose(this) * x
    Vec tmul(const Vec& x) const {
        Vec y(n);
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += (*this)(i, j) * x[i];
            y[j] = s;
        }
        return y;
    }
};

/// Worker count for path-parallel loops; FKREP_WORKERS overrides.
inline unsigned worker_count() {
    if (const char* env = std::getenv("FKREP_WORKERS")) {
        long w = std::strtol(env, nullptr, 10);
        if (w >= 1) return static_cast<unsigned>(w);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1u;
}

/// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries do
/// not depend on the worker count, so any chunk-indexed output is
/// reproducible across thread configurations.
inline void parallel_chunks(size_t n, size_t chunk,
                            const std::function<void(size_t, size_t, size_t)>& fn) {
    if (n == 0) return;
    const size_t n_chunks = (n + chunk - 1) / chunk;
    unsigned workers = std::min<size_t>(worker_count(), n_chunks);
    if (workers <= 1) {
        for (size_t c = 0; c < n_chunks; ++c) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (size_t c = w; c < n_chunks; c += workers)
                fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        });
    }
    for (auto& t : pool) t.join();
}

/// Fixed-order pairwise summation; result independent of how the buffer was
/// filled, hence of the worker count.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0;
        for (double x : xs) s += x;
        return s;
    }
    size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_mean(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("pairwise_mean: empty");
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

/// Map-reduce over [0, n): per-chunk partial sums of fn(i), combined in fixed
/// chunk order. Deterministic for any worker count.
inline double parallel_sum(size_t n, const std::function<double(size_t)>& fn,
                           size_t chunk = 16384) {
    if (n == 0) return 0.0;
    const size_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(n_chunks, 0.0);
    parallel_chunks(n, chunk, [&](size_t c, size_t b, size_t e) {
        double s = 0;
        for (size_t i = b; i < e; ++i) s += fn(i);
        partial[c] = s;
    });
    return pairwise_sum(partial);
}

inline double sqr(double x) { return x * x; }

}  // namespace fkrep
