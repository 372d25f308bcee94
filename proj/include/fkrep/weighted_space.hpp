#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fkrep/common.hpp"
#include "fkrep/rng.hpp"

namespace fkrep {

/// Tensor-product quadrature grid over [-L, L]^d with composite trapezoid
/// weights. Every spatial integral in the project runs over one of these, so
/// cross-module comparisons never mix quadratures.
struct QuadGrid {
    int d = 1;
    double L = 20.0;
    int n_per_axis = 2001;

    bool operator==(const QuadGrid&) const = default;

    size_t size() const {
        size_t s = 1;
        for (int i = 0; i < d; ++i) s *= static_cast<size_t>(n_per_axis);
        return s;
    }
    double spacing() const { return 2.0 * L / (n_per_axis - 1); }

    double axis_node(int k) const { return -L + k * spacing(); }

    Vec node(size_t idx) const {
        Vec x(d);
        for (int i = d - 1; i >= 0; --i) {
            x[i] = axis_node(static_cast<int>(idx % static_cast<size_t>(n_per_axis)));
            idx /= static_cast<size_t>(n_per_axis);
        }
        return x;
    }

    double weight(size_t idx) const {
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            int k = static_cast<int>(idx % static_cast<size_t>(n_per_axis));
            w *= (k == 0 || k == n_per_axis - 1) ? 0.5 * spacing() : spacing();
            idx /= static_cast<size_t>(n_per_axis);
        }
        return w;
    }
};

/// The weight rho(x) = (1+|x|)^q with its quadrature policy. q > d keeps
/// the rho^{-1} integral finite; enforced at construction.
struct WeightedSpace {
    int d;
    double q;
    double L_domain;
    int n_quad;

    WeightedSpace(int d_, double q_, double L = 20.0, int n = 2001)
        : d(d_), q(q_), L_domain(L), n_quad(n) {
        if (d < 1) throw std::invalid_argument("WeightedSpace: d must be positive");
        if (!(q > d)) throw std::invalid_argument("WeightedSpace: q must exceed d");
        if (!(L > 0)) throw std::invalid_argument("WeightedSpace: L_domain must be positive");
        if (n_quad < 2) throw std::invalid_argument("WeightedSpace: n_quad must be at least 2");
        if (d > 2) throw std::invalid_argument("WeightedSpace: gridded fields support d <= 2");
    }

    QuadGrid grid() const { return QuadGrid{d, L_domain, n_quad}; }
};

inline double rho(const WeightedSpace& space, const Vec& x) {
    return std::pow(1.0 + x.norm(), space.q);
}
inline double rho_inv(const WeightedSpace& space, const Vec& x) {
    return std::pow(1.0 + x.norm(), -space.q);
}

/// Discrete carrier for functions on the quadrature grid. `components`
/// allows vector-valued fields; the norm uses the pointwise Euclidean
/// magnitude either way.
struct WeightedField {
    QuadGrid grid;
    int components = 1;
    std::vector<double> values;            // size() * components, node-major
    std::vector<uint8_t> extrapolated;     // optional per-node flag

    double magnitude(size_t node) const {
        if (components == 1) return std::abs(values[node]);
        double s = 0;
        for (int c = 0; c < components; ++c) s += sqr(values[node * components + c]);
        return std::sqrt(s);
    }
    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline WeightedField make_field(const WeightedSpace& space,
                                const std::function<double(const Vec&)>& f) {
    WeightedField out{space.grid(), 1, {}, {}};
    out.values.resize(out.grid.size());
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(out.grid.node(i));
    return out;
}

/// integral of rho^{-1} over the truncated domain (normalizer for the
/// weighted measure).
inline double rho_inv_integral(const WeightedSpace& space) {
    QuadGrid g = space.grid();
    double s = 0;
    for (size_t i = 0; i < g.size(); ++i) s += g.weight(i) * rho_inv(space, g.node(i));
    return s;
}

/// ( sum |v|^{2p} rho^{-1} w )^{1/2p} on the space's grid.
inline double weighted_lp_norm(const WeightedSpace& space, const WeightedField& field,
                               int two_p) {
    if (two_p < 2 || two_p % 2 != 0)
        throw std::invalid_argument("weighted_lp_norm: exponent must be even and >= 2");
    if (!(field.grid == space.grid()))
        throw std::invalid_argument("weighted_lp_norm: field not on this space's grid");
    const QuadGrid& g = field.grid;
    double s = 0;
    for (size_t i = 0; i < g.size(); ++i) {
        double m = field.magnitude(i);
        s += std::pow(m, two_p) * rho_inv(space, g.node(i)) * g.weight(i);
    }
    return std::pow(s, 1.0 / two_p);
}

inline double weighted_l2_norm(const WeightedSpace& space, const WeightedField& field) {
    return weighted_lp_norm(space, field, 2);
}

/// Checks |d(rho^{-1})/dx_i| <= q * rho^{-1}(x) * (1+tol) by central
/// differences at each sample point. Points at the origin are rejected:
/// |x| is not differentiable there.
inline bool rho_inv_gradient_bound_check(const WeightedSpace& space,
                                         const std::vector<Vec>& sample_points,
                                         double tol = 1e-6) {
    for (const Vec& x : sample_points) {
        if (x.norm() < 1e-8)
            throw std::invalid_argument("rho_inv_gradient_bound_check: sample contains the origin");
        const double h = 1e-6 * (1.0 + x.norm());
        const double bound = space.q * rho_inv(space, x) * (1.0 + tol);
        for (int i = 0; i < space.d; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            double g = (rho_inv(space, xp) - rho_inv(space, xm)) / (2.0 * h);
            if (std::abs(g) > bound) return false;
        }
    }
    return true;
}

namespace detail {

/// Tabulated inverse CDF of the radial density r^{d-1}(1+r)^{-q} dr, built
/// once per (d, q). Log-spaced abscissae: the density has polynomial tails,
/// so the table must resolve many decades on both sides of r = 1.
struct RadialSampler {
    std::vector<double> r;    // abscissae
    std::vector<double> cdf;  // normalized cumulative

    RadialSampler(int d, double q) {
        // r_max chosen so the analytic tail integral R^{d-q}/(q-d) is below
        // 1e-12 of the total mass
        const double r_max = std::min(1e15, std::pow(10.0, 12.0 / (q - d) + 1.0));
        const double r_lo = 1e-8;
        const int n = 200000;
        r.resize(n + 1);
        cdf.resize(n + 1);
        auto dens = [&](double s) { return std::pow(s, d - 1) * std::pow(1.0 + s, -q); };
        const double lstep = std::log(r_max / r_lo) / (n - 1);
        r[0] = 0;
        cdf[0] = 0;
        double acc = 0, prev_r = 0, prev_d = dens(0.0);
        for (int k = 1; k <= n; ++k) {
            double rv = r_lo * std::exp(lstep * (k - 1));
            double cur = dens(rv);
            acc += 0.5 * (prev_d + cur) * (rv - prev_r);
            r[k] = rv;
            cdf[k] = acc;
            prev_r = rv;
            prev_d = cur;
        }
        for (double& c : cdf) c /= acc;
    }

    double invert(double u) const {
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.begin()) return r.front();
        if (it == cdf.end()) return r.back();
        size_t k = static_cast<size_t>(it - cdf.begin());
        double c0 = cdf[k - 1], c1 = cdf[k];
        double w = (c1 > c0) ? (u - c0) / (c1 - c0) : 0.0;
        return r[k - 1] + w * (r[k] - r[k - 1]);
    }
};

}  // namespace detail

/// Draws `count` points with density rho^{-1} / integral(rho^{-1}).
/// d = 1 uses the closed-form inverse CDF; d >= 2 uses the radial inverse CDF
/// times a uniform direction. Deterministic in (seed, count).
inline std::vector<Vec> sample_from_weight_density(const WeightedSpace& space, size_t count,
                                                   uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_from_weight_density: count must be >= 1");
    CounterRng rng(seed);
    std::vector<Vec> out(count, Vec(space.d));
    if (space.d == 1) {
        for (size_t i = 0; i < count; ++i) {
            double u = rng.uniform(i, 0, 0);
            double w = std::abs(2.0 * u - 1.0);
            double mag = std::pow(1.0 - w, -1.0 / (space.q - 1.0)) - 1.0;
            out[i][0] = (u >= 0.5 ? mag : -mag);
        }
        return out;
    }
    detail::RadialSampler radial(space.d, space.q);
    for (size_t i = 0; i < count; ++i) {
        double rv = radial.invert(rng.uniform(i, 0, 0));
        Vec dir(space.d);
        double nrm = 0;
        do {
            for (int c = 0; c < space.d; ++c) dir[c] = rng.normal(i, 1, static_cast<uint64_t>(c));
            nrm = dir.norm();
        } while (nrm < 1e-300);
        for (int c = 0; c < space.d; ++c) out[i][c] = rv * dir[c] / nrm;
    }
    return out;
}

/// Analytic CDF of the d=1 weight density, used by goodness-of-fit tests.
inline double weight_density_cdf_1d(const WeightedSpace& space, double x) {
    double w = 1.0 - std::pow(1.0 + std::abs(x), 1.0 - space.q);
    return x >= 0 ? 0.5 + 0.5 * w : 0.5 - 0.5 * w;
}

}  // namespace fkrep
