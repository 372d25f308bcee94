#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fkrep/common.hpp"
#include "fkrep/rng.hpp"
#include "fkrep/weighted_space.hpp"

namespace fkrep {

/// Drift b, diffusion sigma, and the derived objects a = sigma*sigma^T and
/// the divergence correction A~. Scenarios may register an exact A~ to
/// bypass the finite-difference evaluation.
struct CoefficientSet {
    int d = 1;
    std::function<Vec(const Vec&)> b;
    std::function<Mat(const Vec&)> sigma;
    double ellipticity = 1.0;  // the constant D
    std::optional<std::function<Vec(const Vec&)>> a_tilde_exact;

    Mat a(const Vec& x) const { return sigma(x).aat(); }
};

/// The nonlinearity f(s,x,y,z) with its declared growth/monotonicity
/// constants and terminal function h.
struct Driver {
    std::function<double(double, const Vec&, double, const Vec&)> f;
    int p = 1;        // growth exponent
    double C = 1.0;   // growth constant
    std::function<double(double, const Vec&)> f0;
    double L = 0.0;   // z-Lipschitz constant
    double mu = 0.0;  // one-sided monotonicity constant
    std::function<double(const Vec&)> h;

    // transform/truncation state, informational
    double trunc_level = std::numeric_limits<double>::infinity();
    bool transformed = false;
};

inline double clamp_to_ball(double y, double n) {
    // the y-truncation; at y = 0 the scaling formula has a removable
    // singularity and the clamp form is exact
    return std::clamp(y, -n, n);
}

/// Driver with y clamped to [-n, n]. Globally Lipschitz in y whenever f is
/// locally so; all other declared constants carry over.
inline Driver truncate_driver(const Driver& driver, double n) {
    if (!(n > 0)) throw std::invalid_argument("truncate_driver: level must be positive");
    Driver out = driver;
    auto f = driver.f;
    out.f = [f, n](double s, const Vec& x, double y, const Vec& z) {
        return f(s, x, clamp_to_ball(y, n), z);
    };
    out.trunc_level = std::min(out.trunc_level, n);
    return out;
}

/// Removes the monotonicity constant: the returned driver has
/// f~(r,x,y,z) = e^{mu r} f(r,x,e^{-mu r}y,e^{-mu r}z) - mu y, terminal
/// e^{mu T} h, and declared constant 0. Growth constants are re-derived
/// conservatively so the validators still apply.
inline Driver exp_transform(const Driver& driver, double T) {
    Driver out = driver;
    const double mu = driver.mu;
    auto f = driver.f;
    out.f = [f, mu](double r, const Vec& x, double y, const Vec& z) {
        const double e = std::exp(-mu * r);
        Vec ze = z;
        ze *= e;
        return std::exp(mu * r) * f(r, x, e * y, ze) - mu * y;
    };
    auto h = driver.h;
    const double eT = std::exp(mu * T);
    out.h = [h, eT](const Vec& x) { return eT * h(x); };
    const double g = std::exp(std::abs(mu) * T);
    auto f0 = driver.f0;
    out.f0 = [f0](double s, const Vec& x) { return std::abs(f0(s, x)) + 1.0; };
    out.C = (driver.C + std::abs(mu)) * std::pow(g, driver.p) + std::abs(mu);
    out.mu = 0.0;
    out.transformed = true;
    return out;
}

/// A~_j(x) = 1/2 sum_i da_ij/dx_i, by central differences with relative step
/// unless the scenario registered a closed form.
inline Vec a_tilde(const CoefficientSet& coeffs, const Vec& x) {
    if (coeffs.a_tilde_exact) return (*coeffs.a_tilde_exact)(x);
    const double h = 1e-5 * (1.0 + x.norm());
    Vec out(coeffs.d);
    for (int i = 0; i < coeffs.d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        Mat ap = coeffs.a(xp), am = coeffs.a(xm);
        for (int j = 0; j < coeffs.d; ++j)
            out[j] += 0.5 * (ap(i, j) - am(i, j)) / (2.0 * h);
    }
    return out;
}

struct ConditionResult {
    std::string name;
    bool pass = true;
    double worst = 0.0;  // signed margin of the worst probe; > 0 means violated
    std::string detail;
};

struct ValidationReport {
    std::vector<ConditionResult> conditions;

    bool all_pass() const {
        for (const auto& c : conditions)
            if (!c.pass) return false;
        return true;
    }
    const ConditionResult& get(const std::string& name) const {
        for (const auto& c : conditions)
            if (c.name == name) return c;
        throw std::out_of_range("ValidationReport: no condition " + name);
    }
};

/// Probes the standing hypotheses at seeded random points. Violations are
/// report entries, never exceptions: the conditions quantify over unbounded
/// sets, so this is evidence, not proof.
inline ValidationReport validate_conditions(const CoefficientSet& coeffs, const Driver& driver,
                                            const WeightedSpace& space, size_t probes,
                                            uint64_t seed, double horizon = 1.0) {
    if (probes < 100) throw std::invalid_argument("validate_conditions: probes must be >= 100");
    CounterRng rng(seed);
    const int d = coeffs.d;
    auto box = [&](uint64_t i, uint64_t slot, double lo, double hi) {
        return lo + (hi - lo) * rng.uniform(i, 7, slot);
    };
    auto probe_x = [&](uint64_t i, uint64_t base) {
        Vec x(d);
        for (int c = 0; c < d; ++c) x[c] = box(i, base + static_cast<uint64_t>(c), -10.0, 10.0);
        return x;
    };
    auto probe_z = [&](uint64_t i, uint64_t base) {
        Vec z(d);
        for (int c = 0; c < d; ++c) z[c] = box(i, base + static_cast<uint64_t>(c), -10.0, 10.0);
        return z;
    };

    ValidationReport report;

    {  // H.1: terminal function integrable in the 2p norm; tail-stable under
       // domain doubling
        ConditionResult r{"H.1", true, 0.0, ""};
        WeightedField hf = make_field(space, driver.h);
        double norm_L = weighted_lp_norm(space, hf, 2 * driver.p);
        WeightedSpace wide(space.d, space.q, 2.0 * space.L_domain, 2 * space.n_quad - 1);
        WeightedField hw = make_field(wide, driver.h);
        double norm_2L = weighted_lp_norm(wide, hw, 2 * driver.p);
        double growth = (norm_L > 0) ? norm_2L / norm_L - 1.0 : 0.0;
        r.pass = std::isfinite(norm_L) && std::isfinite(norm_2L) && growth < 0.05;
        r.worst = growth;
        r.detail = "|h| norm " + std::to_string(norm_L) + ", growth under domain doubling " +
                   std::to_string(growth);
        report.conditions.push_back(r);
    }

    {  // H.2: |f| <= C(|f0| + |y|^p + |z|)
        ConditionResult r{"H.2", true, -std::numeric_limits<double>::infinity(), ""};
        for (size_t i = 0; i < probes; ++i) {
            double s = box(i, 0, 0.0, horizon);
            Vec x = probe_x(i, 10);
            double y = box(i, 1, -10.0, 10.0);
            Vec z = probe_z(i, 20);
            double bound = driver.C * (std::abs(driver.f0(s, x)) + std::pow(std::abs(y), driver.p) +
                                       z.norm());
            double margin = std::abs(driver.f(s, x, y, z)) - bound;
            double tol = 1e-9 * (1.0 + bound);
            if (margin > r.worst) {
                r.worst = margin;
                r.detail = "y=" + std::to_string(y);
            }
            if (margin > tol) r.pass = false;
        }
        report.conditions.push_back(r);
    }

    {  // H.3: (y1-y2)(f(y1)-f(y2)) <= mu |y1-y2|^2
        ConditionResult r{"H.3", true, -std::numeric_limits<double>::infinity(), ""};
        for (size_t i = 0; i < probes; ++i) {
            double s = box(i, 2, 0.0, horizon);
            Vec x = probe_x(i, 30);
            double y1 = box(i, 3, -10.0, 10.0);
            double y2 = box(i, 4, -10.0, 10.0);
            Vec z = probe_z(i, 40);
            double lhs = (y1 - y2) * (driver.f(s, x, y1, z) - driver.f(s, x, y2, z));
            double margin = lhs - driver.mu * sqr(y1 - y2);
            double tol = 1e-9 * (1.0 + sqr(y1 - y2));
            if (margin > r.worst) {
                r.worst = margin;
                r.detail = "y1=" + std::to_string(y1) + " y2=" + std::to_string(y2);
            }
            if (margin > tol) r.pass = false;
        }
        report.conditions.push_back(r);
    }

    {  // H.4: z-Lipschitz with constant L
        ConditionResult r{"H.4", true, -std::numeric_limits<double>::infinity(), ""};
        for (size_t i = 0; i < probes; ++i) {
            double s = box(i, 5, 0.0, horizon);
            Vec x = probe_x(i, 50);
            double y = box(i, 6, -10.0, 10.0);
            Vec z1 = probe_z(i, 60), z2 = probe_z(i, 70);
            double margin = std::abs(driver.f(s, x, y, z1) - driver.f(s, x, y, z2)) -
                            driver.L * (z1 - z2).norm();
            double tol = 1e-9 * (1.0 + driver.L * (z1 - z2).norm());
            if (margin > r.worst) r.worst = margin;
            if (margin > tol) r.pass = false;
        }
        report.conditions.push_back(r);
    }

    {  // H.5: a symmetric and uniformly elliptic with constant D
        ConditionResult r{"H.5", true, -std::numeric_limits<double>::infinity(), ""};
        for (size_t i = 0; i < probes; ++i) {
            Vec x = probe_x(i, 80);
            Mat a = coeffs.a(x);
            double asym = 0;
            for (int r1 = 0; r1 < d; ++r1)
                for (int c1 = 0; c1 < d; ++c1) asym = std::max(asym, std::abs(a(r1, c1) - a(c1, r1)));
            Vec xi(d);
            double nrm = 0;
            for (int c = 0; c < d; ++c) xi[c] = rng.normal(i, 9, static_cast<uint64_t>(c));
            nrm = xi.norm();
            if (nrm < 1e-12) continue;
            for (int c = 0; c < d; ++c) xi[c] /= nrm;
            double quad = dot(xi, a * xi);
            double margin = std::max(asym - 1e-12, coeffs.ellipticity - quad);
            if (margin > r.worst) r.worst = margin;
            if (margin > 1e-12) r.pass = false;
        }
        report.conditions.push_back(r);
    }

    return report;
}

}  // namespace fkrep
