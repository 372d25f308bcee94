#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkrep/coefficients.hpp"

namespace fkrep {

/// A named (CoefficientSet, Driver) pair, optionally with a closed-form
/// solution u(t, x; T) for oracle comparisons.
struct Scenario {
    std::string name;
    std::string description;
    CoefficientSet coeffs;
    Driver driver;
    bool assumptions_violated = false;
    std::optional<std::function<double(double, const Vec&, double)>> exact_u;  // (t, x, T)
};

namespace detail {

inline CoefficientSet unit_coeffs_1d() {
    CoefficientSet c;
    c.d = 1;
    c.b = [](const Vec& x) { return Vec(x.dim()); };
    c.sigma = [](const Vec& x) { return Mat::identity(x.dim()); };
    c.ellipticity = 1.0;
    c.a_tilde_exact = [](const Vec& x) { return Vec(x.dim()); };
    return c;
}

}  // namespace detail

inline std::vector<std::string> scenario_names() {
    return {"heat", "allen-cahn", "allen-cahn-const", "ginzburg-landau", "ou-linear",
            "fisher-kpp"};
}

inline Scenario make_scenario(const std::string& name) {
    Scenario sc;
    sc.name = name;

    if (name == "heat") {
        sc.description = "b=0, sigma=1, f=0, Gaussian bump terminal; closed-form solution";
        sc.coeffs = detail::unit_coeffs_1d();
        sc.driver.f = [](double, const Vec&, double, const Vec&) { return 0.0; };
        sc.driver.p = 1;
        sc.driver.C = 1.0;
        sc.driver.f0 = [](double, const Vec&) { return 0.0; };
        sc.driver.L = 0.0;
        sc.driver.mu = 0.0;
        sc.driver.h = [](const Vec& x) { return std::exp(-0.5 * x.norm2()); };
        // E[h(x + sqrt(T-t) xi)] for the standard Gaussian bump
        sc.exact_u = [](double t, const Vec& x, double T) {
            double v = 1.0 + (T - t);
            return std::exp(-0.5 * x.norm2() / v) / std::sqrt(v);
        };
        return sc;
    }

    if (name == "allen-cahn" || name == "allen-cahn-const") {
        sc.description = (name == "allen-cahn")
                             ? "f(y)=y-y^3 with h=tanh(x)"
                             : "f(y)=y-y^3 with h=1; u=1, Z=0 is the exact solution";
        sc.coeffs = detail::unit_coeffs_1d();
        sc.driver.f = [](double, const Vec&, double y, const Vec&) { return y - y * y * y; };
        sc.driver.p = 3;
        sc.driver.C = 2.0;
        sc.driver.f0 = [](double, const Vec&) { return 1.0; };
        sc.driver.L = 0.0;
        sc.driver.mu = 1.0;  // f'(y) = 1 - 3y^2 <= 1
        if (name == "allen-cahn") {
            sc.driver.h = [](const Vec& x) { return std::tanh(x[0]); };
        } else {
            sc.driver.h = [](const Vec&) { return 1.0; };
            sc.exact_u = [](double, const Vec&, double) { return 1.0; };
        }
        return sc;
    }

    if (name == "ginzburg-landau") {
        sc.description = "f(y)=y-y^3 with variable diffusion a(x)=1+sin(x)/2";
        CoefficientSet c;
        c.d = 1;
        c.b = [](const Vec& x) {
            Vec v(x.dim());
            v[0] = 0.1 * std::cos(x[0]);
            return v;
        };
        c.sigma = [](const Vec& x) {
            Mat m(x.dim());
            m(0, 0) = std::sqrt(1.0 + 0.5 * std::sin(x[0]));
            return m;
        };
        c.ellipticity = 0.5;
        c.a_tilde_exact = [](const Vec& x) {
            Vec v(x.dim());
            v[0] = 0.25 * std::cos(x[0]);
            return v;
        };
        sc.coeffs = c;
        sc.driver.f = [](double, const Vec&, double y, const Vec&) { return y - y * y * y; };
        sc.driver.p = 3;
        sc.driver.C = 2.0;
        sc.driver.f0 = [](double, const Vec&) { return 1.0; };
        sc.driver.L = 0.0;
        sc.driver.mu = 1.0;
        sc.driver.h = [](const Vec& x) { return std::exp(-0.5 * x.norm2()); };
        return sc;
    }

    if (name == "ou-linear") {
        sc.description = "mean-reverting drift b=-x with linear decay driver f=-y";
        CoefficientSet c = detail::unit_coeffs_1d();
        c.b = [](const Vec& x) {
            Vec v = x;
            v *= -1.0;
            return v;
        };
        c.a_tilde_exact = [](const Vec& x) { return Vec(x.dim()); };
        sc.coeffs = c;
        sc.driver.f = [](double, const Vec&, double y, const Vec&) { return -y; };
        sc.driver.p = 1;
        sc.driver.C = 1.0;
        sc.driver.f0 = [](double, const Vec&) { return 0.0; };
        sc.driver.L = 0.0;
        sc.driver.mu = 0.0;  // (y1-y2)(f(y1)-f(y2)) = -|y1-y2|^2
        sc.driver.h = [](const Vec& x) { return std::tanh(x[0]); };
        return sc;
    }

    if (name == "fisher-kpp") {
        sc.description = "logistic f(y)=y(1-y); violates the one-sided bound for y<0";
        sc.coeffs = detail::unit_coeffs_1d();
        sc.driver.f = [](double, const Vec&, double y, const Vec&) { return y * (1.0 - y); };
        sc.driver.p = 2;
        sc.driver.C = 2.0;
        sc.driver.f0 = [](double, const Vec&) { return 1.0; };
        sc.driver.L = 0.0;
        sc.driver.mu = 1.0;  // holds on y >= 0 only
        sc.driver.h = [](const Vec& x) { return 0.5 * (1.0 - std::tanh(x[0])); };
        sc.assumptions_violated = true;
        return sc;
    }

    throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace fkrep
