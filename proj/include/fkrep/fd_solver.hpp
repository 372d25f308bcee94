#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fkrep/coefficients.hpp"
#include "fkrep/common.hpp"

namespace fkrep {

/// Uniform 1-D space/time grid for the finite-difference oracle.
struct FdGrid {
    double L = 10.0;
    int n_nodes = 2001;  // space nodes including both ends
    double t0 = 0.0;
    double T = 1.0;
    int n_steps = 1000;

    double dx() const { return 2.0 * L / (n_nodes - 1); }
    double dt() const { return (T - t0) / n_steps; }
    double x(int j) const { return -L + j * dx(); }
    double time(int k) const { return t0 + k * dt(); }

    void validate() const {
        if (n_nodes < 3) throw std::invalid_argument("FdGrid: need at least 3 space nodes");
        if (n_steps < 1) throw std::invalid_argument("FdGrid: need at least 1 time step");
        if (!(L > 0) || !(t0 < T)) throw std::invalid_argument("FdGrid: bad extents");
    }
};

struct FdSolution {
    FdGrid grid;
    std::vector<double> u;             // (n_steps+1) * n_nodes, slice k = time t_k
    std::vector<double> sigma_grad_u;  // same layout
    double cfl = 0.0;                  // dt * max|a| / dx^2, diagnostic only

    size_t idx(int k, int j) const {
        return static_cast<size_t>(k) * static_cast<size_t>(grid.n_nodes) + static_cast<size_t>(j);
    }
    double value(int k, int j) const { return u[idx(k, j)]; }

    /// Linear interpolation of a slice at time index k.
    double interp_u(int k, double xv) const { return interp(u, k, xv); }
    double interp_sgrad(int k, double xv) const { return interp(sigma_grad_u, k, xv); }

    /// Interpolated in time and space.
    double interp_u_at(double t, double xv) const { return interp_t(u, t, xv); }
    double interp_sgrad_at(double t, double xv) const { return interp_t(sigma_grad_u, t, xv); }

    int time_index(double t, double tol = 1e-9) const {
        double k = (t - grid.t0) / grid.dt();
        int ki = static_cast<int>(std::lround(k));
        if (ki < 0 || ki > grid.n_steps || std::abs(k - ki) > tol * (1 + std::abs(k)))
            throw std::invalid_argument("FdSolution: time not on the grid");
        return ki;
    }

private:
    double interp(const std::vector<double>& a, int k, double xv) const {
        double pos = (xv + grid.L) / grid.dx();
        int j = static_cast<int>(std::floor(pos));
        if (j < 0) return a[idx(k, 0)];
        if (j >= grid.n_nodes - 1) return a[idx(k, grid.n_nodes - 1)];
        double w = pos - j;
        return (1.0 - w) * a[idx(k, j)] + w * a[idx(k, j + 1)];
    }
    double interp_t(const std::vector<double>& a, double t, double xv) const {
        double pos = (t - grid.t0) / grid.dt();
        int k = static_cast<int>(std::floor(pos));
        if (k < 0) k = 0;
        if (k >= grid.n_steps) k = grid.n_steps - 1;
        double w = std::clamp(pos - k, 0.0, 1.0);
        double lo = interp(a, k, xv), hi = interp(a, k + 1, xv);
        return (1.0 - w) * lo + w * hi;
    }
};

namespace detail {

/// One Crank-Nicolson step of (I - dt/2 L) u_new = (I + dt/2 L) u_old + dt*g
/// with homogeneous Neumann ends via mirrored stencil. Shared by the
/// terminal-value and initial-value drivers so the time-flip identity is an
/// index mapping, not a reimplementation.
struct CnWorkspace {
    std::vector<double> al, ad, au;  // L stencil: sub/diag/super
    std::vector<double> bl, bd, bu;  // factored (I - dt/2 L)
    std::vector<double> rhs, scratch;
    std::vector<double> sig;         // sigma at nodes

    void build(const CoefficientSet& coeffs, const FdGrid& grid) {
        const int n = grid.n_nodes;
        const double dx = grid.dx();
        al.assign(static_cast<size_t>(n), 0.0);
        ad.assign(static_cast<size_t>(n), 0.0);
        au.assign(static_cast<size_t>(n), 0.0);
        sig.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            Vec x{grid.x(j)};
            double a = coeffs.a(x)(0, 0);
            double b = coeffs.b(x)[0];
            sig[static_cast<size_t>(j)] = coeffs.sigma(x)(0, 0);
            double diff = 0.5 * a / (dx * dx);
            double adv = 0.5 * b / dx;
            if (j == 0) {
                // mirror u_{-1} = u_1: second difference 2(u_1 - u_0), first difference 0
                ad[0] = -2.0 * diff;
                au[0] = 2.0 * diff;
            } else if (j == n - 1) {
                ad[static_cast<size_t>(j)] = -2.0 * diff;
                al[static_cast<size_t>(j)] = 2.0 * diff;
            } else {
                al[static_cast<size_t>(j)] = diff - adv;
                ad[static_cast<size_t>(j)] = -2.0 * diff;
                au[static_cast<size_t>(j)] = diff + adv;
            }
        }
        const double h = 0.5 * grid.dt();
        bl.resize(static_cast<size_t>(n));
        bd.resize(static_cast<size_t>(n));
        bu.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            bl[static_cast<size_t>(j)] = -h * al[static_cast<size_t>(j)];
            bd[static_cast<size_t>(j)] = 1.0 - h * ad[static_cast<size_t>(j)];
            bu[static_cast<size_t>(j)] = -h * au[static_cast<size_t>(j)];
        }
        rhs.resize(static_cast<size_t>(n));
        scratch.resize(static_cast<size_t>(n));
    }

    void step(const std::vector<double>& u_old, size_t off_old, const std::vector<double>& g,
              std::vector<double>& u_out, size_t off_out, double dt) {
        const int n = static_cast<int>(ad.size());
        const double h = 0.5 * dt;
        for (int j = 0; j < n; ++j) {
            double lu = ad[static_cast<size_t>(j)] * u_old[off_old + static_cast<size_t>(j)];
            if (j > 0) lu += al[static_cast<size_t>(j)] * u_old[off_old + static_cast<size_t>(j - 1)];
            if (j < n - 1) lu += au[static_cast<size_t>(j)] * u_old[off_old + static_cast<size_t>(j + 1)];
            rhs[static_cast<size_t>(j)] = u_old[off_old + static_cast<size_t>(j)] + h * lu +
                                          dt * g[static_cast<size_t>(j)];
        }
        // Thomas sweep
        scratch[0] = bu[0] / bd[0];
        rhs[0] /= bd[0];
        for (int j = 1; j < n; ++j) {
            double m = bd[static_cast<size_t>(j)] -
                       bl[static_cast<size_t>(j)] * scratch[static_cast<size_t>(j - 1)];
            scratch[static_cast<size_t>(j)] = bu[static_cast<size_t>(j)] / m;
            rhs[static_cast<size_t>(j)] =
                (rhs[static_cast<size_t>(j)] -
                 bl[static_cast<size_t>(j)] * rhs[static_cast<size_t>(j - 1)]) /
                m;
        }
        for (int j = n - 2; j >= 0; --j)
            rhs[static_cast<size_t>(j)] -=
                scratch[static_cast<size_t>(j)] * rhs[static_cast<size_t>(j + 1)];
        for (int j = 0; j < n; ++j) u_out[off_out + static_cast<size_t>(j)] = rhs[static_cast<size_t>(j)];
    }

    void sigma_gradient(const std::vector<double>& u, size_t off, const FdGrid& grid,
                        std::vector<double>& out, size_t off_out) const {
        const int n = grid.n_nodes;
        const double dx = grid.dx();
        for (int j = 0; j < n; ++j) {
            double du;
            if (j == 0)
                du = (u[off + 1] - u[off]) / dx;
            else if (j == n - 1)
                du = (u[off + static_cast<size_t>(n - 1)] - u[off + static_cast<size_t>(n - 2)]) / dx;
            else
                du = (u[off + static_cast<size_t>(j + 1)] - u[off + static_cast<size_t>(j - 1)]) /
                     (2.0 * dx);
            out[off_out + static_cast<size_t>(j)] = sig[static_cast<size_t>(j)] * du;
        }
    }
};

inline void check_stability(const std::vector<double>& u, size_t off, int n, double prev_max,
                            int step) {
    double mx = 0;
    for (int j = 0; j < n; ++j) mx = std::max(mx, std::abs(u[off + static_cast<size_t>(j)]));
    if (!std::isfinite(mx) || mx > 10.0 * std::max(1.0, prev_max))
        throw std::runtime_error("fd_solve: instability detected at time step " +
                                 std::to_string(step));
}

}  // namespace detail

/// Terminal-value solve of the semilinear equation: Crank-Nicolson on the
/// second-order operator, nonlinearity explicit at the known time level,
/// homogeneous Neumann at the artificial boundary. d = 1 only; pass a
/// truncated driver so the explicit term stays Lipschitz.
inline FdSolution fd_solve(const CoefficientSet& coeffs, const Driver& driver,
                           const FdGrid& grid) {
    grid.validate();
    if (coeffs.d != 1) throw std::invalid_argument("fd_solve: d = 1 only");
    const int n = grid.n_nodes;
    const int K = grid.n_steps;

    FdSolution sol;
    sol.grid = grid;
    sol.u.resize(static_cast<size_t>(K + 1) * static_cast<size_t>(n));
    sol.sigma_grad_u.resize(sol.u.size());

    detail::CnWorkspace ws;
    ws.build(coeffs, grid);
    double amax = 0;
    for (int j = 0; j < n; ++j) amax = std::max(amax, sqr(ws.sig[static_cast<size_t>(j)]));
    sol.cfl = grid.dt() * amax / sqr(grid.dx());

    for (int j = 0; j < n; ++j) sol.u[sol.idx(K, j)] = driver.h(Vec{grid.x(j)});
    ws.sigma_gradient(sol.u, sol.idx(K, 0), grid, sol.sigma_grad_u, sol.idx(K, 0));

    // explicit nonlinearity with one Heun correction pass, so the f-term
    // quadrature matches the second-order operator splitting
    std::vector<double> g1(static_cast<size_t>(n)), g(static_cast<size_t>(n)),
        pred(static_cast<size_t>(n)), pred_grad(static_cast<size_t>(n));
    for (int k = K; k >= 1; --k) {
        const double t_known = grid.time(k);
        const double t_next = grid.time(k - 1);
        double prev_max = 0;
        for (int j = 0; j < n; ++j) {
            prev_max = std::max(prev_max, std::abs(sol.u[sol.idx(k, j)]));
            Vec x{grid.x(j)};
            Vec z{sol.sigma_grad_u[sol.idx(k, j)]};
            g1[static_cast<size_t>(j)] = driver.f(t_known, x, sol.u[sol.idx(k, j)], z);
        }
        ws.step(sol.u, sol.idx(k, 0), g1, pred, 0, grid.dt());
        ws.sigma_gradient(pred, 0, grid, pred_grad, 0);
        for (int j = 0; j < n; ++j) {
            Vec x{grid.x(j)};
            Vec z{pred_grad[static_cast<size_t>(j)]};
            g[static_cast<size_t>(j)] =
                0.5 * (g1[static_cast<size_t>(j)] +
                       driver.f(t_next, x, pred[static_cast<size_t>(j)], z));
        }
        ws.step(sol.u, sol.idx(k, 0), g, sol.u, sol.idx(k - 1, 0), grid.dt());
        detail::check_stability(sol.u, sol.idx(k - 1, 0), n, prev_max, k - 1);
        ws.sigma_gradient(sol.u, sol.idx(k - 1, 0), grid, sol.sigma_grad_u, sol.idx(k - 1, 0));
    }
    return sol;
}

/// Initial-value form marched forward with the same Crank-Nicolson kernel.
/// Slice k holds v(t_k) with v(t0) = h.
inline FdSolution fd_solve_initial_value(const CoefficientSet& coeffs, const Driver& driver,
                                         const FdGrid& grid) {
    grid.validate();
    if (coeffs.d != 1) throw std::invalid_argument("fd_solve_initial_value: d = 1 only");
    const int n = grid.n_nodes;
    const int K = grid.n_steps;

    FdSolution sol;
    sol.grid = grid;
    sol.u.resize(static_cast<size_t>(K + 1) * static_cast<size_t>(n));
    sol.sigma_grad_u.resize(sol.u.size());

    detail::CnWorkspace ws;
    ws.build(coeffs, grid);
    double amax = 0;
    for (int j = 0; j < n; ++j) amax = std::max(amax, sqr(ws.sig[static_cast<size_t>(j)]));
    sol.cfl = grid.dt() * amax / sqr(grid.dx());

    for (int j = 0; j < n; ++j) sol.u[sol.idx(0, j)] = driver.h(Vec{grid.x(j)});
    ws.sigma_gradient(sol.u, sol.idx(0, 0), grid, sol.sigma_grad_u, sol.idx(0, 0));

    std::vector<double> g1(static_cast<size_t>(n)), g(static_cast<size_t>(n)),
        pred(static_cast<size_t>(n)), pred_grad(static_cast<size_t>(n));
    for (int k = 0; k < K; ++k) {
        const double t_known = grid.time(k);
        const double t_next = grid.time(k + 1);
        double prev_max = 0;
        for (int j = 0; j < n; ++j) {
            prev_max = std::max(prev_max, std::abs(sol.u[sol.idx(k, j)]));
            Vec x{grid.x(j)};
            Vec z{sol.sigma_grad_u[sol.idx(k, j)]};
            g1[static_cast<size_t>(j)] = driver.f(t_known, x, sol.u[sol.idx(k, j)], z);
        }
        ws.step(sol.u, sol.idx(k, 0), g1, pred, 0, grid.dt());
        ws.sigma_gradient(pred, 0, grid, pred_grad, 0);
        for (int j = 0; j < n; ++j) {
            Vec x{grid.x(j)};
            Vec z{pred_grad[static_cast<size_t>(j)]};
            g[static_cast<size_t>(j)] =
                0.5 * (g1[static_cast<size_t>(j)] +
                       driver.f(t_next, x, pred[static_cast<size_t>(j)], z));
        }
        ws.step(sol.u, sol.idx(k, 0), g, sol.u, sol.idx(k + 1, 0), grid.dt());
        detail::check_stability(sol.u, sol.idx(k + 1, 0), n, prev_max, k + 1);
        ws.sigma_gradient(sol.u, sol.idx(k + 1, 0), grid, sol.sigma_grad_u, sol.idx(k + 1, 0));
    }
    return sol;
}

/// Smooth compactly supported test function with analytic derivative.
struct TestFunction {
    std::function<double(double)> value;
    std::function<double(double)> grad;
    double radius;
};

/// The standard mollifier bump scaled to [-r, r]. All derivatives vanish at
/// the support edge, which makes the trapezoid quadrature spectrally
/// accurate for residual evaluation.
inline TestFunction bump_test_function(double radius, double amplitude = 1.0) {
    auto val = [radius, amplitude](double x) {
        double s = x / radius;
        if (std::abs(s) >= 1.0) return 0.0;
        return amplitude * std::exp(-1.0 / (1.0 - s * s));
    };
    auto grd = [radius, amplitude](double x) {
        double s = x / radius;
        if (std::abs(s) >= 1.0) return 0.0;
        double q = 1.0 - s * s;
        return amplitude * std::exp(-1.0 / q) * (-2.0 * s / (q * q)) / radius;
    };
    return {val, grd, radius};
}

/// Evaluates the five terms of the weak-solution identity against a test
/// function and returns |LHS - RHS|. Space integrals run on the FD nodes,
/// time integrals on the FD slices from t to T.
inline double weak_form_residual(const FdSolution& sol, const CoefficientSet& coeffs,
                                 const Driver& driver, const TestFunction& phi, double t) {
    const FdGrid& grid = sol.grid;
    if (phi.radius >= grid.L - 2.0 * grid.dx())
        throw std::invalid_argument("weak_form_residual: test function support exceeds domain");
    const int k0 = sol.time_index(t);
    const int n = grid.n_nodes;
    const int K = grid.n_steps;
    const double dx = grid.dx();
    const double dt = grid.dt();

    std::vector<double> pv(static_cast<size_t>(n)), pg(static_cast<size_t>(n));
    std::vector<double> sig(static_cast<size_t>(n)), mdrift(static_cast<size_t>(n)),
        mdrift_d(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        double xv = grid.x(j);
        pv[static_cast<size_t>(j)] = phi.value(xv);
        pg[static_cast<size_t>(j)] = phi.grad(xv);
        Vec x{xv};
        sig[static_cast<size_t>(j)] = coeffs.sigma(x)(0, 0);
        mdrift[static_cast<size_t>(j)] = coeffs.b(x)[0] - a_tilde(coeffs, x)[0];
    }
    for (int j = 0; j < n; ++j) {
        double xv = grid.x(j);
        double h = 1e-5 * (1.0 + std::abs(xv));
        Vec xp{xv + h}, xm{xv - h};
        double mp = coeffs.b(xp)[0] - a_tilde(coeffs, xp)[0];
        double mm = coeffs.b(xm)[0] - a_tilde(coeffs, xm)[0];
        mdrift_d[static_cast<size_t>(j)] = (mp - mm) / (2.0 * h);
    }

    auto xquad = [&](const std::function<double(int)>& f) {
        double s = 0;
        for (int j = 0; j < n; ++j) {
            double w = (j == 0 || j == n - 1) ? 0.5 * dx : dx;
            s += w * f(j);
        }
        return s;
    };

    double term_u_t = xquad([&](int j) { return sol.value(k0, j) * pv[static_cast<size_t>(j)]; });
    double term_u_T = xquad([&](int j) { return sol.value(K, j) * pv[static_cast<size_t>(j)]; });

    double term_grad = 0, term_div = 0, term_f = 0;
    for (int k = k0; k <= K; ++k) {
        double wt = (k == k0 || k == K) ? 0.5 * dt : dt;
        term_grad += wt * xquad([&](int j) {
            return sol.sigma_grad_u[sol.idx(k, j)] * sig[static_cast<size_t>(j)] *
                   pg[static_cast<size_t>(j)];
        });
        term_div += wt * xquad([&](int j) {
            return sol.value(k, j) * (mdrift_d[static_cast<size_t>(j)] * pv[static_cast<size_t>(j)] +
                                      mdrift[static_cast<size_t>(j)] * pg[static_cast<size_t>(j)]);
        });
        term_f += wt * xquad([&](int j) {
            Vec x{grid.x(j)};
            Vec z{sol.sigma_grad_u[sol.idx(k, j)]};
            return driver.f(grid.time(k), x, sol.value(k, j), z) * pv[static_cast<size_t>(j)];
        });
    }

    double lhs = term_u_t - term_u_T + 0.5 * term_grad + term_div;
    return std::abs(lhs - term_f);
}

}  // namespace fkrep
