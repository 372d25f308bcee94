#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fkrep/coefficients.hpp"
#include "fkrep/common.hpp"
#include "fkrep/forward_sde.hpp"
#include "fkrep/regression.hpp"
#include "fkrep/weighted_space.hpp"

namespace fkrep {

struct StepDiagnostics {
    double y_rms_residual = 0.0;
    double z_rms_residual = 0.0;
    int merged_bins = 0;
    bool degenerate = false;
};

/// Backward solution: pathwise Y/Z values plus per-step regression functions
/// for x -> u(t_i, x) and x -> (sigma^T grad u)(t_i, x).
struct BsdeSolution {
    TimeGrid grid;
    int d = 1;
    size_t M = 0;
    std::vector<double> Y;                            // M * (n_steps+1)
    std::vector<double> Z;                            // M * n_steps * d
    std::vector<RegressionFit> u_fits;                // n_steps+1
    std::vector<std::vector<RegressionFit>> z_fits;   // n_steps, one per component
    std::vector<StepDiagnostics> diagnostics;         // n_steps+1

    size_t y_index(size_t m, int step) const {
        return m * static_cast<size_t>(grid.n_steps + 1) + static_cast<size_t>(step);
    }
    size_t z_index(size_t m, int step, int c) const {
        return (m * static_cast<size_t>(grid.n_steps) + static_cast<size_t>(step)) *
                   static_cast<size_t>(d) +
               static_cast<size_t>(c);
    }
    bool finite() const {
        for (double v : Y)
            if (!std::isfinite(v)) return false;
        for (double v : Z)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Least-squares Monte Carlo backward recursion with Picard sub-iterations
/// for the implicit y-dependence of the driver. The driver is expected to be
/// truncated (globally y-Lipschitz) so that dt * Lip_y < 1 makes the Picard
/// map contractive.
inline BsdeSolution solve_bsde(const PathEnsemble& ens, const Driver& driver,
                               const RegressionBasis& basis, int picard_iters) {
    if (picard_iters < 1) throw std::invalid_argument("solve_bsde: picard_iters must be >= 1");
    const int N = ens.grid.n_steps;
    const double dt = ens.grid.dt();
    const int d = ens.d;

    BsdeSolution sol;
    sol.grid = ens.grid;
    sol.d = d;
    sol.M = ens.M;
    sol.Y.resize(ens.M * static_cast<size_t>(N + 1));
    sol.Z.resize(ens.M * static_cast<size_t>(N) * static_cast<size_t>(d));
    sol.u_fits.resize(static_cast<size_t>(N) + 1);
    sol.z_fits.assign(static_cast<size_t>(N), std::vector<RegressionFit>(static_cast<size_t>(d)));
    sol.diagnostics.resize(static_cast<size_t>(N) + 1);

    // terminal condition, exact on paths
    parallel_chunks(ens.M, 16384, [&](size_t, size_t b, size_t e) {
        for (size_t m = b; m < e; ++m) sol.Y[sol.y_index(m, N)] = driver.h(ens.state(m, N));
    });

    {
        StepRegression reg(basis, ens, N);
        std::vector<double> yterm(ens.M);
        for (size_t m = 0; m < ens.M; ++m) yterm[m] = sol.Y[sol.y_index(m, N)];
        auto fit = reg.fit(yterm);
        sol.u_fits[static_cast<size_t>(N)] = reg.export_fit(std::move(fit.coeffs));
        sol.diagnostics[static_cast<size_t>(N)] = {fit.rms_residual, 0.0, reg.merged_bins(),
                                                   reg.degenerate()};
    }

    std::vector<double> y_next(ens.M), target(ens.M), fitted(ens.M), y_cur(ens.M);

    for (int i = N - 1; i >= 0; --i) {
        StepRegression reg(basis, ens, i);
        const double t_i = ens.grid.time(i);

        for (size_t m = 0; m < ens.M; ++m) y_next[m] = sol.Y[sol.y_index(m, i + 1)];

        // conditional expectation of Y_{i+1}
        auto efit = reg.fit(y_next, &fitted);

        // martingale-increment Z estimator: the conditional mean is removed
        // from Y_{i+1} before multiplying by the increment, which has no
        // effect in expectation and strips the dominant variance term.
        double z_resid = 0.0;
        for (int c = 0; c < d; ++c) {
            parallel_chunks(ens.M, 16384, [&](size_t, size_t b, size_t e) {
                for (size_t m = b; m < e; ++m)
                    target[m] = (y_next[m] - fitted[m]) * ens.dW[ens.w_index(m, i, c)] / dt;
            });
            std::vector<double> z_fitted(ens.M);
            auto zfit = reg.fit(target, &z_fitted);
            z_resid = std::max(z_resid, zfit.rms_residual);
            sol.z_fits[static_cast<size_t>(i)][static_cast<size_t>(c)] =
                reg.export_fit(std::move(zfit.coeffs));
            parallel_chunks(ens.M, 16384, [&](size_t, size_t b, size_t e) {
                for (size_t m = b; m < e; ++m) sol.Z[sol.z_index(m, i, c)] = z_fitted[m];
            });
        }

        // Picard iterations on y inside the driver
        y_cur = fitted;
        std::vector<size_t> nan_flag(1 + (ens.M + 16383) / 16384, SIZE_MAX);
        for (int k = 0; k < picard_iters; ++k) {
            parallel_chunks(ens.M, 16384, [&](size_t chunk, size_t b, size_t e) {
                for (size_t m = b; m < e; ++m) {
                    Vec x = ens.state(m, i);
                    Vec z(d);
                    for (int c = 0; c < d; ++c) z[c] = sol.Z[sol.z_index(m, i, c)];
                    double fv = driver.f(t_i, x, y_cur[m], z);
                    if (!std::isfinite(fv)) {
                        nan_flag[chunk] = std::min(nan_flag[chunk], m);
                        return;
                    }
                    y_cur[m] = fitted[m] + fv * dt;
                }
            });
            for (size_t fl : nan_flag)
                if (fl != SIZE_MAX)
                    throw std::runtime_error("solve_bsde: driver returned non-finite value at step " +
                                             std::to_string(i));
        }
        parallel_chunks(ens.M, 16384, [&](size_t, size_t b, size_t e) {
            for (size_t m = b; m < e; ++m) sol.Y[sol.y_index(m, i)] = y_cur[m];
        });

        // one more projection so u_fits carries the driver contribution too
        auto ufit = reg.fit(y_cur);
        sol.u_fits[static_cast<size_t>(i)] = reg.export_fit(std::move(ufit.coeffs));
        sol.diagnostics[static_cast<size_t>(i)] = {ufit.rms_residual, z_resid, reg.merged_bins(),
                                                   reg.degenerate()};
    }
    return sol;
}

/// Inverse of the exponential change of variables: Y_s = e^{-mu s} Y~_s,
/// Z_s = e^{-mu s} Z~_s, applied per time node to values and fitted
/// functions alike.
inline BsdeSolution untransform_solution(const BsdeSolution& tilde, double mu) {
    BsdeSolution out = tilde;
    const int N = out.grid.n_steps;
    for (int i = 0; i <= N; ++i) {
        const double sc = std::exp(-mu * out.grid.time(i));
        for (size_t m = 0; m < out.M; ++m) out.Y[out.y_index(m, i)] *= sc;
        out.u_fits[static_cast<size_t>(i)].scale_values(sc);
        if (i < N) {
            for (size_t m = 0; m < out.M; ++m)
                for (int c = 0; c < out.d; ++c) out.Z[out.z_index(m, i, c)] *= sc;
            for (auto& zf : out.z_fits[static_cast<size_t>(i)]) zf.scale_values(sc);
        }
    }
    return out;
}

/// Discrete proxy for the rho-weighted space-time L2 norm of the Y
/// difference between two solutions on a shared ensemble. Starting points
/// drawn from the normalized rho^{-1} density make the path average an
/// estimate of the weighted spatial integral, up to the normalizer, which is
/// supplied here so values are comparable across modules.
inline double discrete_weighted_l2(const BsdeSolution& a, const BsdeSolution& b,
                                   double rho_inv_mass) {
    if (!(a.grid == b.grid) || a.M != b.M)
        throw std::invalid_argument("discrete_weighted_l2: incompatible solutions");
    const int N = a.grid.n_steps;
    const double dt = a.grid.dt();
    double acc = 0;
    for (int i = 0; i <= N; ++i) {
        double w = (i == 0 || i == N) ? 0.5 * dt : dt;
        if (N == 0) w = 1.0;
        double ms = parallel_sum(a.M, [&](size_t m) {
                        return sqr(a.Y[a.y_index(m, i)] - b.Y[b.y_index(m, i)]);
                    }) /
                    static_cast<double>(a.M);
        acc += w * ms;
    }
    return std::sqrt(rho_inv_mass * acc);
}

struct SweepEntry {
    double level;
    BsdeSolution solution;
    double delta;  // distance to the largest-level solution
};

/// Solves the truncated family on one shared ensemble so that the deltas
/// between levels are noise-cancelled.
inline std::vector<SweepEntry> truncation_sweep(const PathEnsemble& ens, const Driver& driver,
                                                const RegressionBasis& basis,
                                                const std::vector<double>& levels,
                                                int picard_iters, double rho_inv_mass) {
    if (levels.empty()) throw std::invalid_argument("truncation_sweep: no levels");
    for (size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] > levels[i - 1]))
            throw std::invalid_argument("truncation_sweep: levels must be strictly increasing");
    std::vector<SweepEntry> out;
    out.reserve(levels.size());
    for (double n : levels)
        out.push_back({n, solve_bsde(ens, truncate_driver(driver, n), basis, picard_iters), 0.0});
    const BsdeSolution& ref = out.back().solution;
    for (auto& e : out) e.delta = discrete_weighted_l2(e.solution, ref, rho_inv_mass);
    return out;
}

/// Evaluates the step-0 fitted function on the space grid. Nodes outside the
/// starting-point hull are filled by the basis' constant extrapolation and
/// flagged.
inline WeightedField representation_field(const BsdeSolution& sol, const WeightedSpace& space) {
    if (sol.u_fits.empty()) throw std::invalid_argument("representation_field: empty solution");
    const RegressionFit& fit = sol.u_fits.front();
    WeightedField out{space.grid(), 1, {}, {}};
    const size_t n = out.grid.size();
    out.values.resize(n);
    out.extrapolated.resize(n);
    for (size_t i = 0; i < n; ++i) {
        Vec x = out.grid.node(i);
        out.values[i] = fit.eval(x);
        out.extrapolated[i] = fit.inside_hull(x) ? 0 : 1;
    }
    return out;
}

struct MomentReport {
    double A = 0;  // estimate of the time-integrated |Y|^{2p} weighted mass
    double B = 0;  // estimate of the time-integrated |Y|^{2p-2}|Z|^2 weighted mass
    double R = 0;  // configured right-hand side C_p(|h|_{2p}^{2p} + |f0|_{2p}^{2p})
    double C_p = 0;
    int p = 1;
    bool within_bound() const { return A <= R && B <= R; }
};

/// Plugs the discrete solution into the uniform moment estimate. Requires
/// the ensemble to have been started from the weight density so that path
/// averages estimate the weighted integrals.
inline MomentReport apriori_moment_report(const BsdeSolution& sol, const Driver& driver,
                                          const WeightedSpace& space, double c_p) {
    const int N = sol.grid.n_steps;
    const double dt = sol.grid.dt();
    const double mass = rho_inv_integral(space);
    const int two_p = 2 * driver.p;

    MomentReport rep;
    rep.p = driver.p;
    rep.C_p = c_p;
    for (int i = 0; i <= N; ++i) {
        double w = (i == 0 || i == N) ? 0.5 * dt : dt;
        double a_ms = parallel_sum(sol.M, [&](size_t m) {
                          return std::pow(std::abs(sol.Y[sol.y_index(m, i)]), two_p);
                      }) /
                      static_cast<double>(sol.M);
        rep.A += w * mass * a_ms;
        if (i < N) {
            double b_ms = parallel_sum(sol.M, [&](size_t m) {
                              double z2 = 0;
                              for (int c = 0; c < sol.d; ++c) z2 += sqr(sol.Z[sol.z_index(m, i, c)]);
                              return std::pow(std::abs(sol.Y[sol.y_index(m, i)]), two_p - 2) * z2;
                          }) /
                          static_cast<double>(sol.M);
            rep.B += dt * mass * b_ms;
        }
    }

    WeightedField hf = make_field(space, driver.h);
    double hn = weighted_lp_norm(space, hf, two_p);
    // time-integrated inhomogeneity norm on the same grid
    double f0n = 0;
    {
        const QuadGrid g = space.grid();
        const int slices = 8;
        double acc = 0;
        for (int k = 0; k <= slices; ++k) {
            double s = sol.grid.t0 + (sol.grid.T - sol.grid.t0) * k / slices;
            double wk = (k == 0 || k == slices) ? 0.5 : 1.0;
            double sp = 0;
            for (size_t j = 0; j < g.size(); ++j) {
                Vec x = g.node(j);
                sp += std::pow(std::abs(driver.f0(s, x)), two_p) *
                      std::pow(1.0 + x.norm(), -space.q) * g.weight(j);
            }
            acc += wk * sp * (sol.grid.T - sol.grid.t0) / slices;
        }
        f0n = acc;
    }
    rep.R = c_p * (std::pow(hn, two_p) + f0n);
    return rep;
}

}  // namespace fkrep
