#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fkrep/bsde_solver.hpp"
#include "fkrep/coefficients.hpp"
#include "fkrep/common.hpp"
#include "fkrep/fd_solver.hpp"
#include "fkrep/forward_sde.hpp"
#include "fkrep/rng.hpp"
#include "fkrep/weighted_space.hpp"

namespace fkrep {

/// Bootstrap standard error of a mean statistic from its per-item
/// contributions: B seeded resamples with replacement, std of the resampled
/// means. Every stochastic tolerance in the verification reports is scaled
/// by one of these.
inline double bootstrap_noise_floor(std::span<const double> per_item, int B = 16,
                                    uint64_t seed = 0xB007) {
    if (per_item.empty()) throw std::invalid_argument("bootstrap_noise_floor: empty sample");
    CounterRng rng(seed);
    const size_t n = per_item.size();
    std::vector<double> means(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) {
            size_t j = static_cast<size_t>(rng.uniform(static_cast<uint64_t>(b), i, 0) *
                                           static_cast<double>(n));
            if (j >= n) j = n - 1;
            s += per_item[j];
        }
        means[static_cast<size_t>(b)] = s / static_cast<double>(n);
    }
    double mu = pairwise_mean(means);
    double var = 0;
    for (double m : means) var += sqr(m - mu);
    return std::sqrt(var / (B - 1));
}

/// Same resampling, but the statistic is a smooth function of the mean
/// (e.g. a norm): std of transform(resampled mean).
inline double bootstrap_noise_floor(std::span<const double> per_item, int B, uint64_t seed,
                                    const std::function<double(double)>& transform) {
    if (per_item.empty()) throw std::invalid_argument("bootstrap_noise_floor: empty sample");
    CounterRng rng(seed);
    const size_t n = per_item.size();
    std::vector<double> stats(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) {
            size_t j = static_cast<size_t>(rng.uniform(static_cast<uint64_t>(b), i, 0) *
                                           static_cast<double>(n));
            if (j >= n) j = n - 1;
            s += per_item[j];
        }
        stats[static_cast<size_t>(b)] = transform(s / static_cast<double>(n));
    }
    double mu = pairwise_mean(stats);
    double var = 0;
    for (double m : stats) var += sqr(m - mu);
    return std::sqrt(var / (B - 1));
}

struct SandwichReport {
    double outer = 0;   // integral of |phi| rho^{-1} over the grid
    double middle = 0;  // path estimate of E int |phi(X_T)| rho^{-1}(x) dx
    double ratio = 0;
    double band_lo = 0, band_hi = 0;
    double noise_floor = 0;
    bool pass = false;
};

/// Estimates both sides of the norm-equivalence sandwich. Paths start at
/// the quadrature nodes (several replicas per node) and the node weights
/// w_j rho^{-1}(x_j) turn the path average into the middle integral.
inline SandwichReport norm_equivalence_check(const CoefficientSet& coeffs,
                                             const WeightedSpace& space,
                                             const WeightedField& phi, const TimeGrid& grid,
                                             size_t M, uint64_t seed, double band_lo,
                                             double band_hi) {
    if (M < 10000) throw std::invalid_argument("norm_equivalence_check: M must be >= 10^4");
    if (!(phi.grid == space.grid()))
        throw std::invalid_argument("norm_equivalence_check: phi not on the space grid");

    const QuadGrid g = phi.grid;
    const size_t n_nodes = g.size();
    const size_t replicas = std::max<size_t>(1, M / n_nodes);

    SandwichReport rep;
    rep.band_lo = band_lo;
    rep.band_hi = band_hi;
    for (size_t j = 0; j < n_nodes; ++j)
        rep.outer += g.weight(j) * phi.magnitude(j) * rho_inv(space, g.node(j));

    // piecewise-linear lookup of |phi| along paths, constant beyond the grid
    auto phi_at = [&](const Vec& x) {
        if (space.d == 1) {
            double pos = (x[0] + g.L) / g.spacing();
            int j = static_cast<int>(std::floor(pos));
            if (j < 0) return phi.magnitude(0);
            if (j >= g.n_per_axis - 1) return phi.magnitude(n_nodes - 1);
            double w = pos - j;
            return (1.0 - w) * phi.magnitude(static_cast<size_t>(j)) +
                   w * phi.magnitude(static_cast<size_t>(j) + 1);
        }
        // nearest node in d = 2
        int j0 = std::clamp(static_cast<int>(std::lround((x[0] + g.L) / g.spacing())), 0,
                            g.n_per_axis - 1);
        int j1 = std::clamp(static_cast<int>(std::lround((x[1] + g.L) / g.spacing())), 0,
                            g.n_per_axis - 1);
        return phi.magnitude(static_cast<size_t>(j0) * static_cast<size_t>(g.n_per_axis) +
                             static_cast<size_t>(j1));
    };

    std::vector<Vec> starts;
    starts.reserve(n_nodes * replicas);
    for (size_t j = 0; j < n_nodes; ++j)
        for (size_t r = 0; r < replicas; ++r) starts.push_back(g.node(j));
    PathEnsemble ens = simulate_forward(coeffs, starts, grid, seed);

    // one full quadrature sum per replica; replicas are iid, so the bootstrap
    // over them is a clean noise floor for the middle estimate
    std::vector<double> per_replica(replicas, 0.0);
    for (size_t j = 0; j < n_nodes; ++j) {
        double wj = g.weight(j) * rho_inv(space, g.node(j));
        for (size_t r = 0; r < replicas; ++r)
            per_replica[r] += wj * phi_at(ens.state(j * replicas + r, grid.n_steps));
    }
    rep.middle = pairwise_mean(per_replica);
    rep.noise_floor = replicas > 1 ? bootstrap_noise_floor(per_replica) : 0.0;
    rep.ratio = rep.middle / rep.outer;
    rep.pass = rep.ratio >= band_lo && rep.ratio <= band_hi;
    return rep;
}

/// Relative rho-weighted L2 distance between the regression solution and the
/// finite-difference oracle at time t, over nodes where both are trusted.
inline double representation_error(const WeightedField& bsde_u, const FdSolution& fd,
                                   const WeightedSpace& space, double t) {
    if (!(bsde_u.grid == space.grid()))
        throw std::invalid_argument("representation_error: field not on the space grid");
    const int k = fd.time_index(t);
    const QuadGrid g = bsde_u.grid;
    double num = 0, den = 0;
    size_t used = 0;
    for (size_t j = 0; j < g.size(); ++j) {
        Vec x = g.node(j);
        if (!bsde_u.extrapolated.empty() && bsde_u.extrapolated[j]) continue;
        if (std::abs(x[0]) > fd.grid.L) continue;
        double w = g.weight(j) * rho_inv(space, x);
        double uf = fd.interp_u(k, x[0]);
        num += w * sqr(bsde_u.values[j] - uf);
        den += w * sqr(uf);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("representation_error: empty overlap region");
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

/// Restarts the solve from a time node via the Markov property and compares
/// the restarted u at that node with the original fit, in the discrete
/// weighted norm over the points the flow actually visits.
inline double flow_identity_check(const BsdeSolution& sol, const PathEnsemble& ens,
                                  const CoefficientSet& coeffs, const Driver& driver,
                                  const RegressionBasis& basis, int step, int picard_iters,
                                  double rho_inv_mass) {
    if (step <= 0 || step >= ens.grid.n_steps)
        throw std::out_of_range("flow_identity_check: step must be interior");
    PathEnsemble restarted = resimulate_from(coeffs, ens, step);
    BsdeSolution rsol = solve_bsde(restarted, driver, basis, picard_iters);
    const RegressionFit& u_orig = sol.u_fits[static_cast<size_t>(step)];
    const RegressionFit& u_rest = rsol.u_fits.front();
    double ms = parallel_sum(ens.M, [&](size_t m) {
                    Vec x = ens.state(m, step);
                    return sqr(u_orig.eval(x) - u_rest.eval(x));
                }) /
                static_cast<double>(ens.M);
    return std::sqrt(rho_inv_mass * ms);
}

/// Time-averaged weighted-L2 distance between the regression z-field and the
/// finite-difference sigma * du/dx field on the overlap region. d = 1.
inline double z_gradient_consistency(const BsdeSolution& sol, const FdSolution& fd,
                                     const WeightedSpace& space) {
    if (sol.d != 1) throw std::invalid_argument("z_gradient_consistency: d = 1 only");
    const QuadGrid g = space.grid();
    const int N = sol.grid.n_steps;
    double acc = 0;
    int used_steps = 0;
    for (int i = 0; i < N; ++i) {
        const RegressionFit& zf = sol.z_fits[static_cast<size_t>(i)][0];
        double t_i = sol.grid.time(i);
        double num = 0, wsum = 0;
        for (size_t j = 0; j < g.size(); ++j) {
            Vec x = g.node(j);
            if (!zf.inside_hull(x)) continue;
            if (std::abs(x[0]) > fd.grid.L) continue;
            double w = g.weight(j) * rho_inv(space, x);
            double zfd = fd.interp_sgrad_at(t_i, x[0]);
            num += w * sqr(zf.eval(x) - zfd);
            wsum += w;
        }
        if (wsum > 0) {
            acc += num;
            ++used_steps;
        }
    }
    if (used_steps == 0) throw std::invalid_argument("z_gradient_consistency: empty overlap");
    return std::sqrt(acc / used_steps);
}

}  // namespace fkrep
