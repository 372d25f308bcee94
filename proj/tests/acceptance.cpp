// Acceptance suite: runs every top-level criterion at its pinned tolerance
// and prints one pass/fail line each. Exit status is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fkrep/bsde_solver.hpp"
#include "fkrep/config.hpp"
#include "fkrep/fd_solver.hpp"
#include "fkrep/runner.hpp"
#include "fkrep/scenarios.hpp"
#include "fkrep/verification.hpp"

using namespace fkrep;

namespace {

// Golden value for the bump-function sandwich ratio (b=0, sigma=1, T-t=1,
// q=2, L=20, n=2001, bump radius 2): frozen from a high-precision Gaussian
// convolution oracle cross-checked against an M=10^7 Monte-Carlo run.
constexpr double kBumpSandwichGolden = 0.80906;

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void guard(const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

double wall_seconds(const std::function<void()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    body();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

WeightedSpace default_space() { return WeightedSpace(1, 2.0, 20.0, 2001); }

PathEnsemble weighted_ensemble(const CoefficientSet& coeffs, const WeightedSpace& space,
                               size_t M, const TimeGrid& grid, uint64_t seed) {
    auto x0 = sample_from_weight_density(space, M, seed);
    return simulate_forward(coeffs, x0, grid, seed);
}

RegressionBasis bins32() { return {BasisKind::PiecewiseLinearBins, 32}; }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------

void criterion_1_heat_feynman_kac() {
    Scenario heat = make_scenario("heat");
    WeightedSpace space = default_space();

    FdSolution fd;
    double fd_secs = wall_seconds([&] {
        FdGrid grid{10.0, 2001, 0.0, 1.0, 1000};  // dx = 0.01, dt = 0.001
        fd = fd_solve(heat.coeffs, heat.driver, grid);
    });
    double fd_err = 0;
    for (int k = 0; k <= fd.grid.n_steps; ++k)
        for (int j = 0; j < fd.grid.n_nodes; ++j)
            fd_err = std::max(fd_err, std::abs(fd.value(k, j) -
                                               (*heat.exact_u)(fd.grid.time(k),
                                                               Vec{fd.grid.x(j)}, 1.0)));
    report("C1a heat FD vs closed form", fd_err < 1e-3 && fd_secs < 120.0,
           "max-norm error " + fmt(fd_err) + " (tol 1e-3), " + fmt(fd_secs) + "s");

    WeightedField field;
    BsdeSolution sol;
    double mc_secs = wall_seconds([&] {
        TimeGrid grid(0.0, 1.0, 100);
        auto ens = weighted_ensemble(heat.coeffs, space, 200000, grid, 61);
        sol = solve_bsde(ens, heat.driver, bins32(), 3);
        field = representation_field(sol, space);
    });
    double num = 0, den = 0;
    const QuadGrid g = field.grid;
    for (size_t j = 0; j < g.size(); ++j) {
        if (field.extrapolated[j]) continue;
        Vec x = g.node(j);
        double w = g.weight(j) * rho_inv(space, x);
        double exact = (*heat.exact_u)(0.0, x, 1.0);
        num += w * sqr(field.values[j] - exact);
        den += w * sqr(exact);
    }
    double mc_err = std::sqrt(num / den);
    report("C1b heat BSDE vs closed form", mc_err < 0.05 && mc_secs < 120.0,
           "weighted-L2 relative error " + fmt(mc_err) + " (tol 0.05), " + fmt(mc_secs) + "s");
}

void criterion_2_polynomial_growth_representation() {
    Scenario ac = make_scenario("allen-cahn");
    WeightedSpace space = default_space();
    Driver fn = truncate_driver(ac.driver, 2.0);  // 2 * max(1, sup|tanh|)

    FdGrid fgrid{10.0, 2001, 0.0, 1.0, 1000};
    FdSolution fd = fd_solve(ac.coeffs, fn, fgrid);

    TimeGrid grid(0.0, 1.0, 100);
    auto ens = weighted_ensemble(ac.coeffs, space, 200000, grid, 71);
    auto sol = solve_bsde(ens, fn, bins32(), 3);
    WeightedField field = representation_field(sol, space);

    double rep_err = representation_error(field, fd, space, 0.0);
    report("C2a Allen-Cahn representation", rep_err < 0.10,
           "representation_error(t=0) " + fmt(rep_err) + " (tol 0.10)");

    double z_dist = z_gradient_consistency(sol, fd, space);
    report("C2b Allen-Cahn z-gradient", z_dist < 0.15,
           "z distance " + fmt(z_dist) + " (tol 0.15)");
}

void criterion_3_exact_constant() {
    Scenario ac = make_scenario("allen-cahn-const");
    WeightedSpace space = default_space();
    TimeGrid grid(0.0, 1.0, 50);
    auto ens = weighted_ensemble(ac.coeffs, space, 100000, grid, 81);
    auto sol = solve_bsde(ens, truncate_driver(ac.driver, 2.0), bins32(), 3);

    double worst_y = 0;
    for (size_t m = 0; m < sol.M; ++m)
        for (int i = 0; i <= grid.n_steps; ++i)
            worst_y = std::max(worst_y, std::abs(sol.Y[sol.y_index(m, i)] - 1.0));

    double worst_step_z = 0;
    for (int i = 0; i < grid.n_steps; ++i) {
        double mz = parallel_sum(sol.M, [&](size_t m) {
                        return std::abs(sol.Z[sol.z_index(m, i, 0)]);
                    }) /
                    static_cast<double>(sol.M);
        worst_step_z = std::max(worst_step_z, mz);
    }
    report("C3 exact constant invariant", worst_y < 1e-2 && worst_step_z < 1e-8,
           "max|Y-1| " + fmt(worst_y) + " (tol 1e-2), worst step mean|Z| " + fmt(worst_step_z) +
               " (floor 1e-8)");
}

void criterion_4_truncation_stability() {
    Scenario ac = make_scenario("allen-cahn-const");
    WeightedSpace space = default_space();
    const double mass = rho_inv_integral(space);
    TimeGrid grid(0.0, 1.0, 50);
    auto ens = weighted_ensemble(ac.coeffs, space, 100000, grid, 91);

    auto entries =
        truncation_sweep(ens, ac.driver, bins32(), {0.5, 1.0, 2.0, 5.0}, 3, mass);
    double max_pairwise = 0;
    for (size_t a = 1; a < entries.size(); ++a)
        for (size_t b = a + 1; b < entries.size(); ++b)
            max_pairwise = std::max(
                max_pairwise,
                discrete_weighted_l2(entries[a].solution, entries[b].solution, mass));
    double low_delta = entries[0].delta;
    bool pass = max_pairwise < 1e-3 && low_delta > 10.0 * max_pairwise && low_delta > 1e-2;
    report("C4 truncation stability", pass,
           "pairwise delta(1,2,5) " + fmt(max_pairwise) + " (tol 1e-3), delta(0.5) " +
               fmt(low_delta));
}

void criterion_7_moment_uniformity() {
    Scenario ac = make_scenario("allen-cahn-const");
    WeightedSpace space = default_space();
    const double mass = rho_inv_integral(space);
    TimeGrid grid(0.0, 1.0, 50);
    const size_t M = 100000;
    auto ens = weighted_ensemble(ac.coeffs, space, M, grid, 91);
    auto entries = truncation_sweep(ens, ac.driver, bins32(), {1.0, 2.0, 5.0}, 3, mass);

    std::vector<double> As, Bs, Rs, floors;
    for (const auto& e : entries) {
        Driver fn = truncate_driver(ac.driver, e.level);
        MomentReport mr = apriori_moment_report(e.solution, fn, space, 4.0);
        As.push_back(mr.A);
        Bs.push_back(mr.B);
        Rs.push_back(mr.R);
        // per-path contribution to A for the noise floor
        std::vector<double> per_path(e.solution.M);
        const auto& s = e.solution;
        for (size_t m = 0; m < s.M; ++m) {
            double acc = 0;
            for (int i = 0; i <= grid.n_steps; ++i)
                acc += std::pow(std::abs(s.Y[s.y_index(m, i)]), 2 * fn.p);
            per_path[m] = acc / (grid.n_steps + 1);
        }
        floors.push_back(mass * (grid.T - grid.t0) * bootstrap_noise_floor(per_path));
    }
    double spread_a = 0, spread_b = 0;
    for (size_t i = 1; i < As.size(); ++i) {
        spread_a = std::max(spread_a, std::abs(As[i] - As[0]));
        spread_b = std::max(spread_b, std::abs(Bs[i] - Bs[0]));
    }
    double floor = *std::max_element(floors.begin(), floors.end());
    double noise_allow = 3.0 * std::max(floor, 1e-12);
    bool within = true;
    for (size_t i = 0; i < As.size(); ++i) within = within && As[i] <= Rs[i] && Bs[i] <= Rs[i];
    bool pass = spread_a <= noise_allow && spread_b <= noise_allow && within;
    report("C7 a-priori moment uniformity", pass,
           "A spread " + fmt(spread_a) + ", B spread " + fmt(spread_b) + " (allow " +
               fmt(noise_allow) + "), A " + fmt(As[0]) + " <= R " + fmt(Rs[0]));
}

void criterion_5_transform_round_trip() {
    Scenario heat = make_scenario("heat");
    WeightedSpace space = default_space();
    const double mass = rho_inv_integral(space);
    TimeGrid grid(0.0, 1.0, 400);
    const size_t M = 50000;
    auto ens = weighted_ensemble(heat.coeffs, space, M, grid, 111);

    // linear driver f(y) = mu y - y with mu = 1: identically zero, but the
    // declared constant drives a nontrivial transform
    Driver drv = heat.driver;
    drv.mu = 1.0;
    drv.f = [](double, const Vec&, double y, const Vec&) { return 1.0 * y - y; };
    Driver transformed = exp_transform(drv, grid.T);

    auto direct = solve_bsde(ens, truncate_driver(drv, 4.0), bins32(), 3);
    auto tilde = solve_bsde(ens, truncate_driver(transformed, 12.0), bins32(), 3);
    auto back = untransform_solution(tilde, drv.mu);
    double dist = discrete_weighted_l2(direct, back, mass);

    auto norm_floor = [&](const BsdeSolution& s) {
        std::vector<double> per_path(s.M);
        for (size_t m = 0; m < s.M; ++m) {
            double acc = 0;
            for (int i = 0; i <= s.grid.n_steps; ++i) acc += sqr(s.Y[s.y_index(m, i)]);
            per_path[m] = acc / (s.grid.n_steps + 1);
        }
        return bootstrap_noise_floor(per_path, 16, 0xACC5, [&](double ms) {
            return std::sqrt(mass * (s.grid.T - s.grid.t0) * std::max(0.0, ms));
        });
    };
    double pooled = std::sqrt(sqr(norm_floor(direct)) + sqr(norm_floor(back)));
    report("C5 transform round trip", dist < 3.0 * pooled,
           "distance " + fmt(dist) + " vs 3x pooled noise " + fmt(3.0 * pooled));
}

void criterion_6_norm_equivalence() {
    Scenario heat = make_scenario("heat");
    WeightedSpace space = default_space();
    TimeGrid grid(0.0, 1.0, 8);

    WeightedField one{space.grid(), 1, std::vector<double>(space.grid().size(), 1.0), {}};
    auto c1 = norm_equivalence_check(heat.coeffs, space, one, grid, 100000, 121, 0.99, 1.01);
    report("C6a sandwich ratio, constant phi", std::abs(c1.ratio - 1.0) <= 1e-2,
           "ratio " + fmt(c1.ratio) + " (1 +/- 1e-2)");

    WeightedField bump = make_field(space, [](const Vec& x) {
        double s = x.norm() / 2.0;
        return s >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - s * s));
    });
    auto c2 = norm_equivalence_check(heat.coeffs, space, bump, grid, 100000, 122,
                                     0.9 * kBumpSandwichGolden, 1.1 * kBumpSandwichGolden);
    report("C6b sandwich ratio, bump phi vs golden band", c2.pass,
           "ratio " + fmt(c2.ratio) + " in [" + fmt(0.9 * kBumpSandwichGolden) + ", " +
               fmt(1.1 * kBumpSandwichGolden) + "], noise " + fmt(c2.noise_floor));
}

void criterion_8_weak_form_residual() {
    Scenario heat = make_scenario("heat");
    TestFunction phi = bump_test_function(3.0);
    auto resid_at = [&](double dx) {
        FdGrid grid{10.0, static_cast<int>(std::lround(20.0 / dx)) + 1, 0.0, 1.0,
                    static_cast<int>(std::lround(1.0 / (dx / 10.0)))};
        FdSolution sol = fd_solve(heat.coeffs, heat.driver, grid);
        return weak_form_residual(sol, heat.coeffs, heat.driver, phi, 0.0);
    };
    double r0 = resid_at(0.04), r1 = resid_at(0.02), r2 = resid_at(0.01);
    double s0 = std::log2(r0 / r1), s1 = std::log2(r1 / r2);
    report("C8a weak-form residual refinement", s0 >= 1.8 && s1 >= 1.8,
           "residuals " + fmt(r0) + " -> " + fmt(r1) + " -> " + fmt(r2) + ", slopes " + fmt(s0) +
               ", " + fmt(s1) + " (min 1.8)");

    FdGrid grid{10.0, 2001, 0.0, 1.0, 1000};
    FdSolution sol = fd_solve(heat.coeffs, heat.driver, grid);
    double clean = weak_form_residual(sol, heat.coeffs, heat.driver, phi, 0.0);
    FdSolution dirty = sol;
    for (int k = 0; k <= grid.n_steps; ++k)
        for (int j = 0; j < grid.n_nodes; ++j)
            dirty.u[dirty.idx(k, j)] += 0.1 * std::sin(grid.x(j));
    double corrupted = weak_form_residual(dirty, heat.coeffs, heat.driver, phi, 0.0);
    report("C8b corrupted-solution sensitivity", corrupted > 10.0 * clean,
           "clean " + fmt(clean) + ", corrupted " + fmt(corrupted) + " (factor " +
               fmt(corrupted / clean) + ", min 10)");
}

void criterion_9_determinism() {
    auto run_with_workers = [&](const char* workers, const std::string& dir) {
        setenv("FKREP_WORKERS", workers, 1);
        RunConfig cfg = parse_config(
            "scenario = heat\nM = 20000\nN_steps = 25\nn_quad = 801\n"
            "fd_dx = 0.05\nfd_dt = 0.005\nchecks = representation-error,z-gradient\n");
        cfg.output_dir = dir;
        std::filesystem::remove_all(dir);
        run(cfg);
        unsetenv("FKREP_WORKERS");
    };
    auto base = std::filesystem::temp_directory_path();
    run_with_workers("1", (base / "fkrep_acc_w1").string());
    run_with_workers("8", (base / "fkrep_acc_w8").string());
    run_with_workers("1", (base / "fkrep_acc_w1b").string());

    bool same = true;
    for (const char* f : {"u_compare.csv", "verification.csv", "fd_slices.csv"}) {
        std::string a = slurp(base / "fkrep_acc_w1" / f);
        std::string b = slurp(base / "fkrep_acc_w8" / f);
        std::string c = slurp(base / "fkrep_acc_w1b" / f);
        same = same && !a.empty() && a == b && a == c;
    }
    for (const char* d : {"fkrep_acc_w1", "fkrep_acc_w8", "fkrep_acc_w1b"})
        std::filesystem::remove_all(base / d);
    report("C9 byte-identical CSV across worker counts", same,
           same ? "1 and 8 workers, repeat run: identical" : "outputs differ");
}

void criterion_10_hypothesis_validators() {
    WeightedSpace space(1, 2.0, 20.0, 1001);
    bool pass = true;
    std::string detail;
    for (const auto& name : scenario_names()) {
        Scenario sc = make_scenario(name);
        auto rep = validate_conditions(sc.coeffs, sc.driver, space, 3000, 1313);
        if (name == "fisher-kpp") {
            bool only_h3_fails = !rep.get("H.3").pass;
            for (const auto& c : rep.conditions)
                if (c.name != "H.3") only_h3_fails = only_h3_fails && c.pass;
            pass = pass && only_h3_fails;
            detail += name + (only_h3_fails ? " fails exactly H.3; " : " WRONG; ");
        } else {
            pass = pass && rep.all_pass();
            detail += name + (rep.all_pass() ? " ok; " : " FAILS; ");
        }
    }
    report("C10 hypothesis validators", pass, detail);
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    guard("C1 heat Feynman-Kac", criterion_1_heat_feynman_kac);
    guard("C2 polynomial-growth representation", criterion_2_polynomial_growth_representation);
    guard("C3 exact constant invariant", criterion_3_exact_constant);
    guard("C4 truncation stability", criterion_4_truncation_stability);
    guard("C5 transform round trip", criterion_5_transform_round_trip);
    guard("C6 equivalence of norms", criterion_6_norm_equivalence);
    guard("C7 a-priori moment uniformity", criterion_7_moment_uniformity);
    guard("C8 weak-form residual", criterion_8_weak_form_residual);
    guard("C9 determinism", criterion_9_determinism);
    guard("C10 hypothesis validators", criterion_10_hypothesis_validators);
    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
