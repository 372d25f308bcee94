#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fkrep/scenarios.hpp"
#include "fkrep/verification.hpp"

using namespace fkrep;

namespace {

WeightedSpace default_space() { return WeightedSpace(1, 2.0, 20.0, 1001); }

PathEnsemble weighted_ensemble(const CoefficientSet& coeffs, const WeightedSpace& space,
                               size_t M, const TimeGrid& grid, uint64_t seed) {
    auto x0 = sample_from_weight_density(space, M, seed);
    return simulate_forward(coeffs, x0, grid, seed);
}

RegressionBasis bins32() { return {BasisKind::PiecewiseLinearBins, 32}; }

WeightedField const_field(const WeightedSpace& space, double c) {
    return WeightedField{space.grid(), 1, std::vector<double>(space.grid().size(), c), {}};
}

}  // namespace

TEST_CASE("bootstrap noise floor tracks the CLT rate") {
    CounterRng rng(71);
    const size_t n = 40000;
    std::vector<double> xs(n);
    for (size_t i = 0; i < n; ++i) xs[i] = rng.normal(i, 0, 0);
    double floor = bootstrap_noise_floor(xs);
    double clt = 1.0 / std::sqrt(static_cast<double>(n));
    CHECK(floor > 0.4 * clt);
    CHECK(floor < 2.5 * clt);
}

TEST_CASE("norm equivalence sandwich") {
    WeightedSpace space = default_space();
    Scenario heat = make_scenario("heat");
    TimeGrid grid(0.0, 1.0, 8);

    SECTION("constant test function pins the ratio at one") {
        auto rep = norm_equivalence_check(heat.coeffs, space, const_field(space, 1.0), grid,
                                          20000, 5, 0.99, 1.01);
        CHECK(rep.ratio == Catch::Approx(1.0).margin(1e-12));
        CHECK(rep.pass);
        CHECK(rep.middle > 0.0);
    }

    SECTION("frozen dynamics reproduce the outer integral for any test function") {
        CoefficientSet frozen = heat.coeffs;
        frozen.sigma = [](const Vec& x) { return Mat(x.dim()); };
        WeightedField bump = make_field(space, [](const Vec& x) {
            double s = x.norm() / 2.0;
            return s >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - s * s));
        });
        auto rep = norm_equivalence_check(frozen, space, bump, grid, 20000, 5, 0.99, 1.01);
        CHECK(rep.ratio == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("diffusive bump ratio lands in the coarse configured window") {
        WeightedField bump = make_field(space, [](const Vec& x) {
            double s = x.norm() / 2.0;
            return s >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - s * s));
        });
        auto rep = norm_equivalence_check(heat.coeffs, space, bump, grid, 40000, 5, 0.2, 5.0);
        INFO("ratio " << rep.ratio << " noise " << rep.noise_floor);
        CHECK(rep.pass);
        CHECK(rep.middle > 0.0);
        CHECK(rep.ratio < 1.0);  // diffusion pushes mass into low-weight territory
    }

    SECTION("minimum path count is enforced") {
        CHECK_THROWS_AS(norm_equivalence_check(heat.coeffs, space, const_field(space, 1.0),
                                               grid, 100, 5, 0.2, 5.0),
                        std::invalid_argument);
    }
}

TEST_CASE("representation error") {
    WeightedSpace space = default_space();
    Scenario heat = make_scenario("heat");
    FdGrid fgrid{10.0, 1001, 0.0, 1.0, 500};
    FdSolution fd = fd_solve(heat.coeffs, heat.driver, fgrid);

    SECTION("identical inputs give zero") {
        WeightedField self{space.grid(), 1, {}, {}};
        self.values.resize(self.grid.size());
        int k0 = fd.time_index(0.0);
        for (size_t j = 0; j < self.grid.size(); ++j)
            self.values[j] = fd.interp_u(k0, self.grid.node(j)[0]);
        CHECK(representation_error(self, fd, space, 0.0) == 0.0);
    }

    SECTION("solver field vs oracle on the heat scenario") {
        TimeGrid grid(0.0, 1.0, 50);
        auto ens = weighted_ensemble(heat.coeffs, space, 50000, grid, 11);
        auto sol = solve_bsde(ens, heat.driver, bins32(), 3);
        WeightedField field = representation_field(sol, space);
        double err = representation_error(field, fd, space, 0.0);
        INFO("representation error " << err);
        CHECK(err < 0.08);
    }

    SECTION("shared exact constant solution") {
        Scenario ac = make_scenario("allen-cahn-const");
        Driver fn = truncate_driver(ac.driver, 2.0);
        FdSolution fd_ac = fd_solve(ac.coeffs, fn, FdGrid{10.0, 501, 0.0, 1.0, 200});
        TimeGrid grid(0.0, 1.0, 25);
        auto ens = weighted_ensemble(ac.coeffs, space, 20000, grid, 13);
        auto sol = solve_bsde(ens, fn, bins32(), 3);
        WeightedField field = representation_field(sol, space);
        CHECK(representation_error(field, fd_ac, space, 0.0) < 1e-2);
    }

    SECTION("empty overlap is rejected") {
        WeightedField empty{space.grid(), 1,
                            std::vector<double>(space.grid().size(), 0.0),
                            std::vector<uint8_t>(space.grid().size(), 1)};
        CHECK_THROWS_AS(representation_error(empty, fd, space, 0.0), std::invalid_argument);
    }
}

TEST_CASE("representation error decreases along the resolution schedule") {
    WeightedSpace space = default_space();
    Scenario heat = make_scenario("heat");
    FdGrid fgrid{10.0, 1001, 0.0, 1.0, 500};
    FdSolution fd = fd_solve(heat.coeffs, heat.driver, fgrid);

    struct Point {
        size_t M;
        int N;
    };
    std::vector<Point> schedule = {{20000, 25}, {100000, 50}, {500000, 100}};
    std::vector<double> errs;
    for (const auto& pt : schedule) {
        TimeGrid grid(0.0, 1.0, pt.N);
        auto ens = weighted_ensemble(heat.coeffs, space, pt.M, grid, 47);
        auto sol = solve_bsde(ens, heat.driver, bins32(), 3);
        WeightedField field = representation_field(sol, space);
        errs.push_back(representation_error(field, fd, space, 0.0));
    }
    INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    // noise allowance: two sigma of the coarsest fit at its own scale
    double slack0 = 2.0 * std::sqrt(33.0 / schedule[0].M);
    double slack1 = 2.0 * std::sqrt(33.0 / schedule[1].M);
    CHECK(errs[1] <= errs[0] + slack0);
    CHECK(errs[2] <= errs[1] + slack1);
    CHECK(errs[2] < errs[0]);
}

TEST_CASE("flow identity") {
    WeightedSpace space = default_space();
    const double mass = rho_inv_integral(space);
    Scenario heat = make_scenario("heat");
    TimeGrid grid(0.0, 1.0, 20);

    SECTION("martingale identity map") {
        Driver drv = heat.driver;
        drv.h = [](const Vec& x) { return x[0]; };
        const size_t M = 20000;
        auto ens = weighted_ensemble(heat.coeffs, space, M, grid, 301);
        auto sol = solve_bsde(ens, drv, bins32(), 3);
        double disc = flow_identity_check(sol, ens, heat.coeffs, drv, bins32(), 10, 3, mass);
        // both fits approximate the identity; tolerance is ~2x the pooled
        // fit-noise scale sqrt(mass * T * n_basis / M)
        double floor = std::sqrt(mass * 33.0 / static_cast<double>(M));
        INFO("discrepancy " << disc << " floor " << floor);
        CHECK(disc <= 2.0 * std::sqrt(2.0) * floor);
    }

    SECTION("deterministic scenario gives exact equality") {
        CoefficientSet frozen = heat.coeffs;
        frozen.sigma = [](const Vec& x) { return Mat(x.dim()); };
        frozen.ellipticity = 0.0;
        Driver drv = heat.driver;
        drv.f = [](double, const Vec&, double y, const Vec&) { return -y; };
        drv.h = [](const Vec&) { return 1.0; };
        auto ens = weighted_ensemble(frozen, space, 10000, grid, 5);
        auto sol = solve_bsde(ens, drv, bins32(), 6);
        double disc = flow_identity_check(sol, ens, frozen, drv, bins32(), 10, 6, mass);
        CHECK(disc < 1e-10);
    }

    SECTION("exact constant solution") {
        Scenario ac = make_scenario("allen-cahn-const");
        Driver fn = truncate_driver(ac.driver, 2.0);
        auto ens = weighted_ensemble(ac.coeffs, space, 10000, grid, 5);
        auto sol = solve_bsde(ens, fn, bins32(), 3);
        double disc = flow_identity_check(sol, ens, ac.coeffs, fn, bins32(), 10, 3, mass);
        CHECK(disc < 1e-10);
    }

    SECTION("discrepancy is stable under the restart seed") {
        Driver drv = heat.driver;
        drv.h = [](const Vec& x) { return x[0]; };
        const size_t M = 20000;
        auto ens = weighted_ensemble(heat.coeffs, space, M, grid, 301);
        auto sol = solve_bsde(ens, drv, bins32(), 3);
        double d1 = flow_identity_check(sol, ens, heat.coeffs, drv, bins32(), 10, 3, mass);
        PathEnsemble reseeded = ens;
        reseeded.seed = 999331;  // restart increments change, start states do not
        double d2 = flow_identity_check(sol, reseeded, heat.coeffs, drv, bins32(), 10, 3, mass);
        double floor = std::sqrt(mass * 33.0 / static_cast<double>(M));
        CHECK(std::abs(d1 - d2) <= 3.0 * floor);
    }

    SECTION("boundary steps are rejected") {
        auto ens = weighted_ensemble(heat.coeffs, space, 10000, grid, 5);
        auto sol = solve_bsde(ens, heat.driver, bins32(), 3);
        CHECK_THROWS_AS(
            flow_identity_check(sol, ens, heat.coeffs, heat.driver, bins32(), 0, 3, mass),
            std::out_of_range);
        CHECK_THROWS_AS(flow_identity_check(sol, ens, heat.coeffs, heat.driver, bins32(),
                                            grid.n_steps, 3, mass),
                        std::out_of_range);
    }
}

TEST_CASE("z-field consistency with the oracle gradient") {
    WeightedSpace space = default_space();
    Scenario heat = make_scenario("heat");

    SECTION("constant solution: both gradients vanish") {
        Scenario ac = make_scenario("allen-cahn-const");
        Driver fn = truncate_driver(ac.driver, 2.0);
        FdSolution fd = fd_solve(ac.coeffs, fn, FdGrid{10.0, 501, 0.0, 1.0, 200});
        TimeGrid grid(0.0, 1.0, 20);
        auto ens = weighted_ensemble(ac.coeffs, space, 10000, grid, 3);
        auto sol = solve_bsde(ens, fn, bins32(), 3);
        CHECK(z_gradient_consistency(sol, fd, space) < 1e-9);
    }

    SECTION("identity terminal: unit gradient on both sides") {
        Driver drv = heat.driver;
        drv.h = [](const Vec& x) { return x[0]; };
        FdSolution fd = fd_solve(heat.coeffs, drv, FdGrid{15.0, 1501, 0.0, 1.0, 400});
        TimeGrid grid(0.0, 1.0, 25);
        const size_t M = 50000;
        auto ens = weighted_ensemble(heat.coeffs, space, M, grid, 7);
        auto sol = solve_bsde(ens, drv, bins32(), 3);
        double dist = z_gradient_consistency(sol, fd, space);
        INFO("distance " << dist);
        CHECK(dist < 0.05);
    }

    SECTION("heat scenario stays under the pinned cap") {
        FdSolution fd = fd_solve(heat.coeffs, heat.driver, FdGrid{10.0, 1001, 0.0, 1.0, 500});
        TimeGrid grid(0.0, 1.0, 50);
        auto ens = weighted_ensemble(heat.coeffs, space, 50000, grid, 7);
        auto sol = solve_bsde(ens, heat.driver, bins32(), 3);
        double dist = z_gradient_consistency(sol, fd, space);
        INFO("distance " << dist);
        CHECK(dist < 0.12);
    }
}
