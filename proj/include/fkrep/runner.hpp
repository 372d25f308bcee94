#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "fkrep/bsde_solver.hpp"
#include "fkrep/config.hpp"
#include "fkrep/fd_solver.hpp"
#include "fkrep/forward_sde.hpp"
#include "fkrep/scenarios.hpp"
#include "fkrep/verification.hpp"

namespace fkrep {

/// 17 significant digits: round-trippable doubles, byte-stable across runs.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// git-style blob hash: sha1("blob <len>\0" + bytes), hex-encoded.
inline std::string git_blob_sha1(const std::string& bytes) {
    std::string header = "blob " + std::to_string(bytes.size());
    header.push_back('\0');
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

struct VerificationRow {
    std::string check;
    double value = 0;
    double tolerance = 0;
    bool pass = false;
    double noise_floor = 0;
};

struct ExitReport {
    bool ok = true;
    std::vector<VerificationRow> rows;
    std::map<std::string, std::string> manifest;
    std::filesystem::path out_dir;

    int exit_code() const { return ok ? 0 : 1; }
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
}

inline double estimate_h_sup(const Driver& driver, const WeightedSpace& space) {
    QuadGrid g = space.grid();
    double mx = 0;
    for (size_t i = 0; i < g.size(); ++i) mx = std::max(mx, std::abs(driver.h(g.node(i))));
    return mx;
}

struct StageTimer {
    std::map<std::string, std::string>& manifest;
    std::string key;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    StageTimer(std::map<std::string, std::string>& m, std::string k) : manifest(m), key(std::move(k)) {}
    ~StageTimer() {
        double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", s);
        manifest["wall_time_" + key + "_s"] = buf;
    }
};

}  // namespace detail

/// Full pipeline: forward simulation, truncated backward solve, optional
/// finite-difference oracle, requested verification checks, reproducible CSV
/// artifacts plus a manifest. Exit status is nonzero iff a check fails.
inline ExitReport run(const RunConfig& cfg) {
    ExitReport report;
    report.out_dir = cfg.output_dir;
    std::filesystem::create_directories(report.out_dir);

    // echo every resolved value
    {
        std::istringstream echo(serialize_config(cfg));
        std::string line;
        while (std::getline(echo, line)) {
            size_t eq = line.find('=');
            if (eq != std::string::npos)
                report.manifest["config." + detail::trim(line.substr(0, eq))] =
                    detail::trim(line.substr(eq + 1));
        }
    }
    report.manifest["config.basis_kind_resolved"] = cfg.resolved_basis_kind();
    report.manifest["config.basis_size_resolved"] = std::to_string(cfg.resolved_basis_size());
    report.manifest["workers"] = std::to_string(worker_count());

    Scenario sc = make_scenario(cfg.scenario);
    if (sc.coeffs.d != cfg.d)
        throw std::invalid_argument("run: scenario '" + cfg.scenario + "' has d = " +
                                    std::to_string(sc.coeffs.d) + ", config says " +
                                    std::to_string(cfg.d));
    if (sc.assumptions_violated) report.manifest["assumptions_violated"] = "true";

    WeightedSpace space(cfg.d, cfg.q, cfg.L_domain, cfg.n_quad);
    TimeGrid grid(cfg.t, cfg.T, cfg.N_steps);
    const double mass = rho_inv_integral(space);

    double trunc_n = cfg.truncation_n;
    if (trunc_n <= 0) trunc_n = 2.0 * std::max(1.0, detail::estimate_h_sup(sc.driver, space));
    report.manifest["truncation_n_resolved"] = fmt17(trunc_n);
    Driver fn = truncate_driver(sc.driver, trunc_n);

    PathEnsemble ens;
    {
        detail::StageTimer timer(report.manifest, "simulate");
        auto x0 = sample_from_weight_density(space, cfg.M, cfg.seed);
        ens = simulate_forward(sc.coeffs, x0, grid, cfg.seed);
    }

    RegressionBasis basis{cfg.resolved_basis_kind() == "piecewise-linear-bins"
                              ? BasisKind::PiecewiseLinearBins
                              : BasisKind::GlobalPolynomial,
                          cfg.resolved_basis_size()};
    BsdeSolution sol;
    {
        detail::StageTimer timer(report.manifest, "solve_bsde");
        sol = solve_bsde(ens, fn, basis, cfg.picard_iters);
    }
    WeightedField u_field = representation_field(sol, space);

    bool want_fd = cfg.d == 1;
    FdSolution fd;
    if (want_fd) {
        detail::StageTimer timer(report.manifest, "fd_solve");
        FdGrid fg{cfg.fd_L, static_cast<int>(std::lround(2.0 * cfg.fd_L / cfg.fd_dx)) + 1, cfg.t,
                  cfg.T, static_cast<int>(std::lround((cfg.T - cfg.t) / cfg.fd_dt))};
        fd = fd_solve(sc.coeffs, fn, fg);
        report.manifest["fd_cfl"] = fmt17(fd.cfl);
    }

    // checks
    for (const std::string& name : cfg.checks) {
        VerificationRow row;
        row.check = name;
        if (name == "representation-error") {
            if (!want_fd) continue;
            row.value = representation_error(u_field, fd, space, cfg.t);
            row.tolerance = cfg.rep_error_cap;
            row.pass = row.value < row.tolerance;
        } else if (name == "z-gradient") {
            if (!want_fd) continue;
            row.value = z_gradient_consistency(sol, fd, space);
            row.tolerance = cfg.z_consistency_cap;
            row.pass = row.value < row.tolerance;
        } else if (name == "flow-identity") {
            int mid = cfg.N_steps / 2;
            std::vector<double> per_path(sol.M);
            row.value = flow_identity_check(sol, ens, sc.coeffs, fn, basis, mid,
                                            cfg.picard_iters, mass);
            // floor from the pathwise Y spread at the restart node
            for (size_t m = 0; m < sol.M; ++m) per_path[m] = sol.Y[sol.y_index(m, mid)];
            row.noise_floor = bootstrap_noise_floor(per_path);
            row.tolerance = cfg.noise_mult * row.noise_floor + cfg.flow_cap;
            row.pass = row.value < row.tolerance;
        } else if (name == "norm-equivalence") {
            WeightedField one{space.grid(), 1, std::vector<double>(space.grid().size(), 1.0), {}};
            SandwichReport c1 = norm_equivalence_check(sc.coeffs, space, one, grid,
                                                       std::max<size_t>(10000, cfg.M / 8),
                                                       cfg.seed + 7, 0.99, 1.01);
            VerificationRow cr{"norm-equivalence/const", c1.ratio, 0.01, c1.pass, c1.noise_floor};
            report.rows.push_back(cr);
            WeightedField bump = make_field(space, [](const Vec& x) {
                double s = x.norm() / 2.0;
                return s >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - s * s));
            });
            SandwichReport c2 = norm_equivalence_check(sc.coeffs, space, bump, grid,
                                                       std::max<size_t>(10000, cfg.M / 8),
                                                       cfg.seed + 8, cfg.norm_band_lo,
                                                       cfg.norm_band_hi);
            row.check = "norm-equivalence/bump";
            row.value = c2.ratio;
            row.tolerance = cfg.norm_band_hi;
            row.noise_floor = c2.noise_floor;
            row.pass = c2.pass;
        } else if (name == "apriori-moments") {
            MomentReport mr = apriori_moment_report(sol, fn, space, cfg.C_p);
            row.value = std::max(mr.A, mr.B);
            row.tolerance = mr.R;
            row.pass = mr.within_bound();
        } else {
            throw std::invalid_argument("run: unknown check '" + name + "'");
        }
        report.rows.push_back(row);
    }
    for (const auto& r : report.rows) report.ok = report.ok && r.pass;

    // u_compare.csv: the step-0 field against the oracle on the space grid
    std::string u_csv = "t,x,u_bsde,u_fd,abs_err\n";
    {
        QuadGrid g = space.grid();
        int k0 = want_fd ? fd.time_index(cfg.t) : 0;
        for (size_t j = 0; j < g.size(); ++j) {
            Vec x = g.node(j);
            if (cfg.d == 1 && std::abs(x[0]) > cfg.fd_L) continue;
            double ub = u_field.values[j];
            double uf = want_fd ? fd.interp_u(k0, x[0])
                                : (sc.exact_u ? (*sc.exact_u)(cfg.t, x, cfg.T) : 0.0);
            u_csv += fmt17(cfg.t) + "," + fmt17(x[0]) + "," + fmt17(ub) + "," + fmt17(uf) + "," +
                     fmt17(std::abs(ub - uf)) + "\n";
        }
    }
    detail::write_file(report.out_dir / "u_compare.csv", u_csv);

    std::string v_csv = "check,value,tolerance,pass,noise_floor\n";
    for (const auto& r : report.rows)
        v_csv += r.check + "," + fmt17(r.value) + "," + fmt17(r.tolerance) + "," +
                 (r.pass ? "pass" : "fail") + "," + fmt17(r.noise_floor) + "\n";
    detail::write_file(report.out_dir / "verification.csv", v_csv);

    std::string fd_csv;
    if (want_fd) {
        fd_csv = "t,x,u,sigma_grad_u\n";
        int slices = std::max(2, cfg.fd_slices);
        for (int s = 0; s < slices; ++s) {
            int k = static_cast<int>(std::lround(static_cast<double>(s) * fd.grid.n_steps /
                                                 (slices - 1)));
            for (int j = 0; j < fd.grid.n_nodes; ++j)
                fd_csv += fmt17(fd.grid.time(k)) + "," + fmt17(fd.grid.x(j)) + "," +
                          fmt17(fd.value(k, j)) + "," + fmt17(fd.sigma_grad_u[fd.idx(k, j)]) + "\n";
        }
        detail::write_file(report.out_dir / "fd_slices.csv", fd_csv);
    }

    report.manifest["content_hash.u_compare.csv"] = git_blob_sha1(u_csv);
    report.manifest["content_hash.verification.csv"] = git_blob_sha1(v_csv);
    if (want_fd) report.manifest["content_hash.fd_slices.csv"] = git_blob_sha1(fd_csv);
    report.manifest["checks_passed"] = report.ok ? "true" : "false";

    std::string mtext;
    for (const auto& [k, v] : report.manifest) mtext += k + " = " + v + "\n";
    detail::write_file(report.out_dir / "manifest", mtext);
    return report;
}

/// Truncation sweep entrypoint: shared ensemble across levels, one CSV row
/// per level with the distance to the largest level and the moment
/// estimates.
inline ExitReport run_sweep(const RunConfig& cfg, const std::vector<double>& levels) {
    ExitReport report;
    report.out_dir = cfg.output_dir;
    std::filesystem::create_directories(report.out_dir);

    Scenario sc = make_scenario(cfg.scenario);
    WeightedSpace space(cfg.d, cfg.q, cfg.L_domain, cfg.n_quad);
    TimeGrid grid(cfg.t, cfg.T, cfg.N_steps);
    const double mass = rho_inv_integral(space);
    if (sc.assumptions_violated) report.manifest["assumptions_violated"] = "true";

    auto x0 = sample_from_weight_density(space, cfg.M, cfg.seed);
    PathEnsemble ens = simulate_forward(sc.coeffs, x0, grid, cfg.seed);
    RegressionBasis basis{cfg.resolved_basis_kind() == "piecewise-linear-bins"
                              ? BasisKind::PiecewiseLinearBins
                              : BasisKind::GlobalPolynomial,
                          cfg.resolved_basis_size()};

    auto entries = truncation_sweep(ens, sc.driver, basis, levels, cfg.picard_iters, mass);
    std::string csv = "n,delta,A,B,R\n";
    for (const auto& e : entries) {
        MomentReport mr = apriori_moment_report(e.solution, truncate_driver(sc.driver, e.level),
                                                space, cfg.C_p);
        csv += fmt17(e.level) + "," + fmt17(e.delta) + "," + fmt17(mr.A) + "," + fmt17(mr.B) +
               "," + fmt17(mr.R) + "\n";
        VerificationRow row{"sweep/n=" + fmt17(e.level), e.delta, 0.0, true, 0.0};
        report.rows.push_back(row);
    }
    detail::write_file(report.out_dir / "sweep.csv", csv);
    report.manifest["content_hash.sweep.csv"] = git_blob_sha1(csv);

    std::string mtext;
    for (const auto& [k, v] : report.manifest) mtext += k + " = " + v + "\n";
    detail::write_file(report.out_dir / "manifest", mtext);
    return report;
}

}  // namespace fkrep
