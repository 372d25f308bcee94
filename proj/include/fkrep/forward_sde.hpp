#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkrep/coefficients.hpp"
#include "fkrep/common.hpp"
#include "fkrep/rng.hpp"

namespace fkrep {

struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int n_steps = 100;

    TimeGrid() = default;
    TimeGrid(double t0_, double T_, int n) : t0(t0_), T(T_), n_steps(n) {
        if (n < 0) throw std::invalid_argument("TimeGrid: negative step count");
        if (n > 0 && !(t0 < T)) throw std::invalid_argument("TimeGrid: need t0 < T");
        if (n == 0 && t0 != T) throw std::invalid_argument("TimeGrid: zero-length grid needs t0 == T");
        if (t0 < 0) throw std::invalid_argument("TimeGrid: t0 must be nonnegative");
    }
    double dt() const { return n_steps > 0 ? (T - t0) / n_steps : 0.0; }
    double time(int i) const { return t0 + i * dt(); }

    bool operator==(const TimeGrid&) const = default;
};

/// M forward trajectories with their driving increments. X is stored flat
/// (path-major, then step, then component); dW likewise. The increments are
/// kept because the Z-regression needs exactly the noise that drove X.
struct PathEnsemble {
    TimeGrid grid;
    int d = 1;
    size_t M = 0;
    uint64_t seed = 0;
    std::vector<Vec> x0;
    std::vector<double> X;   // M * (n_steps+1) * d
    std::vector<double> dW;  // M * n_steps * d

    size_t x_index(size_t m, int step, int c) const {
        return (m * static_cast<size_t>(grid.n_steps + 1) + static_cast<size_t>(step)) *
                   static_cast<size_t>(d) +
               static_cast<size_t>(c);
    }
    size_t w_index(size_t m, int step, int c) const {
        return (m * static_cast<size_t>(grid.n_steps) + static_cast<size_t>(step)) *
                   static_cast<size_t>(d) +
               static_cast<size_t>(c);
    }
    Vec state(size_t m, int step) const {
        Vec x(d);
        for (int c = 0; c < d; ++c) x[c] = X[x_index(m, step, c)];
        return x;
    }
    Vec increment(size_t m, int step) const {
        Vec w(d);
        for (int c = 0; c < d; ++c) w[c] = dW[w_index(m, step, c)];
        return w;
    }
};

/// Euler-Maruyama over the grid. Bitwise deterministic in (seed, M, grid)
/// for any worker count: the noise is counter-indexed and every path writes
/// only its own slots.
inline PathEnsemble simulate_forward(const CoefficientSet& coeffs, const std::vector<Vec>& x0,
                                     const TimeGrid& grid, uint64_t seed) {
    if (x0.empty()) throw std::invalid_argument("simulate_forward: empty start set");
    const int d = coeffs.d;
    for (const Vec& x : x0)
        if (x.dim() != d) throw std::invalid_argument("simulate_forward: x0 dimension mismatch");

    PathEnsemble ens;
    ens.grid = grid;
    ens.d = d;
    ens.M = x0.size();
    ens.seed = seed;
    ens.x0 = x0;
    ens.X.resize(ens.M * static_cast<size_t>(grid.n_steps + 1) * static_cast<size_t>(d));
    ens.dW.resize(ens.M * static_cast<size_t>(grid.n_steps) * static_cast<size_t>(d));

    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    CounterRng rng(seed);
    std::vector<size_t> bad_path(1 + (ens.M + 16383) / 16384, SIZE_MAX);

    parallel_chunks(ens.M, 16384, [&](size_t chunk, size_t mb, size_t me) {
        for (size_t m = mb; m < me; ++m) {
            Vec x = x0[m];
            for (int c = 0; c < d; ++c) ens.X[ens.x_index(m, 0, c)] = x[c];
            for (int i = 0; i < grid.n_steps; ++i) {
                Vec bx = coeffs.b(x);
                Mat sx = coeffs.sigma(x);
                Vec w(d);
                for (int c = 0; c < d; ++c) {
                    w[c] = sdt * rng.normal(m, static_cast<uint64_t>(i), static_cast<uint64_t>(c));
                    ens.dW[ens.w_index(m, i, c)] = w[c];
                }
                x += dt * bx + sx * w;
                if (!x.finite()) {
                    bad_path[chunk] = std::min(bad_path[chunk], m);
                    return;
                }
                for (int c = 0; c < d; ++c) ens.X[ens.x_index(m, i + 1, c)] = x[c];
            }
        }
    });

    for (size_t bp : bad_path)
        if (bp != SIZE_MAX)
            throw std::runtime_error("simulate_forward: non-finite state on path " +
                                     std::to_string(bp));
    return ens;
}

/// New ensemble restarted at a time node from the states reached there, with
/// fresh increments from a derived seed. step = 0 reproduces the input.
inline PathEnsemble resimulate_from(const CoefficientSet& coeffs, const PathEnsemble& ens,
                                    int step) {
    if (step < 0 || step > ens.grid.n_steps)
        throw std::out_of_range("resimulate_from: step out of range");
    std::vector<Vec> starts(ens.M, Vec(ens.d));
    for (size_t m = 0; m < ens.M; ++m) starts[m] = ens.state(m, step);
    const double t_restart = (step == ens.grid.n_steps) ? ens.grid.T : ens.grid.time(step);
    TimeGrid rest(t_restart, ens.grid.T, ens.grid.n_steps - step);
    uint64_t derived = CounterRng::derive(ens.seed, static_cast<uint64_t>(step));
    if (rest.n_steps == 0) {
        PathEnsemble out;
        out.grid = rest;
        out.d = ens.d;
        out.M = ens.M;
        out.seed = derived;
        out.x0 = starts;
        out.X.resize(ens.M * static_cast<size_t>(ens.d));
        for (size_t m = 0; m < ens.M; ++m)
            for (int c = 0; c < ens.d; ++c) out.X[m * static_cast<size_t>(ens.d) + static_cast<size_t>(c)] = starts[m][c];
        return out;
    }
    return simulate_forward(coeffs, starts, rest, derived);
}

/// Ensemble mean of g(X_step), reduced in fixed order.
inline double ensemble_mean(const PathEnsemble& ens, int step,
                            const std::function<double(const Vec&)>& g) {
    return parallel_sum(ens.M, [&](size_t m) { return g(ens.state(m, step)); }) /
           static_cast<double>(ens.M);
}

// --- binary dump -----------------------------------------------------------
// header: magic, M, N, d, seed as little-endian uint64, then X then dW as
// little-endian doubles.

inline constexpr uint64_t kEnsembleMagic = 0x464b424e53454d31ull;

inline void save_ensemble(const PathEnsemble& ens, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("save_ensemble: cannot open " + path);
    auto put_u64 = [&](uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        std::fwrite(b, 1, 8, fp);
    };
    put_u64(kEnsembleMagic);
    put_u64(ens.M);
    put_u64(static_cast<uint64_t>(ens.grid.n_steps));
    put_u64(static_cast<uint64_t>(ens.d));
    put_u64(ens.seed);
    double times[2] = {ens.grid.t0, ens.grid.T};
    std::fwrite(times, sizeof(double), 2, fp);
    std::fwrite(ens.X.data(), sizeof(double), ens.X.size(), fp);
    std::fwrite(ens.dW.data(), sizeof(double), ens.dW.size(), fp);
    std::fclose(fp);
}

inline PathEnsemble load_ensemble(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("load_ensemble: cannot open " + path);
    auto get_u64 = [&]() {
        unsigned char b[8];
        if (std::fread(b, 1, 8, fp) != 8) {
            std::fclose(fp);
            throw std::runtime_error("load_ensemble: truncated file");
        }
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    };
    if (get_u64() != kEnsembleMagic) {
        std::fclose(fp);
        throw std::runtime_error("load_ensemble: bad magic");
    }
    PathEnsemble ens;
    ens.M = get_u64();
    int n_steps = static_cast<int>(get_u64());
    ens.d = static_cast<int>(get_u64());
    ens.seed = get_u64();
    double times[2];
    if (std::fread(times, sizeof(double), 2, fp) != 2) {
        std::fclose(fp);
        throw std::runtime_error("load_ensemble: truncated header");
    }
    ens.grid = TimeGrid(times[0], times[1], n_steps);
    ens.X.resize(ens.M * static_cast<size_t>(n_steps + 1) * static_cast<size_t>(ens.d));
    ens.dW.resize(ens.M * static_cast<size_t>(n_steps) * static_cast<size_t>(ens.d));
    bool ok = std::fread(ens.X.data(), sizeof(double), ens.X.size(), fp) == ens.X.size() &&
              std::fread(ens.dW.data(), sizeof(double), ens.dW.size(), fp) == ens.dW.size();
    std::fclose(fp);
    if (!ok) throw std::runtime_error("load_ensemble: truncated data");
    ens.x0.resize(ens.M, Vec(ens.d));
    for (size_t m = 0; m < ens.M; ++m) ens.x0[m] = ens.state(m, 0);
    return ens;
}

}  // namespace fkrep
