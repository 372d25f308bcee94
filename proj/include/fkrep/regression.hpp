#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "fkrep/common.hpp"
#include "fkrep/forward_sde.hpp"

namespace fkrep {

enum class BasisKind { PiecewiseLinearBins, GlobalPolynomial };

struct RegressionBasis {
    BasisKind kind = BasisKind::PiecewiseLinearBins;
    int size = 32;  // bin count, or polynomial degree
};

inline std::string basis_kind_name(BasisKind k) {
    return k == BasisKind::PiecewiseLinearBins ? "piecewise-linear-bins" : "global-polynomial";
}

/// Self-contained evaluable regression function: knots+coefficients for the
/// hat basis, or standardized monomial coefficients. Evaluation is constant
/// beyond the end knots, so it is finite everywhere.
struct RegressionFit {
    BasisKind kind = BasisKind::PiecewiseLinearBins;
    int d = 1;
    std::vector<double> knots;  // piecewise-linear
    Vec mean, scale;            // polynomial standardization
    int degree = 0;
    std::vector<double> coeffs;
    Vec hull_lo, hull_hi;  // sample bounding box at the fitted step

    double eval(const Vec& x) const {
        if (kind == BasisKind::PiecewiseLinearBins) {
            double v = std::clamp(x[0], knots.front(), knots.back());
            auto it = std::upper_bound(knots.begin(), knots.end(), v);
            size_t k = std::min<size_t>(
                knots.size() - 1,
                std::max<size_t>(1, static_cast<size_t>(it - knots.begin())));
            double x0 = knots[k - 1], x1 = knots[k];
            double w = (x1 > x0) ? (v - x0) / (x1 - x0) : 0.0;
            return (1.0 - w) * coeffs[k - 1] + w * coeffs[k];
        }
        // monomials of the standardized coordinates, graded order
        std::array<double, 2> u{0, 0};
        for (int c = 0; c < d; ++c) u[static_cast<size_t>(c)] = (x[c] - mean[c]) / scale[c];
        double out = 0;
        size_t idx = 0;
        if (d == 1) {
            double pw = 1.0;
            for (int i = 0; i <= degree; ++i, pw *= u[0]) out += coeffs[idx++] * pw;
        } else {
            for (int total = 0; total <= degree; ++total)
                for (int i = total; i >= 0; --i)
                    out += coeffs[idx++] * std::pow(u[0], i) * std::pow(u[1], total - i);
        }
        return out;
    }

    bool inside_hull(const Vec& x) const {
        for (int c = 0; c < d; ++c)
            if (x[c] < hull_lo[c] || x[c] > hull_hi[c]) return false;
        return true;
    }

    /// Scales the represented function by a constant. Valid because both
    /// bases are linear in their coefficients.
    void scale_values(double c) {
        for (double& v : coeffs) v *= c;
    }
};

/// Least-squares projector onto the step basis built from one time slice of
/// the ensemble. The normal matrix is assembled once (chunk-deterministic)
/// and Cholesky-factored; every target at this step reuses the factor.
class StepRegression {
public:
    StepRegression(const RegressionBasis& basis, const PathEnsemble& ens, int step)
        : kind_(basis.kind), d_(ens.d), M_(ens.M) {
        hull_lo_ = Vec(d_);
        hull_hi_ = Vec(d_);
        for (int c = 0; c < d_; ++c) {
            hull_lo_[c] = std::numeric_limits<double>::infinity();
            hull_hi_[c] = -std::numeric_limits<double>::infinity();
        }
        for (size_t m = 0; m < M_; ++m)
            for (int c = 0; c < d_; ++c) {
                double v = ens.X[ens.x_index(m, step, c)];
                hull_lo_[c] = std::min(hull_lo_[c], v);
                hull_hi_[c] = std::max(hull_hi_[c], v);
            }

        if (kind_ == BasisKind::PiecewiseLinearBins) {
            if (d_ != 1)
                throw std::invalid_argument("piecewise-linear-bins basis requires d = 1");
            build_pl(basis.size, ens, step);
        } else {
            build_poly(basis.size, ens, step);
        }
        factorize();
    }

    struct Result {
        std::vector<double> coeffs;
        double rms_residual = 0.0;
    };

    /// Projects the target; optionally returns fitted values at the sample.
    Result fit(std::span<const double> target, std::vector<double>* fitted = nullptr) const {
        if (target.size() != M_) throw std::invalid_argument("StepRegression: target size");
        std::vector<double> rhs = assemble_rhs(target);
        Result res;
        res.coeffs = solve(rhs);
        std::vector<double> local;
        std::vector<double>& fv = fitted ? *fitted : local;
        fv.resize(M_);
        eval_at_sample(res.coeffs, fv);
        res.rms_residual = std::sqrt(std::max(
            0.0, parallel_sum(M_, [&](size_t m) { return sqr(target[m] - fv[m]); }) /
                     static_cast<double>(M_)));
        return res;
    }

    RegressionFit export_fit(std::vector<double> coeffs) const {
        RegressionFit f;
        f.kind = kind_;
        f.d = d_;
        f.knots = knots_;
        f.mean = mean_;
        f.scale = scale_;
        f.degree = degree_;
        f.coeffs = std::move(coeffs);
        f.hull_lo = hull_lo_;
        f.hull_hi = hull_hi_;
        return f;
    }

    int n_basis() const { return n_basis_; }
    int merged_bins() const { return merged_bins_; }
    bool degenerate() const { return degenerate_; }

private:
    BasisKind kind_;
    int d_;
    size_t M_;
    int n_basis_ = 0;

    // piecewise linear
    std::vector<double> knots_;
    std::vector<uint32_t> bin_of_path_;
    std::vector<double> wgt_of_path_;
    int merged_bins_ = 0;
    bool degenerate_ = false;

    // polynomial
    Vec mean_, scale_;
    int degree_ = 0;
    std::vector<double> sample_;  // M * d standardized coordinates

    std::vector<double> chol_;  // lower triangle of the factored normal matrix
    Vec hull_lo_, hull_hi_;

    void build_pl(int n_bins, const PathEnsemble& ens, int step) {
        if (n_bins < 1) throw std::invalid_argument("RegressionBasis: bins must be positive");
        std::vector<double> xs(M_);
        for (size_t m = 0; m < M_; ++m) xs[m] = ens.X[ens.x_index(m, step, 0)];
        std::sort(xs.begin(), xs.end());
        knots_.reserve(static_cast<size_t>(n_bins) + 1);
        for (int k = 0; k <= n_bins; ++k) {
            double level = static_cast<double>(k) / n_bins;
            double pos = level * static_cast<double>(M_ - 1);
            size_t lo = static_cast<size_t>(pos);
            double fr = pos - static_cast<double>(lo);
            double v = (lo + 1 < M_) ? (1.0 - fr) * xs[lo] + fr * xs[lo + 1] : xs[lo];
            // merge knots that coincide (ties in the sample)
            if (!knots_.empty() && v <= knots_.back() + 1e-12 * (1.0 + std::abs(v)))
                ++merged_bins_;
            else
                knots_.push_back(v);
        }
        if (knots_.size() < 2) {
            // fully degenerate sample: one flat bin
            knots_ = {knots_.front() - 0.5, knots_.front() + 0.5};
            degenerate_ = true;
        }
        n_basis_ = static_cast<int>(knots_.size());

        bin_of_path_.resize(M_);
        wgt_of_path_.resize(M_);
        parallel_chunks(M_, 16384, [&](size_t, size_t b, size_t e) {
            for (size_t m = b; m < e; ++m) {
                double v = std::clamp(ens.X[ens.x_index(m, step, 0)], knots_.front(), knots_.back());
                auto it = std::upper_bound(knots_.begin(), knots_.end(), v);
                size_t k = std::min<size_t>(knots_.size() - 1,
                                            std::max<size_t>(1, static_cast<size_t>(it - knots_.begin())));
                double x0 = knots_[k - 1], x1 = knots_[k];
                bin_of_path_[m] = static_cast<uint32_t>(k - 1);
                wgt_of_path_[m] = (x1 > x0) ? (v - x0) / (x1 - x0) : 0.0;
            }
        });
    }

    void build_poly(int degree, const PathEnsemble& ens, int step) {
        if (degree < 0) throw std::invalid_argument("RegressionBasis: degree must be >= 0");
        degree_ = degree;
        n_basis_ = (d_ == 1) ? degree + 1 : (degree + 1) * (degree + 2) / 2;
        mean_ = Vec(d_);
        scale_ = Vec(d_);
        for (int c = 0; c < d_; ++c) {
            double mu = parallel_sum(M_, [&](size_t m) { return ens.X[ens.x_index(m, step, c)]; }) /
                        static_cast<double>(M_);
            double var = parallel_sum(M_, [&](size_t m) {
                             return sqr(ens.X[ens.x_index(m, step, c)] - mu);
                         }) /
                         static_cast<double>(M_);
            mean_[c] = mu;
            scale_[c] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
        }
        sample_.resize(M_ * static_cast<size_t>(d_));
        for (size_t m = 0; m < M_; ++m)
            for (int c = 0; c < d_; ++c)
                sample_[m * static_cast<size_t>(d_) + static_cast<size_t>(c)] =
                    (ens.X[ens.x_index(m, step, c)] - mean_[c]) / scale_[c];
    }

    void basis_row(size_t m, double* phi) const {
        const double* u = &sample_[m * static_cast<size_t>(d_)];
        size_t idx = 0;
        if (d_ == 1) {
            double pw = 1.0;
            for (int i = 0; i <= degree_; ++i, pw *= u[0]) phi[idx++] = pw;
        } else {
            for (int total = 0; total <= degree_; ++total)
                for (int i = total; i >= 0; --i)
                    phi[idx++] = std::pow(u[0], i) * std::pow(u[1], total - i);
        }
    }

    void factorize() {
        const int n = n_basis_;
        const size_t chunk = 16384;
        const size_t n_chunks = (M_ + chunk - 1) / chunk;
        std::vector<std::vector<double>> partials(n_chunks,
                                                  std::vector<double>(static_cast<size_t>(n) * n, 0.0));
        if (kind_ == BasisKind::PiecewiseLinearBins) {
            parallel_chunks(M_, chunk, [&](size_t c, size_t b, size_t e) {
                auto& A = partials[c];
                for (size_t m = b; m < e; ++m) {
                    int k = static_cast<int>(bin_of_path_[m]);
                    double w1 = wgt_of_path_[m], w0 = 1.0 - w1;
                    A[static_cast<size_t>(k * n + k)] += w0 * w0;
                    A[static_cast<size_t>(k * n + k + 1)] += w0 * w1;
                    A[static_cast<size_t>((k + 1) * n + k + 1)] += w1 * w1;
                }
            });
        } else {
            parallel_chunks(M_, chunk, [&](size_t c, size_t b, size_t e) {
                auto& A = partials[c];
                std::vector<double> phi(static_cast<size_t>(n));
                for (size_t m = b; m < e; ++m) {
                    basis_row(m, phi.data());
                    for (int i = 0; i < n; ++i)
                        for (int j = i; j < n; ++j)
                            A[static_cast<size_t>(i * n + j)] += phi[static_cast<size_t>(i)] * phi[static_cast<size_t>(j)];
                }
            });
        }
        std::vector<double> A(static_cast<size_t>(n) * n, 0.0);
        for (const auto& part : partials)
            for (size_t i = 0; i < A.size(); ++i) A[i] += part[i];
        const double inv_m = 1.0 / static_cast<double>(M_);
        for (double& a : A) a *= inv_m;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < i; ++j)
                A[static_cast<size_t>(i * n + j)] = A[static_cast<size_t>(j * n + i)];

        // ridge keeps bin-degenerate steps solvable
        for (int i = 0; i < n; ++i) A[static_cast<size_t>(i * n + i)] += 1e-10;

        chol_.assign(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = A[static_cast<size_t>(i * n + j)];
                for (int k = 0; k < j; ++k)
                    s -= chol_[static_cast<size_t>(i * n + k)] * chol_[static_cast<size_t>(j * n + k)];
                if (i == j) {
                    if (s <= 1e-14) {
                        s = 1e-14;
                        degenerate_ = true;
                    }
                    chol_[static_cast<size_t>(i * n + i)] = std::sqrt(s);
                } else {
                    chol_[static_cast<size_t>(i * n + j)] = s / chol_[static_cast<size_t>(j * n + j)];
                }
            }
        }
    }

    std::vector<double> assemble_rhs(std::span<const double> target) const {
        const int n = n_basis_;
        const size_t chunk = 16384;
        const size_t n_chunks = (M_ + chunk - 1) / chunk;
        std::vector<std::vector<double>> partials(n_chunks, std::vector<double>(static_cast<size_t>(n), 0.0));
        if (kind_ == BasisKind::PiecewiseLinearBins) {
            parallel_chunks(M_, chunk, [&](size_t c, size_t b, size_t e) {
                auto& r = partials[c];
                for (size_t m = b; m < e; ++m) {
                    int k = static_cast<int>(bin_of_path_[m]);
                    double w1 = wgt_of_path_[m];
                    r[static_cast<size_t>(k)] += (1.0 - w1) * target[m];
                    r[static_cast<size_t>(k + 1)] += w1 * target[m];
                }
            });
        } else {
            parallel_chunks(M_, chunk, [&](size_t c, size_t b, size_t e) {
                auto& r = partials[c];
                std::vector<double> phi(static_cast<size_t>(n));
                for (size_t m = b; m < e; ++m) {
                    basis_row(m, phi.data());
                    for (int i = 0; i < n; ++i) r[static_cast<size_t>(i)] += phi[static_cast<size_t>(i)] * target[m];
                }
            });
        }
        std::vector<double> rhs(static_cast<size_t>(n), 0.0);
        for (const auto& part : partials)
            for (int i = 0; i < n; ++i) rhs[static_cast<size_t>(i)] += part[static_cast<size_t>(i)];
        for (double& r : rhs) r /= static_cast<double>(M_);
        return rhs;
    }

    std::vector<double> solve(std::vector<double> rhs) const {
        const int n = n_basis_;
        for (int i = 0; i < n; ++i) {
            double s = rhs[static_cast<size_t>(i)];
            for (int k = 0; k < i; ++k) s -= chol_[static_cast<size_t>(i * n + k)] * rhs[static_cast<size_t>(k)];
            rhs[static_cast<size_t>(i)] = s / chol_[static_cast<size_t>(i * n + i)];
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = rhs[static_cast<size_t>(i)];
            for (int k = i + 1; k < n; ++k) s -= chol_[static_cast<size_t>(k * n + i)] * rhs[static_cast<size_t>(k)];
            rhs[static_cast<size_t>(i)] = s / chol_[static_cast<size_t>(i * n + i)];
        }
        return rhs;
    }

    void eval_at_sample(const std::vector<double>& coeffs, std::vector<double>& out) const {
        const int n = n_basis_;
        if (kind_ == BasisKind::PiecewiseLinearBins) {
            parallel_chunks(M_, 16384, [&](size_t, size_t b, size_t e) {
                for (size_t m = b; m < e; ++m) {
                    int k = static_cast<int>(bin_of_path_[m]);
                    double w1 = wgt_of_path_[m];
                    out[m] = (1.0 - w1) * coeffs[static_cast<size_t>(k)] + w1 * coeffs[static_cast<size_t>(k + 1)];
                }
            });
        } else {
            parallel_chunks(M_, 16384, [&](size_t, size_t b, size_t e) {
                std::vector<double> phi(static_cast<size_t>(n));
                for (size_t m = b; m < e; ++m) {
                    basis_row(m, phi.data());
                    double s = 0;
                    for (int i = 0; i < n; ++i) s += phi[static_cast<size_t>(i)] * coeffs[static_cast<size_t>(i)];
                    out[m] = s;
                }
            });
        }
    }
};

}  // namespace fkrep
