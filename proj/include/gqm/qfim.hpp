#pragma once

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gqm/family.hpp"

namespace gqm {

enum class QfimMethod { mixed, williamson, compact, limit, pure, regularized, cqfim, automatic };

inline const char* method_name(QfimMethod m) {
    switch (m) {
        case QfimMethod::mixed: return "mixed";
        case QfimMethod::williamson: return "williamson";
        case QfimMethod::compact: return "compact";
        case QfimMethod::limit: return "limit";
        case QfimMethod::pure: return "pure";
        case QfimMethod::regularized: return "regularized";
        case QfimMethod::cqfim: return "cqfim";
        case QfimMethod::automatic: return "auto";
    }
    return "unknown";
}

struct QfimResult {
    RealMat H;  // symmetrized on output
    QfimMethod method = QfimMethod::mixed;
    std::optional<int> series_terms;
    std::optional<RealMat> error_bound;  // |remainder| bounds of the limit route
    std::vector<bool> pure_mode_flags;   // per sorted-spectrum mode
    double raw_asymmetry = 0.0;          // max |H - H^T| before symmetrization
    double max_imag_residue = 0.0;       // largest imaginary part discarded
};

struct RegularizationOptions {
    /// Explicit nu nodes (> 1). Empty selects the adaptive geometric default
    /// nu_m = 1 + 0.01 * 2^-m, which is extrapolated until the convergence
    /// criterion is met.
    std::vector<double> nu_schedule;
    double extrap_tol = tol::extrapolation;
    int max_nodes = 10;
};

namespace detail {

inline Vec vectorize(const Mat& m) {
    return Eigen::Map<const Vec>(m.data(), m.size());
}

/// M_nu = nu^2 conj(sigma) (x) sigma - K (x) K.
inline Mat mixing_matrix(const Mat& sigma, double nu_squared = 1.0) {
    const int n = static_cast<int>(sigma.rows()) / 2;
    Mat k = symplectic_form(n);
    return nu_squared * Mat(Eigen::kroneckerProduct(sigma.conjugate(), sigma)) -
           Mat(Eigen::kroneckerProduct(k, k));
}

inline std::vector<bool> pure_flags(const RealVec& spectrum, double pure_tol) {
    std::vector<bool> flags(spectrum.size());
    for (int k = 0; k < spectrum.size(); ++k) flags[k] = std::abs(spectrum(k) - 1.0) <= pure_tol;
    return flags;
}

/// 2 Re(dd_i^dag sigma^{-1} dd_j); real symmetric for structured inputs.
inline RealMat displacement_term(const DerivativeBundle& b, const Mat& sigma_inv,
                                 double* imag_residue) {
    const int p = b.params();
    RealMat out(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            Complex v = 2.0 * (b.dd[i].adjoint() * sigma_inv * b.dd[j])(0);
            out(i, j) = v.real();
            if (imag_residue) *imag_residue = std::max(*imag_residue, std::abs(v.imag()));
        }
    return out;
}

inline QfimResult finalize(RealMat h, QfimMethod method, const DerivativeBundle& b,
                           double pure_tol, double imag_residue) {
    QfimResult out;
    out.raw_asymmetry = (h - h.transpose()).cwiseAbs().maxCoeff();
    out.H = 0.5 * (h + h.transpose());
    out.method = method;
    out.pure_mode_flags = pure_flags(b.spectrum, pure_tol);
    out.max_imag_residue = imag_residue;
    return out;
}

inline void require_symplectic(const DerivativeBundle& b, const char* who) {
    if (!b.has_symplectic)
        throw ValidationError(std::string(who) +
                              ": bundle carries no symplectic data (S, lambda, dS); build the "
                              "family with an analytic symplectic evaluator or enable "
                              "force_fd_symplectic");
}

}  // namespace detail

/// Smallest eigenvalue of a symmetric matrix; positive semidefiniteness probe.
inline double min_eigenvalue(const RealMat& h) {
    Eigen::SelfAdjointEigenSolver<RealMat> es(h);
    return es.eigenvalues().minCoeff();
}

/// Mixed-state formula:
/// H^{ij} = 1/2 vec(d_i sigma)^dag M^{-1} vec(d_j sigma) + 2 d_i d^dag sigma^{-1} d_j d
/// with M = conj(sigma) (x) sigma - K (x) K. Requires every mode mixed.
inline QfimResult qfim_mixed(const DerivativeBundle& b, double pure_tol = tol::pure) {
    if (b.spectrum.minCoeff() <= 1.0 + pure_tol)
        throw PureModeError(
            "qfim_mixed: a mode is pure (lambda = 1); use qfim_regularized or qfim_williamson");
    const int p = b.params();
    const Mat& sigma = b.state.sigma();
    Eigen::PartialPivLU<Mat> lu(detail::mixing_matrix(sigma));
    std::vector<Vec> solved(p);
    for (int j = 0; j < p; ++j) solved[j] = lu.solve(detail::vectorize(b.dsigma[j]));
    double imag_residue = 0.0;
    RealMat h(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            Complex v = 0.5 * detail::vectorize(b.dsigma[i]).dot(solved[j]);
            h(i, j) = v.real();
            imag_residue = std::max(imag_residue, std::abs(v.imag()));
        }
    Eigen::LLT<Mat> llt(sigma);
    Mat sigma_inv = llt.solve(Mat::Identity(sigma.rows(), sigma.cols()));
    h += detail::displacement_term(b, sigma_inv, &imag_residue);
    return detail::finalize(std::move(h), QfimMethod::mixed, b, pure_tol, imag_residue);
}

/// Williamson-form QFIM. Terms with lambda_k(eps) = lambda_l(eps) = 1 are set
/// to zero (the QFIM convention at points of purity), as is the d lambda term
/// of every pure mode; the formula is otherwise exact for any state.
inline QfimResult qfim_williamson(const DerivativeBundle& b, double pure_tol = tol::pure) {
    detail::require_symplectic(b, "qfim_williamson");
    const int p = b.params();
    const int n = static_cast<int>(b.lambdas.size());
    std::vector<bool> pure(n);
    for (int k = 0; k < n; ++k) pure[k] = std::abs(b.lambdas(k) - 1.0) <= pure_tol;

    RealMat h = RealMat::Zero(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                for (int l = 0; l < n; ++l) {
                    const double lk = b.lambdas(k), ll = b.lambdas(l);
                    if (!(pure[k] && pure[l])) {
                        const double coeff_r = (lk - ll) * (lk - ll) / (lk * ll - 1.0);
                        acc += coeff_r *
                               std::real(std::conj(b.lie[i].R(k, l)) * b.lie[j].R(k, l));
                    }
                    const double coeff_q = (lk + ll) * (lk + ll) / (lk * ll + 1.0);
                    acc += coeff_q * std::real(std::conj(b.lie[i].Q(k, l)) * b.lie[j].Q(k, l));
                }
                if (!pure[k])
                    acc += b.dlambdas[i](k) * b.dlambdas[j](k) /
                           (b.lambdas(k) * b.lambdas(k) - 1.0);
            }
            h(i, j) = acc;
        }

    // sigma^{-1} = K S D^{-1} S^dag K.
    Vec dinv(2 * n);
    for (int k = 0; k < n; ++k) dinv(k) = dinv(n + k) = 1.0 / b.lambdas(k);
    Mat k_form = symplectic_form(n);
    Mat sigma_inv = k_form * b.S * dinv.asDiagonal() * b.S.adjoint() * k_form;
    double imag_residue = 0.0;
    h += detail::displacement_term(b, sigma_inv, &imag_residue);
    return detail::finalize(std::move(h), QfimMethod::williamson, b, pure_tol, imag_residue);
}

/// Trace form of the Williamson QFIM over the rescaled matrices
/// Rt^{kl} = (lk-ll)/sqrt(lk ll - 1) R^{kl}, Qt^{kl} = (lk+ll)/sqrt(lk ll + 1) Q^{kl}.
/// Only valid when no mode is pure.
inline QfimResult qfim_compact(const DerivativeBundle& b, double pure_tol = tol::pure) {
    detail::require_symplectic(b, "qfim_compact");
    if (b.spectrum.minCoeff() <= 1.0 + pure_tol)
        throw PureModeError("qfim_compact: a mode is pure; the rescaled trace form is undefined");
    const int p = b.params();
    const int n = static_cast<int>(b.lambdas.size());

    std::vector<Mat> rt(p), qt(p);
    for (int i = 0; i < p; ++i) {
        rt[i] = Mat::Zero(n, n);
        qt[i] = Mat::Zero(n, n);
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) {
                const double lk = b.lambdas(k), ll = b.lambdas(l);
                rt[i](k, l) = (lk - ll) / std::sqrt(lk * ll - 1.0) * b.lie[i].R(k, l);
                qt[i](k, l) = (lk + ll) / std::sqrt(lk * ll + 1.0) * b.lie[i].Q(k, l);
            }
    }

    double imag_residue = 0.0;
    RealMat h(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            Complex tr = 0.5 * ((rt[i] * rt[j].adjoint()).trace() +
                                (rt[j] * rt[i].adjoint()).trace() +
                                (qt[i] * qt[j].adjoint()).trace() +
                                (qt[j] * qt[i].adjoint()).trace());
            double acc = tr.real();
            imag_residue = std::max(imag_residue, std::abs(tr.imag()));
            for (int k = 0; k < n; ++k)
                acc += b.dlambdas[i](k) * b.dlambdas[j](k) / (b.lambdas(k) * b.lambdas(k) - 1.0);
            h(i, j) = acc;
        }

    Vec dinv(2 * n);
    for (int k = 0; k < n; ++k) dinv(k) = dinv(n + k) = 1.0 / b.lambdas(k);
    Mat k_form = symplectic_form(n);
    Mat sigma_inv = k_form * b.S * dinv.asDiagonal() * b.S.adjoint() * k_form;
    h += detail::displacement_term(b, sigma_inv, &imag_residue);
    return detail::finalize(std::move(h), QfimMethod::compact, b, pure_tol, imag_residue);
}

/// Geometric tail bound of the limit-formula series truncated after M terms:
/// |R_M| <= sqrt(tr[(A dA_i)^2]) sqrt(tr[(A dA_j)^2]) / (2 lmin^{2(M+1)} (lmin^2 - 1)).
inline double remainder_bound(const Mat& a, const Mat& da_i, const Mat& da_j, int terms,
                              double lambda_min) {
    if (lambda_min <= 1.0)
        throw ValidationError("remainder_bound: requires lambda_min > 1");
    auto trace_sq = [](const Mat& a_, const Mat& da) {
        Mat prod = a_ * da;
        Complex t = (prod * prod).trace();
        if (std::abs(t.imag()) > 1e-10 * std::max(1.0, std::abs(t.real())))
            throw NumericalError("remainder_bound: tr[(A dA)^2] has imaginary residue " +
                                 std::to_string(t.imag()));
        return std::max(t.real(), 0.0);
    };
    const double ti = trace_sq(a, da_i);
    const double tj = trace_sq(a, da_j);
    return std::sqrt(ti) * std::sqrt(tj) /
           (2.0 * std::pow(lambda_min, 2.0 * (terms + 1)) * (lambda_min * lambda_min - 1.0));
}

struct LimitOptions {
    double target_abs_error = 1e-10;
    int max_terms = 1000;
    /// Bypass the bound-driven choice of M (used by the dominance checks).
    std::optional<int> fixed_terms;
};

/// Truncated series H^{ij} = 1/2 sum_{n=1}^{M} tr[A^{-n} dA_i A^{-n} dA_j] + displacement,
/// A = K sigma. M is the smallest integer whose remainder bound is at or below
/// target_abs_error for every entry; the bound values are reported alongside.
inline QfimResult qfim_limit(const DerivativeBundle& b, const LimitOptions& options = {},
                             double pure_tol = tol::pure) {
    const double lambda_min = b.spectrum.minCoeff();
    if (lambda_min <= 1.0 + pure_tol)
        throw PureModeError(
            "qfim_limit: the series is not absolutely convergent for pure modes; use "
            "qfim_regularized");
    const int p = b.params();
    const int n = b.state.modes();
    Mat k_form = symplectic_form(n);
    Mat a = k_form * b.state.sigma();
    std::vector<Mat> da(p);
    for (int i = 0; i < p; ++i) da[i] = k_form * b.dsigma[i];

    RealMat c(p, p);  // bound numerators c_ij: bound(M) = c_ij / lmin^{2(M+1)}
    for (int i = 0; i < p; ++i)
        for (int j = i; j < p; ++j)
            c(i, j) = c(j, i) =
                remainder_bound(a, da[i], da[j], 0, lambda_min) * lambda_min * lambda_min;

    int terms;
    if (options.fixed_terms) {
        terms = *options.fixed_terms;
    } else {
        terms = 0;
        const double log_l = std::log(lambda_min);
        for (int i = 0; i < p; ++i)
            for (int j = i; j < p; ++j) {
                if (c(i, j) <= options.target_abs_error) continue;
                double threshold =
                    std::log(c(i, j) / options.target_abs_error) / (2.0 * log_l) - 1.0;
                terms = std::max(terms, static_cast<int>(std::ceil(threshold - 1e-12)));
            }
        if (terms > options.max_terms)
            throw NumericalError("qfim_limit: target error needs " + std::to_string(terms) +
                                 " terms, above the cap of " + std::to_string(options.max_terms));
    }

    Eigen::LLT<Mat> llt(b.state.sigma());
    Mat sigma_inv = llt.solve(Mat::Identity(2 * n, 2 * n));
    Mat a_inv = sigma_inv * k_form;  // A^{-1} = sigma^{-1} K

    double imag_residue = 0.0;
    RealMat h = RealMat::Zero(p, p);
    std::vector<Mat> power = da;  // becomes A^{-n} dA_i
    for (int step = 1; step <= terms; ++step) {
        for (int i = 0; i < p; ++i) power[i] = a_inv * power[i];
        for (int i = 0; i < p; ++i)
            for (int j = i; j < p; ++j) {
                Complex t = 0.5 * (power[i] * power[j]).trace();
                h(i, j) += t.real();
                if (j != i) h(j, i) += t.real();
                imag_residue = std::max(imag_residue, std::abs(t.imag()));
            }
    }
    h += detail::displacement_term(b, sigma_inv, &imag_residue);

    RealMat bound(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            bound(i, j) = c(i, j) / std::pow(lambda_min, 2.0 * (terms + 1));

    QfimResult out = detail::finalize(std::move(h), QfimMethod::limit, b, pure_tol, imag_residue);
    out.series_terms = terms;
    out.error_bound = std::move(bound);
    return out;
}

namespace detail {

/// Polynomial (Neville) extrapolation to x = 0 of matrix samples, stopping
/// when the last two diagonal extrapolants agree within extrap_tol entrywise.
/// `sample` is called with the node index and must return the matrix at x_m.
template <typename MatT, typename Sampler>
MatT extrapolate_to_zero(const std::vector<double>& nodes, Sampler&& sample, double extrap_tol,
                         const char* who) {
    std::vector<std::vector<MatT>> tableau;  // tableau[m][k]
    MatT previous;
    for (std::size_t m = 0; m < nodes.size(); ++m) {
        std::vector<MatT> row(m + 1);
        row[0] = sample(m);
        for (std::size_t k = 1; k <= m; ++k)
            row[k] = (nodes[m - k] * row[k - 1] - nodes[m] * tableau[m - 1][k - 1]) /
                     (nodes[m - k] - nodes[m]);
        tableau.push_back(std::move(row));
        if (m >= 1) {
            double diff = (tableau[m][m] - previous).cwiseAbs().maxCoeff();
            if (diff < extrap_tol) return tableau[m][m];
        }
        previous = tableau[m][m];
    }
    throw NumericalError(std::string(who) +
                         ": nu -> 1 extrapolation did not converge; successive extrapolants "
                         "are not Cauchy within extrap_tol");
}

inline std::vector<double> regularization_nodes(const RegularizationOptions& options) {
    if (!options.nu_schedule.empty()) {
        for (double nu : options.nu_schedule)
            if (nu <= 1.0)
                throw ValidationError("regularization: every nu in the schedule must exceed 1");
        return options.nu_schedule;
    }
    std::vector<double> nodes(options.max_nodes);
    double h = 1e-2;
    for (int m = 0; m < options.max_nodes; ++m, h *= 0.5) nodes[m] = 1.0 + h;
    return nodes;
}

}  // namespace detail

/// Regularized formula: the mixed-route first term is evaluated on (d, nu sigma)
/// and extrapolated to nu = 1. H(nu) is analytic in nu^2, so the extrapolation
/// variable is nu^2 - 1. Works for any number of pure modes.
inline QfimResult qfim_regularized(const DerivativeBundle& b,
                                   const RegularizationOptions& options = {},
                                   double pure_tol = tol::pure) {
    const int p = b.params();
    const Mat& sigma = b.state.sigma();
    std::vector<double> nus = detail::regularization_nodes(options);
    std::vector<double> nodes(nus.size());
    for (std::size_t m = 0; m < nus.size(); ++m) nodes[m] = nus[m] * nus[m] - 1.0;

    double imag_residue = 0.0;
    auto first_term = [&](std::size_t m) {
        Eigen::PartialPivLU<Mat> lu(detail::mixing_matrix(sigma, nus[m] * nus[m]));
        RealMat f(p, p);
        std::vector<Vec> solved(p);
        for (int j = 0; j < p; ++j) solved[j] = lu.solve(detail::vectorize(b.dsigma[j]));
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) {
                Complex v = 0.5 * detail::vectorize(b.dsigma[i]).dot(solved[j]);
                f(i, j) = v.real();
                imag_residue = std::max(imag_residue, std::abs(v.imag()));
            }
        return f;
    };
    RealMat h = detail::extrapolate_to_zero<RealMat>(nodes, first_term, options.extrap_tol,
                                                     "qfim_regularized");

    Eigen::LLT<Mat> llt(sigma);
    Mat sigma_inv = llt.solve(Mat::Identity(sigma.rows(), sigma.cols()));
    h += detail::displacement_term(b, sigma_inv, &imag_residue);
    return detail::finalize(std::move(h), QfimMethod::regularized, b, pure_tol, imag_residue);
}

/// Pure-state formula H^{ij} = 1/4 tr[sigma^{-1} d_i sigma sigma^{-1} d_j sigma] + displacement,
/// with sigma^{-1} = K sigma K. Only valid when the state is pure at eps.
inline QfimResult qfim_pure(const DerivativeBundle& b, double pure_tol = tol::pure) {
    if (std::abs(b.spectrum.maxCoeff() - 1.0) > pure_tol)
        throw ValidationError("qfim_pure: state is not pure at the evaluation point");
    const int p = b.params();
    const int n = b.state.modes();
    Mat k_form = symplectic_form(n);
    Mat sigma_inv = k_form * b.state.sigma() * k_form;
    double imag_residue = 0.0;
    RealMat h(p, p);
    for (int i = 0; i < p; ++i) {
        Mat left = sigma_inv * b.dsigma[i];
        for (int j = 0; j < p; ++j) {
            Complex t = 0.25 * (left * sigma_inv * b.dsigma[j]).trace();
            h(i, j) = t.real();
            imag_residue = std::max(imag_residue, std::abs(t.imag()));
        }
    }
    h += detail::displacement_term(b, sigma_inv, &imag_residue);
    return detail::finalize(std::move(h), QfimMethod::pure, b, pure_tol, imag_residue);
}

/// Route selection: every mode mixed -> mixed formula; analytic symplectic
/// data available -> Williamson formula; otherwise the regularized formula.
inline QfimResult qfim_auto(const DerivativeBundle& b, double pure_tol = tol::pure,
                            const RegularizationOptions& reg = {}) {
    if (b.spectrum.minCoeff() > 1.0 + pure_tol) return qfim_mixed(b, pure_tol);
    if (b.has_symplectic) return qfim_williamson(b, pure_tol);
    return qfim_regularized(b, reg, pure_tol);
}

/// Continuous QFIM (four times the Bures metric):
/// H_c = H + sum over pure modes of the Hessian of lambda_k. Needs the bundle
/// built with want_hessians whenever a pure mode is present.
inline QfimResult cqfim(const DerivativeBundle& b, double pure_tol = tol::pure,
                        const RegularizationOptions& reg = {}) {
    QfimResult base = qfim_auto(b, pure_tol, reg);
    RealMat h = base.H;
    for (int k = 0; k < b.spectrum.size(); ++k) {
        if (std::abs(b.spectrum(k) - 1.0) > pure_tol) continue;
        if (!b.has_hessians)
            throw ValidationError(
                "cqfim: missing Hessians of the symplectic eigenvalues; build the bundle with "
                "want_hessians");
        h += b.lambda_hessians[k];
    }
    QfimResult out = detail::finalize(std::move(h), QfimMethod::cqfim, b, pure_tol,
                                      base.max_imag_residue);
    out.raw_asymmetry = base.raw_asymmetry;
    return out;
}

/// Fully-pure alternative for the continuous QFIM:
/// H_c = 1/4 (2 tr[sigma^{-1} d_i d_j sigma] - tr[sigma^{-1} d_i sigma sigma^{-1} d_j sigma])
///       + displacement. Needs second derivatives of sigma in the bundle.
inline QfimResult cqfim_pure(const DerivativeBundle& b, double pure_tol = tol::pure) {
    if (std::abs(b.spectrum.maxCoeff() - 1.0) > pure_tol)
        throw ValidationError("cqfim_pure: state is not pure at the evaluation point");
    if (!b.has_second_derivatives)
        throw ValidationError("cqfim_pure: bundle lacks second derivatives of sigma");
    const int p = b.params();
    const int n = b.state.modes();
    Mat k_form = symplectic_form(n);
    Mat sigma_inv = k_form * b.state.sigma() * k_form;
    double imag_residue = 0.0;
    RealMat h(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            Complex t = 0.25 * (2.0 * (sigma_inv * b.d2sigma[i][j]).trace() -
                                (sigma_inv * b.dsigma[i] * sigma_inv * b.dsigma[j]).trace());
            h(i, j) = t.real();
            imag_residue = std::max(imag_residue, std::abs(t.imag()));
        }
    h += detail::displacement_term(b, sigma_inv, &imag_residue);
    QfimResult out = detail::finalize(std::move(h), QfimMethod::cqfim, b, pure_tol, imag_residue);
    return out;
}

}  // namespace gqm
