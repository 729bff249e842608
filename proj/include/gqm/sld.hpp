#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gqm/qfim.hpp"

namespace gqm {

/// One symmetric logarithmic derivative as a phase-space quadratic form:
/// L_i = dA^dag quad dA + dA^dag lin + scalar, with dA = A - d. `quad` is
/// Hermitian with the same block structure as sigma, `lin` = 2 sigma^{-1} d_i d,
/// and `scalar` is the c-number part.
struct SldCoefficients {
    Mat quad;
    Vec lin;
    double scalar = 0.0;
};

namespace detail {

inline Mat unvectorize(const Vec& v, int dim) {
    return Eigen::Map<const Mat>(v.data(), dim, dim);
}

inline Vec sld_linear(const DerivativeBundle& b, const Mat& sigma_inv, int i) {
    return 2.0 * sigma_inv * b.dd[i];
}

inline Mat williamson_sigma_inverse(const DerivativeBundle& b) {
    const int n = static_cast<int>(b.lambdas.size());
    Vec dinv(2 * n);
    for (int k = 0; k < n; ++k) dinv(k) = dinv(n + k) = 1.0 / b.lambdas(k);
    Mat k_form = symplectic_form(n);
    return k_form * b.S * dinv.asDiagonal() * b.S.adjoint() * k_form;
}

}  // namespace detail

/// SLDs from the mixed-state route: vec(quad_i) = M^{-1} vec(d_i sigma),
/// scalar = -1/2 tr[sigma quad_i]. Requires every mode mixed.
inline std::vector<SldCoefficients> sld_mixed(const DerivativeBundle& b,
                                              double pure_tol = tol::pure) {
    if (b.spectrum.minCoeff() <= 1.0 + pure_tol)
        throw PureModeError("sld_mixed: a mode is pure; use sld_williamson or sld_pure");
    const int p = b.params();
    const int dim = 2 * b.state.modes();
    const Mat& sigma = b.state.sigma();
    Eigen::PartialPivLU<Mat> lu(detail::mixing_matrix(sigma));
    Eigen::LLT<Mat> llt(sigma);
    Mat sigma_inv = llt.solve(Mat::Identity(dim, dim));
    std::vector<SldCoefficients> out(p);
    for (int i = 0; i < p; ++i) {
        out[i].quad = detail::unvectorize(lu.solve(detail::vectorize(b.dsigma[i])), dim);
        out[i].scalar = -0.5 * (sigma * out[i].quad).trace().real();
        out[i].lin = detail::sld_linear(b, sigma_inv, i);
    }
    return out;
}

/// SLDs from the Williamson route: quad_i = (S^{-1})^dag W_i S^{-1} with
///   W_X^{kl} = -(lk - ll)/(lk ll - 1) R_i^{kl} + delta^{kl} d_i lk / (lk^2 - 1),
///   W_Y^{kl} =  (lk + ll)/(lk ll + 1) Q_i^{kl},
/// scalar = -sum_k lk d_i lk / (lk^2 - 1). Ratios whose modes are both pure
/// are zero by the convention at points of purity.
inline std::vector<SldCoefficients> sld_williamson(const DerivativeBundle& b,
                                                   double pure_tol = tol::pure) {
    detail::require_symplectic(b, "sld_williamson");
    const int p = b.params();
    const int n = static_cast<int>(b.lambdas.size());
    std::vector<bool> pure(n);
    for (int k = 0; k < n; ++k) pure[k] = std::abs(b.lambdas(k) - 1.0) <= pure_tol;

    Mat k_form = symplectic_form(n);
    Mat s_inv = k_form * b.S.adjoint() * k_form;
    Mat sigma_inv = detail::williamson_sigma_inverse(b);

    std::vector<SldCoefficients> out(p);
    for (int i = 0; i < p; ++i) {
        Mat wx = Mat::Zero(n, n);
        Mat wy = Mat::Zero(n, n);
        double scalar = 0.0;
        for (int k = 0; k < n; ++k) {
            for (int l = 0; l < n; ++l) {
                const double lk = b.lambdas(k), ll = b.lambdas(l);
                if (!(pure[k] && pure[l]))
                    wx(k, l) = -(lk - ll) / (lk * ll - 1.0) * b.lie[i].R(k, l);
                wy(k, l) = (lk + ll) / (lk * ll + 1.0) * b.lie[i].Q(k, l);
            }
            if (!pure[k]) {
                const double lk = b.lambdas(k);
                wx(k, k) += b.dlambdas[i](k) / (lk * lk - 1.0);
                scalar -= lk * b.dlambdas[i](k) / (lk * lk - 1.0);
            }
        }
        Mat w(2 * n, 2 * n);
        w.topLeftCorner(n, n) = wx;
        w.topRightCorner(n, n) = wy;
        w.bottomLeftCorner(n, n) = wy.conjugate();
        w.bottomRightCorner(n, n) = wx.conjugate();
        out[i].quad = s_inv.adjoint() * w * s_inv;
        out[i].scalar = scalar;
        out[i].lin = detail::sld_linear(b, sigma_inv, i);
    }
    return out;
}

/// SLDs of a pure state: quad_i = 1/2 sigma^{-1} d_i sigma sigma^{-1}, with
/// sigma^{-1} = K sigma K and vanishing scalar part.
inline std::vector<SldCoefficients> sld_pure(const DerivativeBundle& b,
                                             double pure_tol = tol::pure) {
    if (std::abs(b.spectrum.maxCoeff() - 1.0) > pure_tol)
        throw ValidationError("sld_pure: state is not pure at the evaluation point");
    const int p = b.params();
    const int n = b.state.modes();
    Mat k_form = symplectic_form(n);
    Mat sigma_inv = k_form * b.state.sigma() * k_form;
    std::vector<SldCoefficients> out(p);
    for (int i = 0; i < p; ++i) {
        out[i].quad = 0.5 * sigma_inv * b.dsigma[i] * sigma_inv;
        out[i].scalar = 0.0;
        out[i].lin = detail::sld_linear(b, sigma_inv, i);
    }
    return out;
}

/// SLD quadratic forms through the nu -> 1 regularization of the mixed route;
/// valid for any number of pure modes.
inline std::vector<SldCoefficients> sld_regularized(const DerivativeBundle& b,
                                                    const RegularizationOptions& options = {}) {
    const int p = b.params();
    const int dim = 2 * b.state.modes();
    const Mat& sigma = b.state.sigma();
    std::vector<double> nus = detail::regularization_nodes(options);
    std::vector<double> nodes(nus.size());
    for (std::size_t m = 0; m < nus.size(); ++m) nodes[m] = nus[m] * nus[m] - 1.0;

    Eigen::LLT<Mat> llt(sigma);
    Mat sigma_inv = llt.solve(Mat::Identity(dim, dim));
    std::vector<SldCoefficients> out(p);
    for (int i = 0; i < p; ++i) {
        auto sample = [&](std::size_t m) {
            Eigen::PartialPivLU<Mat> lu(detail::mixing_matrix(sigma, nus[m] * nus[m]));
            return detail::unvectorize(lu.solve(detail::vectorize(b.dsigma[i])), dim);
        };
        out[i].quad =
            detail::extrapolate_to_zero<Mat>(nodes, sample, options.extrap_tol, "sld_regularized");
        out[i].scalar = -0.5 * (sigma * out[i].quad).trace().real();
        out[i].lin = detail::sld_linear(b, sigma_inv, i);
    }
    return out;
}

/// Spectrum of K quad: the normal-mode content of the SLD quadratic form,
/// reported as a diagnostic for the optimal-measurement eigenbasis. No
/// measurement synthesis is attempted.
inline Vec sld_normal_form_spectrum(const SldCoefficients& sld) {
    const int n = static_cast<int>(sld.quad.rows()) / 2;
    Eigen::ComplexEigenSolver<Mat> es(symplectic_form(n) * sld.quad);
    Vec vals = es.eigenvalues();
    std::sort(vals.data(), vals.data() + vals.size(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return vals;
}

enum class SaturabilityRoute { mixed, williamson, pure, regularized };

/// Commutator traces C^{ij} = tr[rho [L_i, L_j]]: antisymmetric, purely
/// imaginary, and identically zero exactly when the multi-parameter
/// Cramer-Rao bound is saturable by a single measurement.
struct SaturabilityReport {
    Mat C;
    bool saturable = false;
    double tolerance = tol::saturability;
    double max_real_residue = 0.0;  // |Re C| is a numerical diagnostic only
};

namespace detail {

/// 4 d_i d^dag sigma^{-1} K sigma^{-1} d_j d.
inline Mat saturability_displacement(const DerivativeBundle& b, const Mat& sigma_inv) {
    const int p = b.params();
    Mat m = sigma_inv * symplectic_form(b.state.modes()) * sigma_inv;
    Mat out(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) out(i, j) = 4.0 * (b.dd[i].adjoint() * m * b.dd[j])(0);
    return out;
}

inline Mat commutator_trace_from_quads(const std::vector<Mat>& quads, const Mat& sigma,
                                       const Mat& k_form) {
    const int p = static_cast<int>(quads.size());
    Mat c(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            c(i, j) = (quads[i] * k_form * quads[j] * sigma).trace() -
                      (quads[i] * sigma * quads[j] * k_form).trace();
    return c;
}

inline SaturabilityReport finalize_saturability(Mat c, double sat_tol) {
    SaturabilityReport out;
    out.tolerance = sat_tol;
    out.max_real_residue = c.real().cwiseAbs().maxCoeff();
    out.C = 0.5 * (c - c.transpose());  // exact antisymmetry
    out.saturable = max_abs(out.C) < sat_tol;
    return out;
}

}  // namespace detail

/// Saturability of the quantum Cramer-Rao bound along the selected route.
/// All routes agree on their overlapping domains.
inline SaturabilityReport saturability(const DerivativeBundle& b, SaturabilityRoute route,
                                       double sat_tol = tol::saturability,
                                       const RegularizationOptions& reg = {},
                                       double pure_tol = tol::pure) {
    const int p = b.params();
    const int n = b.state.modes();
    const Mat& sigma = b.state.sigma();
    Mat k_form = symplectic_form(n);

    switch (route) {
        case SaturabilityRoute::mixed: {
            if (b.spectrum.minCoeff() <= 1.0 + pure_tol)
                throw PureModeError("saturability(mixed): a mode is pure");
            Eigen::PartialPivLU<Mat> lu(detail::mixing_matrix(sigma));
            std::vector<Mat> quads(p);
            for (int i = 0; i < p; ++i)
                quads[i] =
                    detail::unvectorize(lu.solve(detail::vectorize(b.dsigma[i])), 2 * n);
            Eigen::LLT<Mat> llt(sigma);
            Mat sigma_inv = llt.solve(Mat::Identity(2 * n, 2 * n));
            Mat c = detail::commutator_trace_from_quads(quads, sigma, k_form) +
                    detail::saturability_displacement(b, sigma_inv);
            return detail::finalize_saturability(std::move(c), sat_tol);
        }
        case SaturabilityRoute::williamson: {
            detail::require_symplectic(b, "saturability(williamson)");
            const int nm = static_cast<int>(b.lambdas.size());
            std::vector<bool> pure(nm);
            for (int k = 0; k < nm; ++k) pure[k] = std::abs(b.lambdas(k) - 1.0) <= pure_tol;
            const Complex two_i(0.0, 2.0);
            Mat c = Mat::Zero(p, p);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) {
                    Complex acc = 0.0;
                    for (int k = 0; k < nm; ++k)
                        for (int l = 0; l < nm; ++l) {
                            const double lk = b.lambdas(k), ll = b.lambdas(l);
                            const double qden = (lk * ll + 1.0) * (lk * ll + 1.0);
                            acc += two_i * std::pow(lk + ll, 3) / qden *
                                   std::imag(std::conj(b.lie[i].Q(k, l)) * b.lie[j].Q(k, l));
                            if (!(pure[k] && pure[l])) {
                                const double rden = (lk * ll - 1.0) * (lk * ll - 1.0);
                                acc -= two_i * std::pow(lk - ll, 3) / rden *
                                       std::imag(std::conj(b.lie[i].R(k, l)) * b.lie[j].R(k, l));
                            }
                        }
                    c(i, j) = acc;
                }
            c += detail::saturability_displacement(b, detail::williamson_sigma_inverse(b));
            return detail::finalize_saturability(std::move(c), sat_tol);
        }
        case SaturabilityRoute::pure: {
            if (std::abs(b.spectrum.maxCoeff() - 1.0) > pure_tol)
                throw ValidationError("saturability(pure): state is not pure");
            Mat a = k_form * sigma;
            Mat sigma_inv = k_form * sigma * k_form;
            Mat c(p, p);
            for (int i = 0; i < p; ++i) {
                Mat dai = k_form * b.dsigma[i];
                for (int j = 0; j < p; ++j) {
                    Mat daj = k_form * b.dsigma[j];
                    c(i, j) = 0.25 * (a * (dai * daj - daj * dai)).trace();
                }
            }
            c += detail::saturability_displacement(b, sigma_inv);
            return detail::finalize_saturability(std::move(c), sat_tol);
        }
        case SaturabilityRoute::regularized: {
            std::vector<double> nus = detail::regularization_nodes(reg);
            std::vector<double> nodes(nus.size());
            for (std::size_t m = 0; m < nus.size(); ++m) nodes[m] = nus[m] * nus[m] - 1.0;
            auto sample = [&](std::size_t m) {
                Eigen::PartialPivLU<Mat> lu(detail::mixing_matrix(sigma, nus[m] * nus[m]));
                std::vector<Mat> quads(p);
                for (int i = 0; i < p; ++i)
                    quads[i] =
                        detail::unvectorize(lu.solve(detail::vectorize(b.dsigma[i])), 2 * n);
                return detail::commutator_trace_from_quads(quads, sigma, k_form);
            };
            Mat c = detail::extrapolate_to_zero<Mat>(nodes, sample, reg.extrap_tol,
                                                     "saturability(regularized)");
            Eigen::LLT<Mat> llt(sigma);
            Mat sigma_inv = llt.solve(Mat::Identity(2 * n, 2 * n));
            c += detail::saturability_displacement(b, sigma_inv);
            return detail::finalize_saturability(std::move(c), sat_tol);
        }
    }
    throw ValidationError("saturability: unknown route");
}

}  // namespace gqm
