#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "gqm/phase_space.hpp"

namespace gqm {

/// Symplectic spectrum of a Hermitian positive-definite covariance matrix:
/// the N positive eigenvalues of K sigma, descending. The full spectrum of
/// K sigma is the symmetric pair set {+-lambda_k}.
inline RealVec symplectic_eigenvalues(const Mat& sigma) {
    if (double defect = hermiticity_defect(sigma); defect > 1e-8)
        throw ValidationError("symplectic_eigenvalues: sigma is not Hermitian (defect " +
                              std::to_string(defect) + ")");
    return detail::symplectic_spectrum(sigma);
}

/// sigma = S D S^dag with D = diag(lambda_1..lambda_N, lambda_1..lambda_N),
/// lambdas descending, S symplectic in the complex-form block layout.
struct WilliamsonDecomposition {
    Mat S;
    RealVec lambdas;
    /// Set when two symplectic eigenvalues are closer than the degeneracy gap;
    /// S is then unique only up to a unitary block freedom, and only
    /// gauge-invariant downstream quantities should be compared.
    bool degenerate = false;

    int modes() const { return static_cast<int>(lambdas.size()); }

    Mat D() const {
        const int n = modes();
        Vec diag(2 * n);
        for (int k = 0; k < n; ++k) diag(k) = diag(n + k) = lambdas(k);
        return Mat(diag.asDiagonal());
    }
};

/// Williamson decomposition via S = sigma^{1/2} U D^{-1/2}, where U
/// diagonalizes the Hermitian matrix sigma^{1/2} K sigma^{1/2} (which shares
/// its spectrum with K sigma).
///
/// The first N columns of U are the eigenvectors of the positive eigenvalues
/// in descending order; the eigenvector of each negative partner is taken as
/// the block-swapped conjugate of its positive partner rather than trusting
/// the raw eigensolver pairing, which enforces the block structure of S
/// exactly. Each positive column is phase-normalized so its largest-magnitude
/// entry is real positive, making the result deterministic up to per-mode
/// phase at degenerate points.
inline WilliamsonDecomposition williamson_decompose(const Mat& sigma,
                                                    double tol_recon = tol::reconstruction,
                                                    double degeneracy_gap = 1e-8) {
    const int dim = static_cast<int>(sigma.rows());
    const int n = dim / 2;
    if (dim % 2 != 0 || sigma.cols() != dim)
        throw ValidationError("williamson_decompose: sigma must be 2Nx2N");
    if (double defect = hermiticity_defect(sigma); defect > 1e-8)
        throw ValidationError("williamson_decompose: sigma is not Hermitian");
    if (double defect = block_structure_defect(sigma); defect > 1e-8)
        throw ValidationError("williamson_decompose: sigma lacks the complex-form block structure");

    Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("williamson_decompose: sigma is not positive definite");
    Mat sqrt_sigma = es.operatorSqrt();

    Mat core = sqrt_sigma * symplectic_form(n) * sqrt_sigma;
    Eigen::SelfAdjointEigenSolver<Mat> es2(core);
    if (es2.info() != Eigen::Success)
        throw NumericalError("williamson_decompose: eigendecomposition failed");

    // Ascending spectrum (-lambda_N..-lambda_1, lambda_N..lambda_1); check the
    // +/- pairing before rearranging.
    const RealVec& evals = es2.eigenvalues();
    const double scale = std::abs(evals(dim - 1));
    for (int k = 0; k < n; ++k) {
        if (std::abs(evals(dim - 1 - k) + evals(k)) > 1e-9 * std::max(1.0, scale))
            throw NumericalError(
                "williamson_decompose: eigenvalue pairing failure; spectrum of K sigma is not "
                "symmetric within tolerance");
    }

    RealVec lambdas(n);
    Mat u = Mat::Zero(dim, dim);
    for (int k = 0; k < n; ++k) {
        lambdas(k) = evals(dim - 1 - k);  // descending
        Vec col = es2.eigenvectors().col(dim - 1 - k);
        // Phase gauge: largest-magnitude entry real positive.
        int argmax = 0;
        col.cwiseAbs().maxCoeff(&argmax);
        Complex entry = col(argmax);
        col *= std::abs(entry) / entry;
        u.col(k) = col;
        // Partner eigenvector for -lambda_k: block-swapped conjugate.
        Vec partner(dim);
        partner.head(n) = col.tail(n).conjugate();
        partner.tail(n) = col.head(n).conjugate();
        u.col(n + k) = partner;
    }

    Vec dinvsqrt(dim);
    for (int k = 0; k < n; ++k) dinvsqrt(k) = dinvsqrt(n + k) = 1.0 / std::sqrt(lambdas(k));
    WilliamsonDecomposition out;
    out.S = sqrt_sigma * u * dinvsqrt.asDiagonal();
    out.lambdas = lambdas;
    for (int k = 0; k + 1 < n; ++k)
        if (std::abs(lambdas(k) - lambdas(k + 1)) < degeneracy_gap) out.degenerate = true;

    Mat k_form = symplectic_form(n);
    if (max_abs(Mat(out.S * out.D() * out.S.adjoint() - sigma)) >
            tol_recon * std::max(1.0, max_abs(sigma)) ||
        max_abs(Mat(out.S * k_form * out.S.adjoint() - k_form)) > tol_recon * std::max(1.0, scale))
        throw NumericalError("williamson_decompose: reconstruction residual above tolerance");
    return out;
}

/// Tangent data P = S^{-1} dS of a symplectic curve, with the Lie-algebra
/// block layout P = [[R, Q], [conj(Q), conj(R)]], R skew-Hermitian and Q
/// complex symmetric.
struct LieDerivative {
    Mat P;
    Mat R;
    Mat Q;
};

/// P = S^{-1} dS with S^{-1} = K S^dag K. Throws NumericalError when
/// P K + K P^dag fails to vanish, which signals that dS is not tangent to the
/// symplectic group (e.g. a gauge-discontinuous finite-difference step).
inline LieDerivative lie_derivative(const Mat& s, const Mat& ds, double tangent_tol = 1e-6) {
    const int dim = static_cast<int>(s.rows());
    const int n = dim / 2;
    if (ds.rows() != dim || ds.cols() != dim)
        throw ValidationError("lie_derivative: S and dS must have equal 2Nx2N shape");
    Mat k = symplectic_form(n);
    Mat p = k * s.adjoint() * k * ds;
    double defect = max_abs(Mat(p * k + k * p.adjoint()));
    if (defect > tangent_tol * std::max(1.0, max_abs(p)))
        throw NumericalError("lie_derivative: dS is not tangent to the symplectic group (defect " +
                             std::to_string(defect) + ")");
    LieDerivative out;
    out.R = p.topLeftCorner(n, n);
    out.Q = p.topRightCorner(n, n);
    out.P = std::move(p);
    return out;
}

}  // namespace gqm
