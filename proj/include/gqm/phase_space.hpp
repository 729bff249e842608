#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace gqm {

using Complex = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RealMat = Eigen::MatrixXd;
using RealVec = Eigen::VectorXd;

namespace tol {
/// Absolute tolerance on structural matrix identities (Hermiticity, block form).
inline constexpr double structure = 1e-10;
/// Tolerance on the Heisenberg bound lambda_k >= 1.
inline constexpr double physical = 1e-9;
/// |lambda - 1| below this counts as a pure mode.
inline constexpr double pure = 1e-9;
/// Tolerance on Williamson reconstruction residuals.
inline constexpr double reconstruction = 1e-9;
/// Threshold on |tr[rho [L_i, L_j]]| entries for the saturability verdict.
inline constexpr double saturability = 1e-8;
/// Convergence tolerance for the nu -> 1 extrapolation.
inline constexpr double extrapolation = 1e-7;
}  // namespace tol

/// Scenario/schema/precondition problems; the CLI maps this to exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown (non-convergence, unreachable target); CLI exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A mixed-state-only formula was invoked with at least one pure mode.
struct PureModeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Symplectic form K = diag(I_N, -I_N) of the complex phase-space convention.
inline Mat symplectic_form(int modes) {
    Mat k = Mat::Identity(2 * modes, 2 * modes);
    k.bottomRightCorner(modes, modes) *= -1.0;
    return k;
}

/// Block swap T = [[0, I], [I, 0]], exchanging annihilation and creation blocks.
inline Mat block_swap(int modes) {
    Mat t = Mat::Zero(2 * modes, 2 * modes);
    t.topRightCorner(modes, modes).setIdentity();
    t.bottomLeftCorner(modes, modes).setIdentity();
    return t;
}

/// Unitary U = (1/sqrt(2)) [[I, iI], [I, -iI]] connecting real (xxpp) and
/// complex forms: A = U Q, sigma = U sigma_R U^dag, K = U (i Omega_R) U^dag.
inline Mat real_to_complex_unitary(int modes) {
    const Complex i(0.0, 1.0);
    Mat u = Mat::Zero(2 * modes, 2 * modes);
    u.topLeftCorner(modes, modes).setIdentity();
    u.topRightCorner(modes, modes) = i * Mat::Identity(modes, modes);
    u.bottomLeftCorner(modes, modes).setIdentity();
    u.bottomRightCorner(modes, modes) = -i * Mat::Identity(modes, modes);
    return u / std::sqrt(2.0);
}

/// Real symplectic form Omega_R = [[0, I], [-I, 0]] in xxpp ordering.
inline RealMat real_symplectic_form(int modes) {
    RealMat w = RealMat::Zero(2 * modes, 2 * modes);
    w.topRightCorner(modes, modes).setIdentity();
    w.bottomLeftCorner(modes, modes) = -RealMat::Identity(modes, modes);
    return w;
}

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// max |M - M^dag|.
inline double hermiticity_defect(const Mat& m) { return max_abs(m - m.adjoint()); }

/// Deviation of v from the conjugate-pair layout v = (g, conj(g)).
inline double conjugate_pair_defect(const Vec& v) {
    const int n = static_cast<int>(v.size()) / 2;
    return max_abs(Vec(v.tail(n) - v.head(n).conjugate()));
}

/// Deviation of M from the [[A, B], [conj(B), conj(A)]] block layout,
/// i.e. from M = T conj(M) T.
inline double block_structure_defect(const Mat& m) {
    const int n = static_cast<int>(m.rows()) / 2;
    Mat swapped(m.rows(), m.cols());
    swapped.topLeftCorner(n, n) = m.bottomRightCorner(n, n).conjugate();
    swapped.topRightCorner(n, n) = m.bottomLeftCorner(n, n).conjugate();
    swapped.bottomLeftCorner(n, n) = m.topRightCorner(n, n).conjugate();
    swapped.bottomRightCorner(n, n) = m.topLeftCorner(n, n).conjugate();
    return max_abs(m - swapped);
}

namespace detail {

/// Positive eigenvalues of K sigma, descending, computed through the Hermitian
/// matrix sigma^{1/2} K sigma^{1/2} (same spectrum as K sigma). Throws
/// NumericalError if sigma is not positive definite.
inline RealVec symplectic_spectrum(const Mat& sigma) {
    const int dim = static_cast<int>(sigma.rows());
    const int modes = dim / 2;
    Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of covariance matrix failed");
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("covariance matrix is not positive definite");
    Mat sqrt_sigma = es.operatorSqrt();
    Mat core = sqrt_sigma * symplectic_form(modes) * sqrt_sigma;
    Eigen::SelfAdjointEigenSolver<Mat> es2(core);
    if (es2.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of sigma^(1/2) K sigma^(1/2) failed");
    // Eigenvalues come in +/- pairs; the top N are the symplectic spectrum.
    RealVec lambdas = es2.eigenvalues().tail(modes).reverse();
    return lambdas;
}

}  // namespace detail

enum class Violation { Dimension, ConjugatePairs, Hermiticity, BlockStructure, Physicality };

struct InvariantViolation {
    Violation kind;
    std::string detail;
};

inline const char* violation_name(Violation v) {
    switch (v) {
        case Violation::Dimension: return "dimension";
        case Violation::ConjugatePairs: return "conjugate-pairs";
        case Violation::Hermiticity: return "hermiticity";
        case Violation::BlockStructure: return "block-structure";
        case Violation::Physicality: return "physicality";
    }
    return "unknown";
}

class GaussianState;
inline std::vector<InvariantViolation> validate(const GaussianState& state,
                                                double tol_struct = tol::structure,
                                                double tol_phys = tol::physical);

/// N-mode Gaussian state in the complex form: displacement d = (g, conj(g))
/// and covariance sigma = [[X, Y], [conj(Y), conj(X)]], sigma Hermitian with
/// symplectic spectrum >= 1. Immutable after construction.
class GaussianState {
  public:
    GaussianState(Vec d, Mat sigma, double tol_struct = tol::structure,
                  double tol_phys = tol::physical)
        : d_(std::move(d)), sigma_(std::move(sigma)) {
        auto violations = validate(*this, tol_struct, tol_phys);
        if (!violations.empty()) {
            std::string msg = "invalid Gaussian state:";
            for (const auto& v : violations) msg += " [" + std::string(violation_name(v.kind)) + "] " + v.detail;
            throw ValidationError(msg);
        }
    }

    /// Bypasses all invariant checks; for diagnostics and deliberate misuse in tests.
    static GaussianState unchecked(Vec d, Mat sigma) {
        return GaussianState(std::move(d), std::move(sigma), Unchecked{});
    }

    static GaussianState vacuum(int modes) {
        return GaussianState(Vec::Zero(2 * modes), Mat::Identity(2 * modes, 2 * modes));
    }

    int modes() const { return static_cast<int>(d_.size()) / 2; }
    const Vec& d() const { return d_; }
    const Mat& sigma() const { return sigma_; }

  private:
    struct Unchecked {};
    GaussianState(Vec d, Mat sigma, Unchecked) : d_(std::move(d)), sigma_(std::move(sigma)) {}

    Vec d_;
    Mat sigma_;
};

inline std::vector<InvariantViolation> validate(const GaussianState& state, double tol_struct,
                                                double tol_phys) {
    std::vector<InvariantViolation> out;
    const auto& d = state.d();
    const auto& sigma = state.sigma();
    if (d.size() % 2 != 0 || d.size() == 0 || sigma.rows() != sigma.cols() ||
        sigma.rows() != d.size()) {
        out.push_back({Violation::Dimension, "d must have length 2N and sigma shape 2Nx2N"});
        return out;
    }
    if (double defect = conjugate_pair_defect(d); defect > tol_struct)
        out.push_back({Violation::ConjugatePairs,
                       "d deviates from (g, conj(g)) by " + std::to_string(defect)});
    if (double defect = hermiticity_defect(sigma); defect > tol_struct)
        out.push_back({Violation::Hermiticity,
                       "sigma deviates from sigma^dag by " + std::to_string(defect)});
    if (double defect = block_structure_defect(sigma); defect > tol_struct)
        out.push_back({Violation::BlockStructure,
                       "sigma deviates from [[X,Y],[conj(Y),conj(X)]] by " + std::to_string(defect)});
    try {
        RealVec lambdas = detail::symplectic_spectrum(sigma);
        if (lambdas.minCoeff() < 1.0 - tol_phys)
            out.push_back({Violation::Physicality,
                           "smallest symplectic eigenvalue " + std::to_string(lambdas.minCoeff()) +
                               " violates the Heisenberg bound"});
    } catch (const NumericalError& e) {
        out.push_back({Violation::Physicality, e.what()});
    }
    return out;
}

enum class QuadratureOrder { xxpp, xpxp };

/// Scale convention of an imported real-form covariance matrix.
///   vacuum_identity : sigma_R of the vacuum is I (anticommutator definition).
///   vacuum_half     : sigma_R of the vacuum is I/2; rescaled by 2 on import.
enum class CovarianceConvention { vacuum_identity, vacuum_half };

/// Real-form Gaussian state over quadratures (x_1..x_N, p_1..p_N) or the
/// interleaved xpxp ordering.
struct RealFormState {
    RealVec d;
    RealMat sigma;
    QuadratureOrder order = QuadratureOrder::xxpp;

    RealFormState(RealVec d_in, RealMat sigma_in, QuadratureOrder ord = QuadratureOrder::xxpp)
        : d(std::move(d_in)), sigma(std::move(sigma_in)), order(ord) {
        if (d.size() % 2 != 0 || d.size() == 0 || sigma.rows() != sigma.cols() ||
            sigma.rows() != d.size())
            throw ValidationError("real form: d must have length 2N and sigma shape 2Nx2N");
        if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > tol::structure)
            throw ValidationError("real form: sigma must be symmetric");
    }

    int modes() const { return static_cast<int>(d.size()) / 2; }
};

/// Permutation P with sigma_xpxp = P sigma_xxpp P^T (P P^T = I).
inline RealMat xpxp_permutation(int modes) {
    RealMat p = RealMat::Zero(2 * modes, 2 * modes);
    for (int k = 0; k < modes; ++k) {
        p(2 * k, k) = 1.0;              // x_k
        p(2 * k + 1, modes + k) = 1.0;  // p_k
    }
    return p;
}

inline RealFormState reorder_xpxp(const RealFormState& rs) {
    if (rs.order == QuadratureOrder::xpxp) return rs;
    RealMat p = xpxp_permutation(rs.modes());
    return RealFormState(p * rs.d, p * rs.sigma * p.transpose(), QuadratureOrder::xpxp);
}

inline RealFormState reorder_xxpp(const RealFormState& rs) {
    if (rs.order == QuadratureOrder::xxpp) return rs;
    RealMat p = xpxp_permutation(rs.modes());
    return RealFormState(p.transpose() * rs.d, p.transpose() * rs.sigma * p,
                         QuadratureOrder::xxpp);
}

/// d = U d_R, sigma = U sigma_R U^dag. Accepts either quadrature ordering.
inline GaussianState to_complex_form(const RealFormState& rs,
                                     CovarianceConvention convention =
                                         CovarianceConvention::vacuum_identity) {
    RealFormState xxpp = reorder_xxpp(rs);
    double scale = convention == CovarianceConvention::vacuum_half ? 2.0 : 1.0;
    Mat u = real_to_complex_unitary(xxpp.modes());
    Vec d = u * xxpp.d.cast<Complex>();
    Mat sigma = u * (scale * xxpp.sigma).cast<Complex>() * u.adjoint();
    return GaussianState(std::move(d), std::move(sigma));
}

/// Inverse of to_complex_form. Throws if the result carries imaginary residue
/// above tol_struct, which signals a corrupted complex structure.
inline RealFormState to_real_form(const GaussianState& gs,
                                  CovarianceConvention convention =
                                      CovarianceConvention::vacuum_identity,
                                  double tol_struct = tol::structure) {
    Mat u = real_to_complex_unitary(gs.modes());
    Vec d = u.adjoint() * gs.d();
    Mat sigma = u.adjoint() * gs.sigma() * u;
    double residue = std::max(d.imag().cwiseAbs().maxCoeff(), sigma.imag().cwiseAbs().maxCoeff());
    if (residue > tol_struct)
        throw ValidationError("conversion to real form leaves imaginary residue " +
                              std::to_string(residue));
    double scale = convention == CovarianceConvention::vacuum_half ? 0.5 : 1.0;
    return RealFormState(d.real(), scale * sigma.real(), QuadratureOrder::xxpp);
}

}  // namespace gqm
