#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <utility>
#include <vector>

#include "gqm/phase_space.hpp"

namespace gqm {

/// Phase-space image of a Gaussian unitary: d -> S d + b, sigma -> S sigma S^dag,
/// with S symplectic (S K S^dag = K) in the complex-form block layout.
struct GaussianChannel {
    Mat S;
    Vec b;

    GaussianChannel(Mat s, Vec b_in, double tol_struct = tol::structure)
        : S(std::move(s)), b(std::move(b_in)) {
        const int dim = static_cast<int>(S.rows());
        if (dim % 2 != 0 || S.cols() != dim || b.size() != dim)
            throw ValidationError("channel: S must be 2Nx2N and b of length 2N");
        Mat k = symplectic_form(dim / 2);
        if (double defect = max_abs(Mat(S * k * S.adjoint() - k)); defect > tol_struct)
            throw ValidationError("channel: S K S^dag deviates from K by " + std::to_string(defect));
        if (double defect = block_structure_defect(S); defect > tol_struct)
            throw ValidationError("channel: S lacks the [[a,b],[conj(b),conj(a)]] block structure");
        if (double defect = conjugate_pair_defect(b); defect > tol_struct)
            throw ValidationError("channel: b lacks the conjugate-pair structure");
    }

    static GaussianChannel identity(int modes) {
        return GaussianChannel(Mat::Identity(2 * modes, 2 * modes), Vec::Zero(2 * modes));
    }

    int modes() const { return static_cast<int>(S.rows()) / 2; }

    /// Composition: apply `first`, then `*this`.
    GaussianChannel after(const GaussianChannel& first) const {
        return GaussianChannel(S * first.S, S * first.b + b);
    }
};

/// Exponent data (W, a) of a quadratic Gaussian unitary
/// U = exp(i/2 A^dag W A + A^dag K a).
struct GaussianGenerator {
    Mat W;
    Vec a;

    GaussianGenerator(Mat w, Vec a_in, double tol_struct = tol::structure)
        : W(std::move(w)), a(std::move(a_in)) {
        const int dim = static_cast<int>(W.rows());
        if (dim % 2 != 0 || W.cols() != dim || a.size() != dim)
            throw ValidationError("generator: W must be 2Nx2N and a of length 2N");
        if (double defect = hermiticity_defect(W); defect > tol_struct)
            throw ValidationError("generator: W deviates from W^dag by " + std::to_string(defect));
        if (double defect = block_structure_defect(W); defect > tol_struct)
            throw ValidationError("generator: W lacks the [[X,Y],[conj(Y),conj(X)]] block structure");
        if (double defect = conjugate_pair_defect(a); defect > tol_struct)
            throw ValidationError("generator: a lacks the conjugate-pair structure");
    }

    int modes() const { return static_cast<int>(W.rows()) / 2; }
};

namespace detail {

/// phi1(M) = int_0^1 exp(M t) dt = sum_{n>=0} M^n / (n+1)!, evaluated by the
/// scaled series: phi1(2X) = (I + exp(X)) phi1(X) / 2. The series is entire,
/// so this converges for any M, singular or not.
inline Mat phi1(const Mat& m) {
    const int dim = static_cast<int>(m.rows());
    int scal = 0;
    double nrm = m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
    while (nrm > 0.5) {
        nrm /= 2.0;
        ++scal;
    }
    Mat x = m / std::pow(2.0, scal);
    Mat term = Mat::Identity(dim, dim);
    Mat acc = term;
    for (int n = 1; n < 64; ++n) {
        term = term * x / static_cast<double>(n + 1);
        acc += term;
        if (max_abs(term) < 1e-16 * max_abs(acc)) break;
    }
    Mat expx = x.exp();
    for (int s = 0; s < scal; ++s) {
        acc = 0.5 * (Mat::Identity(dim, dim) + expx) * acc;
        expx = expx * expx;
    }
    return acc;
}

}  // namespace detail

/// S = exp(i K W), b = (int_0^1 exp(i K W t) dt) a.
inline GaussianChannel channel_from_generator(const GaussianGenerator& g) {
    const Complex i(0.0, 1.0);
    Mat m = i * symplectic_form(g.modes()) * g.W;
    Mat s = m.exp();
    Vec b = detail::phi1(m) * g.a;
    return GaussianChannel(std::move(s), std::move(b));
}

namespace detail {

inline void check_modes(int total_modes, const std::vector<int>& modes) {
    std::vector<int> seen;
    for (int m : modes) {
        if (m < 0 || m >= total_modes)
            throw ValidationError("mode index " + std::to_string(m) + " out of range for " +
                                  std::to_string(total_modes) + " modes");
        if (std::find(seen.begin(), seen.end(), m) != seen.end())
            throw ValidationError("mode indices must be distinct");
        seen.push_back(m);
    }
}

/// Scatter a local 2kx2k block matrix onto the listed modes of an N-mode
/// system. `background` is I for channel matrices, 0 for their derivatives.
inline Mat embed(int total_modes, const std::vector<int>& modes, const Mat& local,
                 bool identity_background = true) {
    check_modes(total_modes, modes);
    const int k = static_cast<int>(modes.size());
    Mat out = identity_background ? Mat(Mat::Identity(2 * total_modes, 2 * total_modes))
                                  : Mat(Mat::Zero(2 * total_modes, 2 * total_modes));
    auto global_index = [&](int p) { return p < k ? modes[p] : total_modes + modes[p - k]; };
    for (int p = 0; p < 2 * k; ++p)
        for (int q = 0; q < 2 * k; ++q) out(global_index(p), global_index(q)) = local(p, q);
    return out;
}

inline Vec embed_vec(int total_modes, const std::vector<int>& modes, const Vec& local) {
    check_modes(total_modes, modes);
    const int k = static_cast<int>(modes.size());
    Vec out = Vec::Zero(2 * total_modes);
    auto global_index = [&](int p) { return p < k ? modes[p] : total_modes + modes[p - k]; };
    for (int p = 0; p < 2 * k; ++p) out(global_index(p)) = local(p);
    return out;
}

// Local complex-form matrices of the standard Gaussian unitaries and their
// parameter derivatives. Conventions and signs follow the displayed forms:
//   R(theta) = exp(-i theta a^dag a)
//   S(r,chi) = exp(-r/2 (e^{i chi} a^dag^2 - e^{-i chi} a^2))
//   B(theta,chi) = exp(theta (e^{i chi} a1^dag a2 - e^{-i chi} a2^dag a1))
//   S_T(r,chi) = exp(-r (e^{i chi} a1^dag a2^dag - e^{-i chi} a1 a2))

inline Mat rotation_local(double theta) {
    const Complex i(0.0, 1.0);
    Mat s(2, 2);
    s << std::exp(-i * theta), 0.0, 0.0, std::exp(i * theta);
    return s;
}

inline Mat rotation_local_dtheta(double theta) {
    const Complex i(0.0, 1.0);
    Mat s(2, 2);
    s << -i * std::exp(-i * theta), 0.0, 0.0, i * std::exp(i * theta);
    return s;
}

inline Mat squeeze_local(double r, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    Mat s(2, 2);
    s << std::cosh(r), -phase * std::sinh(r), -std::conj(phase) * std::sinh(r), std::cosh(r);
    return s;
}

inline Mat squeeze_local_dr(double r, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    Mat s(2, 2);
    s << std::sinh(r), -phase * std::cosh(r), -std::conj(phase) * std::cosh(r), std::sinh(r);
    return s;
}

inline Mat squeeze_local_dchi(double r, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    Mat s(2, 2);
    s << 0.0, -i * phase * std::sinh(r), i * std::conj(phase) * std::sinh(r), 0.0;
    return s;
}

inline Mat beam_splitter_local(double theta, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    const double c = std::cos(theta), s = std::sin(theta);
    Mat m = Mat::Zero(4, 4);
    m(0, 0) = c;
    m(0, 1) = phase * s;
    m(1, 0) = -std::conj(phase) * s;
    m(1, 1) = c;
    m.bottomRightCorner(2, 2) = m.topLeftCorner(2, 2).conjugate();
    return m;
}

inline Mat beam_splitter_local_dtheta(double theta, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    const double c = std::cos(theta), s = std::sin(theta);
    Mat m = Mat::Zero(4, 4);
    m(0, 0) = -s;
    m(0, 1) = phase * c;
    m(1, 0) = -std::conj(phase) * c;
    m(1, 1) = -s;
    m.bottomRightCorner(2, 2) = m.topLeftCorner(2, 2).conjugate();
    return m;
}

inline Mat beam_splitter_local_dchi(double theta, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    const double s = std::sin(theta);
    Mat m = Mat::Zero(4, 4);
    m(0, 1) = i * phase * s;
    m(1, 0) = i * std::conj(phase) * s;
    m.bottomRightCorner(2, 2) = m.topLeftCorner(2, 2).conjugate();
    return m;
}

inline Mat two_mode_squeeze_local(double r, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    const double ch = std::cosh(r), sh = std::sinh(r);
    Mat m = Mat::Zero(4, 4);
    m(0, 0) = ch;
    m(1, 1) = ch;
    m(0, 3) = -phase * sh;
    m(1, 2) = -phase * sh;
    m(2, 1) = -std::conj(phase) * sh;
    m(3, 0) = -std::conj(phase) * sh;
    m(2, 2) = ch;
    m(3, 3) = ch;
    return m;
}

inline Mat two_mode_squeeze_local_dr(double r, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    const double ch = std::cosh(r), sh = std::sinh(r);
    Mat m = Mat::Zero(4, 4);
    m(0, 0) = sh;
    m(1, 1) = sh;
    m(0, 3) = -phase * ch;
    m(1, 2) = -phase * ch;
    m(2, 1) = -std::conj(phase) * ch;
    m(3, 0) = -std::conj(phase) * ch;
    m(2, 2) = sh;
    m(3, 3) = sh;
    return m;
}

inline Mat two_mode_squeeze_local_dchi(double r, double chi) {
    const Complex i(0.0, 1.0);
    const Complex phase = std::exp(i * chi);
    const double sh = std::sinh(r);
    Mat m = Mat::Zero(4, 4);
    m(0, 3) = -i * phase * sh;
    m(1, 2) = -i * phase * sh;
    m(2, 1) = i * std::conj(phase) * sh;
    m(3, 0) = i * std::conj(phase) * sh;
    return m;
}

}  // namespace detail

/// Phase change exp(-i theta a^dag a) on one mode of an N-mode system.
inline GaussianChannel rotation(int total_modes, int mode, double theta) {
    return GaussianChannel(detail::embed(total_modes, {mode}, detail::rotation_local(theta)),
                           Vec::Zero(2 * total_modes));
}

/// One-mode squeezing on `mode`.
inline GaussianChannel squeeze(int total_modes, int mode, double r, double chi = 0.0) {
    return GaussianChannel(detail::embed(total_modes, {mode}, detail::squeeze_local(r, chi)),
                           Vec::Zero(2 * total_modes));
}

/// Two-mode squeezing on the ordered pair (mode_a, mode_b).
inline GaussianChannel two_mode_squeeze(int total_modes, int mode_a, int mode_b, double r,
                                        double chi = 0.0) {
    return GaussianChannel(
        detail::embed(total_modes, {mode_a, mode_b}, detail::two_mode_squeeze_local(r, chi)),
        Vec::Zero(2 * total_modes));
}

/// Mode mixing (beam splitter) on the ordered pair (mode_a, mode_b).
inline GaussianChannel beam_splitter(int total_modes, int mode_a, int mode_b, double theta,
                                     double chi = 0.0) {
    return GaussianChannel(
        detail::embed(total_modes, {mode_a, mode_b}, detail::beam_splitter_local(theta, chi)),
        Vec::Zero(2 * total_modes));
}

/// Weyl displacement: S = I, b = (alpha, conj(alpha)) on the targeted mode.
inline GaussianChannel displacement(int total_modes, int mode, Complex alpha) {
    Vec local(2);
    local << alpha, std::conj(alpha);
    return GaussianChannel(Mat::Identity(2 * total_modes, 2 * total_modes),
                           detail::embed_vec(total_modes, {mode}, local));
}

inline GaussianState apply(const GaussianChannel& ch, const GaussianState& st) {
    if (ch.modes() != st.modes()) throw ValidationError("apply: channel/state mode mismatch");
    return GaussianState(ch.S * st.d() + ch.b, ch.S * st.sigma() * ch.S.adjoint());
}

/// Thermal product state: d = 0, sigma = diag(lambda, lambda). lambda_k = 1 is
/// the vacuum mode.
inline GaussianState thermal(const std::vector<double>& lambdas) {
    const int n = static_cast<int>(lambdas.size());
    if (n == 0) throw ValidationError("thermal: need at least one mode");
    for (double l : lambdas)
        if (l < 1.0)
            throw ValidationError("thermal: symplectic eigenvalue " + std::to_string(l) +
                                  " < 1 is unphysical");
    Vec diag(2 * n);
    for (int k = 0; k < n; ++k) diag(k) = diag(n + k) = lambdas[k];
    return GaussianState(Vec::Zero(2 * n), Mat(diag.asDiagonal()));
}

/// Coherent product state |alpha_1 ... alpha_N>: d = (alpha, conj(alpha)), sigma = I.
inline GaussianState coherent(const std::vector<Complex>& alphas) {
    const int n = static_cast<int>(alphas.size());
    if (n == 0) throw ValidationError("coherent: need at least one mode");
    Vec d(2 * n);
    for (int k = 0; k < n; ++k) {
        d(k) = alphas[k];
        d(n + k) = std::conj(alphas[k]);
    }
    return GaussianState(std::move(d), Mat::Identity(2 * n, 2 * n));
}

inline GaussianState squeezed_vacuum(double r, double chi = 0.0) {
    Mat s = detail::squeeze_local(r, chi);
    return GaussianState(Vec::Zero(2), s * s.adjoint());
}

inline GaussianState two_mode_squeezed_vacuum(double r, double chi = 0.0) {
    Mat s = detail::two_mode_squeeze_local(r, chi);
    return GaussianState(Vec::Zero(4), s * s.adjoint());
}

/// Restriction of the moments to the kept modes (partial trace over the rest).
inline GaussianState partial_trace(const GaussianState& st, const std::vector<int>& keep) {
    if (keep.empty()) throw ValidationError("partial_trace: keep set must be nonempty");
    detail::check_modes(st.modes(), keep);
    std::vector<int> sorted = keep;
    std::sort(sorted.begin(), sorted.end());
    const int k = static_cast<int>(sorted.size());
    std::vector<int> idx(2 * k);
    for (int p = 0; p < k; ++p) {
        idx[p] = sorted[p];
        idx[k + p] = st.modes() + sorted[p];
    }
    Vec d(2 * k);
    Mat sigma(2 * k, 2 * k);
    for (int p = 0; p < 2 * k; ++p) {
        d(p) = st.d()(idx[p]);
        for (int q = 0; q < 2 * k; ++q) sigma(p, q) = st.sigma()(idx[p], idx[q]);
    }
    return GaussianState(std::move(d), std::move(sigma));
}

}  // namespace gqm
