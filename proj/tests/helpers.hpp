#pragma once

#include <gqm/gqm.hpp>

#include <random>
#include <string>
#include <vector>

namespace helpers {

using namespace gqm;

inline double uniform(std::mt19937& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Random Hermitian generator exponent with the [[X,Y],[conj(Y),conj(X)]]
/// block structure.
inline Mat random_generator_exponent(std::mt19937& rng, int modes, double scale) {
    Mat x(modes, modes), y(modes, modes);
    for (int r = 0; r < modes; ++r)
        for (int c = 0; c < modes; ++c) {
            x(r, c) = Complex(uniform(rng, -scale, scale), uniform(rng, -scale, scale));
            y(r, c) = Complex(uniform(rng, -scale, scale), uniform(rng, -scale, scale));
        }
    x = 0.5 * (x + x.adjoint()).eval();
    y = 0.5 * (y + y.transpose()).eval();
    Mat w(2 * modes, 2 * modes);
    w.topLeftCorner(modes, modes) = x;
    w.topRightCorner(modes, modes) = y;
    w.bottomLeftCorner(modes, modes) = y.conjugate();
    w.bottomRightCorner(modes, modes) = x.conjugate();
    return w;
}

inline Vec random_conjugate_pair_vector(std::mt19937& rng, int modes, double scale) {
    Vec v(2 * modes);
    for (int k = 0; k < modes; ++k) {
        v(k) = Complex(uniform(rng, -scale, scale), uniform(rng, -scale, scale));
        v(modes + k) = std::conj(v(k));
    }
    return v;
}

inline GaussianChannel random_channel(std::mt19937& rng, int modes, double scale = 0.6) {
    return channel_from_generator(GaussianGenerator(
        random_generator_exponent(rng, modes, scale), random_conjugate_pair_vector(rng, modes, scale)));
}

/// Random valid covariance matrix sigma = S diag(lambda, lambda) S^dag.
inline Mat random_covariance(std::mt19937& rng, int modes, double lambda_lo, double lambda_hi) {
    GaussianChannel ch = random_channel(rng, modes);
    Vec diag(2 * modes);
    for (int k = 0; k < modes; ++k) diag(k) = diag(modes + k) = uniform(rng, lambda_lo, lambda_hi);
    return ch.S * diag.asDiagonal() * ch.S.adjoint();
}

inline GaussianState random_state(std::mt19937& rng, int modes, double lambda_lo = 1.0,
                                  double lambda_hi = 4.0) {
    return GaussianState(random_conjugate_pair_vector(rng, modes, 1.0),
                         random_covariance(rng, modes, lambda_lo, lambda_hi));
}

// ---------------------------------------------------------------------------
// Named families used throughout the suites.

/// Squeezed thermal state, parameters (beta, r); lambda = coth(beta/2).
inline StateFamily squeezed_thermal_family() {
    InitialState init;
    init.kind = InitialState::Kind::thermal;
    init.modes = 1;
    init.thermal = {ParamRef::sym(0)};
    init.thermal_in_beta = true;
    ChannelStep sq;
    sq.kind = ChannelStep::Kind::squeeze;
    sq.modes = {0};
    sq.r = ParamRef::sym(1);
    return make_channel_family({"beta", "r"}, init, {sq});
}

inline double beta_of_lambda(double lambda) { return std::log((lambda + 1.0) / (lambda - 1.0)); }

/// Coherent probe |alpha> through squeeze(r) then rotation(theta); (r, theta).
inline StateFamily coherent_squeeze_phase_family(Complex alpha) {
    InitialState init;
    init.kind = InitialState::Kind::coherent;
    init.modes = 1;
    init.alphas = {alpha};
    ChannelStep sq;
    sq.kind = ChannelStep::Kind::squeeze;
    sq.modes = {0};
    sq.r = ParamRef::sym(0);
    ChannelStep rot;
    rot.kind = ChannelStep::Kind::rotation;
    rot.modes = {0};
    rot.theta = ParamRef::sym(1);
    return make_channel_family({"r", "theta"}, init, {sq, rot});
}

/// Two-mode squeezed vacuum in r, optionally reduced to the first mode.
inline StateFamily tmsv_family(bool reduced) {
    InitialState init;
    init.kind = InitialState::Kind::vacuum;
    init.modes = 2;
    ChannelStep tms;
    tms.kind = ChannelStep::Kind::two_mode_squeeze;
    tms.modes = {0, 1};
    tms.r = ParamRef::sym(0);
    std::vector<ChannelStep> steps{tms};
    if (reduced) {
        ChannelStep tr;
        tr.kind = ChannelStep::Kind::partial_trace;
        tr.modes = {0};
        steps.push_back(tr);
    }
    return make_channel_family({"r"}, init, steps);
}

struct RandomFamily {
    StateFamily family;
    RealVec eps;
};

/// Random fully mixed family: thermal initial state (optionally with one mode
/// bound to a beta parameter) followed by random catalog steps; every symbol
/// is bound at least once.
inline RandomFamily random_mixed_family(std::mt19937& rng, int modes, int params,
                                        double lambda_lo = 1.2, double lambda_hi = 4.0) {
    InitialState init;
    init.kind = InitialState::Kind::thermal;
    init.modes = modes;
    std::vector<double> eps_values(params, 0.0);
    const bool bind_thermal = params > 1 && uniform(rng, 0.0, 1.0) < 0.5;
    init.thermal_in_beta = bind_thermal;
    for (int k = 0; k < modes; ++k) {
        const double lambda = uniform(rng, lambda_lo, lambda_hi);
        if (bind_thermal && k == 0) {
            init.thermal.push_back(ParamRef::sym(0));
            eps_values[0] = beta_of_lambda(lambda);
        } else {
            init.thermal.push_back(
                ParamRef::lit(bind_thermal ? beta_of_lambda(lambda) : lambda));
        }
    }

    std::vector<ChannelStep> steps;
    auto random_step = [&](int bound_symbol) {
        ChannelStep step;
        const int max_kind = modes >= 2 ? 4 : 2;
        const int kind = std::uniform_int_distribution<int>(0, max_kind)(rng);
        const int mode_a = std::uniform_int_distribution<int>(0, modes - 1)(rng);
        int mode_b = std::uniform_int_distribution<int>(0, modes - 1)(rng);
        if (modes >= 2 && mode_b == mode_a) mode_b = (mode_a + 1) % modes;
        switch (kind) {
            case 0:
                step.kind = ChannelStep::Kind::rotation;
                step.modes = {mode_a};
                step.theta = bound_symbol >= 0 ? ParamRef::sym(bound_symbol)
                                               : ParamRef::lit(uniform(rng, 0.2, 1.2));
                if (bound_symbol >= 0) eps_values[bound_symbol] = uniform(rng, 0.2, 1.2);
                break;
            case 1:
                step.kind = ChannelStep::Kind::squeeze;
                step.modes = {mode_a};
                step.r = bound_symbol >= 0 ? ParamRef::sym(bound_symbol)
                                           : ParamRef::lit(uniform(rng, 0.1, 0.8));
                step.chi = ParamRef::lit(uniform(rng, 0.0, 6.28));
                if (bound_symbol >= 0) eps_values[bound_symbol] = uniform(rng, 0.1, 0.8);
                break;
            case 2:
                step.kind = ChannelStep::Kind::displacement;
                step.modes = {mode_a};
                step.re = bound_symbol >= 0 ? ParamRef::sym(bound_symbol)
                                            : ParamRef::lit(uniform(rng, -1.0, 1.0));
                step.im = ParamRef::lit(uniform(rng, -1.0, 1.0));
                if (bound_symbol >= 0) eps_values[bound_symbol] = uniform(rng, -1.0, 1.0);
                break;
            case 3:
                step.kind = ChannelStep::Kind::beam_splitter;
                step.modes = {mode_a, mode_b};
                step.theta = bound_symbol >= 0 ? ParamRef::sym(bound_symbol)
                                               : ParamRef::lit(uniform(rng, 0.2, 1.2));
                step.chi = ParamRef::lit(uniform(rng, 0.0, 6.28));
                if (bound_symbol >= 0) eps_values[bound_symbol] = uniform(rng, 0.2, 1.2);
                break;
            default:
                step.kind = ChannelStep::Kind::two_mode_squeeze;
                step.modes = {mode_a, mode_b};
                step.r = bound_symbol >= 0 ? ParamRef::sym(bound_symbol)
                                           : ParamRef::lit(uniform(rng, 0.1, 0.6));
                step.chi = ParamRef::lit(uniform(rng, 0.0, 6.28));
                if (bound_symbol >= 0) eps_values[bound_symbol] = uniform(rng, 0.1, 0.6);
                break;
        }
        steps.push_back(std::move(step));
    };
    for (int s = bind_thermal ? 1 : 0; s < params; ++s) random_step(s);
    const int extra = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int s = 0; s < extra; ++s) random_step(-1);

    std::vector<std::string> names;
    for (int s = 0; s < params; ++s) names.push_back("eps" + std::to_string(s));
    RandomFamily out{make_channel_family(names, init, steps),
                     Eigen::Map<RealVec>(eps_values.data(), params)};
    return out;
}

// ---------------------------------------------------------------------------
// Closed forms from the worked examples.

/// Squeezed thermal QFIM: diag((lambda^2-1)/4, 4 lambda^2/(lambda^2+1)).
inline RealMat example1_exact(double lambda) {
    RealMat h = RealMat::Zero(2, 2);
    h(0, 0) = (lambda * lambda - 1.0) / 4.0;
    h(1, 1) = 4.0 * lambda * lambda / (lambda * lambda + 1.0);
    return h;
}

/// Coherent-probe squeeze+phase QFIM in (r, theta).
inline RealMat example2_exact(Complex alpha, double r) {
    const double im2 = alpha.imag() * alpha.imag();
    const double re2 = alpha.real() * alpha.real();
    RealMat h(2, 2);
    h(0, 0) = 2.0 + 4.0 * std::norm(alpha);
    h(0, 1) = h(1, 0) = -4.0 * std::imag(alpha * alpha) * std::cosh(2.0 * r);
    h(1, 1) = 2.0 * std::pow(std::sinh(2.0 * r), 2) + 4.0 * std::exp(4.0 * r) * im2 +
              4.0 * std::exp(-4.0 * r) * re2;
    return h;
}

/// Commutator trace tr[rho [L_r, L_theta]] of the same family. This is the
/// corrected closed form (the displacement terms of the published display are
/// transposed); it follows from 4i Im[conj(Q_r) Q_theta] + 4 d_r d^dag K d_th d
/// with sigma^{-1} K sigma^{-1} = K for pure states, and is confirmed by the
/// truncated-Fock-space oracle in the SLD suite.
inline Complex example2_commutator(Complex alpha, double r) {
    const double im2 = alpha.imag() * alpha.imag();
    const double re2 = alpha.real() * alpha.real();
    return Complex(0.0, 4.0 * (-std::sinh(2.0 * r) + 2.0 * std::exp(-2.0 * r) * re2 -
                               2.0 * std::exp(2.0 * r) * im2));
}

// ---------------------------------------------------------------------------
// Real-form (xxpp) catalog matrices, used as independent oracles for the
// U-conjugation equivalence S_R = U^dag S U.

inline RealMat rotation_real(double theta) {
    RealMat m(2, 2);
    m << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
    return m;
}

inline RealMat squeeze_real(double r, double chi) {
    RealMat m(2, 2);
    m << std::cosh(r) - std::cos(chi) * std::sinh(r), -std::sin(chi) * std::sinh(r),
        -std::sin(chi) * std::sinh(r), std::cosh(r) + std::cos(chi) * std::sinh(r);
    return m;
}

inline RealMat beam_splitter_real(double theta, double chi) {
    const double c = std::cos(theta), s = std::sin(theta);
    const double cc = std::cos(chi), sc = std::sin(chi);
    RealMat m(4, 4);
    m << c, cc * s, 0, -sc * s,
        -cc * s, c, -sc * s, 0,
        0, sc * s, c, cc * s,
        sc * s, 0, -cc * s, c;
    return m;
}

inline RealMat two_mode_squeeze_real(double r, double chi) {
    const double ch = std::cosh(r), sh = std::sinh(r);
    const double cc = std::cos(chi), sc = std::sin(chi);
    RealMat m(4, 4);
    m << ch, -cc * sh, 0, -sc * sh,
        -cc * sh, ch, -sc * sh, 0,
        0, -sc * sh, ch, cc * sh,
        -sc * sh, 0, cc * sh, ch;
    return m;
}

inline double rel_err(double actual, double expected) {
    return std::abs(actual - expected) / (1.0 + std::abs(expected));
}

inline double rel_err(const RealMat& actual, const RealMat& expected) {
    double worst = 0.0;
    for (int r = 0; r < actual.rows(); ++r)
        for (int c = 0; c < actual.cols(); ++c)
            worst = std::max(worst, rel_err(actual(r, c), expected(r, c)));
    return worst;
}

}  // namespace helpers
