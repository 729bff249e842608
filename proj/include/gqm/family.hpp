#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gqm/catalog.hpp"
#include "gqm/williamson.hpp"

namespace gqm {

/// Analytic symplectic data of a family at a point: a symplectic S and mode
/// eigenvalues lambda with sigma = S diag(lambda,lambda) S^dag, plus their
/// parameter derivatives. S need not be the canonical Williamson factor; any
/// differentiable symplectic diagonalizer works for the estimators.
struct SymplecticData {
    Mat S;
    RealVec lambdas;
    std::vector<Mat> dS;
    std::vector<RealVec> dlambdas;
};

/// Differentiable map eps -> GaussianState. `derivative_evaluator` and
/// `symplectic_evaluator` are optional analytic fast paths; when absent, the
/// bundle falls back to central finite differences on the evaluator.
struct StateFamily {
    std::vector<std::string> param_names;
    std::function<GaussianState(const RealVec&)> evaluator;
    std::function<void(const RealVec&, std::vector<Vec>&, std::vector<Mat>&)>
        derivative_evaluator;
    std::function<SymplecticData(const RealVec&)> symplectic_evaluator;

    int params() const { return static_cast<int>(param_names.size()); }
};

struct BundleOptions {
    /// Attach (S, lambda, P_i, d lambda) when the family can provide them.
    bool want_symplectic = true;
    /// Derive dS from Williamson decompositions at stencil points with gauge
    /// continuation. Off by default: gauge jumps would corrupt R_i, Q_i.
    bool force_fd_symplectic = false;
    bool want_hessians = false;
    bool want_second_derivatives = false;
    double fd_step_scale = 6.0554544523933395e-06;       // cbrt(machine epsilon)
    double hessian_step_scale = 2.4607833005759251e-03;  // (machine epsilon)^(1/6)
};

/// Everything the estimators consume at one parameter point.
struct DerivativeBundle {
    GaussianState state;
    std::vector<Vec> dd;
    std::vector<Mat> dsigma;
    /// Symplectic spectrum of sigma, descending; always present.
    RealVec spectrum;

    bool has_symplectic = false;
    Mat S;
    RealVec lambdas;  // in the family's mode order, not sorted
    std::vector<Mat> dS;
    std::vector<RealVec> dlambdas;
    std::vector<LieDerivative> lie;  // per parameter

    bool has_hessians = false;
    std::vector<RealMat> lambda_hessians;  // per sorted-spectrum mode index

    bool has_second_derivatives = false;
    std::vector<std::vector<Mat>> d2sigma;  // [i][j], symmetric in (i, j)

    int params() const { return static_cast<int>(dd.size()); }
};

namespace detail {

inline double fd_step(double eps_value, double scale) {
    return std::max(std::abs(eps_value), 1.0) * scale;
}

inline RealVec shifted(const RealVec& eps, int i, double h) {
    RealVec out = eps;
    out(i) += h;
    return out;
}

/// Per-mode phase alignment of a symplectic factor to a reference: column k
/// is rotated by e^{i phi_k}, column N+k by the conjugate, which is exactly
/// the gauge freedom of a non-degenerate Williamson decomposition.
inline Mat align_symplectic_gauge(const Mat& reference, Mat s) {
    const int n = static_cast<int>(s.rows()) / 2;
    for (int k = 0; k < n; ++k) {
        Complex z = (reference.col(k).adjoint() * s.col(k))(0);
        if (std::abs(z) < 1e-8)
            throw NumericalError(
                "gauge continuation failed: stencil decompositions are not phase-alignable");
        Complex phase = std::conj(z) / std::abs(z);
        s.col(k) *= phase;
        s.col(n + k) *= std::conj(phase);
    }
    return s;
}

}  // namespace detail

namespace detail {

/// Richardson-refined central second differences (steps h and h/2) of a
/// vector-valued map, one Hessian per component. The stencil evaluations are
/// shared across components; the refinement keeps the truncation error
/// safely below the tolerance budget of the continuous-QFIM checks.
inline std::vector<RealMat> vector_hessians(const std::function<RealVec(const RealVec&)>& f,
                                            const RealVec& eps, double step_scale) {
    const int p = static_cast<int>(eps.size());
    const RealVec f0 = f(eps);
    const int n = static_cast<int>(f0.size());
    auto second_difference = [&](double shrink) {
        std::vector<RealMat> h(n, RealMat(p, p));
        std::vector<double> steps(p);
        for (int i = 0; i < p; ++i) steps[i] = fd_step(eps(i), step_scale) * shrink;
        for (int i = 0; i < p; ++i) {
            RealVec fp = f(shifted(eps, i, steps[i]));
            RealVec fm = f(shifted(eps, i, -steps[i]));
            for (int k = 0; k < n; ++k)
                h[k](i, i) = (fp(k) - 2.0 * f0(k) + fm(k)) / (steps[i] * steps[i]);
            for (int j = i + 1; j < p; ++j) {
                RealVec pp = f(shifted(shifted(eps, i, steps[i]), j, steps[j]));
                RealVec pm = f(shifted(shifted(eps, i, steps[i]), j, -steps[j]));
                RealVec mp = f(shifted(shifted(eps, i, -steps[i]), j, steps[j]));
                RealVec mm = f(shifted(shifted(eps, i, -steps[i]), j, -steps[j]));
                for (int k = 0; k < n; ++k)
                    h[k](i, j) = h[k](j, i) =
                        (pp(k) - pm(k) - mp(k) + mm(k)) / (4.0 * steps[i] * steps[j]);
            }
        }
        return h;
    };
    std::vector<RealMat> coarse = second_difference(1.0);
    std::vector<RealMat> fine = second_difference(0.5);
    std::vector<RealMat> out(n);
    for (int k = 0; k < n; ++k) {
        RealMat h = (4.0 * fine[k] - coarse[k]) / 3.0;
        out[k] = 0.5 * (h + h.transpose());
    }
    return out;
}

inline RealVec sorted_descending(RealVec v) {
    std::sort(v.data(), v.data() + v.size(), std::greater<double>());
    return v;
}

/// Hessians of every sorted symplectic eigenvalue. Families with an analytic
/// symplectic evaluator are differenced through their exact lambda(eps) map
/// (for unitary families a constant, so the Hessians vanish identically);
/// otherwise the eigenvalues are recomputed from sigma at the stencil points.
inline std::vector<RealMat> spectrum_hessians(const StateFamily& family, const RealVec& eps,
                                              double step_scale) {
    std::function<RealVec(const RealVec&)> lambda_at;
    if (family.symplectic_evaluator)
        lambda_at = [&family](const RealVec& point) {
            return sorted_descending(family.symplectic_evaluator(point).lambdas);
        };
    else
        lambda_at = [&family](const RealVec& point) {
            return symplectic_spectrum(family.evaluator(point).sigma());
        };
    return vector_hessians(lambda_at, eps, step_scale);
}

}  // namespace detail

/// Hessian of the mode-th sorted (descending) symplectic eigenvalue.
inline RealMat symplectic_eigenvalue_hessian(const StateFamily& family, const RealVec& eps,
                                             int mode,
                                             double step_scale = 2.4607833005759251e-03) {
    return detail::spectrum_hessians(family, eps, step_scale).at(mode);
}

/// Assemble the derivative data the estimators need at `eps`. Analytic paths
/// are used when the family provides them; otherwise second-order central
/// differences with per-parameter steps max(|eps_i|,1)*fd_step_scale.
inline DerivativeBundle evaluate_bundle(const StateFamily& family, const RealVec& eps,
                                        const BundleOptions& options = {}) {
    const int p = family.params();
    if (eps.size() != p)
        throw ValidationError("evaluate_bundle: evaluation point has wrong dimension");

    DerivativeBundle bundle{family.evaluator(eps)};
    const int dim = 2 * bundle.state.modes();
    bundle.spectrum = detail::symplectic_spectrum(bundle.state.sigma());

    if (family.derivative_evaluator) {
        family.derivative_evaluator(eps, bundle.dd, bundle.dsigma);
    } else {
        bundle.dd.assign(p, Vec::Zero(dim));
        bundle.dsigma.assign(p, Mat::Zero(dim, dim));
        for (int i = 0; i < p; ++i) {
            const double h = detail::fd_step(eps(i), options.fd_step_scale);
            GaussianState plus = family.evaluator(detail::shifted(eps, i, h));
            GaussianState minus = family.evaluator(detail::shifted(eps, i, -h));
            bundle.dd[i] = (plus.d() - minus.d()) / (2.0 * h);
            bundle.dsigma[i] = (plus.sigma() - minus.sigma()) / (2.0 * h);
        }
    }

    if (options.want_symplectic && family.symplectic_evaluator) {
        SymplecticData data = family.symplectic_evaluator(eps);
        bundle.has_symplectic = true;
        bundle.S = std::move(data.S);
        bundle.lambdas = std::move(data.lambdas);
        bundle.dS = std::move(data.dS);
        bundle.dlambdas = std::move(data.dlambdas);
        for (int i = 0; i < p; ++i) bundle.lie.push_back(lie_derivative(bundle.S, bundle.dS[i]));
    } else if (options.want_symplectic && options.force_fd_symplectic) {
        WilliamsonDecomposition base = williamson_decompose(bundle.state.sigma());
        if (base.degenerate)
            throw NumericalError(
                "finite-difference dS is unreliable for a degenerate symplectic spectrum");
        bundle.has_symplectic = true;
        bundle.S = base.S;
        bundle.lambdas = base.lambdas;
        for (int i = 0; i < p; ++i) {
            const double h = detail::fd_step(eps(i), options.fd_step_scale);
            WilliamsonDecomposition plus =
                williamson_decompose(family.evaluator(detail::shifted(eps, i, h)).sigma());
            WilliamsonDecomposition minus =
                williamson_decompose(family.evaluator(detail::shifted(eps, i, -h)).sigma());
            Mat sp = detail::align_symplectic_gauge(base.S, plus.S);
            Mat sm = detail::align_symplectic_gauge(base.S, minus.S);
            bundle.dS.push_back((sp - sm) / (2.0 * h));
            bundle.dlambdas.push_back(RealVec((plus.lambdas - minus.lambdas) / (2.0 * h)));
            bundle.lie.push_back(lie_derivative(bundle.S, bundle.dS.back()));
        }
    }

    if (options.want_hessians) {
        bundle.has_hessians = true;
        bundle.lambda_hessians =
            detail::spectrum_hessians(family, eps, options.hessian_step_scale);
    }

    if (options.want_second_derivatives) {
        bundle.has_second_derivatives = true;
        bundle.d2sigma.assign(p, std::vector<Mat>(p, Mat::Zero(dim, dim)));
        if (family.derivative_evaluator) {
            // Central differences of the analytic first derivatives.
            for (int i = 0; i < p; ++i) {
                const double h = detail::fd_step(eps(i), options.fd_step_scale);
                std::vector<Vec> dd_p, dd_m;
                std::vector<Mat> ds_p, ds_m;
                family.derivative_evaluator(detail::shifted(eps, i, h), dd_p, ds_p);
                family.derivative_evaluator(detail::shifted(eps, i, -h), dd_m, ds_m);
                for (int j = 0; j < p; ++j)
                    bundle.d2sigma[i][j] = (ds_p[j] - ds_m[j]) / (2.0 * h);
            }
        } else {
            const double scale = options.hessian_step_scale;
            const Mat& sigma0 = bundle.state.sigma();
            for (int i = 0; i < p; ++i) {
                const double hi = detail::fd_step(eps(i), scale);
                Mat sp = family.evaluator(detail::shifted(eps, i, hi)).sigma();
                Mat sm = family.evaluator(detail::shifted(eps, i, -hi)).sigma();
                bundle.d2sigma[i][i] = (sp - 2.0 * sigma0 + sm) / (hi * hi);
                for (int j = i + 1; j < p; ++j) {
                    const double hj = detail::fd_step(eps(j), scale);
                    Mat pp = family
                                 .evaluator(detail::shifted(detail::shifted(eps, i, hi), j, hj))
                                 .sigma();
                    Mat pm = family
                                 .evaluator(detail::shifted(detail::shifted(eps, i, hi), j, -hj))
                                 .sigma();
                    Mat mp = family
                                 .evaluator(detail::shifted(detail::shifted(eps, i, -hi), j, hj))
                                 .sigma();
                    Mat mm = family
                                 .evaluator(detail::shifted(detail::shifted(eps, i, -hi), j, -hj))
                                 .sigma();
                    bundle.d2sigma[i][j] = (pp - pm - mp + mm) / (4.0 * hi * hj);
                }
            }
        }
        // Symmetrize in (i, j).
        for (int i = 0; i < p; ++i)
            for (int j = i + 1; j < p; ++j) {
                Mat sym = 0.5 * (bundle.d2sigma[i][j] + bundle.d2sigma[j][i]);
                bundle.d2sigma[i][j] = sym;
                bundle.d2sigma[j][i] = sym;
            }
    }

    return bundle;
}

/// Max deviation between analytic and central finite-difference first
/// derivatives, relative to the derivative scale. Used to validate families
/// that provide an analytic path.
inline double derivative_check_defect(const StateFamily& family, const RealVec& eps,
                                      double fd_step_scale = 6.0554544523933395e-06) {
    if (!family.derivative_evaluator)
        throw ValidationError("derivative_check_defect: family has no analytic derivatives");
    std::vector<Vec> dd;
    std::vector<Mat> dsigma;
    family.derivative_evaluator(eps, dd, dsigma);
    double worst = 0.0;
    for (int i = 0; i < family.params(); ++i) {
        const double h = detail::fd_step(eps(i), fd_step_scale);
        GaussianState plus = family.evaluator(detail::shifted(eps, i, h));
        GaussianState minus = family.evaluator(detail::shifted(eps, i, -h));
        Vec fd_d = (plus.d() - minus.d()) / (2.0 * h);
        Mat fd_sigma = (plus.sigma() - minus.sigma()) / (2.0 * h);
        double scale = std::max({1.0, max_abs(fd_d), max_abs(fd_sigma)});
        worst = std::max(worst, max_abs(Vec(fd_d - dd[i])) / scale);
        worst = std::max(worst, max_abs(Mat(fd_sigma - dsigma[i])) / scale);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Families composed from catalog channels.

/// A scalar channel parameter: either a literal or a reference to one of the
/// family's estimation parameters.
struct ParamRef {
    double literal = 0.0;
    int symbol = -1;

    static ParamRef lit(double v) { return {v, -1}; }
    static ParamRef sym(int index) { return {0.0, index}; }
    bool bound() const { return symbol >= 0; }
    double at(const RealVec& eps) const { return bound() ? eps(symbol) : literal; }
};

struct ChannelStep {
    enum class Kind {
        rotation,
        squeeze,
        two_mode_squeeze,
        beam_splitter,
        displacement,
        generator,
        partial_trace
    };

    Kind kind;
    std::vector<int> modes;  // touched modes (kept modes for partial_trace)
    ParamRef theta, r, chi;  // rotation / squeeze / two_mode_squeeze / beam_splitter
    ParamRef re, im;         // displacement
    Mat W;                   // generator exponent, full 2Nx2N
    Vec a;                   // generator displacement part
    ParamRef scale = ParamRef::lit(1.0);  // overall generator scale
};

struct InitialState {
    enum class Kind { vacuum, thermal, coherent, squeezed_vacuum, two_mode_squeezed_vacuum };

    Kind kind = Kind::vacuum;
    int modes = 1;
    /// Thermal state: one entry per mode, interpreted per `thermal_in_beta`.
    std::vector<ParamRef> thermal;
    /// When set, thermal entries are inverse temperatures beta with
    /// lambda = coth(beta/2); otherwise they are the eigenvalues lambda.
    bool thermal_in_beta = false;
    std::vector<Complex> alphas;  // coherent amplitudes
    double r = 0.0, chi = 0.0;    // squeezed_vacuum / two_mode_squeezed_vacuum
};

namespace detail {

struct StepMatrices {
    Mat S;
    Vec b;
    std::vector<Mat> dS;
    std::vector<Vec> db;
};

inline StepMatrices step_matrices(const ChannelStep& step, int total_modes, const RealVec& eps,
                                  bool with_derivatives) {
    using Kind = ChannelStep::Kind;
    const int p = static_cast<int>(eps.size());
    const int dim = 2 * total_modes;
    StepMatrices out;
    out.b = Vec::Zero(dim);
    if (with_derivatives) {
        out.dS.assign(p, Mat::Zero(dim, dim));
        out.db.assign(p, Vec::Zero(dim));
    }
    auto add_ds = [&](const ParamRef& ref, const Mat& local) {
        if (with_derivatives && ref.bound())
            out.dS[ref.symbol] += embed(total_modes, step.modes, local, false);
    };
    switch (step.kind) {
        case Kind::rotation: {
            const double theta = step.theta.at(eps);
            out.S = embed(total_modes, step.modes, rotation_local(theta));
            add_ds(step.theta, rotation_local_dtheta(theta));
            break;
        }
        case Kind::squeeze: {
            const double r = step.r.at(eps), chi = step.chi.at(eps);
            out.S = embed(total_modes, step.modes, squeeze_local(r, chi));
            add_ds(step.r, squeeze_local_dr(r, chi));
            add_ds(step.chi, squeeze_local_dchi(r, chi));
            break;
        }
        case Kind::two_mode_squeeze: {
            const double r = step.r.at(eps), chi = step.chi.at(eps);
            out.S = embed(total_modes, step.modes, two_mode_squeeze_local(r, chi));
            add_ds(step.r, two_mode_squeeze_local_dr(r, chi));
            add_ds(step.chi, two_mode_squeeze_local_dchi(r, chi));
            break;
        }
        case Kind::beam_splitter: {
            const double theta = step.theta.at(eps), chi = step.chi.at(eps);
            out.S = embed(total_modes, step.modes, beam_splitter_local(theta, chi));
            add_ds(step.theta, beam_splitter_local_dtheta(theta, chi));
            add_ds(step.chi, beam_splitter_local_dchi(theta, chi));
            break;
        }
        case Kind::displacement: {
            const Complex i(0.0, 1.0);
            const Complex alpha(step.re.at(eps), step.im.at(eps));
            Vec local(2);
            local << alpha, std::conj(alpha);
            out.S = Mat::Identity(dim, dim);
            out.b = embed_vec(total_modes, step.modes, local);
            if (with_derivatives && step.re.bound()) {
                Vec dre(2);
                dre << 1.0, 1.0;
                out.db[step.re.symbol] += embed_vec(total_modes, step.modes, dre);
            }
            if (with_derivatives && step.im.bound()) {
                Vec dim_local(2);
                dim_local << i, -i;
                out.db[step.im.symbol] += embed_vec(total_modes, step.modes, dim_local);
            }
            break;
        }
        case Kind::generator: {
            const Complex i(0.0, 1.0);
            const double s = step.scale.at(eps);
            if (step.W.rows() != dim || step.W.cols() != dim || step.a.size() != dim)
                throw ValidationError("generator step: W and a must match the system size");
            GaussianGenerator gen(s * step.W, s * step.a);
            GaussianChannel ch = channel_from_generator(gen);
            out.S = ch.S;
            out.b = ch.b;
            if (with_derivatives && step.scale.bound()) {
                // d/ds exp(s M) = M exp(s M) and d/ds phi1(s M) s a = exp(s M) a.
                Mat m = i * symplectic_form(total_modes) * step.W;
                out.dS[step.scale.symbol] += m * out.S;
                out.db[step.scale.symbol] += out.S * step.a;
            }
            break;
        }
        case Kind::partial_trace:
            throw ValidationError("partial_trace is not a unitary step");
    }
    return out;
}

struct InitialData {
    Vec d;
    Mat sigma;
    std::vector<Vec> dd;
    std::vector<Mat> dsigma;
    Mat S0;
    RealVec lambdas;
    std::vector<RealVec> dlambdas;
};

inline InitialData initial_data(const InitialState& init, const RealVec& eps,
                                bool with_derivatives) {
    using Kind = InitialState::Kind;
    const int p = static_cast<int>(eps.size());
    const int n = init.modes;
    const int dim = 2 * n;
    InitialData out;
    out.d = Vec::Zero(dim);
    out.sigma = Mat::Identity(dim, dim);
    out.S0 = Mat::Identity(dim, dim);
    out.lambdas = RealVec::Ones(n);
    if (with_derivatives) {
        out.dd.assign(p, Vec::Zero(dim));
        out.dsigma.assign(p, Mat::Zero(dim, dim));
        out.dlambdas.assign(p, RealVec::Zero(n));
    }
    switch (init.kind) {
        case Kind::vacuum:
            break;
        case Kind::thermal: {
            if (static_cast<int>(init.thermal.size()) != n)
                throw ValidationError("thermal initial state needs one entry per mode");
            for (int k = 0; k < n; ++k) {
                double lambda;
                double dlambda = 1.0;  // d lambda / d entry
                if (init.thermal_in_beta) {
                    const double beta = init.thermal[k].at(eps);
                    if (beta <= 0.0)
                        throw ValidationError("thermal initial state: beta must be positive");
                    lambda = 1.0 / std::tanh(beta / 2.0);
                    dlambda = -(lambda * lambda - 1.0) / 2.0;
                } else {
                    lambda = init.thermal[k].at(eps);
                    if (lambda < 1.0)
                        throw ValidationError("thermal initial state: lambda must be >= 1");
                }
                out.lambdas(k) = lambda;
                out.sigma(k, k) = out.sigma(n + k, n + k) = lambda;
                if (with_derivatives && init.thermal[k].bound()) {
                    const int i = init.thermal[k].symbol;
                    out.dlambdas[i](k) += dlambda;
                    out.dsigma[i](k, k) += dlambda;
                    out.dsigma[i](n + k, n + k) += dlambda;
                }
            }
            break;
        }
        case Kind::coherent: {
            if (static_cast<int>(init.alphas.size()) != n)
                throw ValidationError("coherent initial state needs one amplitude per mode");
            for (int k = 0; k < n; ++k) {
                out.d(k) = init.alphas[k];
                out.d(n + k) = std::conj(init.alphas[k]);
            }
            break;
        }
        case Kind::squeezed_vacuum: {
            if (n != 1) throw ValidationError("squeezed_vacuum initial state is single-mode");
            out.S0 = squeeze_local(init.r, init.chi);
            out.sigma = out.S0 * out.S0.adjoint();
            break;
        }
        case Kind::two_mode_squeezed_vacuum: {
            if (n != 2)
                throw ValidationError("two_mode_squeezed_vacuum initial state is two-mode");
            out.S0 = two_mode_squeeze_local(init.r, init.chi);
            out.sigma = out.S0 * out.S0.adjoint();
            break;
        }
    }
    return out;
}

}  // namespace detail

/// Family built from a catalog initial state followed by channel steps whose
/// parameters may be bound to estimation parameters. Analytic first
/// derivatives come from the product rule over the steps; analytic symplectic
/// data is available whenever no partial trace occurs (the initial states all
/// carry an exact symplectic factor, and partial trace destroys it).
inline StateFamily make_channel_family(std::vector<std::string> param_names, InitialState initial,
                                       std::vector<ChannelStep> steps) {
    const int p = static_cast<int>(param_names.size());
    for (const auto& step : steps) {
        for (const ParamRef* ref : {&step.theta, &step.r, &step.chi, &step.re, &step.im, &step.scale})
            if (ref->bound() && (ref->symbol < 0 || ref->symbol >= p))
                throw ValidationError("channel step references an undefined parameter symbol");
    }
    for (const auto& ref : initial.thermal)
        if (ref.bound() && (ref.symbol < 0 || ref.symbol >= p))
            throw ValidationError("initial state references an undefined parameter symbol");

    bool traced = false;
    for (const auto& step : steps)
        if (step.kind == ChannelStep::Kind::partial_trace) traced = true;

    StateFamily family;
    family.param_names = std::move(param_names);

    family.evaluator = [initial, steps](const RealVec& eps) {
        detail::InitialData data = detail::initial_data(initial, eps, false);
        Vec d = std::move(data.d);
        Mat sigma = std::move(data.sigma);
        int modes = initial.modes;
        for (const auto& step : steps) {
            if (step.kind == ChannelStep::Kind::partial_trace) {
                GaussianState reduced = partial_trace(GaussianState(d, sigma), step.modes);
                d = reduced.d();
                sigma = reduced.sigma();
                modes = reduced.modes();
                continue;
            }
            detail::StepMatrices sm = detail::step_matrices(step, modes, eps, false);
            d = sm.S * d + sm.b;
            sigma = sm.S * sigma * sm.S.adjoint();
        }
        return GaussianState(std::move(d), std::move(sigma));
    };

    family.derivative_evaluator = [initial, steps, p](const RealVec& eps, std::vector<Vec>& dd,
                                                      std::vector<Mat>& dsigma) {
        detail::InitialData data = detail::initial_data(initial, eps, true);
        Vec d = std::move(data.d);
        Mat sigma = std::move(data.sigma);
        dd = std::move(data.dd);
        dsigma = std::move(data.dsigma);
        int modes = initial.modes;
        for (const auto& step : steps) {
            if (step.kind == ChannelStep::Kind::partial_trace) {
                std::vector<int> keep = step.modes;
                std::sort(keep.begin(), keep.end());
                const int k = static_cast<int>(keep.size());
                std::vector<int> idx(2 * k);
                for (int q = 0; q < k; ++q) {
                    idx[q] = keep[q];
                    idx[k + q] = modes + keep[q];
                }
                auto select_vec = [&](const Vec& v) {
                    Vec out(2 * k);
                    for (int q = 0; q < 2 * k; ++q) out(q) = v(idx[q]);
                    return out;
                };
                auto select_mat = [&](const Mat& m) {
                    Mat out(2 * k, 2 * k);
                    for (int a = 0; a < 2 * k; ++a)
                        for (int b = 0; b < 2 * k; ++b) out(a, b) = m(idx[a], idx[b]);
                    return out;
                };
                d = select_vec(d);
                sigma = select_mat(sigma);
                for (int i = 0; i < p; ++i) {
                    dd[i] = select_vec(dd[i]);
                    dsigma[i] = select_mat(dsigma[i]);
                }
                modes = k;
                continue;
            }
            detail::StepMatrices sm = detail::step_matrices(step, modes, eps, true);
            for (int i = 0; i < p; ++i) {
                dd[i] = sm.dS[i] * d + sm.S * dd[i] + sm.db[i];
                dsigma[i] = sm.dS[i] * sigma * sm.S.adjoint() + sm.S * dsigma[i] * sm.S.adjoint() +
                            sm.S * sigma * sm.dS[i].adjoint();
            }
            d = sm.S * d + sm.b;
            sigma = sm.S * sigma * sm.S.adjoint();
        }
    };

    if (!traced) {
        family.symplectic_evaluator = [initial, steps, p](const RealVec& eps) {
            detail::InitialData data = detail::initial_data(initial, eps, true);
            SymplecticData out;
            out.S = std::move(data.S0);
            out.lambdas = std::move(data.lambdas);
            out.dlambdas = std::move(data.dlambdas);
            out.dS.assign(p, Mat::Zero(out.S.rows(), out.S.cols()));
            for (const auto& step : steps) {
                detail::StepMatrices sm = detail::step_matrices(step, initial.modes, eps, true);
                for (int i = 0; i < p; ++i) out.dS[i] = sm.dS[i] * out.S + sm.S * out.dS[i];
                out.S = sm.S * out.S;
            }
            return out;
        };
    }

    return family;
}

}  // namespace gqm
