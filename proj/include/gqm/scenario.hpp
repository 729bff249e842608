#pragma once

#include <json.hpp>

#include <chrono>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gqm/sld.hpp"

namespace gqm {

struct ScenarioOptions {
    double target_abs_error = 1e-10;  // limit-route truncation target
    double pure_tol = tol::pure;
    double sat_tol = tol::saturability;
    std::vector<double> nu_schedule;  // empty selects the adaptive default
    std::optional<double> fd_step;    // finite-difference step scale override
};

/// A parsed scenario file: an initial catalog state, channel steps with
/// parameters bound to the estimation parameters, and the methods to run.
struct Scenario {
    std::string name;
    int modes = 1;
    std::vector<std::string> param_names;
    RealVec eval_point;
    InitialState initial;
    std::vector<ChannelStep> steps;
    std::vector<QfimMethod> methods;
    ScenarioOptions options;
};

inline QfimMethod method_from_string(const std::string& s) {
    for (QfimMethod m :
         {QfimMethod::mixed, QfimMethod::williamson, QfimMethod::compact, QfimMethod::limit,
          QfimMethod::pure, QfimMethod::regularized, QfimMethod::cqfim, QfimMethod::automatic})
        if (s == method_name(m)) return m;
    throw ValidationError("unknown method name: " + s);
}

namespace detail {

using nlohmann::json;

inline ParamRef param_ref_from_json(const json& j, const std::vector<std::string>& names,
                                    const char* where) {
    if (j.is_number()) return ParamRef::lit(j.get<double>());
    if (j.is_string()) {
        const std::string symbol = j.get<std::string>();
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == symbol) return ParamRef::sym(static_cast<int>(i));
        throw ValidationError(std::string(where) + ": undefined parameter symbol '" + symbol +
                              "'");
    }
    throw ValidationError(std::string(where) + ": expected a number or a parameter name");
}

inline Complex complex_from_json(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ValidationError(std::string(where) + ": complex values are [re, im] pairs");
    return Complex(j[0].get<double>(), j[1].get<double>());
}

inline json complex_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline std::vector<int> modes_from_json(const json& j, int total_modes, const char* where) {
    if (!j.is_array() || j.empty())
        throw ValidationError(std::string(where) + ": 'modes' must be a nonempty array");
    std::vector<int> out;
    for (const auto& v : j) {
        if (!v.is_number_integer())
            throw ValidationError(std::string(where) + ": mode indices must be integers");
        const int mode = v.get<int>();
        if (mode < 1 || mode > total_modes)
            throw ValidationError(std::string(where) + ": mode index " + std::to_string(mode) +
                                  " out of range 1.." + std::to_string(total_modes));
        out.push_back(mode - 1);  // scenario files are 1-based
    }
    return out;
}

}  // namespace detail

/// Parse and structurally validate a scenario document. Throws
/// ValidationError with a description of the first problem found.
inline Scenario parse_scenario(const std::string& text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema") || j["schema"] != 1)
        throw ValidationError("scenario must be a JSON object with \"schema\": 1");

    Scenario sc;
    sc.name = j.value("name", std::string("unnamed"));
    if (!j.contains("modes") || !j["modes"].is_number_integer() || j["modes"].get<int>() < 1)
        throw ValidationError("scenario needs a positive integer 'modes'");
    sc.modes = j["modes"].get<int>();

    if (!j.contains("parameters") || !j["parameters"].is_array())
        throw ValidationError("scenario needs a 'parameters' array");
    std::vector<double> values;
    for (const auto& pj : j["parameters"]) {
        if (!pj.is_object() || !pj.contains("name") || !pj.contains("value"))
            throw ValidationError("each parameter needs 'name' and 'value'");
        sc.param_names.push_back(pj["name"].get<std::string>());
        values.push_back(pj["value"].get<double>());
    }
    sc.eval_point = Eigen::Map<RealVec>(values.data(), values.size());

    if (!j.contains("initial_state") || !j["initial_state"].is_object())
        throw ValidationError("scenario needs an 'initial_state' object");
    const json& init = j["initial_state"];
    const std::string kind = init.value("kind", std::string());
    sc.initial.modes = sc.modes;
    if (kind == "vacuum") {
        sc.initial.kind = InitialState::Kind::vacuum;
    } else if (kind == "thermal") {
        sc.initial.kind = InitialState::Kind::thermal;
        const bool has_lambda = init.contains("lambda"), has_beta = init.contains("beta");
        if (has_lambda == has_beta)
            throw ValidationError("thermal initial state needs exactly one of 'lambda' or 'beta'");
        sc.initial.thermal_in_beta = has_beta;
        const json& arr = has_beta ? init["beta"] : init["lambda"];
        if (!arr.is_array() || static_cast<int>(arr.size()) != sc.modes)
            throw ValidationError("thermal initial state needs one entry per mode");
        for (const auto& v : arr)
            sc.initial.thermal.push_back(
                detail::param_ref_from_json(v, sc.param_names, "initial_state"));
    } else if (kind == "coherent") {
        sc.initial.kind = InitialState::Kind::coherent;
        if (!init.contains("alpha") || !init["alpha"].is_array() ||
            static_cast<int>(init["alpha"].size()) != sc.modes)
            throw ValidationError("coherent initial state needs one alpha = [re, im] per mode");
        for (const auto& v : init["alpha"])
            sc.initial.alphas.push_back(detail::complex_from_json(v, "initial_state"));
    } else if (kind == "squeezed_vacuum" || kind == "two_mode_squeezed_vacuum") {
        sc.initial.kind = kind == "squeezed_vacuum"
                              ? InitialState::Kind::squeezed_vacuum
                              : InitialState::Kind::two_mode_squeezed_vacuum;
        sc.initial.r = init.value("r", 0.0);
        sc.initial.chi = init.value("chi", 0.0);
    } else {
        throw ValidationError("unknown initial_state kind: '" + kind + "'");
    }

    if (j.contains("channel_steps")) {
        if (!j["channel_steps"].is_array())
            throw ValidationError("'channel_steps' must be an array");
        for (const auto& sj : j["channel_steps"]) {
            const std::string step_kind = sj.value("kind", std::string());
            ChannelStep step;
            const json params = sj.value("params", json::object());
            auto ref = [&](const char* key, double fallback) {
                return params.contains(key)
                           ? detail::param_ref_from_json(params[key], sc.param_names, step_kind.c_str())
                           : ParamRef::lit(fallback);
            };
            auto require = [&](const char* key) {
                if (!params.contains(key))
                    throw ValidationError(step_kind + " step needs parameter '" + key + "'");
                return detail::param_ref_from_json(params[key], sc.param_names, step_kind.c_str());
            };
            if (step_kind == "rotation") {
                step.kind = ChannelStep::Kind::rotation;
                step.modes = detail::modes_from_json(sj.at("modes"), sc.modes, "rotation");
                step.theta = require("theta");
            } else if (step_kind == "squeeze") {
                step.kind = ChannelStep::Kind::squeeze;
                step.modes = detail::modes_from_json(sj.at("modes"), sc.modes, "squeeze");
                step.r = require("r");
                step.chi = ref("chi", 0.0);
            } else if (step_kind == "two_mode_squeeze") {
                step.kind = ChannelStep::Kind::two_mode_squeeze;
                step.modes = detail::modes_from_json(sj.at("modes"), sc.modes, "two_mode_squeeze");
                step.r = require("r");
                step.chi = ref("chi", 0.0);
            } else if (step_kind == "beam_splitter") {
                step.kind = ChannelStep::Kind::beam_splitter;
                step.modes = detail::modes_from_json(sj.at("modes"), sc.modes, "beam_splitter");
                step.theta = require("theta");
                step.chi = ref("chi", 0.0);
            } else if (step_kind == "displacement") {
                step.kind = ChannelStep::Kind::displacement;
                step.modes = detail::modes_from_json(sj.at("modes"), sc.modes, "displacement");
                step.re = ref("re", 0.0);
                step.im = ref("im", 0.0);
            } else if (step_kind == "generator") {
                step.kind = ChannelStep::Kind::generator;
                const int dim = 2 * sc.modes;
                if (!sj.contains("W") || !sj.contains("a"))
                    throw ValidationError("generator step needs full-size 'W' and 'a'");
                const json& wj = sj["W"];
                const json& aj = sj["a"];
                if (!wj.is_array() || static_cast<int>(wj.size()) != dim || !aj.is_array() ||
                    static_cast<int>(aj.size()) != dim)
                    throw ValidationError("generator step: W must be 2Nx2N and a of length 2N");
                step.W = Mat(dim, dim);
                step.a = Vec(dim);
                for (int r = 0; r < dim; ++r) {
                    if (!wj[r].is_array() || static_cast<int>(wj[r].size()) != dim)
                        throw ValidationError("generator step: W must be 2Nx2N");
                    for (int c = 0; c < dim; ++c)
                        step.W(r, c) = detail::complex_from_json(wj[r][c], "generator W");
                    step.a(r) = detail::complex_from_json(aj[r], "generator a");
                }
                step.scale = ref("scale", 1.0);
            } else if (step_kind == "partial_trace") {
                step.kind = ChannelStep::Kind::partial_trace;
                step.modes = detail::modes_from_json(sj.at("modes"), sc.modes, "partial_trace");
            } else {
                throw ValidationError("unknown channel step kind: '" + step_kind + "'");
            }
            sc.steps.push_back(std::move(step));
        }
    }

    if (j.contains("methods")) {
        if (!j["methods"].is_array() || j["methods"].empty())
            throw ValidationError("'methods' must be a nonempty array");
        for (const auto& m : j["methods"]) sc.methods.push_back(method_from_string(m.get<std::string>()));
    } else {
        sc.methods.push_back(QfimMethod::automatic);
    }

    if (j.contains("options")) {
        const json& opt = j["options"];
        sc.options.target_abs_error = opt.value("target_abs_error", sc.options.target_abs_error);
        sc.options.pure_tol = opt.value("pure_tol", sc.options.pure_tol);
        sc.options.sat_tol = opt.value("sat_tol", sc.options.sat_tol);
        if (opt.contains("nu_schedule"))
            sc.options.nu_schedule = opt["nu_schedule"].get<std::vector<double>>();
        if (opt.contains("fd_step")) sc.options.fd_step = opt["fd_step"].get<double>();
    }
    return sc;
}

inline StateFamily scenario_family(const Scenario& sc) {
    return make_channel_family(sc.param_names, sc.initial, sc.steps);
}

/// Schema and physicality diagnostics without running any estimator.
inline std::vector<std::string> scenario_diagnostics(const std::string& text) {
    std::vector<std::string> out;
    Scenario sc;
    try {
        sc = parse_scenario(text);
    } catch (const ValidationError& e) {
        out.emplace_back(e.what());
        return out;
    }
    try {
        StateFamily family = scenario_family(sc);
        GaussianState state = family.evaluator(sc.eval_point);
        for (const auto& violation : validate(state))
            out.push_back(std::string(violation_name(violation.kind)) + ": " + violation.detail);
    } catch (const std::exception& e) {
        out.emplace_back(e.what());
    }
    return out;
}

struct MethodOutcome {
    QfimMethod requested;
    bool ok = false;
    std::string error;
    int error_kind = 0;  // 0 none, 1 validation/precondition, 2 numerical
    QfimResult qfim;
    bool has_saturability = false;
    SaturabilityReport sat;
};

struct Report {
    std::string scenario_name;
    std::vector<std::string> param_names;
    RealVec eval_point;
    RealVec spectrum;
    std::vector<bool> pure_modes;
    std::vector<MethodOutcome> outcomes;
    /// Max entrywise |H_a - H_b| across successful methods (cqfim excluded:
    /// it estimates the Bures-metric quantity, which differs at pure points).
    double cross_discrepancy = 0.0;
    double timing_ms = 0.0;
};

inline Report run_scenario(const Scenario& sc) {
    const auto start = std::chrono::steady_clock::now();
    Report report;
    report.scenario_name = sc.name;
    report.param_names = sc.param_names;
    report.eval_point = sc.eval_point;

    StateFamily family = scenario_family(sc);
    BundleOptions bopts;
    bool want_hessians = false;
    for (QfimMethod m : sc.methods) want_hessians |= m == QfimMethod::cqfim;
    bopts.want_hessians = want_hessians;
    if (sc.options.fd_step) bopts.fd_step_scale = *sc.options.fd_step;
    DerivativeBundle bundle = evaluate_bundle(family, sc.eval_point, bopts);
    report.spectrum = bundle.spectrum;
    report.pure_modes = detail::pure_flags(bundle.spectrum, sc.options.pure_tol);

    RegularizationOptions reg;
    reg.nu_schedule = sc.options.nu_schedule;
    const double pure_tol = sc.options.pure_tol;

    auto select_auto_route = [&](void) {
        if (bundle.spectrum.minCoeff() > 1.0 + pure_tol) return SaturabilityRoute::mixed;
        if (bundle.has_symplectic) return SaturabilityRoute::williamson;
        return SaturabilityRoute::regularized;
    };

    for (QfimMethod m : sc.methods) {
        MethodOutcome outcome;
        outcome.requested = m;
        std::optional<SaturabilityRoute> sat_route;
        try {
            switch (m) {
                case QfimMethod::mixed:
                    outcome.qfim = qfim_mixed(bundle, pure_tol);
                    sat_route = SaturabilityRoute::mixed;
                    break;
                case QfimMethod::williamson:
                    outcome.qfim = qfim_williamson(bundle, pure_tol);
                    sat_route = SaturabilityRoute::williamson;
                    break;
                case QfimMethod::compact:
                    outcome.qfim = qfim_compact(bundle, pure_tol);
                    sat_route = SaturabilityRoute::williamson;
                    break;
                case QfimMethod::limit: {
                    LimitOptions lopts;
                    lopts.target_abs_error = sc.options.target_abs_error;
                    outcome.qfim = qfim_limit(bundle, lopts, pure_tol);
                    break;
                }
                case QfimMethod::pure:
                    outcome.qfim = qfim_pure(bundle, pure_tol);
                    sat_route = SaturabilityRoute::pure;
                    break;
                case QfimMethod::regularized:
                    outcome.qfim = qfim_regularized(bundle, reg, pure_tol);
                    sat_route = SaturabilityRoute::regularized;
                    break;
                case QfimMethod::cqfim:
                    outcome.qfim = cqfim(bundle, pure_tol, reg);
                    break;
                case QfimMethod::automatic:
                    outcome.qfim = qfim_auto(bundle, pure_tol, reg);
                    sat_route = select_auto_route();
                    break;
            }
            outcome.ok = true;
        } catch (const NumericalError& e) {
            outcome.error = e.what();
            outcome.error_kind = 2;
        } catch (const std::exception& e) {  // PureModeError, ValidationError
            outcome.error = e.what();
            outcome.error_kind = 1;
        }
        if (outcome.ok && sat_route) {
            try {
                outcome.sat = saturability(bundle, *sat_route, sc.options.sat_tol, reg, pure_tol);
                outcome.has_saturability = true;
            } catch (const NumericalError& e) {
                outcome.error = e.what();
                outcome.error_kind = std::max(outcome.error_kind, 2);
            } catch (const std::exception& e) {
                outcome.error = e.what();
                outcome.error_kind = std::max(outcome.error_kind, 1);
            }
        }
        report.outcomes.push_back(std::move(outcome));
    }

    for (std::size_t a = 0; a < report.outcomes.size(); ++a)
        for (std::size_t b = a + 1; b < report.outcomes.size(); ++b) {
            const auto& oa = report.outcomes[a];
            const auto& ob = report.outcomes[b];
            if (!oa.ok || !ob.ok) continue;
            if (oa.requested == QfimMethod::cqfim || ob.requested == QfimMethod::cqfim) continue;
            report.cross_discrepancy = std::max(
                report.cross_discrepancy, (oa.qfim.H - ob.qfim.H).cwiseAbs().maxCoeff());
        }

    report.timing_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    return report;
}

namespace detail {

inline json real_matrix_to_json(const RealMat& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json complex_matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

/// Machine-readable report. `include_timing` is off in the determinism canon:
/// identical scenario and flags produce byte-identical output without it.
inline nlohmann::json report_json(const Report& report, bool include_timing = true) {
    using nlohmann::json;
    json j;
    j["scenario"] = report.scenario_name;
    json params = json::array();
    for (std::size_t i = 0; i < report.param_names.size(); ++i)
        params.push_back({{"name", report.param_names[i]}, {"value", report.eval_point(i)}});
    j["parameters"] = params;
    json spectrum = json::array();
    for (int k = 0; k < report.spectrum.size(); ++k) spectrum.push_back(report.spectrum(k));
    j["symplectic_spectrum"] = spectrum;
    j["pure_modes"] = report.pure_modes;
    json methods = json::object();
    for (const auto& outcome : report.outcomes) {
        json m;
        m["ok"] = outcome.ok;
        if (!outcome.error.empty()) m["error"] = outcome.error;
        if (outcome.ok) {
            m["H"] = detail::real_matrix_to_json(outcome.qfim.H);
            m["method_used"] = method_name(outcome.qfim.method);
            if (outcome.qfim.series_terms) m["series_terms"] = *outcome.qfim.series_terms;
            if (outcome.qfim.error_bound)
                m["error_bound"] = detail::real_matrix_to_json(*outcome.qfim.error_bound);
            if (outcome.has_saturability) {
                json sat;
                sat["C"] = detail::complex_matrix_to_json(outcome.sat.C);
                sat["saturable"] = outcome.sat.saturable;
                sat["tolerance"] = outcome.sat.tolerance;
                m["saturability"] = sat;
            }
        }
        methods[method_name(outcome.requested)] = m;
    }
    j["methods"] = methods;
    j["cross_method_max_discrepancy"] = report.cross_discrepancy;
    if (include_timing) j["timing_ms"] = report.timing_ms;
    return j;
}

/// Human-readable report.
inline std::string render_table(const Report& report) {
    std::ostringstream os;
    os.precision(12);
    os << "scenario: " << report.scenario_name << "\n";
    os << "parameters:";
    for (std::size_t i = 0; i < report.param_names.size(); ++i)
        os << " " << report.param_names[i] << "=" << report.eval_point(i);
    os << "\nsymplectic spectrum:";
    for (int k = 0; k < report.spectrum.size(); ++k) {
        os << " " << report.spectrum(k);
        if (report.pure_modes[k]) os << " (pure)";
    }
    os << "\n";
    for (const auto& outcome : report.outcomes) {
        os << "\n[" << method_name(outcome.requested) << "]";
        if (!outcome.ok) {
            os << " failed: " << outcome.error << "\n";
            continue;
        }
        if (outcome.qfim.method != outcome.requested)
            os << " -> " << method_name(outcome.qfim.method);
        os << "\n  H =\n";
        for (int r = 0; r < outcome.qfim.H.rows(); ++r) {
            os << "   ";
            for (int c = 0; c < outcome.qfim.H.cols(); ++c) os << " " << outcome.qfim.H(r, c);
            os << "\n";
        }
        if (outcome.qfim.series_terms) os << "  series terms M = " << *outcome.qfim.series_terms << "\n";
        if (outcome.qfim.error_bound)
            os << "  max remainder bound = " << outcome.qfim.error_bound->maxCoeff() << "\n";
        if (outcome.has_saturability) {
            os << "  commutator traces Im(C):\n";
            for (int r = 0; r < outcome.sat.C.rows(); ++r) {
                os << "   ";
                for (int c = 0; c < outcome.sat.C.cols(); ++c)
                    os << " " << outcome.sat.C(r, c).imag();
                os << "\n";
            }
            os << "  saturable: " << (outcome.sat.saturable ? "yes" : "no") << " (|C| < "
               << outcome.sat.tolerance << ")\n";
        }
        if (!outcome.error.empty()) os << "  note: " << outcome.error << "\n";
    }
    os << "\ncross-method max discrepancy: " << report.cross_discrepancy << "\n";
    os << "elapsed: " << report.timing_ms << " ms\n";
    return os.str();
}

}  // namespace gqm
