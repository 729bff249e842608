#include <CLI11.hpp>

#include <gqm/gqm.hpp>

#include "bundled_scenarios.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::string load_scenario_text(const std::string& arg) {
    const auto& bundled = bundled_scenarios();
    if (auto it = bundled.find(arg); it != bundled.end()) return it->second;
    std::ifstream in(arg);
    if (!in.good())
        throw gqm::ValidationError("cannot read scenario '" + arg +
                                   "' (not a file, not a bundled name; see `gqm list`)");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out.good()) throw gqm::ValidationError("cannot write to '" + out_path + "'");
    out << text;
}

int run_command(const std::string& scenario_arg, const std::string& methods_csv,
                const std::string& out_path, bool as_json, double target_error,
                double pure_tol) {
    gqm::Scenario sc = gqm::parse_scenario(load_scenario_text(scenario_arg));
    if (!methods_csv.empty()) {
        sc.methods.clear();
        std::stringstream ss(methods_csv);
        std::string item;
        while (std::getline(ss, item, ',')) sc.methods.push_back(gqm::method_from_string(item));
        if (sc.methods.empty()) throw gqm::ValidationError("--methods: empty method list");
    }
    if (target_error > 0) sc.options.target_abs_error = target_error;
    if (pure_tol > 0) sc.options.pure_tol = pure_tol;

    gqm::Report report = gqm::run_scenario(sc);
    if (as_json)
        emit(gqm::report_json(report).dump(2) + "\n", out_path);
    else
        emit(gqm::render_table(report), out_path);

    int exit_code = 0;
    for (const auto& outcome : report.outcomes) {
        if (outcome.error_kind == 2) return kExitNumerical;
        if (outcome.error_kind == 1) exit_code = kExitValidation;
    }
    return exit_code;
}

int validate_command(const std::string& scenario_arg) {
    auto diagnostics = gqm::scenario_diagnostics(load_scenario_text(scenario_arg));
    if (diagnostics.empty()) {
        std::cout << "ok\n";
        return 0;
    }
    for (const auto& d : diagnostics) std::cout << "violation: " << d << "\n";
    return kExitValidation;
}

int list_command() {
    for (const auto& [name, text] : bundled_scenarios()) {
        gqm::Scenario sc = gqm::parse_scenario(text);
        std::cout << name << "  (" << sc.modes << (sc.modes == 1 ? " mode, " : " modes, ")
                  << sc.param_names.size() << " parameter"
                  << (sc.param_names.size() == 1 ? "" : "s") << ": ";
        for (std::size_t i = 0; i < sc.param_names.size(); ++i)
            std::cout << (i ? ", " : "") << sc.param_names[i];
        std::cout << ")\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("GQM_THREADS")) Eigen::setNbThreads(std::atoi(threads));

    CLI::App app{
        "Quantum Fisher information, symmetric logarithmic derivatives, and Cramer-Rao "
        "saturability for multi-mode Gaussian state families"};
    app.require_subcommand(1);

    std::string scenario_arg, methods_csv, out_path;
    bool as_json = false;
    double target_error = -1.0, pure_tol = -1.0;
    auto* run = app.add_subcommand("run", "Evaluate a scenario and print the report");
    run->add_option("scenario", scenario_arg, "Scenario file path or bundled scenario name")
        ->required();
    run->add_option("--methods", methods_csv,
                    "Comma-separated methods overriding the scenario "
                    "(mixed,williamson,compact,limit,pure,regularized,cqfim,auto)");
    run->add_option("--out", out_path, "Write the report to this path instead of stdout");
    run->add_flag("--json", as_json, "Machine-readable report with full-precision numbers");
    run->add_option("--target-error", target_error,
                    "Absolute truncation target for the limit method");
    run->add_option("--pure-tol", pure_tol, "Threshold on |lambda - 1| for pure-mode handling");

    std::string validate_arg;
    auto* validate_cmd =
        app.add_subcommand("validate", "Report schema and physicality violations without running");
    validate_cmd->add_option("scenario", validate_arg, "Scenario file path or bundled name")
        ->required();

    app.add_subcommand("list", "List the bundled scenarios");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("run"))
            return run_command(scenario_arg, methods_csv, out_path, as_json, target_error,
                               pure_tol);
        if (app.got_subcommand("validate")) return validate_command(validate_arg);
        return list_command();
    } catch (const gqm::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const gqm::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
