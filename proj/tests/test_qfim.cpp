#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace gqm;
using helpers::uniform;

TEST_CASE("squeezed thermal QFIM, all mixed-state routes") {
    StateFamily family = helpers::squeezed_thermal_family();

    SECTION("lambda = 2, r = 1") {
        RealVec eps(2);
        eps << helpers::beta_of_lambda(2.0), 1.0;
        DerivativeBundle b = evaluate_bundle(family, eps);
        RealMat expected(2, 2);
        expected << 0.75, 0.0, 0.0, 3.2;
        REQUIRE((qfim_mixed(b).H - expected).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((qfim_williamson(b).H - expected).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((qfim_compact(b).H - expected).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((qfim_regularized(b).H - expected).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("random parameter draws against the closed form") {
        std::mt19937 rng(8001);
        for (int draw = 0; draw < 10; ++draw) {
            const double lambda = uniform(rng, 1.2, 4.5);
            RealVec eps(2);
            eps << helpers::beta_of_lambda(lambda), uniform(rng, 0.1, 1.4);
            DerivativeBundle b = evaluate_bundle(family, eps);
            RealMat expected = helpers::example1_exact(lambda);
            REQUIRE(helpers::rel_err(qfim_mixed(b).H, expected) < 1e-10);
            REQUIRE(helpers::rel_err(qfim_williamson(b).H, expected) < 1e-10);
        }
    }
}

TEST_CASE("mixed-route preconditions") {
    StateFamily pure_family = helpers::coherent_squeeze_phase_family(Complex(0.3, 0.1));
    RealVec eps(2);
    eps << 0.5, 0.2;
    DerivativeBundle b = evaluate_bundle(pure_family, eps);
    REQUIRE_THROWS_AS(qfim_mixed(b), PureModeError);
    REQUIRE_THROWS_AS(qfim_compact(b), PureModeError);
    REQUIRE_THROWS_AS(qfim_limit(b), PureModeError);
}

TEST_CASE("constant family gives a zero QFIM") {
    InitialState init;
    init.kind = InitialState::Kind::thermal;
    init.modes = 1;
    init.thermal = {ParamRef::lit(2.2)};
    StateFamily family = make_channel_family({"unused"}, init, {});
    RealVec eps(1);
    eps << 0.0;
    DerivativeBundle b = evaluate_bundle(family, eps);
    REQUIRE(qfim_mixed(b).H.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(qfim_williamson(b).H.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coherent probe squeeze+phase QFIM (Williamson route, pure conventions)") {
    std::mt19937 rng(8002);
    for (int draw = 0; draw < 20; ++draw) {
        const Complex alpha(uniform(rng, -1.2, 1.2), uniform(rng, -1.2, 1.2));
        const double r = uniform(rng, 0.1, 1.2), theta = uniform(rng, 0.0, 6.28);
        StateFamily family = helpers::coherent_squeeze_phase_family(alpha);
        RealVec eps(2);
        eps << r, theta;
        DerivativeBundle b = evaluate_bundle(family, eps);
        RealMat expected = helpers::example2_exact(alpha, r);
        REQUIRE(helpers::rel_err(qfim_williamson(b).H, expected) < 1e-9);
        REQUIRE(helpers::rel_err(qfim_regularized(b).H, expected) < 1e-7);
        REQUIRE(helpers::rel_err(qfim_pure(b).H, expected) < 1e-9);
    }
}

TEST_CASE("thermal-only family reduces to the d-lambda term") {
    InitialState init;
    init.kind = InitialState::Kind::thermal;
    init.modes = 2;
    init.thermal = {ParamRef::sym(0), ParamRef::lit(helpers::beta_of_lambda(3.0))};
    init.thermal_in_beta = true;
    StateFamily family = make_channel_family({"beta"}, init, {});
    const double lambda = 1.8;
    RealVec eps(1);
    eps << helpers::beta_of_lambda(lambda);
    DerivativeBundle b = evaluate_bundle(family, eps);
    const double dlam = -(lambda * lambda - 1.0) / 2.0;
    const double expected = dlam * dlam / (lambda * lambda - 1.0);
    REQUIRE(std::abs(qfim_williamson(b).H(0, 0) - expected) < 1e-12);
    REQUIRE(std::abs(qfim_mixed(b).H(0, 0) - expected) < 1e-10);
}

TEST_CASE("cross-method agreement on random mixed families") {
    std::mt19937 rng(8003);
    for (int trial = 0; trial < 25; ++trial) {
        const int modes = 1 + trial % 2;
        const int params = 1 + trial % 3;
        auto rf = helpers::random_mixed_family(rng, modes, params);
        DerivativeBundle b = evaluate_bundle(rf.family, rf.eps);
        RealMat h_mixed = qfim_mixed(b).H;
        REQUIRE((qfim_williamson(b).H - h_mixed).cwiseAbs().maxCoeff() < 1e-9 * (1 + h_mixed.cwiseAbs().maxCoeff()));
        REQUIRE((qfim_compact(b).H - qfim_williamson(b).H).cwiseAbs().maxCoeff() < 1e-10 * (1 + h_mixed.cwiseAbs().maxCoeff()));
        LimitOptions lo;
        lo.target_abs_error = 1e-10;
        REQUIRE((qfim_limit(b, lo).H - h_mixed).cwiseAbs().maxCoeff() < 1e-9 * (1 + h_mixed.cwiseAbs().maxCoeff()));
        REQUIRE((qfim_regularized(b).H - h_mixed).cwiseAbs().maxCoeff() < 1e-8 * (1 + h_mixed.cwiseAbs().maxCoeff()));
        REQUIRE(min_eigenvalue(h_mixed) > -1e-8);
    }
}

TEST_CASE("limit formula") {
    StateFamily family = helpers::squeezed_thermal_family();
    RealVec eps(2);
    eps << helpers::beta_of_lambda(2.0), 1.0;
    DerivativeBundle b = evaluate_bundle(family, eps);

    SECTION("two-decimal target needs M = 5 terms") {
        LimitOptions lo;
        lo.target_abs_error = 1e-2;
        QfimResult res = qfim_limit(b, lo);
        REQUIRE(res.series_terms);
        REQUIRE(*res.series_terms == 5);
        REQUIRE(std::abs(res.H(0, 0) - 0.749267578125) < 1e-9);
        REQUIRE(std::abs(res.H(1, 1) - 3.203125) < 1e-9);
        REQUIRE(std::abs(res.H(0, 0) - 0.75) < 1e-2);
        REQUIRE(std::abs(res.H(1, 1) - 3.2) < 1e-2);
        REQUIRE(res.error_bound);
        REQUIRE(res.error_bound->maxCoeff() <= 1e-2);
    }

    SECTION("remainder threshold sits at 4.529") {
        // smallest M with bound <= 1e-2 is ceil(threshold); recover the
        // continuous threshold from the bound's geometric form
        Mat k = symplectic_form(1);
        Mat a = k * b.state.sigma();
        Mat da_beta = k * b.dsigma[0];
        Mat da_r = k * b.dsigma[1];
        double worst = 0.0;
        for (const Mat* di : {&da_beta, &da_r})
            for (const Mat* dj : {&da_beta, &da_r})
                worst = std::max(worst, remainder_bound(a, *di, *dj, 0, 2.0) * 4.0);
        const double threshold = std::log(worst / 1e-2) / (2.0 * std::log(2.0)) - 1.0;
        REQUIRE(std::abs(threshold - 4.529) < 1e-3);
    }

    SECTION("bound decays geometrically and dominates the truncation error") {
        RealMat exact = qfim_mixed(b).H;
        double previous = std::numeric_limits<double>::infinity();
        for (int m = 1; m <= 10; ++m) {
            LimitOptions lo;
            lo.fixed_terms = m;
            QfimResult res = qfim_limit(b, lo);
            REQUIRE(res.error_bound->maxCoeff() < previous);
            previous = res.error_bound->maxCoeff();
            // The bound is tight for this family (A dA is proportional to a
            // unitary), so dominance holds with equality up to roundoff.
            RealMat gap = (res.H - exact).cwiseAbs();
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) REQUIRE(gap(i, j) <= (*res.error_bound)(i, j) + 1e-12);
        }
    }

    SECTION("unreachable target is reported") {
        LimitOptions lo;
        lo.target_abs_error = 1e-10;
        lo.max_terms = 3;
        REQUIRE_THROWS_AS(qfim_limit(b, lo), NumericalError);
    }

    SECTION("remainder_bound rejects lambda_min <= 1") {
        Mat a = symplectic_form(1);
        REQUIRE_THROWS_AS(remainder_bound(a, a, a, 3, 1.0), ValidationError);
    }
}

TEST_CASE("regularized route specifics") {
    SECTION("reduced two-mode squeezed vacuum at r = 0") {
        StateFamily family = helpers::tmsv_family(true);
        RealVec eps = RealVec::Zero(1);
        DerivativeBundle b = evaluate_bundle(family, eps);
        REQUIRE(qfim_regularized(b).H.cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("non-Cauchy schedule reports nonconvergence") {
        StateFamily family = helpers::squeezed_thermal_family();
        RealVec eps(2);
        eps << 1.0, 0.5;
        DerivativeBundle b = evaluate_bundle(family, eps);
        RegularizationOptions reg;
        reg.nu_schedule = {1.5, 1.4};
        REQUIRE_THROWS_AS(qfim_regularized(b, reg), NumericalError);
    }

    SECTION("schedule entries must exceed one") {
        StateFamily family = helpers::squeezed_thermal_family();
        RealVec eps(2);
        eps << 1.0, 0.5;
        DerivativeBundle b = evaluate_bundle(family, eps);
        RegularizationOptions reg;
        reg.nu_schedule = {0.9, 1.1};
        REQUIRE_THROWS_AS(qfim_regularized(b, reg), ValidationError);
    }
}

TEST_CASE("pure-state formula") {
    SECTION("two-mode squeezed vacuum in r") {
        StateFamily family = helpers::tmsv_family(false);
        for (double r : {0.0, 0.1, 1.0}) {
            RealVec eps(1);
            eps << r;
            DerivativeBundle b = evaluate_bundle(family, eps);
            REQUIRE(std::abs(qfim_pure(b).H(0, 0) - 4.0) < 1e-10);
            REQUIRE(std::abs(qfim_williamson(b).H(0, 0) - 4.0) < 1e-10);
        }
    }

    SECTION("displacement family on the vacuum") {
        InitialState init;
        init.kind = InitialState::Kind::vacuum;
        init.modes = 1;
        ChannelStep disp;
        disp.kind = ChannelStep::Kind::displacement;
        disp.modes = {0};
        disp.re = ParamRef::sym(0);
        disp.im = ParamRef::lit(0.3);
        StateFamily family = make_channel_family({"x"}, init, {disp});
        RealVec eps(1);
        eps << 0.8;
        DerivativeBundle b = evaluate_bundle(family, eps);
        REQUIRE(std::abs(qfim_pure(b).H(0, 0) - 4.0) < 1e-12);  // 2 |dd|^2 with dd = (1, 1)
    }

    SECTION("rejects mixed states") {
        StateFamily family = helpers::squeezed_thermal_family();
        RealVec eps(2);
        eps << 1.0, 0.5;
        DerivativeBundle b = evaluate_bundle(family, eps);
        REQUIRE_THROWS_AS(qfim_pure(b), ValidationError);
    }
}

TEST_CASE("continuous QFIM") {
    SECTION("reduced two-mode squeezed vacuum: discontinuity at r = 0") {
        StateFamily family = helpers::tmsv_family(true);
        BundleOptions opts;
        opts.want_hessians = true;

        RealVec eps0 = RealVec::Zero(1);
        DerivativeBundle b0 = evaluate_bundle(family, eps0, opts);
        REQUIRE(qfim_auto(b0).H.cwiseAbs().maxCoeff() < 1e-10);  // H(0) = 0
        REQUIRE(std::abs(cqfim(b0).H(0, 0) - 4.0) < 1e-6);       // H_c(0) = 4

        for (double r : {0.1, -0.1, 0.01, -0.01}) {
            RealVec eps(1);
            eps << r;
            DerivativeBundle b = evaluate_bundle(family, eps, opts);
            REQUIRE(std::abs(qfim_mixed(b).H(0, 0) - 4.0) < 1e-9);
            REQUIRE(std::abs(cqfim(b).H(0, 0) - 4.0) < 1e-9);  // H_c = H away from purity
        }
    }

    SECTION("fully mixed family: H_c equals H") {
        std::mt19937 rng(8004);
        auto rf = helpers::random_mixed_family(rng, 2, 2);
        BundleOptions opts;
        opts.want_hessians = true;
        DerivativeBundle b = evaluate_bundle(rf.family, rf.eps, opts);
        REQUIRE((cqfim(b).H - qfim_mixed(b).H).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("full two-mode squeezed vacuum: H_c = H = 4") {
        StateFamily family = helpers::tmsv_family(false);
        BundleOptions opts;
        opts.want_hessians = true;
        RealVec eps(1);
        eps << 0.3;
        DerivativeBundle b = evaluate_bundle(family, eps, opts);
        REQUIRE(std::abs(cqfim(b).H(0, 0) - 4.0) < 1e-8);
    }

    SECTION("Hessian path agrees with the fully-pure trace formula") {
        BundleOptions opts;
        opts.want_hessians = true;
        opts.want_second_derivatives = true;

        StateFamily tmsv = helpers::tmsv_family(false);
        RealVec eps(1);
        eps << 0.4;
        DerivativeBundle b = evaluate_bundle(tmsv, eps, opts);
        REQUIRE((cqfim(b).H - cqfim_pure(b).H).cwiseAbs().maxCoeff() < 1e-8);

        StateFamily csp = helpers::coherent_squeeze_phase_family(Complex(0.6, -0.2));
        RealVec eps2(2);
        eps2 << 0.5, 1.1;
        DerivativeBundle b2 = evaluate_bundle(csp, eps2, opts);
        REQUIRE((cqfim(b2).H - cqfim_pure(b2).H).cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("missing Hessians are reported") {
        StateFamily family = helpers::tmsv_family(true);
        RealVec eps = RealVec::Zero(1);
        DerivativeBundle b = evaluate_bundle(family, eps);  // no want_hessians
        REQUIRE_THROWS_AS(cqfim(b), ValidationError);
    }

    SECTION("H_c - H is positive semidefinite at pure points") {
        StateFamily family = helpers::tmsv_family(true);
        BundleOptions opts;
        opts.want_hessians = true;
        RealVec eps = RealVec::Zero(1);
        DerivativeBundle b = evaluate_bundle(family, eps, opts);
        RealMat gap = cqfim(b).H - qfim_auto(b).H;
        REQUIRE(min_eigenvalue(gap) > -1e-8);
    }
}

TEST_CASE("unitary reparameterization invariance") {
    std::mt19937 rng(8005);
    for (int trial = 0; trial < 5; ++trial) {
        auto rf = helpers::random_mixed_family(rng, 2, 2);
        DerivativeBundle b = evaluate_bundle(rf.family, rf.eps);

        // Append a fixed, parameter-independent channel.
        StateFamily wrapped;
        {
            GaussianChannel post = beam_splitter(2, 0, 1, 0.77, 1.9);
            wrapped.param_names = rf.family.param_names;
            auto base = rf.family;
            wrapped.evaluator = [base, post](const RealVec& eps) {
                return apply(post, base.evaluator(eps));
            };
            wrapped.derivative_evaluator = [base, post](const RealVec& eps, std::vector<Vec>& dd,
                                                        std::vector<Mat>& ds) {
                base.derivative_evaluator(eps, dd, ds);
                for (auto& v : dd) v = post.S * v;
                for (auto& m : ds) m = post.S * m * post.S.adjoint();
            };
            if (base.symplectic_evaluator)
                wrapped.symplectic_evaluator = [base, post](const RealVec& eps) {
                    SymplecticData data = base.symplectic_evaluator(eps);
                    data.S = post.S * data.S;
                    for (auto& ds : data.dS) ds = post.S * ds;
                    return data;
                };
        }
        DerivativeBundle bw = evaluate_bundle(wrapped, rf.eps);
        REQUIRE((qfim_mixed(bw).H - qfim_mixed(b).H).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((qfim_williamson(bw).H - qfim_williamson(b).H).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((qfim_regularized(bw).H - qfim_regularized(b).H).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("automatic route selection") {
    SECTION("mixed state selects the mixed formula") {
        StateFamily family = helpers::squeezed_thermal_family();
        RealVec eps(2);
        eps << 1.0, 0.5;
        DerivativeBundle b = evaluate_bundle(family, eps);
        REQUIRE(qfim_auto(b).method == QfimMethod::mixed);
    }

    SECTION("pure state with symplectic data selects the Williamson formula") {
        StateFamily family = helpers::tmsv_family(false);
        RealVec eps(1);
        eps << 0.2;
        DerivativeBundle b = evaluate_bundle(family, eps);
        REQUIRE(qfim_auto(b).method == QfimMethod::williamson);
    }

    SECTION("pure state after a partial trace selects the regularized formula") {
        StateFamily family = helpers::tmsv_family(true);
        RealVec eps = RealVec::Zero(1);
        DerivativeBundle b = evaluate_bundle(family, eps);
        REQUIRE(qfim_auto(b).method == QfimMethod::regularized);
    }
}
