"""LR coefficient functions, 5-var ODE, reductions, equilibria, KL."""

import math

import numpy as np
import pytest

from sparsemom.lr_dynamics import (
    LrParams,
    LrRegion,
    LrState,
    classify_lr_region,
    coefficients_exact,
    coefficients_tame,
    drift_5var,
    equilibrium_slow,
    evolve_5var,
    instantiate_lr,
    jacobian_slow,
    kl_normalized,
    kl_pop,
    lr_alpha_eta,
    lr_heatmaps,
    reduced_system,
    steady_state_5var,
)
from sparsemom.numerics import RngStream, bisect_1d, gauss_hermite
from sparsemom.scaling import ScalingConstants, ScalingExponents


def params(**kw) -> LrParams:
    base = dict(r=1.0, p=1e-3, B=4, beta=0.9, eta=0.01, d=50)
    base.update(kw)
    return LrParams(**base)


class TestLrParams:
    def test_bayes_bias(self):
        p = params(r=2.0, p=0.01)
        assert abs(p.b_star - (math.log(0.01 / 0.99) - 2.0)) < 1e-15

    def test_validation(self):
        with pytest.raises(ValueError):
            params(r=-1.0)
        with pytest.raises(ValueError):
            params(p=0.0)
        with pytest.raises(ValueError):
            params(beta=1.0)


class TestCoefficients:
    def test_gaussian_mgf_identity(self):
        # E e^{kG} = e^{k mu + k^2 q / 2}, the backbone of the tame reductions
        rule = gauss_hermite(64)
        for k in (1.0, 2.0):
            for mu in (-5.0, 0.0):
                for q in (0.5, 4.0):
                    got = rule.expect(lambda z: np.exp(k * z), mu, q)
                    assert abs(got - math.exp(k * mu + k * k * q / 2)) < 1e-10 * math.exp(
                        k * mu + k * k * q / 2
                    )

    def test_monte_carlo_oracle(self):
        # A, B, D0, Dtheta vs plain Gaussian sampling of the expectations
        from scipy.special import expit

        pr = params(r=1.0, p=0.01)
        st = LrState(0.3, 0.0, 0.3, 0.0, 0.0)
        co = coefficients_exact(st, pr)
        q = st.q(pr.r)
        stream = RngStream(2718)
        n = 2 * 10 ** 6
        z = stream.gaussians(n)
        g1 = pr.b_star + math.sqrt(q) * z
        g2 = st.theta_par(pr.r) * pr.r + pr.b_star + math.sqrt(q) * z

        def check(value, sample):
            se = sample.std(ddof=1) / math.sqrt(n)
            assert abs(value - sample.mean()) < 4 * se, (value, sample.mean(), se)

        sp = lambda x: expit(x) * expit(-x)
        check(co.A, (1 - pr.p) * sp(g1) + pr.p * sp(g2))
        check(co.Bcoef, pr.p * (expit(g2) - 1.0))
        check(co.D0, (1 - pr.p) * expit(g1) ** 2 + pr.p * (1 - expit(g2)) ** 2)
        s1 = 2 * expit(g1) ** 2 * (1 - expit(g1)) * (2 - 3 * expit(g1))
        s2 = -2 * expit(g2) * (1 - expit(g2)) ** 2 * (1 - 3 * expit(g2))
        check(co.Dtheta, (1 - pr.p) * s1 + pr.p * s2)

    def test_tame_limits(self):
        # p -> 0 at fixed (s, R): A/(p alpha) -> 1, B/(-p) -> 1, D0/p -> 1
        st = LrState(0.3, 0.0, 0.3, 0.0, 0.0)
        for p_, tol in [(1e-4, 5e-3), (1e-6, 1e-4)]:
            pr = params(p=p_)
            ce = coefficients_exact(st, pr)
            alpha = st.alpha(pr.r)
            assert abs(ce.A / (p_ * alpha) - 1.0) < tol
            assert abs(ce.Bcoef / (-p_) - 1.0) < tol
            assert abs(ce.D0 / p_ - 1.0) < tol
            assert abs(ce.Dtheta) < 100 * p_ ** 2  # Dtheta / p^2 bounded

    def test_calibration_identity_at_optimum(self):
        pr = params(p=0.01, r=1.5)
        co = coefficients_exact(LrState(0.0, 0.0, 0.0, 0.0, 0.0), pr)
        assert abs(co.A + co.Bcoef) < 1e-12 * co.A
        assert abs(co.f) < 1e-12 * co.A

    def test_tame_forms(self):
        pr = params(p=1e-3, r=1.0)
        at_opt = coefficients_tame(LrState(0.0, 0.0, 0.0, 0.0, 0.0), pr)
        assert at_opt.A == pr.p and at_opt.f == 0.0
        # theta = 0: alpha = e^{-r^2/2}, pure pull toward mu
        at_zero = coefficients_tame(LrState(-1.0, 0.0, 0.0, 0.0, 0.0), pr)
        assert abs(at_zero.A - pr.p * math.exp(-0.5)) < 1e-15
        assert abs(at_zero.f - (-pr.p * pr.r)) < 1e-18
        exact_zero = coefficients_exact(
            LrState(-1.0 + 1e-9, 0.0, 1e-12, 0.0, 0.0), params(p=1e-4)
        )
        assert abs(exact_zero.f - (-1e-4 * 1.0)) < 0.02 * 1e-4

    def test_tame_guards(self):
        with pytest.raises(ValueError, match="tame"):
            coefficients_tame(LrState(0.0, 0.0, 60.0, 0.0, 0.0), params())
        with pytest.raises(ValueError, match="tame"):
            coefficients_tame(LrState(0.0, 0.0, 0.0, 0.0, 0.0), params(p=0.2))

    def test_tame_remainder_linear_in_p(self):
        # the exact-vs-tame relative error of (A, B, D0) is c * p: the
        # fitted c stays bounded over p in {1e-2, 1e-3, 1e-4} and has
        # converged by the small-p end (for D0 two same-order terms
        # partially cancel at p = 1e-2, so c stabilizes only below that)
        st = LrState(0.3, 0.0, 0.3, 0.0, 0.0)
        ratios = {"A": [], "B": [], "D0": []}
        for p_ in (1e-2, 1e-3, 1e-4):
            pr = params(p=p_, r=1.0)
            ce = coefficients_exact(st, pr)
            ct = coefficients_tame(st, pr)
            ratios["A"].append(abs(ce.A - ct.A) / abs(ce.A) / p_)
            ratios["B"].append(abs(ce.Bcoef - ct.Bcoef) / abs(ce.Bcoef) / p_)
            ratios["D0"].append(abs(ce.D0 - ct.D0) / abs(ce.D0) / p_)
        for name, cs in ratios.items():
            assert max(cs) < 50.0, (name, cs)
            assert 0.5 < cs[1] / cs[2] < 1.5, (name, cs)

    def test_tame_vs_exact_grid(self):
        # < 2% relative error at p = 1e-3 on a 5x5 state grid (r = 1)
        pr = params(p=1e-3, r=1.0)
        worst = 0.0
        for s in np.linspace(-0.2, 0.2, 5):
            for R in np.linspace(0.0, 0.3, 5):
                st = LrState(s, 0.0, R, 0.0, 0.0)
                ce = coefficients_exact(st, pr)
                ct = coefficients_tame(st, pr)
                for a, b in [(ce.A, ct.A), (ce.Bcoef, ct.Bcoef), (ce.D0, ct.D0)]:
                    worst = max(worst, abs(a - b) / abs(a))
        assert worst < 0.02


class TestDrift:
    def test_optimum_label_noise_pump(self):
        pr = params(p=1e-3)
        d0 = drift_5var(LrState(0.0, 0.0, 0.0, 0.0, 0.0), pr, coeff_mode="tame")
        assert d0[0] == 0.0 and d0[1] == 0.0
        pump = pr.eps ** 2 * pr.d * pr.p / pr.B
        assert abs(d0[3] - pump) < 1e-18
        assert d0[3] > 0

    def test_eta_zero_freezes_parameters_only(self):
        pr = params(eta=0.0)
        st = LrState(0.2, 0.1, 0.3, 0.05, 0.1)
        d = drift_5var(st, pr, coeff_mode="tame")
        assert d[0] == 0.0 and d[2] == 0.0  # s and R frozen
        assert d[1] != 0.0 and d[3] != 0.0  # buffer still evolves

    def test_one_step_oracle(self):
        # full three-setting 1e6 version lives in acceptance
        from sparsemom.lr_mc import one_step_lr_delta

        pr = params(r=2.0, p=0.05, B=16, beta=0.9, eta=0.05, d=24)
        st = LrState(0.3, 0.05, 0.4, 0.01, 0.02)
        mean, se = one_step_lr_delta(pr, st, 10 ** 5, seed=7)
        pred = drift_5var(st, pr, coeff_mode="exact")
        assert np.all(np.abs(mean - pred) < 4 * se)


class TestEvolve:
    def test_fixed_point_is_constant(self):
        pr = instantiate_lr(ScalingExponents(1.2, 1.6, 0.4), ScalingConstants(), 200, 2.0)
        st = steady_state_5var(pr)
        times = np.linspace(10.0, 2000.0, 10)
        traj = evolve_5var(st, pr, times, coeff_mode="tame")
        assert np.max(np.abs(traj.states[:, :5] - st.as_array())) < 1e-6

    def test_long_time_reaches_slow_equilibrium(self):
        # noise-floor below resonance: (s, R) settle at equilibrium_slow
        exps = ScalingExponents(1.2, 1.6, 0.4)
        pr = instantiate_lr(exps, ScalingConstants(), 10 ** 4, 2.0)
        traj = evolve_5var(
            LrState(0.3, 0.0, 0.3, 0.0, 0.0), pr,
            np.geomspace(10.0, 5e5, 40), coeff_mode="tame",
        )
        eta_eff = pr.eta * pr.d / pr.B
        s_star, R_star, _ = equilibrium_slow(2.0, eta_eff)
        assert abs(traj.states[-1, 0] - s_star) < 1e-3
        assert abs(traj.states[-1, 2] - R_star) < 1e-3

    def test_left_tame_regime_error(self):
        # |s + r| > 10 triggers the guard on the first evaluation
        pr = params(p=1e-3, eta=0.01, beta=0.9, d=50, B=1, r=9.5)
        with pytest.raises(RuntimeError, match="left tame regime"):
            evolve_5var(
                LrState(0.6, 0.0, 0.1, 0.0, 0.0), pr, np.linspace(1, 100, 5),
                coeff_mode="tame",
            )


class TestRegions:
    def test_classification(self):
        assert classify_lr_region(ScalingExponents(0.5, 1.6, 2.0)) is LrRegion.CONCENTRATED_ABOVE
        assert classify_lr_region(ScalingExponents(1.2, 1.6, 1.0)) is LrRegion.NOISE_FLOOR_ABOVE
        assert classify_lr_region(ScalingExponents(1.2, 1.6, 0.4)) is LrRegion.NOISE_FLOOR_BELOW
        assert classify_lr_region(ScalingExponents(1.2, 1.6, 0.6)) is LrRegion.BOUNDARY_E
        assert classify_lr_region(ScalingExponents(0.6, 1.6, 1.0)) is LrRegion.BOUNDARY_F

    def test_concentrated_half_is_always_above_resonance(self):
        # the concentrated-below corner needs gamma < 1-sigma+kappa < 0,
        # impossible under gamma >= 0: every kappa < sigma-1 point with
        # gamma > 0 is concentrated-above (the resonance value is negative)
        for g in (0.01, 0.3, 2.0):
            assert (
                classify_lr_region(ScalingExponents(0.2, 1.6, g))
                is LrRegion.CONCENTRATED_ABOVE
            )

    def test_alpha_eta_choices(self):
        above = ScalingExponents(1.2, 1.6, 1.0)
        below = ScalingExponents(1.2, 1.6, 0.4)
        on = ScalingExponents(1.2, 1.6, 0.6)
        assert lr_alpha_eta(classify_lr_region(above), above) == 1.0 - 1.2
        assert lr_alpha_eta(classify_lr_region(below), below) == 1.0 - 1.6
        # both prescriptions coincide on the line
        assert abs(lr_alpha_eta(classify_lr_region(on), on) - (0.6 - 1.2)) < 1e-15


class TestReducedSystems:
    def test_phase3_rhs_matches_boxed_form(self):
        cons = ScalingConstants(eta_star=0.3, p_star=0.7, B_star=2.0)
        red = reduced_system(LrRegion.NOISE_FLOOR_BELOW, cons, r=1.5,
                             exponents=ScalingExponents(1.2, 1.6, 0.4))
        s, R = 0.2, 0.4
        alpha = math.exp(0.5 * ((s + 1.5) ** 2 + R - 1.5 ** 2))
        got = red.rhs(0.0, np.array([s, R]))
        hp = 0.3 * 0.7
        assert abs(got[0] - (-hp * (alpha * (s + 1.5) - 1.5))) < 1e-15
        assert abs(got[1] - (-2 * hp * alpha * R + hp * 0.3 / 2.0)) < 1e-15

    def test_boundary_E_steady_state(self):
        # V~* = eps* p* / (2 B*) and A* R* = eta* / (2 B*)
        cons = ScalingConstants(eta_star=0.3, p_star=1.0, B_star=1.0, eps_star=0.5)
        exps = ScalingExponents(1.2, 1.6, 0.6)
        red = reduced_system(LrRegion.BOUNDARY_E, cons, r=0.5, exponents=exps)
        tau = np.geomspace(0.1, 4000.0, 50)
        traj = red.evolve(np.array([0.1, 0.0, 0.2, 0.0, 0.0]), tau)
        V_star = 0.5 * 1.0 / (2 * 1.0)
        assert abs(traj.states[-1, 3] - V_star) < 1e-6 * V_star + 1e-9
        s_inf, R_inf = traj.states[-1, 0], traj.states[-1, 2]
        alpha_inf = math.exp(0.5 * ((s_inf + 0.5) ** 2 + R_inf - 0.25))
        assert abs(alpha_inf * R_inf - 0.3 / 2.0) < 1e-6
        assert abs(traj.states[-1, 4]) < 1e-8  # C~* = 0

    def test_phase1_underdamped_switch(self):
        # signal non-monotone iff etabar alpha*(1+r^2) > 1/4; alpha* = 1
        tau = np.linspace(0.0, 60.0, 2500)
        for eta_star, r, expect_osc in [
            (0.05, 0.5, False), (0.4, 0.5, True), (0.1, 1.0, False),
            (0.3, 1.0, True), (0.08, 1.3, False), (0.9, 2.0, True),
        ]:
            cons = ScalingConstants(eps_star=1.0, eta_star=eta_star, p_star=1.0)
            ebar = eta_star * 1.0 / 1.0
            thresh = ebar * (1 + r ** 2)
            red = reduced_system(LrRegion.CONCENTRATED_ABOVE, cons, r=r,
                                 exponents=ScalingExponents(0.5, 1.6, 2.0))
            traj = red.evolve(np.array([0.05, 0.0, 0.0, 0.0, 0.0]), tau, rtol=1e-10)
            s = traj.states[:, 0]
            crosses = np.any(s < -1e-6)
            assert crosses == (thresh > 0.25), (eta_star, r, thresh)
            assert crosses == expect_osc

    def test_volterra_lift_identity(self):
        # d/dtau (x^2, y^2, xy) equals the 3D bulk RHS at random states
        cons = ScalingConstants(eta_star=0.3, eps_star=0.5)
        red = reduced_system(LrRegion.NOISE_FLOOR_ABOVE, cons, r=0.5,
                             exponents=ScalingExponents(1.2, 1.6, 1.0))
        rng = np.random.default_rng(4)
        for _ in range(100):
            s, ub = rng.normal(size=2) * 0.3
            x, y = rng.normal(size=2)
            full = red.rhs(0.0, np.array([s, ub, x * x, y * y, x * y]))
            lift = red.volterra_rhs(0.0, np.array([s, ub, x, y]))
            dx, dy = lift[2], lift[3]
            lhs = np.array([2 * x * dx, 2 * y * dy, dx * y + x * dy])
            assert np.max(np.abs(lhs - full[2:])) < 1e-12 * max(1.0, np.abs(full).max())


class TestEquilibrium:
    def test_noiseless_limit(self):
        s, R, a = equilibrium_slow(2.0, 1e-9)
        assert abs(s) < 1e-9 and abs(R) < 1e-9 and abs(a - 1.0) < 1e-9

    def test_published_triple(self):
        eta_eff = 2 * 1.030 * 0.291
        s, R, a = equilibrium_slow(2.0, eta_eff)
        assert abs(s - (-0.059)) < 0.002
        assert abs(R - 0.291) < 0.002
        assert abs(a - 1.030) < 0.002

    def test_published_triple_residuals(self):
        # the rounded triple satisfies the equilibrium equations to 3 dp
        sp, Rp, ap = -0.059, 0.291, 1.030
        assert abs(ap * (sp + 2.0) - 2.0) < 1e-3
        assert abs(ap - math.exp(0.5 * ((sp + 2) ** 2 + Rp - 4.0))) < 1e-3

    def test_leading_order_floor_equation(self):
        # R* e^{R*/(2(1+r^2))} = eta_eff / 2 at r=2, eta_eff=0.5
        root = bisect_1d(lambda R: R * math.exp(R / 10.0) - 0.25, 0.0, 1.0)
        assert abs(root - 0.2440) < 1e-4
        _, R_star, _ = equilibrium_slow(2.0, 0.5)
        assert abs(R_star - root) < 0.01 * root  # agree at leading order

    def test_eta_eff_bounds(self):
        with pytest.raises(ValueError):
            equilibrium_slow(1.0, 0.0)
        with pytest.raises(ValueError):
            equilibrium_slow(1.0, 2.5)


class TestJacobian:
    def test_trace_and_discriminant(self):
        s, R, a = equilibrium_slow(2.0, 0.6)
        J, eigs = jacobian_slow(s, R, eta_star=0.3, p_star=0.5, r=2.0)
        scale = 0.3 * 0.5 * a
        assert abs(np.trace(J) + scale * (3 + 4 + R)) < 1e-12
        disc = (J[0, 0] - J[1, 1]) ** 2 + 4 * J[0, 1] * J[1, 0]
        expect = scale ** 2 * ((4 - 1) ** 2 + 2 * 5 * R + R * R)
        assert abs(disc - expect) < 1e-12 * expect
        assert np.all(eigs < 0) and np.all(np.abs(np.imag(eigs)) == 0)

    def test_degenerate_at_r_one(self):
        # R*=0, r=1: double eigenvalue (discriminant zero)
        J, eigs = jacobian_slow(0.0, 0.0, eta_star=0.3, p_star=0.5, r=1.0)
        assert abs(eigs[0] - eigs[1]) < 1e-12

    def test_matches_fd_at_small_eta_eff(self):
        # the leading-order J* equals the finite-difference Jacobian of
        # the slow-manifold RHS only as eta_eff -> 0
        r, eta_star, p_star = 2.0, 1e-6, 1.0
        s, R, a = equilibrium_slow(r, eta_star / 1.0)
        J, _ = jacobian_slow(s, R, eta_star=eta_star, p_star=p_star, r=r)
        cons = ScalingConstants(eta_star=eta_star, p_star=p_star, B_star=1.0)
        red = reduced_system(LrRegion.NOISE_FLOOR_BELOW, cons, r=r,
                             exponents=ScalingExponents(1.2, 1.6, 0.4))
        h = 1e-7
        fd = np.empty((2, 2))
        x0 = np.array([s, R])
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd[:, j] = (red.rhs(0.0, x0 + e) - red.rhs(0.0, x0 - e)) / (2 * h)
        assert np.max(np.abs(fd - J)) < 1e-6 * np.max(np.abs(J))


class TestKl:
    def test_zero_at_optimum(self):
        assert kl_pop(0.0, 0.0, params(p=0.01, r=1.5)) == 0.0

    def test_small_error_expansion(self):
        # within 5% of (p alpha / 2)((1+r^2) s^2 + R) for s, R <= 0.05
        pr = params(p=1e-3, r=1.0)
        for s in (0.0, 0.02, 0.05):
            for R in (0.0, 0.02, 0.05):
                if s == 0.0 and R == 0.0:
                    continue
                kl = kl_pop(s, R, pr, verify=True)
                alpha = math.exp(0.5 * ((s + 1) ** 2 + R - 1))
                approx = 0.5 * pr.p * alpha * ((1 + 1) * s ** 2 + R)
                assert abs(kl / approx - 1.0) < 0.05, (s, R, kl / approx)

    def test_normalized_G(self):
        pr = params(p=1e-7, r=1.0)
        for s, R in [(0.3, 0.3), (-0.2, 0.1)]:
            G = kl_normalized(s, R, 1.0)
            assert abs(kl_pop(s, R, pr) / pr.p - G) < 1e-6

    def test_kl_monotone_logged_not_failed(self):
        # empirical observation only, not a guaranteed property: log violations
        cons = ScalingConstants(eta_star=0.25)
        red = reduced_system(LrRegion.NOISE_FLOOR_BELOW, cons, r=1.0,
                             exponents=ScalingExponents(1.2, 1.6, 0.2))
        rng = np.random.default_rng(6)
        violations = 0
        for _ in range(20):
            s0 = rng.uniform(-0.4, 0.6)
            R0 = rng.uniform(0.05, 0.8)
            traj = red.evolve(np.array([s0, R0]), np.linspace(0.0, 30.0, 200))
            G = [kl_normalized(s, R, 1.0) for s, R in traj.states]
            if np.any(np.diff(G) > 1e-9):
                violations += 1
        if violations:
            print(f"KL monotonicity violated on {violations}/20 slow-manifold runs")


class TestSteadyStateAndFloor:
    def test_matches_long_integration(self):
        pr = instantiate_lr(ScalingExponents(1.2, 1.6, 1.0), ScalingConstants(), 50, 2.0)
        alg = steady_state_5var(pr)
        traj = evolve_5var(
            LrState(0.0, 0.0, 0.2, 0.0, 0.0), pr, np.geomspace(10, 2e5, 20),
            coeff_mode="tame",
        )
        assert abs(traj.states[-1, 2] - alg.R_perp) < 1e-8

    def test_exact_floor_law(self):
        # R* = eta n (2 - eps) / (2 A (2 - eps + A eta (1 - eps))) with
        # n = dp/B + ((B-1)/B)(p alpha)^2 R*; slope 1 - sigma + kappa - gamma
        exps = ScalingExponents(1.2, 1.6, 1.0)
        cons = ScalingConstants()
        Rs = []
        ds = [1000, 10000, 100000]
        for d in ds:
            pr = instantiate_lr(exps, cons, d, 2.0)
            st = steady_state_5var(pr)
            a = pr.p * st.alpha(pr.r)
            n = pr.d * pr.p / pr.B + (pr.B - 1) / pr.B * a * a * st.R_perp
            eps, eta = pr.eps, pr.eta
            closed = eta * n * (2 - eps) / (2 * a * (2 - eps + a * eta * (1 - eps)))
            assert abs(st.R_perp - closed) < 1e-9 * closed
            Rs.append(st.R_perp)
        slope = np.polyfit(np.log(ds), np.log(Rs), 1)[0]
        assert abs(slope - (1 - 1.6 + 1.2 - 1.0)) < 0.05

    def test_heatmap_rows(self):
        rows = lr_heatmaps(
            np.array([0.3, 1.2]), np.array([0.3, 1.5]), 1.6,
            ScalingConstants(eta_star=1.0, B_star=2.0), 10 ** 4, r=2.0,
        )
        by_key = {(round(r_["kappa"], 3), round(r_["gamma"], 3)): r_ for r_ in rows}
        # concentrated cells: sentinel 0 (both gammas are above the
        # negative resonance value at kappa < sigma - 1)
        assert by_key[(0.3, 1.5)]["floor_value_or_exponent"] == 0.0
        assert by_key[(0.3, 0.3)]["region_tag"] == "concentrated_above"
        # below resonance: constant floor ~ eta*/(2 B*) at leading order
        below = by_key[(1.2, 0.3)]
        assert below["region_tag"] == "noise_floor_below"
        assert abs(below["floor_value_or_exponent"] - 0.25) < 0.03
        # above: the exact-fixed-point exponent and continuity of T
        above = by_key[(1.2, 1.5)]
        assert abs(above["floor_value_or_exponent"] - (1 - 1.6 + 1.2 - 1.5)) < 1e-12
        assert abs(above["T_exponent"] - 1.5) < 1e-12
        assert abs(below["T_exponent"] - (1 - 1.6 + 1.2)) < 1e-12

    def test_resonance_floor_continuity(self):
        # boundary-E floor equals the below-resonance floor equation root
        cons = ScalingConstants(eta_star=0.5, B_star=1.0)
        _, R_slow, alpha_slow = equilibrium_slow(2.0, 0.5)
        exps = ScalingExponents(1.2, 1.6, 0.6)
        red = reduced_system(LrRegion.BOUNDARY_E, cons, r=2.0, exponents=exps)
        traj = red.evolve(np.array([0.0, 0.0, 0.2, 0.0, 0.0]), np.geomspace(0.1, 8000, 60))
        s_inf, R_inf = traj.states[-1, 0], traj.states[-1, 2]
        assert abs(R_inf - R_slow) < 1e-6
        assert abs(s_inf - (2.0 / alpha_slow - 2.0)) < 1e-6
