import numpy as np
import pytest
from numpy.testing import assert_allclose

from enselect.dko_theory import SelectionThresholds
from enselect.simulator import (
    LassoConvergenceError,
    LassoSettings,
    bootstrap_counts,
    dko_empirical,
    empirical_tpr_fdr,
    generate_dataset,
    generate_knockoff,
    kkt_violation,
    lasso_coordinate_descent,
    run_experiment,
    run_experiment_grid,
    ss_empirical,
)
from enselect.ss_theory import ProblemConfig

from oracles import brute_force_lasso, lasso_objective

CFG = ProblemConfig(alpha=2.5, rho=0.3, delta=0.01, lam=0.1, mu_b=1.0)


class TestGenerateDataset:
    def test_no_signal_means_pure_noise(self):
        cfg = ProblemConfig(alpha=2.0, rho=0.0, delta=0.5, lam=0.1, mu_b=1.0)
        data = generate_dataset(100, cfg, seed=1)
        assert np.all(data.truth == 0.0)
        assert np.std(data.responses) > 0

    def test_noiseless_dense_case_is_exact(self):
        cfg = ProblemConfig(alpha=2.0, rho=1.0, delta=0.0, lam=0.1, mu_b=1.0)
        data = generate_dataset(50, cfg, seed=2)
        assert_allclose(data.responses, data.design @ data.truth, atol=1e-12)
        assert np.all(data.truth != 0.0)

    def test_determinism_and_dims(self):
        a = generate_dataset(64, CFG, seed=9)
        b = generate_dataset(64, CFG, seed=9)
        assert np.array_equal(a.design, b.design)
        assert np.array_equal(a.responses, b.responses)
        assert a.dims == (160, 64)

    def test_column_variance_scaling(self):
        data = generate_dataset(400, CFG, seed=3)
        col_var = data.design.var(axis=0).mean()
        assert abs(col_var - 1.0 / 400) < 3 * (1.0 / 400) / np.sqrt(400)


class TestLasso:
    def test_zero_responses_give_zero(self):
        data = generate_dataset(32, CFG, seed=4)
        w = lasso_coordinate_descent(data.design, np.zeros(data.dims[0]), 0.1)
        assert np.all(w == 0.0)

    def test_orthonormal_design_soft_thresholds(self):
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.normal(size=(40, 40)))
        y = rng.normal(size=40)
        lam = 0.3
        w = lasso_coordinate_descent(q, y, lam)
        corr = q.T @ y
        expected = np.sign(corr) * np.maximum(np.abs(corr) - lam, 0.0)
        assert_allclose(w, expected, atol=1e-9)

    def test_matches_brute_force_small_instance(self):
        rng = np.random.default_rng(6)
        design = rng.normal(size=(4, 2))
        y = rng.normal(size=4)
        w = lasso_coordinate_descent(design, y, 0.5)
        w_grid = brute_force_lasso(design, y, 0.5)
        assert np.max(np.abs(w - w_grid)) < 1e-4
        assert lasso_objective(design, y, 0.5, w) <= lasso_objective(design, y, 0.5, w_grid) + 1e-10

    def test_weighted_kkt(self):
        data = generate_dataset(64, CFG, seed=7)
        counts = bootstrap_counts(data.dims[0], 1.0, seed=8).astype(float)
        w = lasso_coordinate_descent(data.design, data.responses, 0.05, counts)
        assert kkt_violation(data.design, data.responses, 0.05, w, counts) <= 1e-8

    def test_warm_start_agrees_with_cold_start(self):
        data = generate_dataset(48, CFG, seed=10)
        cold = lasso_coordinate_descent(data.design, data.responses, 0.08)
        warm_init = lasso_coordinate_descent(data.design, data.responses, 0.3)
        warm = lasso_coordinate_descent(
            data.design, data.responses, 0.08, w_init=warm_init
        )
        assert np.max(np.abs(cold - warm)) < 1e-8

    def test_nonconvergence_raises_with_state(self):
        data = generate_dataset(64, CFG, seed=11)
        with pytest.raises(LassoConvergenceError) as err:
            lasso_coordinate_descent(
                data.design,
                data.responses,
                0.001,
                settings=LassoSettings(tol=1e-14, max_sweeps=2),
            )
        assert err.value.last_iterate.shape == (64,)
        assert err.value.kkt_residual > 0

    def test_input_validation(self):
        data = generate_dataset(16, CFG, seed=12)
        with pytest.raises(ValueError):
            lasso_coordinate_descent(data.design, data.responses, 0.0)
        with pytest.raises(ValueError):
            lasso_coordinate_descent(data.design, data.responses[:-1], 0.1)
        with pytest.raises(ValueError):
            lasso_coordinate_descent(
                data.design, data.responses, 0.1, weights=-np.ones(data.dims[0])
            )


class TestRandomization:
    def test_bootstrap_counts_conserve_total(self):
        for mu_b in (0.5, 1.0, 2.0):
            counts = bootstrap_counts(100, mu_b, seed=13)
            assert counts.sum() == round(mu_b * 100)

    def test_bootstrap_zero_fraction_poisson_limit(self):
        m = 20000
        counts = bootstrap_counts(m, 1.0, seed=14)
        zero_frac = np.mean(counts == 0)
        se = np.sqrt(np.exp(-1) * (1 - np.exp(-1)) / m)
        assert abs(zero_frac - np.exp(-1)) < 3 * se

    def test_bootstrap_determinism(self):
        assert np.array_equal(bootstrap_counts(50, 1.0, 15), bootstrap_counts(50, 1.0, 15))

    def test_knockoff_variance_and_determinism(self):
        x = generate_knockoff(200, 100, seed=16)
        assert x.shape == (200, 100)
        var = x.var()
        se = np.sqrt(2.0 / (200 * 100)) / 100
        assert abs(var - 1.0 / 100) < 3 * se
        assert np.array_equal(x, generate_knockoff(200, 100, seed=16))
        assert not np.array_equal(x, generate_knockoff(200, 100, seed=17))


class TestEmpiricalRecords:
    def test_ss_huge_lambda_all_dead(self):
        data = generate_dataset(24, CFG, seed=18)
        rec = ss_empirical(data, lam=50.0, mu_b=1.0, repeats=4, seed=19)
        assert np.all(rec["selection_prob"] == 0.0)
        assert rec["q"] == rec["m"] == rec["v"] == 0.0

    def test_ss_selection_probability_scaling_with_repeats(self):
        data = generate_dataset(32, CFG, seed=20)
        few = ss_empirical(data, 0.1, 1.0, repeats=16, seed=21)
        many = ss_empirical(data, 0.1, 1.0, repeats=64, seed=21)
        # Monte Carlo noise shrinks ~ 1/sqrt(repeats); generous envelope
        assert np.mean(np.abs(few["selection_prob"] - many["selection_prob"])) < 0.2

    def test_dko_single_draw_matches_lcd_definition(self):
        data = generate_dataset(32, CFG, seed=22)
        m, n = data.dims
        knockoff = generate_knockoff(m, n, seed=23)
        w = lasso_coordinate_descent(
            np.concatenate([data.design, knockoff], axis=1), data.responses, 0.1
        )
        z = np.abs(w[:n]) - np.abs(w[n:])
        selected = z > 0.05
        assert selected.dtype == bool  # the vanilla selection set {i: Z_i > z_th}
        assert np.all((np.abs(w[:n]) > 0) | ~selected)

    def test_dko_empirical_fields(self):
        data = generate_dataset(24, CFG, seed=24)
        rec = dko_empirical(data, 0.1, z_th=0.05, repeats=4, seed=25)
        assert set(rec) >= {"selection_prob", "q", "m", "v", "v_knock", "knock_mean"}
        assert rec["v_knock"] >= 0.0
        assert np.all((rec["selection_prob"] >= 0) & (rec["selection_prob"] <= 1))

    def test_repeats_validation(self):
        data = generate_dataset(16, CFG, seed=26)
        with pytest.raises(ValueError):
            ss_empirical(data, 0.1, 1.0, repeats=1, seed=0)


class TestEmpiricalTprFdr:
    def test_perfect_selector(self):
        truth = np.array([0.0, 1.0, 0.0, -2.0])
        pi = (truth != 0).astype(float)
        assert empirical_tpr_fdr(pi, truth, 0.5) == (1.0, 0.0)

    def test_select_everything(self):
        rng = np.random.default_rng(27)
        truth = (rng.random(1000) < 0.3) * rng.normal(size=1000)
        pi = np.ones(1000)
        tpr, fdr = empirical_tpr_fdr(pi, truth, 0.5)
        assert tpr == 1.0
        assert_allclose(fdr, 1.0 - np.mean(truth != 0), rtol=1e-12)

    def test_random_selector_fdr_near_null_fraction(self):
        rng = np.random.default_rng(28)
        n = 4096
        truth = (rng.random(n) < 0.3) * rng.normal(size=n)
        pi = rng.random(n)
        _, fdr = empirical_tpr_fdr(pi, truth, 0.5)
        assert abs(fdr - (1 - 0.3)) < 4 * np.sqrt(0.3 * 0.7 / (0.5 * n))

    def test_empty_conventions(self):
        truth = np.zeros(8)
        assert empirical_tpr_fdr(np.zeros(8), truth, 0.5) == (0.0, 0.0)


class TestRunExperiment:
    THRESH = SelectionThresholds(z_th=0.05, pi_th=0.15)

    def test_reproducibility(self):
        kwargs = dict(
            repeats=4, data_realizations=8, thresholds=self.THRESH, master_seed=31
        )
        a = run_experiment(24, CFG, "ss", **kwargs)
        b = run_experiment(24, CFG, "ss", **kwargs)
        assert np.array_equal(a.selection_prob, b.selection_prob)
        assert a.order_params == b.order_params and a.std_errors == b.std_errors

    def test_worker_count_does_not_change_results(self):
        kwargs = dict(
            repeats=4, data_realizations=8, thresholds=self.THRESH, master_seed=32
        )
        serial = run_experiment(24, CFG, "ss", **kwargs, workers=1)
        parallel = run_experiment(24, CFG, "ss", **kwargs, workers=2)
        assert np.array_equal(serial.selection_prob, parallel.selection_prob)
        assert serial.order_params == parallel.order_params

    def test_standard_error_scaling(self):
        small = run_experiment(
            24, CFG, "ss", 4, 16, self.THRESH, master_seed=33
        )
        large = run_experiment(
            24, CFG, "ss", 4, 64, self.THRESH, master_seed=33
        )
        ratios = [
            small.std_errors[k] / large.std_errors[k]
            for k in ("q", "m", "v")
            if large.std_errors[k] > 0
        ]
        assert 1.3 < np.mean(ratios) < 3.2  # expect ~2 with fluctuation

    def test_grid_shares_datasets_across_lambdas(self):
        res = run_experiment_grid(
            24, CFG, "ss", [0.05, 0.2, 0.8], 4, 8, self.THRESH, master_seed=34
        )
        assert len(res) == 3
        # selection is monotone in lambda on shared draws
        assert res[0].order_params["q"] >= res[2].order_params["q"]

    def test_realizations_validation(self):
        with pytest.raises(ValueError):
            run_experiment(24, CFG, "ss", 4, 4, self.THRESH, master_seed=0)
        with pytest.raises(ValueError):
            run_experiment(24, CFG, "nope", 4, 8, self.THRESH, master_seed=0)
