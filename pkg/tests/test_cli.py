import csv
import json
from pathlib import Path

import numpy as np
import pytest

from enselect.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERDICT,
    ConfigError,
    compare_tables,
    main,
    parse_grid,
)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParseGrid:
    def test_log_spec(self):
        grid = parse_grid("log:0.02:1:8")
        assert grid.shape == (8,)
        assert np.isclose(grid[0], 0.02) and np.isclose(grid[-1], 1.0)

    def test_comma_list(self):
        assert parse_grid("0.1,0.2,0.5").tolist() == [0.1, 0.2, 0.5]

    def test_rejects_unsorted(self):
        with pytest.raises(ConfigError):
            parse_grid("0.5,0.2")
        with pytest.raises(ConfigError):
            parse_grid("garbage")


class TestSolveCommand:
    def test_huge_lambda_row_of_zeros(self, tmp_path):
        out = tmp_path / "solve.csv"
        code = main(
            ["solve", "ss", "--lambda", "150", "--out", str(out), "--no-plot"]
        )
        assert code == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 1
        assert rows[0]["converged"] == "True"
        assert abs(float(rows[0]["q"])) < 1e-12
        assert float(rows[0]["tpr"]) < 1e-50

    def test_grid_rows_ascending_with_figure(self, tmp_path):
        out = tmp_path / "solve.csv"
        code = main(
            ["solve", "lasso", "--lambda-grid", "0.1,0.3,0.9", "--out", str(out)]
        )
        assert code == EXIT_OK
        rows = read_csv(out)
        assert [float(r["lambda"]) for r in rows] == [0.1, 0.3, 0.9]
        assert (tmp_path / "solve.png").exists()

    def test_dko_schema_has_knockoff_columns(self, tmp_path):
        out = tmp_path / "dko.csv"
        main(["solve", "dko", "--lambda", "0.2", "--out", str(out), "--no-plot"])
        rows = read_csv(out)
        assert "v_knock" in rows[0] and "v_hat_knock" in rows[0]


class TestPowerCurveCommand:
    def test_ss_sweep(self, tmp_path):
        out = tmp_path / "power.csv"
        code = main(
            [
                "power-curve", "ss", "--alpha", "1.12", "--rho", "0.5",
                "--delta", "0.01", "--lambda", "0.2", "--points", "25",
                "--out", str(out), "--no-plot",
            ]
        )
        assert code == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 25
        assert rows[0]["threshold_kind"] == "pi_th"
        tprs = [float(r["tpr"]) for r in rows]
        assert np.all(np.diff(tprs) <= 1e-9)


    def test_explicit_threshold_grid_single_point(self, tmp_path):
        out = tmp_path / "single.csv"
        code = main(
            [
                "power-curve", "ss", "--alpha", "1.12", "--rho", "0.5",
                "--delta", "0.01", "--lambda", "0.2",
                "--threshold-grid", "0.999", "--out", str(out), "--no-plot",
            ]
        )
        assert code == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 1 and float(rows[0]["threshold"]) == 0.999
        assert float(rows[0]["fdr"]) < 0.05


class TestEndToEndCompare:
    def test_solve_simulate_compare_roundtrip(self, tmp_path):
        theory_csv = tmp_path / "theory.csv"
        emp_json = tmp_path / "emp.json"
        verdict_csv = tmp_path / "verdict.csv"
        common = [
            "--alpha", "2.0", "--rho", "0.3", "--delta", "0.05",
            "--lambda-grid", "0.1,0.4", "--no-plot",
        ]
        assert main(["solve", "ss"] + common + ["--out", str(theory_csv)]) == EXIT_OK
        assert (
            main(
                ["simulate", "ss"] + common
                + [
                    "--n", "48", "--repeats", "8", "--realizations", "12",
                    "--seed", "5", "--out", str(emp_json),
                ]
            )
            == EXIT_OK
        )
        code = main(
            ["compare", str(theory_csv), str(emp_json), "--out", str(verdict_csv), "--no-plot"]
        )
        assert code in (EXIT_OK, EXIT_VERDICT)
        rows = read_csv(verdict_csv)
        # q, m, v, tpr, fdr at two lambdas
        assert len(rows) == 10
        assert {r["statistic"] for r in rows} == {"q", "m", "v", "tpr", "fdr"}


class TestPhaseBoundaryCommand:
    def test_three_algorithms(self, tmp_path):
        out = tmp_path / "phase.csv"
        code = main(
            ["phase-boundary", "--rho-grid", "0.1,0.4", "--out", str(out), "--no-plot"]
        )
        assert code == EXIT_OK
        rows = read_csv(out)
        algos = {r["algorithm"] for r in rows}
        assert algos == {"ss_mu_b=1", "ss_mu_b=2", "dko"}
        assert len(rows) == 6


class TestSimulateCommand:
    ARGS = [
        "simulate", "ss", "--n", "16", "--repeats", "2", "--realizations", "8",
        "--alpha", "1.5", "--lambda", "0.2", "--seed", "77", "--no-plot",
    ]

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        assert main(self.ARGS + ["--out", str(out1)]) == EXIT_OK
        assert main(self.ARGS + ["--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_payload_structure(self, tmp_path):
        out = tmp_path / "sim.json"
        main(self.ARGS + ["--out", str(out)])
        payload = json.loads(out.read_text())
        assert payload["master_seed"] == 77
        assert len(payload["per_lambda"]) == 1
        rec = payload["per_lambda"][0]
        assert set(rec["order_params"]) == {"q", "m", "v"}
        assert set(rec["std_errors"]) >= {"q", "m", "v", "tpr", "fdr"}
        assert len(rec["selection_prob"]) == 16

    def test_huge_lambda_all_zero(self, tmp_path):
        out = tmp_path / "dead.json"
        args = [a if a != "0.2" else "90" for a in self.ARGS]
        main(args + ["--out", str(out)])
        payload = json.loads(out.read_text())
        rec = payload["per_lambda"][0]
        assert rec["order_params"]["q"] == 0.0 and rec["tpr"] == 0.0


class TestCompareCommand:
    def _theory_csv(self, path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

    def _empirical_json(self, path, per_lambda):
        payload = {"per_lambda": per_lambda}
        Path(path).write_text(json.dumps(payload))

    def test_exact_match_passes(self, tmp_path):
        th_path, emp_path = tmp_path / "t.csv", tmp_path / "e.json"
        self._theory_csv(th_path, [{"lambda": 0.1, "q": 0.5, "tpr": 0.9, "fdr": 0.1}])
        self._empirical_json(
            emp_path,
            [
                {
                    "lambda": 0.1,
                    "order_params": {"q": 0.5},
                    "tpr": 0.9,
                    "fdr": 0.1,
                    "std_errors": {"q": 0.01, "tpr": 0.01, "fdr": 0.01},
                }
            ],
        )
        out = tmp_path / "verdict.csv"
        code = main(["compare", str(th_path), str(emp_path), "--out", str(out), "--no-plot"])
        assert code == EXIT_OK
        rows = read_csv(out)
        assert all(r["pass"] == "True" for r in rows)

    def test_zero_se_mismatch_fails_without_blowup(self, tmp_path):
        th_path, emp_path = tmp_path / "t.csv", tmp_path / "e.json"
        self._theory_csv(th_path, [{"lambda": 0.1, "q": 0.5, "tpr": 0.9, "fdr": 0.1}])
        self._empirical_json(
            emp_path,
            [
                {
                    "lambda": 0.1,
                    "order_params": {"q": 0.75},
                    "tpr": 0.9,
                    "fdr": 0.1,
                    "std_errors": {"q": 0.0, "tpr": 0.01, "fdr": 0.01},
                }
            ],
        )
        code = main(["compare", str(th_path), str(emp_path), "--out", str(tmp_path / "v.csv"), "--no-plot"])
        assert code == EXIT_VERDICT

    def test_grid_mismatch_is_config_error(self, tmp_path):
        th_path, emp_path = tmp_path / "t.csv", tmp_path / "e.json"
        self._theory_csv(th_path, [{"lambda": 0.1, "q": 0.5, "tpr": 0.9, "fdr": 0.1}])
        self._empirical_json(
            emp_path,
            [
                {
                    "lambda": 0.2,
                    "order_params": {"q": 0.5},
                    "tpr": 0.9,
                    "fdr": 0.1,
                    "std_errors": {"q": 0.01, "tpr": 0.01, "fdr": 0.01},
                }
            ],
        )
        code = main(["compare", str(th_path), str(emp_path), "--out", str(tmp_path / "v.csv"), "--no-plot"])
        assert code == EXIT_CONFIG

    def test_compare_tables_fraction_rule(self):
        lambdas = [0.1 * (i + 1) for i in range(10)]
        theory_rows = [{"lambda": l, "q": 1.0} for l in lambdas]

        def empirical(q_values):
            return {
                "per_lambda": [
                    {
                        "lambda": l,
                        "order_params": {"q": qv},
                        "tpr": 0.0,
                        "fdr": 0.0,
                        "std_errors": {"q": 0.1},
                    }
                    for l, qv in zip(lambdas, q_values)
                ]
            }

        # one cell at z = 5: 90% of cells pass at 4 SE and none exceeds 6
        qs = [1.0] * 10
        qs[0] = 1.5
        rows, overall = compare_tables(theory_rows, empirical(qs))
        assert sum(not r["pass"] for r in rows) == 1 and overall
        # one cell at z = 7 breaks the hard cap
        qs[0] = 1.7
        _, overall = compare_tables(theory_rows, empirical(qs))
        assert not overall
        # two cells beyond 4 SE break the 90% rule
        qs[0], qs[1] = 1.5, 1.5
        _, overall = compare_tables(theory_rows, empirical(qs))
        assert not overall


class TestExitCodes:
    def test_usage_error(self, capsys):
        assert main(["solve", "unknown-theory"]) == EXIT_CONFIG

    def test_bad_config_file(self, tmp_path):
        bad = tmp_path / "conf.json"
        bad.write_text("{not json")
        assert main(["solve", "ss", "--config", str(bad)]) == EXIT_CONFIG

    def test_config_file_roundtrip(self, tmp_path):
        conf = tmp_path / "conf.json"
        conf.write_text(
            json.dumps(
                {
                    "problem": {"alpha": 1.5, "rho": 0.4, "delta": 0.05, "lambda": 0.3},
                    "out": str(tmp_path / "from_file.csv"),
                }
            )
        )
        code = main(["solve", "ss", "--config", str(conf), "--no-plot"])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "from_file.csv")
        assert float(rows[0]["lambda"]) == 0.3

    def test_flags_override_config_file(self, tmp_path):
        conf = tmp_path / "conf.json"
        conf.write_text(json.dumps({"problem": {"lambda": 0.3}}))
        out = tmp_path / "o.csv"
        main(["solve", "ss", "--config", str(conf), "--lambda", "0.7", "--out", str(out), "--no-plot"])
        assert float(read_csv(out)[0]["lambda"]) == 0.7


def test_lambda_opt_command(tmp_path):
    out = tmp_path / "opt.json"
    code = main(
        [
            "lambda-opt", "lasso", "--alpha", "2.0", "--rho", "0.5",
            "--delta", "0.01", "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    payload = json.loads(out.read_text())
    assert 1e-3 <= payload["lambda_star"] <= 10.0
    assert payload["prediction_error"] > 0
