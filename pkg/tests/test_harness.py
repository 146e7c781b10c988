"""Experiment engine: config schema, coverage, sweeps, CSV/JSON, CLI."""

import json
import math

import pytest

from depmat.cli import cli
from depmat.errors import ConfigError, VacuousBoundError
from depmat.harness import (
    parse_config,
    process_to_config,
    read_csv,
    run_coverage,
    run_dimension_sweep,
    run_rate_sweep,
    wilson_interval,
)


def base_config(**overrides):
    raw = {
        "process": {
            "kind": "cbs",
            "coeffs": {"family": "geometric", "alpha1": 0.5, "ratio": 0.5},
            "innovation_bound": 1.0,
            "noise": {"kind": "bounded", "lam": 0.0},
        },
        "estimator": {"kind": "covariance"},
        "bound": {"regime": "bounded", "t": 3.0},
        "trials": 8,
        "n_grid": [200],
        "p": 5,
        "master_seed": 20240601,
    }
    raw.update(overrides)
    return raw


class TestWilsonInterval:
    def test_contains_proportion(self):
        low, high = wilson_interval(190, 200)
        assert low <= 0.95 <= high
        assert 0.0 <= low <= high <= 1.0

    def test_degenerate_ends(self):
        low, high = wilson_interval(0, 10)
        assert low <= 1e-12
        low, high = wilson_interval(10, 10)
        assert high >= 1.0 - 1e-12

    def test_bad_counts(self):
        with pytest.raises(ConfigError):
            wilson_interval(5, 0)


class TestConfigParsing:
    def test_round_trips(self):
        config = parse_config(base_config())
        assert config.p == 5
        assert config.n_grid == (200,)

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config(base_config(extra=1))

    def test_unknown_nested_key(self):
        raw = base_config()
        raw["process"]["surprise"] = True
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config(raw)

    def test_missing_required_key(self):
        raw = base_config()
        del raw["trials"]
        with pytest.raises(ConfigError, match="missing keys"):
            parse_config(raw)

    def test_n_grid_must_increase(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            parse_config(base_config(n_grid=[100, 100]))

    def test_estimator_bound_combination_checked(self):
        raw = base_config()
        raw["bound"] = {"regime": "hmm", "t": 3.0}
        with pytest.raises(ConfigError, match="does not certify"):
            parse_config(raw)

    def test_regression_needs_block(self):
        raw = base_config()
        raw["estimator"] = {"kind": "regression"}
        raw["bound"] = {"regime": "regression", "t": 2.0}
        with pytest.raises(ConfigError, match="regression"):
            parse_config(raw)

    def test_bad_noise_kind(self):
        raw = base_config()
        raw["process"]["noise"] = {"kind": "cauchy", "lam": 1.0}
        with pytest.raises(ConfigError, match="noise kind"):
            parse_config(raw)

    def test_spiked_requires_bounded_regime(self):
        raw = base_config()
        raw["process"] = {"kind": "spiked", "eff_rank": 3.0}
        raw["bound"] = {"regime": "covariance", "t": 3.0}
        with pytest.raises(ConfigError, match="bounded regime"):
            parse_config(raw)

    def test_process_round_trip_through_config(self):
        for process_dict in (
            base_config()["process"],
            {
                "kind": "cbs",
                "coeffs": {"family": "poly", "alpha1": 1.0, "exponent": 3.0},
                "innovation_bound": 2.0,
                "horizon_tol": 1e-08,
                "noise": {"kind": "poly", "k": 6.0, "lam": 1.0},
            },
            {
                "kind": "var",
                "transition_norm": 0.6,
                "innovation_bound": 1.0,
                "horizon_tol": 1e-10,
                "noise": {"kind": "exp", "k": 1.0, "lam": 0.5},
            },
            {"kind": "hmm", "transition_coeff": 0.5, "horizon_tol": 1e-10},
            {"kind": "spiked", "eff_rank": 3.0},
        ):
            raw = base_config(process=process_dict)
            if process_dict["kind"] == "hmm":
                raw["estimator"] = {"kind": "hmm"}
                raw["bound"] = {"regime": "hmm", "t": 200.0}
            if process_dict["kind"] == "spiked":
                raw["bound"] = {"regime": "bounded", "t": 3.0}
            config = parse_config(raw)
            emitted = process_to_config(config.process)
            reparsed = parse_config(dict(raw, process=emitted))
            assert process_to_config(reparsed.process) == emitted


class TestRunCoverage:
    def test_bounded_coverage_is_total(self):
        report = run_coverage(parse_config(base_config(trials=20)))
        assert report.empirical_coverage == 1.0
        assert report.nominal_coverage == 1.0 - math.exp(-3.0)
        assert report.trials == 20

    def test_single_trial_coverage_binary(self):
        report = run_coverage(parse_config(base_config(trials=1)))
        assert report.empirical_coverage in (0.0, 1.0)

    def test_deterministic_reports(self):
        config = parse_config(base_config(trials=6))
        first = run_coverage(config)
        second = run_coverage(config)
        assert first == second

    def test_multi_n_grid_refused(self):
        with pytest.raises(ConfigError, match="single sample size"):
            run_coverage(parse_config(base_config(n_grid=[100, 200])))

    def test_vacuous_bound_refused(self):
        raw = base_config()
        raw["process"]["noise"] = {"kind": "poly", "k": 6.0, "lam": 1.0}
        raw["bound"] = {"regime": "covariance", "t": 3.0, "tau": 1.0}
        with pytest.raises(VacuousBoundError, match="vacuous"):
            run_coverage(parse_config(raw))

    def test_composite_coverage(self):
        raw = base_config(trials=10)
        raw["process"]["noise"] = {"kind": "poly", "k": 6.0, "lam": 1.0}
        raw["bound"] = {"regime": "covariance", "t": 3.0, "tau": "auto"}
        report = run_coverage(parse_config(raw))
        assert report.empirical_coverage == 1.0
        assert report.nominal_coverage >= 1.0 - 2.0 * math.exp(-3.0) - 1e-9

    def test_truncated_estimator_coverage(self):
        raw = base_config(trials=10)
        raw["process"]["noise"] = {"kind": "poly", "k": 6.0, "lam": 1.0}
        raw["estimator"] = {"kind": "truncated", "tau": "auto"}
        raw["bound"] = {"regime": "covariance", "t": 3.0, "tau": "auto"}
        report = run_coverage(parse_config(raw))
        assert report.empirical_coverage == 1.0
        assert abs(report.nominal_coverage - (1.0 - math.exp(-3.0))) < 1e-12
        assert "truncated" in report.notes

    def test_lagged_coverage(self):
        raw = base_config(trials=6)
        raw["estimator"] = {"kind": "lagged"}
        raw["bound"] = {"regime": "lagged", "t": 2.0}
        report = run_coverage(parse_config(raw))
        assert report.empirical_coverage == 1.0
        assert report.regime == "lagged"

    def test_hmm_coverage(self):
        raw = base_config(trials=5, p=4)
        raw["process"] = {"kind": "hmm", "transition_coeff": 0.5}
        raw["estimator"] = {"kind": "hmm"}
        raw["bound"] = {"regime": "hmm", "t": 200.0}
        report = run_coverage(parse_config(raw))
        assert report.empirical_coverage == 1.0

    def test_regression_coverage(self):
        raw = base_config(trials=5, p=30, n_grid=[10])
        raw["estimator"] = {"kind": "regression"}
        raw["bound"] = {"regime": "regression", "t": 2.0}
        raw["regression"] = {"theta_norm": 1.0, "noise_std": 0.3, "c": 2.0}
        report = run_coverage(parse_config(raw))
        assert report.empirical_coverage == 1.0
        assert len(set(report.per_trial_bound)) > 1  # realised variance term varies

    def test_coverage_meets_nominal_within_wilson(self):
        report = run_coverage(parse_config(base_config(trials=40)))
        half_width = (report.wilson_interval[1] - report.wilson_interval[0]) / 2.0
        assert report.empirical_coverage >= report.nominal_coverage - half_width

    def test_thread_cap_does_not_change_results(self, monkeypatch):
        config = parse_config(base_config(trials=10))
        monkeypatch.setenv("DEPMAT_THREADS", "1")
        serial = run_coverage(config)
        monkeypatch.setenv("DEPMAT_THREADS", "4")
        threaded = run_coverage(config)
        assert serial == threaded

    def test_bad_thread_env_rejected(self, monkeypatch):
        monkeypatch.setenv("DEPMAT_THREADS", "lots")
        with pytest.raises(ConfigError, match="DEPMAT_THREADS"):
            run_coverage(parse_config(base_config(trials=2)))


class TestCsvRoundTrip:
    def test_coverage_csv_exact(self, tmp_path):
        report = run_coverage(parse_config(base_config(trials=7)))
        path = tmp_path / "coverage.csv"
        report.write_csv(path)
        rows = read_csv(path)
        assert len(rows) == 7
        for i, row in enumerate(rows):
            assert row["trial"] == i
            assert row["n"] == report.n
            assert row["p"] == report.p
            assert row["deviation"] == report.per_trial_deviation[i]
            assert row["bound"] == report.per_trial_bound[i]
            assert row["covered"] == int(
                report.per_trial_deviation[i] <= report.per_trial_bound[i]
            )

    def test_reruns_are_byte_identical(self, tmp_path):
        config = parse_config(base_config(trials=5))
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        run_coverage(config).write_csv(first)
        run_coverage(config).write_csv(second)
        assert first.read_bytes() == second.read_bytes()


class TestSweeps:
    def test_rate_sweep_needs_four_points(self):
        with pytest.raises(ConfigError, match="length >= 4"):
            run_rate_sweep(parse_config(base_config(n_grid=[100, 200, 400])))

    def test_rate_sweep_slope(self):
        config = parse_config(base_config(trials=10, n_grid=[100, 200, 400, 800]))
        result = run_rate_sweep(config)
        assert len(result.rows) == 4
        assert -1.0 < result.slope < 0.0
        assert result.slope_stderr > 0.0

    def test_dimension_sweep_single_row(self):
        raw = base_config(trials=6, n_grid=[300])
        raw["process"] = {"kind": "spiked", "eff_rank": 3.0}
        raw["p_grid"] = [8]
        result = run_dimension_sweep(parse_config(raw))
        assert len(result.rows) == 1
        assert result.ratio == 1.0

    def test_dimension_sweep_bound_constant(self):
        raw = base_config(trials=6, n_grid=[300])
        raw["process"] = {"kind": "spiked", "eff_rank": 3.0}
        raw["p_grid"] = [8, 16]
        result = run_dimension_sweep(parse_config(raw))
        assert len(result.rows) == 2
        assert result.bound_value > 0

    def test_dimension_sweep_needs_grid(self):
        raw = base_config()
        raw["process"] = {"kind": "spiked", "eff_rank": 3.0}
        with pytest.raises(ConfigError, match="p_grid"):
            run_dimension_sweep(parse_config(raw))

    def test_rate_sweep_deterministic(self):
        config = parse_config(base_config(trials=5, n_grid=[100, 200, 400, 800]))
        assert run_rate_sweep(config) == run_rate_sweep(config)


class TestCli:
    def write_config(self, tmp_path, raw):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(raw))
        return str(path)

    def test_bound_command_prints_json(self, tmp_path, capsys):
        code = cli(["bound", "--config", self.write_config(tmp_path, base_config())])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["regime"] == "bounded"
        assert payload["bound_value"] > 0

    def test_missing_config_file(self, capsys):
        code = cli(["bound", "--config", "/nonexistent/c.json"])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_malformed_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli(["bound", "--config", str(path)]) == 2

    def test_unknown_subcommand(self, capsys):
        assert cli(["frobnicate", "--config", "x.json"]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        assert cli(["bound", "--config", self.write_config(tmp_path, base_config(zzz=1))]) == 2

    def test_coverage_writes_csv_and_figure(self, tmp_path, capsys):
        out = tmp_path / "run.csv"
        code = cli([
            "coverage",
            "--config", self.write_config(tmp_path, base_config(trials=5)),
            "--out", str(out),
        ])
        assert code == 0
        assert out.exists()
        assert (tmp_path / "run.png").exists()
        payload = json.loads(capsys.readouterr().out)
        assert payload["empirical_coverage"] == 1.0

    def test_contract_violation_from_config_exits_2(self, tmp_path, capsys):
        raw = base_config(p=4)
        raw["process"] = {"kind": "hmm", "transition_coeff": 0.5}
        raw["estimator"] = {"kind": "hmm"}
        raw["bound"] = {"regime": "hmm", "t": 5.0}  # below the 2 B^2 floor
        code = cli(["bound", "--config", self.write_config(tmp_path, raw)])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_numerical_failure_exits_1(self, tmp_path, capsys, monkeypatch):
        from depmat import cli as cli_module
        from depmat.errors import NumericalError

        def explode(config):
            raise NumericalError("did not converge", residual=1.0)

        monkeypatch.setattr(cli_module, "bound_report_for", explode)
        code = cli(["bound", "--config", self.write_config(tmp_path, base_config())])
        assert code == 1
        assert "numerical failure" in capsys.readouterr().err

    def test_vacuous_bound_exits_3(self, tmp_path, capsys):
        raw = base_config()
        raw["process"]["noise"] = {"kind": "poly", "k": 6.0, "lam": 1.0}
        raw["bound"] = {"regime": "covariance", "t": 3.0, "tau": 1.0}
        code = cli(["coverage", "--config", self.write_config(tmp_path, raw)])
        assert code == 3
        assert "refusing" in capsys.readouterr().err

    def test_seed_override_changes_trials(self, tmp_path, capsys):
        config_path = self.write_config(tmp_path, base_config(trials=3))
        assert cli(["estimate", "--config", config_path]) == 0
        first = json.loads(capsys.readouterr().out)
        assert cli(["estimate", "--config", config_path, "--seed", "99"]) == 0
        second = json.loads(capsys.readouterr().out)
        assert first["deviation"] != second["deviation"]

    def test_simulate_writes_rows(self, tmp_path):
        out = tmp_path / "sample.csv"
        config_path = self.write_config(tmp_path, base_config(n_grid=[12]))
        assert cli(["simulate", "--config", config_path, "--out", str(out)]) == 0
        rows = read_csv(out)
        assert len(rows) == 12
        assert set(rows[0]) == {"index", "y0", "y1", "y2", "y3", "y4"}

    def test_sweep_rate_outputs(self, tmp_path, capsys):
        out = tmp_path / "rate.csv"
        raw = base_config(trials=4, n_grid=[100, 200, 400, 800])
        code = cli([
            "sweep-rate", "--config", self.write_config(tmp_path, raw), "--out", str(out)
        ])
        assert code == 0
        assert out.exists() and (tmp_path / "rate.png").exists()
        payload = json.loads(capsys.readouterr().out)
        assert "slope" in payload

    def test_sweep_dim_outputs(self, tmp_path, capsys):
        out = tmp_path / "dim.csv"
        raw = base_config(trials=4, n_grid=[200])
        raw["process"] = {"kind": "spiked", "eff_rank": 3.0}
        raw["p_grid"] = [6, 12]
        code = cli([
            "sweep-dim", "--config", self.write_config(tmp_path, raw), "--out", str(out)
        ])
        assert code == 0
        rows = read_csv(out)
        assert [row["p"] for row in rows] == [6, 12]
        assert rows[0]["bound"] == rows[1]["bound"]
        payload = json.loads(capsys.readouterr().out)
        assert payload["bound_value"] == rows[0]["bound"]
