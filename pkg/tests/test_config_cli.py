import json
import logging

import numpy as np
import pytest

from gradma.cli import main
from gradma.config import ConfigError, build_problem, parse_config, serialize_config
from gradma.runs import (
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_OK,
    BundleIntegrityError,
    InadmissibleTruth,
    load_bundle,
    run_manufactured,
    run_report,
    run_solve,
)
from gradma.solver import SolverConfig

CURVED = {
    "n": 1,
    "res": 32,
    "metric": {"perturbation": [{"i": 1, "j": 1, "re": [{"amp": 0.2, "k": [1, 0], "trig": "cos"}]}]},
    "a": {"constant": [[0.2, 0.1]]},
    "F": [{"amp": 0.4, "k": [1, 1], "trig": "sin"}, {"amp": 0.2, "k": [0, 2], "trig": "cos"}],
}


def doc(**overrides):
    out = json.loads(json.dumps(CURVED))
    out.update(overrides)
    return out


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config('{"n": 2, "res": 8}')
        assert cfg.res == (8,) * 4
        assert cfg.metric.flat
        assert cfg.solver == SolverConfig()
        assert cfg.monitors == ("estimates", "aeppli")
        assert cfg.truth is None and cfg.out_dir is None
        p = build_problem(cfg)
        assert np.all(p.F.re == 0) and np.all(p.a_array == 0)

    def test_odd_resolution_names_axis(self):
        with pytest.raises(ConfigError, match=r"res\[1\]") as info:
            parse_config('{"n": 1, "res": [8, 7]}')
        assert "axis 1" in str(info.value)

    @pytest.mark.parametrize(
        "text,where",
        [
            ('{"res": 8}', "n"),
            ('{"n": 4, "res": 8}', "n"),
            ('{"n": 1, "res": [8]}', "res"),
            ('{"n": 1, "res": 8, "F": [{"amp": 1, "k": [4, 0], "trig": "cos"}]}', "F"),
            ('{"n": 1, "res": 8, "solver": {"newton_tol": -1}}', "solver"),
            ('{"n": 1, "res": 8, "outputs": {"monitors": ["nope"]}}', "outputs.monitors[0]"),
            ("[1, 2]", ""),
            ("{not json", ""),
        ],
    )
    def test_rejections_carry_location(self, text, where):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.path.startswith(where)

    def test_unknown_keys(self, caplog):
        text = '{"n": 1, "res": 8, "colour": "blue"}'
        with caplog.at_level(logging.WARNING):
            parse_config(text)
        assert "colour" in caplog.text
        with pytest.raises(ConfigError, match="colour"):
            parse_config(text, strict=True)

    def test_round_trip(self):
        cfg = parse_config(json.dumps(doc(truth=[{"amp": 0.01, "k": [1, 0], "trig": "cos"}], seed=5)))
        again = parse_config(serialize_config(cfg), strict=True)
        assert again == cfg
        assert serialize_config(again) == serialize_config(cfg)

    def test_non_positive_metric_rejected(self):
        bad = doc(metric={"perturbation": [{"i": 1, "j": 1, "re": -1.5}]})
        with pytest.raises(ConfigError, match="positive"):
            build_problem(parse_config(json.dumps(bad)))


class TestRuns:
    def test_zero_source(self, tmp_path):
        bundle = run_solve(parse_config(json.dumps(doc(F=0))), tmp_path / "b")
        assert bundle.converged
        assert np.max(np.abs(bundle.u.re)) == 0 and bundle.metadata["b"] == 0

    def test_constant_source(self, tmp_path):
        bundle = run_solve(parse_config(json.dumps(doc(F=0.5))), tmp_path / "b")
        assert bundle.metadata["b"] == pytest.approx(-0.5, abs=1e-13)
        assert bundle.report.b_bound_slack == pytest.approx(0.0, abs=1e-13)

    def test_manufactured_zero_truth(self):
        bundle = run_manufactured(parse_config(json.dumps(doc(truth=0))))
        ver = bundle.extras["verification"]
        assert ver["sup_error"] == 0 and ver["b_error"] == 0

    def test_manufactured_spectral_convergence(self):
        truth = [{"amp": 0.03, "k": [1, 0], "trig": "cos"}, {"amp": 0.02, "k": [1, 1], "trig": "sin"}]
        errors = []
        for res in (16, 32):
            bundle = run_manufactured(parse_config(json.dumps(doc(res=res, truth=truth))))
            errors.append(bundle.extras["verification"]["sup_error"])
        assert errors[1] <= max(errors[0] / 10, 1e-11)
        assert errors[1] <= 1e-10

    def test_inadmissible_truth(self):
        cfg = parse_config(json.dumps(doc(truth=[{"amp": 0.5, "k": [1, 0], "trig": "cos"}])))
        with pytest.raises(InadmissibleTruth):
            run_manufactured(cfg)

    def test_kernel_monitor(self, tmp_path):
        cfg = parse_config(json.dumps(doc(outputs={"monitors": ["estimates", "kernel"]})))
        bundle = run_solve(cfg, tmp_path / "k")
        kern = bundle.extras["kernel"]
        assert kern["min"] > 0 and kern["mean"] == pytest.approx(1.0)
        assert bundle.report.aeppli_defect is None
        assert (tmp_path / "k" / "kernel.json").exists()

    def test_bundle_reload_and_report(self, tmp_path):
        cfg = parse_config(json.dumps(doc()))
        run_solve(cfg, tmp_path / "one")
        run_solve(cfg, tmp_path / "two")
        for name in ("u.gmaf", "F.gmaf", "gtilde.gmaf", "trace.txt"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
        again = load_bundle(tmp_path / "one")
        assert again.converged
        text, csv = run_report(tmp_path / "one")
        text2, csv2 = run_report(tmp_path / "two")
        assert csv2 == csv
        assert text2.splitlines()[1:] == text.splitlines()[1:]
        rows = csv.strip().splitlines()
        assert rows[0].split(",")[:5] == ["t", "newton_iter", "residual_sup", "min_eig", "b"]
        assert len(rows) - 1 == len(again.trace)

    def test_corrupted_bundle(self, tmp_path):
        run_solve(parse_config(json.dumps(doc())), tmp_path / "b")
        blob = (tmp_path / "b" / "u.gmaf").read_bytes()
        (tmp_path / "b" / "u.gmaf").write_bytes(blob[:-8])
        with pytest.raises(BundleIntegrityError, match="u.gmaf"):
            load_bundle(tmp_path / "b")

    def test_tampered_field_fails_validation(self, tmp_path):
        from gradma.fieldio import read_field, write_field
        from gradma.torus import ScalarField

        run_solve(parse_config(json.dumps(doc())), tmp_path / "b")
        u = read_field(tmp_path / "b" / "u.gmaf")
        write_field(tmp_path / "b" / "u.gmaf", ScalarField.from_real(u.grid, u.re * 1.001))
        with pytest.raises(BundleIntegrityError):
            load_bundle(tmp_path / "b")


class TestCli:
    def write(self, tmp_path, content):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(content) if isinstance(content, dict) else content)
        return path

    def test_solve_and_report(self, tmp_path, capsys):
        cfg = self.write(tmp_path, doc())
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "run")]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["status"] == "converged"
        assert main(["report", str(tmp_path / "run")]) == EXIT_OK
        assert "monitors:" in capsys.readouterr().out
        assert (tmp_path / "run" / "plot.csv").exists()

    def test_verify(self, tmp_path, capsys):
        cfg = self.write(tmp_path, doc(truth=[{"amp": 0.02, "k": [0, 1], "trig": "cos"}]))
        assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "v")]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["verification"]["sup_error"] < 1e-10

    def test_abort_exit_code(self, tmp_path):
        cfg = self.write(tmp_path, doc(solver={"max_newton": 1, "krylov_max": 1, "krylov_restart": 1}))
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_ABORT
        meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
        assert meta["status"] == "aborted" and meta["t_reached"] < 1

    @pytest.mark.parametrize(
        "content,extra",
        [
            ('{"n": 1, "res": 7}', []),
            ({"n": 1, "res": 8, "bogus": 1}, ["--strict"]),
            ({"n": 1, "res": 8}, []),  # no output directory anywhere
            ({"n": 1, "res": 8, "truth": [{"amp": 1, "k": [1, 0], "trig": "cos"}]}, ["--out", "x"]),
        ],
    )
    def test_config_exit_code(self, tmp_path, content, extra, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = self.write(tmp_path, content)
        cmd = "verify" if isinstance(content, dict) and "truth" in content else "solve"
        assert main([cmd, "--config", str(cfg), *extra]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_report_on_corrupt_bundle(self, tmp_path):
        cfg = self.write(tmp_path, doc())
        main(["solve", "--config", str(cfg), "--out", str(tmp_path / "r")])
        (tmp_path / "r" / "metadata.json").write_text("{")
        assert main(["report", str(tmp_path / "r")]) == EXIT_CONFIG
