import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenpt import operators as ops
from greenpt.cli import COLUMNS, SOLVERS, main, parse_config, render_csv, run, serialize_config
from greenpt.errors import ConfigError
from greenpt.models import ModelSpec, build_model
from greenpt.pt import residual_norm

TWO_LEVEL = {"model": "two_level", "params": {"gap": 2, "coupling": 1}}


def doc(**over):
    base = {"problem": TWO_LEVEL, "level": 0, "window": [-2, 1], "solvers": ["fixed_point", "oracle"]}
    base.update(over)
    return base


def write(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(body) if not isinstance(body, str) else body)
    return str(p)


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class TestParse:
    def test_defaults(self):
        cfg = parse_config(json.dumps(doc()))
        assert (cfg.tol, cfg.max_iter, cfg.damping, cfg.order) == (1e-10, 200, 1.0, 2)
        assert cfg.window == (-2.0, 1.0) and cfg.solvers == ("fixed_point", "oracle")

    @pytest.mark.parametrize("over", [
        {"order": 9},
        {"order": 2.5},
        {"tol": 0},
        {"tol": -1e-3},
        {"window": [1, 1]},
        {"window": [0]},
        {"solvers": []},
        {"solvers": ["newton"]},
        {"solvers": ["oracle", "oracle"]},
        {"level": -1},
        {"max_iter": 0},
        {"damping": 1.5},
        {"lambda_sweep": []},
        {"extra": 1},
        {"problem": {"model": "two_level", "params": {"gap": 2}, "colour": 1}},
        {"problem": {"model": "nope"}},
        {"problem": {"model": "random_hermitian", "seed": -1}},
        {"problem": {"operators": {"g0inv": {"kind": "qm_free_inverse", "h0": [0, 1]}}}},
        {"problem": {}},
    ])
    def test_rejections(self, over):
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc(**over)))

    def test_missing_required(self):
        body = doc()
        del body["window"]
        with pytest.raises(ConfigError, match="window"):
            parse_config(json.dumps(body))

    def test_non_finite_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc()).replace('"level": 0', '"level": 0, "tol": NaN'))
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc()).replace('"level": 0', '"level": 0, "tol": Infinity'))

    def test_syntax_error_position(self):
        with pytest.raises(ConfigError, match="line 2, column"):
            parse_config('{"level": 0,\n "window": [1, }')

    def test_explicit_operators_round_trip(self):
        matrices = {"g0inv": {"kind": "qm_free_inverse", "h0": [0.0, 2.0]},
                    "k0": {"kind": "constant", "matrix": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]},
                    "k1": {"kind": "constant", "matrix": [[[0.25, 0], [0.5, -0.125]], [[0.5, 0.125], [-1, 0]]]}}
        cfg = parse_config(json.dumps(doc(problem={"operators": matrices})))
        again = parse_config(serialize_config(cfg))
        assert again == cfg
        assert parse_config(serialize_config(again)) == cfg


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False), min_size=4, max_size=4))
def test_matrix_round_trip_is_bit_exact(vals):
    a, b, c, d = vals
    m = [[[a, 0.0], [b, c]], [[b, -c], [d, 0.0]]]
    desc = {"g0inv": {"kind": "qm_free_inverse", "h0": [0.0, 1.0]},
            "k0": {"kind": "constant", "matrix": m}, "k1": {"kind": "constant", "matrix": m}}
    cfg = parse_config(json.dumps(doc(problem={"operators": desc})))
    back = parse_config(serialize_config(cfg))
    x = ops.make_operator(back.problem["operators"]["k1"]).evaluate(0.0)
    y = ops.make_operator(desc["k1"]).evaluate(0.0)
    assert x.tobytes() == y.tobytes()


class TestRun:
    def test_two_level_oracle_delta(self, tmp_path):
        report = tmp_path / "r.csv"
        assert main(["--config", write(tmp_path, doc()), "--report", str(report), "--quiet"]) == 0
        rows = read_rows(report)
        fp = [r for r in rows if r["solver"] == "fixed_point"][0]
        assert abs(float(fp["oracle_delta"])) <= 1e-10
        assert float(fp["energy"]) == pytest.approx(1 - math.sqrt(2), abs=1e-10)
        assert fp["converged"] == "true"
        assert report.read_text().startswith("# greenpt report generated")
        assert report.read_text().splitlines()[1] == ",".join(COLUMNS)
        assert (tmp_path / "r.summary.txt").exists() and (tmp_path / "r.states.json").exists()

    def test_lambda_sweep_blocks(self, tmp_path):
        body = doc(problem={"model": "oscillator_quartic", "params": {"N": 20, "lam": 1.0}}, window=[-1, 20.5],
                   solvers=["fixed_point", "oracle"], lambda_sweep=[0.1, 0.2, 0.4])
        report = tmp_path / "sweep.csv"
        main(["--config", write(tmp_path, body), "--report", str(report), "--quiet"])
        text = report.read_text()
        assert text.count("# lambda=") >= 3
        rows = read_rows(report)
        oracle = [float(r["energy"]) for r in rows if r["solver"] == "oracle"]
        assert len(oracle) == 3 and oracle == sorted(oracle) and len(set(oracle)) == 3

    def test_rspt_precondition_exit_2(self, tmp_path):
        body = doc(problem={"model": "separable_energy", "params": {}}, window=[-0.5, 4.5], solvers=["rspt"])
        report = tmp_path / "r.csv"
        assert main(["--config", write(tmp_path, body), "--report", str(report), "--quiet"]) == 2
        assert "PreconditionError" in (tmp_path / "r.summary.txt").read_text()
        assert read_rows(report)[0]["converged"] == "false"

    def test_forced_non_convergence_exit_2(self, tmp_path):
        body = doc(max_iter=1, solvers=["fixed_point"])
        assert main(["--config", write(tmp_path, body), "--report", str(tmp_path / "r.csv"), "--quiet"]) == 2

    def test_config_errors_exit_1(self, tmp_path, capsys):
        assert main(["--config", write(tmp_path, doc(order=9)), "--quiet"]) == 1
        assert "order" in capsys.readouterr().err
        assert main(["--config", str(tmp_path / "missing.json")]) == 1
        assert main(["--config", write(tmp_path, doc(level=7)), "--report", str(tmp_path / "x.csv")]) == 1

    def test_unwritable_report_exit_1(self, tmp_path):
        assert main(["--config", write(tmp_path, doc()), "--report", str(tmp_path / "no" / "dir" / "r.csv"),
                     "--quiet"]) == 1

    def test_seed_range(self, tmp_path):
        assert main(["--config", write(tmp_path, doc()), "--seed", str(2**64), "--quiet"]) == 1

    def test_row_order(self, tmp_path):
        body = doc(solvers=["oracle", "series", "fixed_point", "sakurai", "rspt"], lambda_sweep=[0.5, 1.0])
        result = run(parse_config(json.dumps(body)))
        keys = [(SOLVERS.index(r.solver), r.level, [0.5, 1.0].index(r.lam)) for r in result.rows]
        assert keys == sorted(keys)

    def test_rows_traceable(self, tmp_path):
        body = {"problem": {"model": "relativistic_modes", "params": {"form": "klein_gordon"}}, "level": 1,
                "window": [-0.5, 3.0], "solvers": ["fixed_point", "series", "sakurai", "oracle"],
                "order": 3, "lambda_sweep": [0.5, 1.0]}
        report = tmp_path / "t.csv"
        main(["--config", write(tmp_path, body), "--report", str(report), "--quiet"])
        rows = read_rows(report)
        states = json.loads((tmp_path / "t.states.json").read_text())
        assert len(rows) == len(states)
        model = build_model(ModelSpec("relativistic_modes", {"form": "klein_gordon"}))
        for row, st_ in zip(rows, states):
            g, k0, k1 = model.scaled(st_["lambda"]).exact_system()
            psi = ops.decode_complex(st_["vector"], 1)
            E = float(row["energy"])
            assert E == st_["energy"]
            assert abs(residual_norm(g, k0, k1, E, psi) - float(row["residual"])) <= 1e-12

    def test_render_negative_zero(self):
        from greenpt.cli import Row
        text = render_csv([Row("rspt", 0, 0, -0.0, 1.0, 1.0, 0.0, True)], "T")
        assert text.splitlines()[2].split(",")[3] == "0"


def test_module_entry_point(tmp_path):
    report = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "greenpt", "--config", write(tmp_path, doc()),
                           "--report", str(report)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "fixed_point" in proc.stdout and report.exists()


def test_seed_override_changes_random_model(tmp_path):
    body = doc(problem={"model": "random_hermitian", "params": {"dim": 4}, "seed": 1}, window=[-1.5, 5.5],
               solvers=["oracle"])
    cfg = parse_config(json.dumps(body))
    a = [r.energy for r in run(cfg).rows]
    b = [r.energy for r in run(cfg, seed=1).rows]
    c = [r.energy for r in run(cfg, seed=2).rows]
    assert a == b and a != c
    assert np.isfinite(a).all()
