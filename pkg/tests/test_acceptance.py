"""Exit criteria of the package, one test per criterion.

Each test prints a single ``[criterion n] PASS|FAIL`` line (run with ``-s`` to
see them) and then asserts at the stated tolerance.
"""

import json
import math
import time

import numpy as np
import pytest

from greenpt import operators as ops
from greenpt.cli import main
from greenpt.models import ModelSpec, build_model
from greenpt.oracle import exact_states
from greenpt.pt import (degenerate_solve, energy_fixed_point, make_problem,
                        pt_expand, residual_norm, sakurai_solve)
from greenpt.rspt import Spectrum, rspt_series
from greenpt.unperturbed import green_u, system_slope

from conftest import CATALOG_CASES

pytestmark = pytest.mark.acceptance


def verdict(n, ok, detail):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def problem_for(model, level, k1=None, **kw):
    pert = model.perturbation() if k1 is None else k1
    return make_problem(model.g0inv, model.k0, pert, model.window, level=level, **kw)


def test_criterion_1_trivial_perturbation():
    t0 = time.perf_counter()
    worst_e, worst_psi, most_iter = 0.0, 0.0, 0
    for spec, level in CATALOG_CASES:
        model = build_model(spec)
        zero = ops.scaled(model.perturbation(), 0.0)
        prob = problem_for(model, level, k1=zero)
        rep = energy_fixed_point(prob)
        worst_e = max(worst_e, abs(rep.energy - prob.unperturbed_energy))
        worst_psi = max(worst_psi, float(np.max(np.abs(rep.wavefunction - prob.level.phi))))
        most_iter = max(most_iter, rep.iterations)
    elapsed = time.perf_counter() - t0
    ok = worst_e <= 1e-12 and worst_psi <= 1e-12 and most_iter <= 1 and elapsed < 1.0
    verdict(1, ok, f"max|E-e|={worst_e:.1e} max|psi-phi|={worst_psi:.1e} "
                   f"iterations<={most_iter} time={elapsed:.2f}s")


def test_criterion_2_two_level_closed_form():
    t0 = time.perf_counter()
    model = build_model(ModelSpec("two_level", {"gap": 2.0, "coupling": 1.0}))
    prob = problem_for(model, 0)
    rep = energy_fixed_point(prob)
    exact = 1.0 - math.sqrt(2.0)
    ratio = (rep.wavefunction[1] / rep.wavefunction[0]).real
    oracle = exact_states(*model.exact_system(), model.window)
    e_or = oracle.nearest(rep.energy)[0]
    elapsed = time.perf_counter() - t0
    ok = (abs(rep.energy - exact) <= 1e-10 and abs(ratio - rep.energy) <= 1e-10
          and abs(e_or - exact) <= 1e-10 and elapsed < 1.0)
    verdict(2, ok, f"|E-(1-sqrt2)|={abs(rep.energy - exact):.1e} |ratio-E|={abs(ratio - rep.energy):.1e} "
                   f"|oracle-(1-sqrt2)|={abs(e_or - exact):.1e} time={elapsed:.2f}s")


def test_criterion_3_rspt_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        model = build_model(ModelSpec("random_hermitian", {"dim": 8, "strength": 0.1, "min_gap": 0.5},
                                      seed=seed))
        level = seed % 8
        prob = problem_for(model, level)
        series = pt_expand(prob, 3).series_energies
        lvl = prob.level
        idx = int(np.argmin(np.abs(lvl.spectrum_energies - lvl.energy)))
        ref, _ = rspt_series(Spectrum(lvl.spectrum_energies, lvl.spectrum_vectors),
                             ops.evaluate(model.k1, 0.0), idx, 3)
        worst = max(worst, max(abs(a - b) for a, b in zip(series[1:], ref[1:])))
    elapsed = time.perf_counter() - t0
    verdict(3, worst <= 1e-9 and elapsed < 30.0,
            f"max|E_series^(k)-E_rspt^(k)|, k=1..3, 100 problems = {worst:.1e} time={elapsed:.1f}s")


def test_criterion_4_oracle_agreement():
    t0 = time.perf_counter()
    worst_d, worst_r, lines = 0.0, 0.0, []
    for spec, level in CATALOG_CASES:
        model = build_model(spec)
        prob = problem_for(model, level)
        rep = energy_fixed_point(prob)
        assert rep.converged, spec
        g, k0, k1 = model.exact_system()
        oracle = exact_states(g, k0, k1, model.window)
        d = abs(rep.energy - oracle.nearest(rep.energy)[0])
        r = residual_norm(g, k0, k1, rep.energy, rep.wavefunction)
        worst_d, worst_r = max(worst_d, d), max(worst_r, r)
        lines.append(f"{spec.name}: dE={d:.1e} res={r:.1e}")
    elapsed = time.perf_counter() - t0
    verdict(4, worst_d <= 1e-8 and worst_r <= 1e-8 and elapsed < 60.0,
            f"max|E-oracle|={worst_d:.1e} max residual={worst_r:.1e} over {len(lines)} cases "
            f"time={elapsed:.1f}s")


SAKURAI_CASES = [
    ModelSpec("separable_energy", {"profile": "inverse"}),
    ModelSpec("separable_energy", {"profile": "square", "scale": 0.1}),
    ModelSpec("separable_energy", {"profile": "inverse", "scale": 0.5, "u": [0.5, 0.5, 0.5, 0.5]}),
    ModelSpec("relativistic_modes", {"form": "klein_gordon"}),
    ModelSpec("relativistic_modes", {"form": "linear"}),
]


def test_criterion_5_sakurai_equivalence():
    t0 = time.perf_counter()
    worst_e, worst_psi = 0.0, 0.0
    for spec in SAKURAI_CASES:
        model = build_model(spec)
        for level in (0, 1):
            prob = problem_for(model, level)
            a = energy_fixed_point(prob)
            b = sakurai_solve(prob)
            assert a.converged and b.converged, spec
            worst_e = max(worst_e, abs(a.energy - b.energy))
            worst_psi = max(worst_psi, float(np.max(np.abs(a.wavefunction - b.wavefunction))))
    elapsed = time.perf_counter() - t0
    verdict(5, worst_e <= 1e-9 and worst_psi <= 1e-9 and elapsed < 10.0,
            f"max|dE|={worst_e:.1e} max|dpsi|={worst_psi:.1e} time={elapsed:.2f}s")


def _residue_limit(g0inv, k0, lvl, deltas=(1e-3, 5e-4)):
    """Richardson limit of ``(E - e) G_u(E)`` at ``E -> e``, averaged over both sides."""
    def x(d):
        return 0.5 * (d * green_u(g0inv, k0, lvl.energy + d) - d * green_u(g0inv, k0, lvl.energy - d))
    # symmetric average is even in d: eliminate the d^2 term
    d1, d2 = deltas
    return (d1**2 * x(d2) - d2**2 * x(d1)) / (d1**2 - d2**2)


def test_criterion_6_residue_and_normalization():
    cases = [
        (ModelSpec("two_level", {"gap": 2.0, "coupling": 1.0}), 0),
        (ModelSpec("oscillator_quartic", {"N": 12, "lam": 0.01}), 1),
        (ModelSpec("relativistic_modes", {"form": "klein_gordon"}), 2),
        (ModelSpec("separable_energy", {"profile": "inverse"}), 0),
        (ModelSpec("energy_dependent_k0", {}), 0),
    ]
    worst_res, worst_norm, worst_ov, factor = 0.0, 0.0, 0.0, None
    for spec, level in cases:
        model = build_model(spec)
        prob = problem_for(model, level)
        lvl = prob.level
        phi = lvl.phi
        limit = _residue_limit(model.g0inv, model.k0, lvl)
        worst_res = max(worst_res, float(np.linalg.norm(limit - np.outer(phi, phi.conj()), 2)))
        metric = (phi.conj() @ system_slope(model.g0inv, model.k0, lvl.energy) @ phi).real
        worst_norm = max(worst_norm, abs(metric - 1.0))
        if lvl.mode == "spectral":
            # <phi|psi> = 1 rests on <phi|G_u^b = 0, which holds for E - H0 systems only
            rep = energy_fixed_point(prob)
            worst_ov = max(worst_ov, abs(np.vdot(phi, rep.wavefunction) - 1.0))
        if spec.name == "energy_dependent_k0":
            # unit-norm null vector e0 has metric 1 - slope = 3/4
            factor = float(np.vdot(phi, phi).real)
    ok = worst_res <= 1e-6 and worst_norm <= 1e-10 and worst_ov <= 1e-10 and abs(factor - 4.0 / 3.0) <= 1e-10
    verdict(6, ok, f"residue limit err={worst_res:.1e} |<phi|dA/dE|phi>-1|={worst_norm:.1e} "
                   f"|<phi|psi>-1|={worst_ov:.1e} |phi|^2 (K0(E) case)={factor:.12f}")


def test_criterion_7_degenerate_splitting():
    c = 0.1
    model = build_model(ModelSpec("degenerate_triple", {"c": c}))
    prob = problem_for(model, 0)
    assert prob.level.size == 2
    first = np.linalg.eigvalsh(prob.level.vectors.conj().T @ ops.evaluate(model.k1, 1.0) @ prob.level.vectors)
    first = np.sort(1.0 + first)
    full = np.sort([r.energy for r in degenerate_solve(prob)])
    oracle = exact_states(*model.exact_system(), model.window)
    ref = np.sort([oracle.nearest(E)[0] for E in full])
    d_first = float(np.max(np.abs(first - full)))
    d_target = float(np.max(np.abs(first - np.array([1 - c, 1 + c]))))
    d_oracle = float(np.max(np.abs(full - ref)))
    ok = d_first <= 1e-3 and d_target <= 1e-12 and d_oracle <= 1e-9
    verdict(7, ok, f"first order {first.tolist()} vs full {full.tolist()}: {d_first:.1e}; "
                   f"full vs oracle {d_oracle:.1e}")


def test_criterion_8_series_order_scaling():
    lams = np.array([0.02, 0.04, 0.08])
    base = build_model(ModelSpec("oscillator_quartic", {"N": 20, "lam": 1.0}))
    coeffs = pt_expand(problem_for(base, 0), 3).series_energies
    errors = {K: [] for K in (1, 2, 3)}
    for lam in lams:
        model = base.scaled(lam)
        exact = exact_states(*model.exact_system(), model.window).nearest(0.5)[0]
        for K in errors:
            partial = sum(coeffs[k] * lam**k for k in range(K + 1))
            errors[K].append(abs(exact - partial))
    slopes = {K: float(np.polyfit(np.log(lams), np.log(errors[K]), 1)[0]) for K in errors}
    ok = all(abs(slopes[K] - (K + 1)) <= 0.2 for K in slopes)
    verdict(8, ok, "log-log slopes " + ", ".join(f"K={K}: {s:.3f} (target {K + 1})" for K, s in slopes.items()))


def _cli_config(tmp_path, name, body):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(body))
    return str(path)


def test_criterion_9_cli_determinism(tmp_path):
    body = {"problem": {"model": "random_hermitian", "params": {"dim": 6, "strength": 0.1, "min_gap": 0.5}},
            "level": 1, "window": [-1.5, 7.5],
            "solvers": ["fixed_point", "series", "sakurai", "rspt", "oracle"], "order": 3,
            "lambda_sweep": [0.5, 1.0]}
    cfg = _cli_config(tmp_path, "det", body)
    outs = []
    for i in range(2):
        report = tmp_path / f"run{i}.csv"
        assert main(["--config", cfg, "--report", str(report), "--seed", "42", "--quiet"]) == 0
        outs.append(report.read_text().split("\n", 1)[1])
    other = tmp_path / "other.csv"
    main(["--config", cfg, "--report", str(other), "--seed", "43", "--quiet"])
    differs = other.read_text().split("\n", 1)[1] != outs[0]

    bad = _cli_config(tmp_path, "bad", {"problem": {"model": "two_level", "params": {"gap": 2, "coupling": 1}},
                                       "level": 0, "window": [-3, 5], "solvers": ["fixed_point"],
                                       "max_iter": 1})
    code = main(["--config", bad, "--report", str(tmp_path / "bad.csv"), "--quiet"])
    ok = outs[0] == outs[1] and differs and code == 2
    verdict(9, ok, f"identical reports={outs[0] == outs[1]} seed changes report={differs} "
                   f"forced non-convergence exit code={code}")
