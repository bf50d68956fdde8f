import numpy as np
import pytest

from greenpt.models import ModelSpec, build_model

# (spec, level) pairs covering every catalog entry; degenerate_triple targets its
# nondegenerate level so the single-level solvers apply
CATALOG_CASES = [
    (ModelSpec("two_level", {"gap": 2.0, "coupling": 1.0}), 0),
    (ModelSpec("two_level", {"gap": 1.0, "coupling": 0.2}), 1),
    (ModelSpec("oscillator_quartic", {"N": 20, "lam": 0.01}), 0),
    (ModelSpec("random_hermitian", {"dim": 8, "strength": 0.1, "min_gap": 0.5}, seed=3), 2),
    (ModelSpec("degenerate_triple", {"c": 0.1}), 1),
    (ModelSpec("relativistic_modes", {"form": "linear"}), 0),
    (ModelSpec("relativistic_modes", {"form": "klein_gordon"}), 1),
    (ModelSpec("separable_energy", {"profile": "inverse"}), 0),
    (ModelSpec("separable_energy", {"profile": "square", "scale": 0.1}), 1),
    (ModelSpec("separable_energy", {"profile": "constant"}), 0),
    (ModelSpec("energy_dependent_k0", {}), 0),
]


def case_id(case):
    spec, level = case
    extra = ",".join(f"{k}={v}" for k, v in spec.params.items())
    return f"{spec.name}[{extra}]@{level}"


@pytest.fixture(params=CATALOG_CASES, ids=case_id)
def catalog_case(request):
    spec, level = request.param
    return build_model(spec), level


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
