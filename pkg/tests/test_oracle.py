import numpy as np
import pytest

from nullspace_edit.certify import objective_specs, projected_instance
from nullspace_edit.editors import solve_alphaedit, solve_naive
from nullspace_edit.knowledge import KnowledgeSet, AssociativeMemory
from nullspace_edit.numerics import relative_error
from nullspace_edit.oracle import (
    DivergenceError,
    ObjectiveKind,
    ObjectiveSpec,
    evaluate_objective,
    finite_difference_gradient,
    gradient,
    lipschitz_estimate,
    minimize,
)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("kind_index", range(4))
def test_gradient_matches_finite_differences(seed, kind_index):
    spec = objective_specs(seed)[kind_index]
    delta = np.random.default_rng(seed).standard_normal(spec.shape)
    g = gradient(spec, delta)
    assert relative_error(finite_difference_gradient(spec, delta), g) <= 1e-4


def test_every_kind_is_covered():
    kinds = {s.kind for s in objective_specs(0)}
    assert kinds == set(ObjectiveKind)


def test_descent_is_monotone():
    for spec in objective_specs(2):
        res = minimize(spec, max_iters=2000, record=True)
        h = np.array(res.history)
        assert np.all(np.diff(h) <= 8 * np.finfo(float).eps * np.abs(h[:-1]))


def test_zero_residual_converges_immediately(rng):
    w = rng.standard_normal((3, 5))
    k1 = rng.standard_normal((5, 2))
    res = minimize(ObjectiveSpec("naive", w, k1, w @ k1))
    assert res.converged
    assert res.iterations == 0
    assert np.all(res.delta == 0.0)


def test_naive_unit_key_matches_oracle(rng):
    w = rng.standard_normal((3, 4))
    k = np.zeros((4, 1))
    k[2, 0] = 1.0
    v = rng.standard_normal((3, 1))
    res = minimize(ObjectiveSpec("naive", w, k, v))
    closed = solve_naive(AssociativeMemory(w), KnowledgeSet(k, v)).delta
    assert np.max(np.abs(res.delta - closed)) <= 1e-5


def test_projected_oracle_matches_closed_form_mid_size():
    inst = projected_instance(seed=5, d_in=16, d_out=8, u=3)
    sol = solve_alphaedit(inst.memory, inst.batch, inst.proj, inst.history)
    spec = ObjectiveSpec("projected-sequential", inst.memory.weights, inst.batch.keys,
                         inst.batch.values, p=inst.proj.p, kp=inst.history.prior_keys)
    res = minimize(spec)
    assert res.converged
    assert relative_error(res.delta @ inst.proj.p, sol.delta) <= 1e-4


def test_oversized_step_diverges_or_backtracks(rng):
    w = rng.standard_normal((2, 3))
    k1 = rng.standard_normal((3, 2))
    spec = ObjectiveSpec("naive", w, k1, rng.standard_normal((2, 2)))
    # Backtracking recovers from a step far above 2 / L.
    res = minimize(spec, step=1e3 / lipschitz_estimate(spec))
    assert res.converged


def test_non_finite_objective_raises(rng):
    w = rng.standard_normal((2, 3))
    k1 = np.full((3, 1), 1e200)
    spec = ObjectiveSpec("naive", w, k1, rng.standard_normal((2, 1)))
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergenceError):
        minimize(spec, step=1.0)


def test_closed_form_beats_random_equal_norm_perturbations():
    inst = projected_instance(seed=3, d_in=10, d_out=4, u=2)
    sol = solve_alphaedit(inst.memory, inst.batch, inst.proj, inst.history)
    spec = ObjectiveSpec("projected-sequential", inst.memory.weights, inst.batch.keys,
                         inst.batch.values, p=inst.proj.p, kp=inst.history.prior_keys)
    best = evaluate_objective(spec, sol.delta)
    norm = np.linalg.norm(sol.delta)
    rng = np.random.default_rng(99)
    for _ in range(1000):
        d = rng.standard_normal(spec.shape)
        d *= norm / np.linalg.norm(d)
        assert best <= evaluate_objective(spec, d) + 1e-12 * abs(best)


def test_spec_validation(rng):
    w = rng.standard_normal((2, 3))
    k1 = rng.standard_normal((3, 1))
    v1 = rng.standard_normal((2, 1))
    with pytest.raises(ValueError):
        ObjectiveSpec("regularized", w, k1, v1)
    with pytest.raises(ValueError):
        ObjectiveSpec("projected-single", w, k1, v1, p=np.eye(2))
    with pytest.raises(ValueError):
        ObjectiveSpec("projected-sequential", w, k1, v1, p=np.eye(3))
    with pytest.raises(ValueError):
        ObjectiveSpec("naive", w, k1, rng.standard_normal((3, 1)))
    with pytest.raises(ValueError):
        evaluate_objective(ObjectiveSpec("naive", w, k1, v1), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        minimize(ObjectiveSpec("naive", w, k1, v1), step=-1.0)
