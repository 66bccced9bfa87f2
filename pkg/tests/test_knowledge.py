import numpy as np
import pytest

from nullspace_edit.knowledge import (
    AssociativeMemory,
    ConfigError,
    EditHistory,
    KnowledgeSet,
    SyntheticSpec,
    generate_edit_batch,
    generate_world,
    history_extend,
)
from nullspace_edit.numerics import DimensionError, frobenius_norm


def rel(a, b):
    return frobenius_norm(a - b) / max(frobenius_norm(b), 1e-300)


def test_small_world_rank_and_premise():
    memory, k0 = generate_world(
        SyntheticSpec(d_in=4, d_out=2, preserved_count=3, effective_rank=2, key_noise=0.0, seed=7)
    )
    assert memory.weights.shape == (2, 4)
    assert k0.keys.shape == (4, 3) and k0.values.shape == (2, 3)
    assert np.linalg.matrix_rank(k0.keys) == 2
    np.testing.assert_array_equal(memory.weights @ k0.keys, k0.values)


def test_full_rank_world_has_trivial_null_space():
    _, k0 = generate_world(SyntheticSpec(d_in=6, d_out=3, preserved_count=10, effective_rank=6))
    assert np.linalg.matrix_rank(k0.keys) == 6


def test_world_is_deterministic():
    spec = SyntheticSpec(d_in=10, d_out=4, preserved_count=12, effective_rank=5, key_noise=0.1, seed=3)
    m1, k1 = generate_world(spec)
    m2, k2 = generate_world(spec)
    assert m1.weights.tobytes() == m2.weights.tobytes()
    assert k1.keys.tobytes() == k2.keys.tobytes()
    assert k1.values.tobytes() == k2.values.tobytes()
    m3, _ = generate_world(SyntheticSpec(d_in=10, d_out=4, preserved_count=12, effective_rank=5, seed=4))
    assert m3.weights.tobytes() != m1.weights.tobytes()


@pytest.mark.parametrize("r", [1, 5, 17, 40])
def test_exact_rank_spectrum_count(r):
    _, k0 = generate_world(SyntheticSpec(d_in=64, d_out=8, preserved_count=200, effective_rank=r))
    w = np.linalg.eigvalsh(k0.keys @ k0.keys.T)
    assert np.sum(w > 1e-10 * w.max()) == r


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(effective_rank=0), "effective_rank"),
        (dict(effective_rank=65), "effective_rank"),
        (dict(preserved_count=10, effective_rank=20), "preserved_count"),
        (dict(key_noise=-1.0), "key_noise"),
        (dict(d_out=0), "d_out"),
        (dict(seed=-3), "seed"),
    ],
)
def test_spec_validation_names_field(kwargs, field):
    with pytest.raises(ConfigError) as info:
        generate_world(SyntheticSpec(**kwargs))
    assert info.value.field == field


def test_edit_batch_shapes_and_empty():
    spec = SyntheticSpec(d_in=8, d_out=3, preserved_count=10, effective_rank=4)
    memory, _ = generate_world(spec)
    empty = generate_edit_batch(spec, memory, 0, seed=1)
    assert empty.count == 0 and empty.keys.shape == (8, 0) and empty.values.shape == (3, 0)
    batch = generate_edit_batch(spec, memory, 5, seed=1)
    assert batch.values.shape == (3, 5)
    assert np.all(np.isfinite(batch.values))
    # Each target has the magnitude of the current recall of its key.
    np.testing.assert_allclose(
        np.linalg.norm(batch.values, axis=0),
        np.linalg.norm(memory.weights @ batch.keys, axis=0),
    )


def test_edit_batches_always_need_editing():
    spec = SyntheticSpec(d_in=12, d_out=5, preserved_count=20, effective_rank=6)
    memory, _ = generate_world(spec)
    for seed in range(100):
        b = generate_edit_batch(spec, memory, 3, seed)
        assert frobenius_norm(b.values - memory.weights @ b.keys) > 0


def test_edit_batch_deterministic():
    spec = SyntheticSpec(d_in=8, d_out=3, preserved_count=10, effective_rank=4)
    memory, _ = generate_world(spec)
    a = generate_edit_batch(spec, memory, 4, seed=9)
    b = generate_edit_batch(spec, memory, 4, seed=9)
    assert a.keys.tobytes() == b.keys.tobytes() and a.values.tobytes() == b.values.tobytes()


def test_edit_keys_reach_outside_preserved_span():
    spec = SyntheticSpec(d_in=16, d_out=4, preserved_count=30, effective_rank=8)
    memory, k0 = generate_world(spec)
    b = generate_edit_batch(spec, memory, 6, seed=0)
    q, _ = np.linalg.qr(k0.keys)
    q = q[:, :8]
    outside = b.keys - q @ (q.T @ b.keys)
    assert frobenius_norm(outside) > 0.1 * frobenius_norm(b.keys)


def test_history_extend_basics(rng):
    h = EditHistory.empty(5, 2)
    assert h.count == 0 and frobenius_norm(h.gram) == 0.0
    batch = KnowledgeSet(rng.standard_normal((5, 3)), rng.standard_normal((2, 3)))
    h1 = history_extend(h, batch)
    assert h1.count == 3
    np.testing.assert_allclose(h1.gram, batch.keys @ batch.keys.T)
    h2 = history_extend(h1, batch)
    np.testing.assert_allclose(h2.gram, 2 * h1.gram)
    assert h.count == 0  # original untouched


def test_history_gram_tracks_keys_over_many_extensions(rng):
    h = EditHistory.empty(7, 3)
    for _ in range(10):
        n = int(rng.integers(1, 5))
        h = history_extend(h, KnowledgeSet(rng.standard_normal((7, n)), rng.standard_normal((3, n))))
        assert frobenius_norm(h.gram - h.gram.T) <= 1e-10 * frobenius_norm(h.gram)
    recomputed = h.prior_keys @ h.prior_keys.T
    assert rel(h.gram, recomputed) <= 1e-10
    assert np.linalg.eigvalsh(h.gram).min() >= -1e-10 * frobenius_norm(h.gram)


def test_history_accumulation_is_associative(rng):
    batches = [
        KnowledgeSet(rng.standard_normal((6, n)), rng.standard_normal((2, n))) for n in (2, 3, 4)
    ]
    left = EditHistory.empty(6, 2)
    for b in batches:
        left = history_extend(left, b)
    merged = KnowledgeSet(
        np.hstack([b.keys for b in batches[1:]]), np.hstack([b.values for b in batches[1:]])
    )
    right = history_extend(history_extend(EditHistory.empty(6, 2), batches[0]), merged)
    assert rel(left.gram, right.gram) <= 1e-10
    np.testing.assert_array_equal(left.prior_keys, right.prior_keys)


def test_history_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        history_extend(EditHistory.empty(4, 2), KnowledgeSet(np.ones((3, 1)), np.ones((2, 1))))


def test_knowledge_set_count_mismatch():
    with pytest.raises(DimensionError):
        KnowledgeSet(np.ones((3, 2)), np.ones((2, 3)))


def test_memory_is_immutable():
    memory = AssociativeMemory(np.eye(2))
    with pytest.raises(ValueError):
        memory.weights[0, 0] = 5.0
