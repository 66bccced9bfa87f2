"""Key/value view of a weight matrix and a synthetic source of knowledge.

A weight matrix ``W`` (``d_out x d_in``) acts as an associative memory: it
maps a key ``k`` to the value ``W @ k``. Keys and values are stacked column
by column into ``K`` and ``V``.

The synthetic generator draws preserved keys from a low-dimensional subspace
(plus optional isotropic noise) so that the Gram matrix ``K0 @ K0.T`` has a
controllable spectrum and a nontrivial near-null space. All randomness comes
from ``numpy.random.default_rng`` (PCG64) seeded with integer tuples, so a
given ``SyntheticSpec`` replays bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, as_matrix, frobenius_norm

# Stream tags for the generator; changing them changes every seeded world.
_STREAM_WEIGHTS = 0
_STREAM_BASIS = 1
_STREAM_PRESERVED = 2
_STREAM_EDITS = 3


class ConfigError(ValueError):
    """Invalid experiment or generator configuration.

    ``field`` names the offending setting when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


@dataclass(frozen=True)
class AssociativeMemory:
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", as_matrix(self.weights, name="weights"))

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]

    def recall(self, keys: np.ndarray) -> np.ndarray:
        return self.weights @ keys


@dataclass(frozen=True)
class KnowledgeSet:
    """Paired key (``d_in x n``) and value (``d_out x n``) matrices."""

    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        keys = as_matrix(self.keys, name="keys", allow_empty=True)
        values = as_matrix(self.values, name="values", allow_empty=True)
        if keys.shape[1] != values.shape[1]:
            raise DimensionError(
                f"{keys.shape[1]} keys but {values.shape[1]} values"
            )
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @property
    def count(self) -> int:
        return self.keys.shape[1]

    @classmethod
    def empty(cls, d_in: int, d_out: int) -> "KnowledgeSet":
        return cls(np.zeros((d_in, 0)), np.zeros((d_out, 0)))

    def check_against(self, memory: AssociativeMemory) -> None:
        if self.keys.shape[0] != memory.d_in or self.values.shape[0] != memory.d_out:
            raise DimensionError(
                f"knowledge set is ({self.keys.shape[0]} -> {self.values.shape[0]}), "
                f"memory is ({memory.d_in} -> {memory.d_out})"
            )


@dataclass(frozen=True)
class EditHistory:
    """Keys and values written by earlier edit batches, plus their Gram matrix.

    ``gram`` is accumulated incrementally as ``sum_t K_t @ K_t.T``; it always
    agrees with ``prior_keys @ prior_keys.T`` to round-off.
    """

    prior_keys: np.ndarray
    prior_values: np.ndarray
    gram: np.ndarray

    @classmethod
    def empty(cls, d_in: int, d_out: int) -> "EditHistory":
        return cls(
            as_matrix(np.zeros((d_in, 0)), allow_empty=True),
            as_matrix(np.zeros((d_out, 0)), allow_empty=True),
            as_matrix(np.zeros((d_in, d_in))),
        )

    @property
    def count(self) -> int:
        return self.prior_keys.shape[1]

    @property
    def d_in(self) -> int:
        return self.prior_keys.shape[0]

    @property
    def d_out(self) -> int:
        return self.prior_values.shape[0]

    def as_knowledge(self) -> KnowledgeSet:
        return KnowledgeSet(self.prior_keys, self.prior_values)


def history_extend(h: EditHistory, batch: KnowledgeSet) -> EditHistory:
    if batch.keys.shape[0] != h.d_in or batch.values.shape[0] != h.d_out:
        raise DimensionError(
            f"batch is ({batch.keys.shape[0]} -> {batch.values.shape[0]}), "
            f"history is ({h.d_in} -> {h.d_out})"
        )
    k = batch.keys
    return EditHistory(
        as_matrix(np.hstack([h.prior_keys, k]), allow_empty=True),
        as_matrix(np.hstack([h.prior_values, batch.values]), allow_empty=True),
        as_matrix(h.gram + k @ k.T),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and spectrum of a synthetic world.

    Preserved keys are ``B @ z + key_noise * eps`` with ``B`` a random
    orthonormal ``d_in x effective_rank`` basis. Edit keys share ``B`` and
    ``key_noise`` but add an isotropic component of scale ``edit_key_noise``
    so that they reach outside the preserved subspace.
    """

    d_in: int = 64
    d_out: int = 32
    preserved_count: int = 200
    effective_rank: int = 40
    key_noise: float = 0.0
    seed: int = 0
    edit_key_noise: float = 0.5

    def validate(self) -> "SyntheticSpec":
        for name in ("d_in", "d_out", "preserved_count", "effective_rank"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ConfigError(f"must be an integer, got {value!r}", name)
        if self.d_in < 1:
            raise ConfigError("must be >= 1", "d_in")
        if self.d_out < 1:
            raise ConfigError("must be >= 1", "d_out")
        if not 1 <= self.effective_rank <= self.d_in:
            raise ConfigError(
                f"must lie in [1, d_in={self.d_in}], got {self.effective_rank}",
                "effective_rank",
            )
        if self.preserved_count < self.effective_rank:
            raise ConfigError(
                f"must be >= effective_rank={self.effective_rank}", "preserved_count"
            )
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.seed!r}", "seed")
        if not (np.isfinite(self.key_noise) and self.key_noise >= 0):
            raise ConfigError("must be finite and >= 0", "key_noise")
        if not (np.isfinite(self.edit_key_noise) and self.edit_key_noise >= 0):
            raise ConfigError("must be finite and >= 0", "edit_key_noise")
        return self


def _rng(*tags: int) -> np.random.Generator:
    return np.random.default_rng([int(t) for t in tags])


def key_basis(spec: SyntheticSpec) -> np.ndarray:
    """Orthonormal ``d_in x effective_rank`` basis of the preserved key subspace."""
    g = _rng(spec.seed, _STREAM_BASIS).standard_normal((spec.d_in, spec.effective_rank))
    q, _ = np.linalg.qr(g)
    return q


def generate_world(spec: SyntheticSpec) -> tuple[AssociativeMemory, KnowledgeSet]:
    """Random memory plus a preserved set it already stores exactly (``W K0 = V0``)."""
    spec.validate()
    w = _rng(spec.seed, _STREAM_WEIGHTS).standard_normal((spec.d_out, spec.d_in))
    w /= np.sqrt(spec.d_in)
    memory = AssociativeMemory(w)

    rng = _rng(spec.seed, _STREAM_PRESERVED)
    z = rng.standard_normal((spec.effective_rank, spec.preserved_count))
    keys = key_basis(spec) @ z
    if spec.key_noise > 0:
        keys = keys + spec.key_noise * rng.standard_normal(keys.shape)
    return memory, KnowledgeSet(keys, memory.weights @ keys)


def generate_edit_batch(
    spec_ref: SyntheticSpec, memory: AssociativeMemory, batch_size: int, seed: int
) -> KnowledgeSet:
    """Draw ``batch_size`` new associations that ``memory`` does not yet hold.

    Each target value is a random direction rescaled to ``||W k||`` for its
    key, so the edit residual has the same magnitude as the stored outputs.
    """
    if batch_size < 0:
        raise ConfigError("must be >= 0", "batch_size")
    d_in, d_out = memory.d_in, memory.d_out
    if batch_size == 0:
        return KnowledgeSet.empty(d_in, d_out)
    if d_in != spec_ref.d_in:
        raise DimensionError(f"memory d_in={d_in} but spec d_in={spec_ref.d_in}")

    rng = _rng(spec_ref.seed, _STREAM_EDITS, seed)
    z = rng.standard_normal((spec_ref.effective_rank, batch_size))
    keys = key_basis(spec_ref) @ z
    if spec_ref.key_noise > 0:
        keys = keys + spec_ref.key_noise * rng.standard_normal(keys.shape)
    if spec_ref.edit_key_noise > 0:
        keys = keys + spec_ref.edit_key_noise * rng.standard_normal(keys.shape)

    directions = rng.standard_normal((d_out, batch_size))
    directions /= np.linalg.norm(directions, axis=0, keepdims=True)
    magnitudes = np.linalg.norm(memory.weights @ keys, axis=0)
    return KnowledgeSet(keys, directions * magnitudes)


def stored_error(memory: AssociativeMemory, knowledge: KnowledgeSet) -> float:
    """Relative recall error ``||W K - V||_F / ||V||_F`` (0 for an empty set)."""
    if knowledge.count == 0:
        return 0.0
    den = frobenius_norm(knowledge.values)
    num = frobenius_norm(memory.weights @ knowledge.keys - knowledge.values)
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den
