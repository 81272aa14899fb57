"""Shared domain types for targeted-digital-twin construction.

A targeted twin models only the quantities of interest (QoIs) of an
expensive simulator.  Everything downstream exchanges data through the
types defined here: QoI trajectories, training bursts sliced from them,
the learnable flow-map model, and truncated Fourier series used when the
QoI is a periodic surface quantity.

All types are immutable after construction (array payloads are marked
read-only) and therefore safe to share across concurrent readers.
Hidden simulator parameters are deliberately unrepresentable in
Trajectory/Burst: a trained model can only see their effect through the
QoI values themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "qoi_vector",
    "explicit_params",
    "Trajectory",
    "Burst",
    "BurstDataset",
    "FlowMapModel",
    "FourierSeries",
    "burst_length",
    "validate_dataset",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def qoi_vector(values) -> np.ndarray:
    """Validate one QoI state: a finite 1-D float64 vector."""
    v = _readonly(values)
    if v.ndim != 1:
        raise ConfigurationError(f"QoI vector must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("QoI vector contains non-finite entries")
    return v


def explicit_params(values=()) -> np.ndarray:
    """Validate an explicit-parameter vector; may be empty."""
    v = _readonly(values)
    if v.ndim != 1:
        raise ConfigurationError(f"parameter vector must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("parameter vector contains non-finite entries")
    return v


def burst_length(memory_steps: int, rollout_steps: int) -> int:
    """Length of one training burst: (memory_steps+1) current-and-past
    entries plus rollout_steps future entries supervised by the loss."""
    if memory_steps < 0 or rollout_steps < 1:
        raise ConfigurationError(
            f"need memory_steps >= 0 and rollout_steps >= 1, "
            f"got {memory_steps}, {rollout_steps}"
        )
    return memory_steps + 1 + rollout_steps


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulator run's recorded QoI time series.

    qois has shape (n_steps+1, qoi_dim): the initial state plus one row
    per recording step dt.  params holds the explicit parameters the run
    was tagged with (often empty).  Hidden simulator parameters have no
    field here on purpose.
    """

    dt: float
    qois: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be finite and > 0, got {self.dt}")
        q = np.array(self.qois, dtype=np.float64, copy=True)
        if q.ndim != 2 or q.shape[0] < 1 or q.shape[1] < 1:
            raise ConfigurationError(
                f"trajectory QoIs must be a (steps+1, qoi_dim) array, got shape {q.shape}"
            )
        if not np.all(np.isfinite(q)):
            raise ConfigurationError("trajectory contains non-finite QoI values")
        q.setflags(write=False)
        object.__setattr__(self, "qois", q)
        object.__setattr__(self, "params", explicit_params(self.params))

    @property
    def qoi_dim(self) -> int:
        return self.qois.shape[1]

    @property
    def param_dim(self) -> int:
        return self.params.shape[0]

    def __len__(self) -> int:
        return self.qois.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.dt == other.dt
            and np.array_equal(self.qois, other.qois)
            and np.array_equal(self.params, other.params)
        )


@dataclass(frozen=True, eq=False)
class Burst:
    """One training record: consecutive QoI entries copied from a
    trajectory, plus that trajectory's explicit parameters."""

    entries: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64, copy=True)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise ConfigurationError(
                f"burst entries must be a (length, qoi_dim) array, got shape {e.shape}"
            )
        if not np.all(np.isfinite(e)):
            raise ConfigurationError("burst contains non-finite QoI values")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "params", explicit_params(self.params))

    @property
    def qoi_dim(self) -> int:
        return self.entries.shape[1]

    def __len__(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Burst):
            return NotImplemented
        return np.array_equal(self.entries, other.entries) and np.array_equal(
            self.params, other.params
        )


@dataclass(frozen=True, eq=False)
class BurstDataset:
    """A training dataset of bursts with its declared dimensions.

    Construction checks only intrinsic sanity (counts, dt, finiteness of
    members); cross-record consistency is the job of validate_dataset,
    which reports violations as data instead of raising.
    """

    qoi_dim: int
    param_dim: int
    memory_steps: int
    rollout_steps: int
    dt: float
    bursts: tuple[Burst, ...]

    def __post_init__(self):
        if self.qoi_dim < 1 or self.param_dim < 0:
            raise ConfigurationError(
                f"need qoi_dim >= 1 and param_dim >= 0, "
                f"got {self.qoi_dim}, {self.param_dim}"
            )
        burst_length(self.memory_steps, self.rollout_steps)
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be finite and > 0, got {self.dt}")
        object.__setattr__(self, "bursts", tuple(self.bursts))
        for b in self.bursts:
            if not isinstance(b, Burst):
                raise ConfigurationError("bursts must contain Burst instances")

    @property
    def burst_len(self) -> int:
        return burst_length(self.memory_steps, self.rollout_steps)

    @property
    def n_data(self) -> int:
        return len(self.bursts)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All bursts as (n_data, burst_len, qoi_dim) and (n_data, param_dim)
        arrays, for vectorized training."""
        qois = np.stack([b.entries for b in self.bursts])
        params = np.stack([b.params for b in self.bursts])
        return qois, params

    def __eq__(self, other) -> bool:
        if not isinstance(other, BurstDataset):
            return NotImplemented
        return (
            self.qoi_dim == other.qoi_dim
            and self.param_dim == other.param_dim
            and self.memory_steps == other.memory_steps
            and self.rollout_steps == other.rollout_steps
            and self.dt == other.dt
            and self.bursts == other.bursts
        )


@dataclass(frozen=True, eq=False)
class FlowMapModel:
    """A fully connected flow map with memory.

    The net maps (memory_steps+1) consecutive QoI states, flattened
    oldest-first and followed by the explicit parameters, to the next
    QoI state.  Hidden layers are tanh, the output layer is linear.
    QoI values are shifted/scaled per component on the way in and
    inverted on the way out (norm_mean, norm_scale).
    """

    qoi_dim: int
    param_dim: int
    memory_steps: int
    layer_widths: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    norm_mean: np.ndarray
    norm_scale: np.ndarray

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ConfigurationError(f"bad layer widths {widths}")
        expect_in = (self.memory_steps + 1) * self.qoi_dim + self.param_dim
        if widths[0] != expect_in or widths[-1] != self.qoi_dim:
            raise ConfigurationError(
                f"layer widths {widths} do not match input {expect_in} "
                f"and output {self.qoi_dim}"
            )
        ws = tuple(_readonly(w) for w in self.weights)
        bs = tuple(_readonly(b) for b in self.biases)
        if len(ws) != len(widths) - 1 or len(bs) != len(widths) - 1:
            raise ConfigurationError("one weight matrix and bias per layer required")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (widths[i + 1], widths[i]) or b.shape != (widths[i + 1],):
                raise ConfigurationError(
                    f"layer {i}: weight shape {w.shape} / bias shape {b.shape} "
                    f"incompatible with widths {widths[i]}->{widths[i + 1]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"layer {i} has non-finite parameters")
        mean = _readonly(self.norm_mean)
        scale = _readonly(self.norm_scale)
        if mean.shape != (self.qoi_dim,) or scale.shape != (self.qoi_dim,):
            raise ConfigurationError("normalization vectors must have length qoi_dim")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale))):
            raise ConfigurationError("normalization vectors must be finite")
        if np.any(scale <= 0):
            raise ConfigurationError("normalization scale entries must be > 0")
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "norm_mean", mean)
        object.__setattr__(self, "norm_scale", scale)

    @property
    def window_len(self) -> int:
        return self.memory_steps + 1

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    def parameters(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] view of all trainable arrays."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlowMapModel):
            return NotImplemented
        return (
            self.qoi_dim == other.qoi_dim
            and self.param_dim == other.param_dim
            and self.memory_steps == other.memory_steps
            and self.layer_widths == other.layer_widths
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
            and np.array_equal(self.norm_mean, other.norm_mean)
            and np.array_equal(self.norm_scale, other.norm_scale)
        )


@dataclass(frozen=True, eq=False)
class FourierSeries:
    """Truncated Fourier series a0 + sum_n a_n cos(n t) + b_n sin(n t)."""

    a0: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.a0):
            raise ConfigurationError("a0 must be finite")
        a = _readonly(self.a)
        b = _readonly(self.b)
        if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
            raise ConfigurationError(
                f"cosine/sine coefficient vectors must be 1-D with equal length, "
                f"got {a.shape} and {b.shape}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ConfigurationError("Fourier coefficients must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def order(self) -> int:
        return self.a.shape[0]

    def coefficients(self) -> np.ndarray:
        """Coefficient vector (a0, a_1..a_N, b_1..b_N), length 2N+1."""
        return np.concatenate(([self.a0], self.a, self.b))

    @staticmethod
    def from_coefficients(values) -> "FourierSeries":
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] % 2 == 0:
            raise ConfigurationError(
                f"coefficient vector must be 1-D of odd length 2N+1, got shape {v.shape}"
            )
        n = (v.shape[0] - 1) // 2
        return FourierSeries(a0=float(v[0]), a=v[1 : n + 1], b=v[n + 1 :])

    def __eq__(self, other) -> bool:
        if not isinstance(other, FourierSeries):
            return NotImplemented
        return (
            self.a0 == other.a0
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )


def validate_dataset(d: BurstDataset) -> list[str]:
    """Check every dataset invariant; return one message per violation.

    An empty list means the dataset is consistent.  Violations are data,
    not errors: a loaded or hand-built dataset can be inspected without
    triggering exceptions.
    """
    problems: list[str] = []
    n_l = d.burst_len
    for i, b in enumerate(d.bursts):
        if len(b) != n_l:
            problems.append(
                f"burst {i}: length {len(b)} != required "
                f"{n_l} (= {d.memory_steps}+1+{d.rollout_steps})"
            )
        if b.qoi_dim != d.qoi_dim:
            problems.append(f"burst {i}: qoi_dim {b.qoi_dim} != dataset {d.qoi_dim}")
        if b.params.shape[0] != d.param_dim:
            problems.append(
                f"burst {i}: param_dim {b.params.shape[0]} != dataset {d.param_dim}"
            )
        if not np.all(np.isfinite(b.entries)):
            problems.append(f"burst {i}: non-finite QoI values")
    return problems


def field_names(cls) -> tuple[str, ...]:
    """Names of a core dataclass's fields (used by opacity checks)."""
    return tuple(f.name for f in fields(cls))
