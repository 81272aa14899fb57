"""Pluggable full-simulator harness with built-in desk-scale systems.

The data pipeline treats the expensive forward model as a black box that
is run many times under randomized hidden parameters and initial
conditions, recording only the QoI time series.  Three ODE systems with
that structure ship built in:

stuart_landau   dA/dt = (sigma + i*omega) A - (1 + i*c) |A|^2 A,
                state (Re A, Im A), QoI = full state.  Canonical
                wake-oscillator normal form: a stable limit cycle of
                radius sqrt(sigma) and angular frequency omega - c*sigma,
                so the recorded pair behaves like a drag/lift signal.
van_der_pol     x'' - mu (1 - x^2) x' + x = 0, state (x, x'),
                QoI = (x,) only.  The partial observation makes memory
                genuinely necessary for a surrogate.
lorenz63        classic (sigma, rho, beta) system, QoI = (x,) only.
                Chaotic stress test.

Hidden parameters are consumed inside run_full_dt and never appear in
the returned Trajectory.  Integration is classical explicit RK4 with a
fixed inner step; QoIs are recorded every record_every inner steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Trajectory, explicit_params
from .errors import ConfigurationError, DivergenceError

__all__ = [
    "SYSTEM_IDS",
    "system_info",
    "default_hidden_ranges",
    "default_init_ranges",
    "FullDtSpec",
    "SimRun",
    "rk4_step",
    "run_full_dt",
]


def _stuart_landau_rhs(s, p):
    x, y = s
    sigma, omega, c = p
    r2 = x * x + y * y
    return (
        sigma * x - omega * y - r2 * (x - c * y),
        sigma * y + omega * x - r2 * (y + c * x),
    )


def _van_der_pol_rhs(s, p):
    x, v = s
    (mu,) = p
    return (v, mu * (1.0 - x * x) * v - x)


def _lorenz63_rhs(s, p):
    x, y, z = s
    sigma, rho, beta = p
    return (sigma * (y - x), x * (rho - z) - y, x * y - beta * z)


def _identity_qoi(s):
    return s


def _first_component_qoi(s):
    return (s[0],)


@dataclass(frozen=True)
class _System:
    state_dim: int
    qoi_dim: int
    param_names: tuple[str, ...]
    rhs: callable
    qoi: callable


_SYSTEMS = {
    "stuart_landau": _System(2, 2, ("sigma", "omega", "c"), _stuart_landau_rhs, _identity_qoi),
    "van_der_pol": _System(2, 1, ("mu",), _van_der_pol_rhs, _first_component_qoi),
    "lorenz63": _System(3, 1, ("sigma", "rho", "beta"), _lorenz63_rhs, _first_component_qoi),
}

SYSTEM_IDS = tuple(sorted(_SYSTEMS))

# Default sampling boxes.  Initial-state boxes sit off the attractor on
# purpose: every run then opens with a transient, the analog of an
# impulsively started flow.
_DEFAULT_HIDDEN = {
    "stuart_landau": ((0.5, 1.5), (2 * math.pi * 0.15, 2 * math.pi * 0.25), (0.0, 0.0)),
    "van_der_pol": ((0.5, 2.0),),
    "lorenz63": ((9.0, 11.0), (24.0, 32.0), (2.0, 3.0)),
}
_DEFAULT_INIT = {
    "stuart_landau": ((1.5, 2.5), (1.5, 2.5)),
    "van_der_pol": ((2.5, 3.5), (-0.5, 0.5)),
    "lorenz63": ((20.0, 30.0), (20.0, 30.0), (30.0, 40.0)),
}


def _get_system(system_id: str) -> _System:
    try:
        return _SYSTEMS[system_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown system {system_id!r}; available: {', '.join(SYSTEM_IDS)}"
        ) from None


def system_info(system_id: str) -> dict:
    """Dimensions and hidden-parameter names of a built-in system."""
    s = _get_system(system_id)
    return {
        "state_dim": s.state_dim,
        "qoi_dim": s.qoi_dim,
        "param_names": s.param_names,
    }


def default_hidden_ranges(system_id: str) -> tuple[tuple[float, float], ...]:
    _get_system(system_id)
    return _DEFAULT_HIDDEN[system_id]


def default_init_ranges(system_id: str) -> tuple[tuple[float, float], ...]:
    _get_system(system_id)
    return _DEFAULT_INIT[system_id]


def _check_ranges(name: str, ranges, expect_len: int) -> tuple[tuple[float, float], ...]:
    out = []
    for r in ranges:
        lo, hi = (float(r[0]), float(r[1]))
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise ConfigurationError(f"{name}: bad interval [{lo}, {hi}]")
        out.append((lo, hi))
    if len(out) != expect_len:
        raise ConfigurationError(
            f"{name}: expected {expect_len} intervals, got {len(out)}"
        )
    return tuple(out)


@dataclass(frozen=True)
class FullDtSpec:
    """Configuration of the full simulator used for data generation.

    record_every ties the QoI recording step dt to the integrator step:
    dt = record_every * inner_dt, an exact integer multiple.
    """

    system_id: str
    state_dim: int
    qoi_dim: int
    hidden_param_ranges: tuple[tuple[float, float], ...]
    init_state_ranges: tuple[tuple[float, float], ...]
    inner_dt: float
    record_every: int

    def __post_init__(self):
        sysdef = _get_system(self.system_id)
        if self.state_dim != sysdef.state_dim or self.qoi_dim != sysdef.qoi_dim:
            raise ConfigurationError(
                f"{self.system_id}: state_dim/qoi_dim must be "
                f"{sysdef.state_dim}/{sysdef.qoi_dim}, "
                f"got {self.state_dim}/{self.qoi_dim}"
            )
        object.__setattr__(
            self,
            "hidden_param_ranges",
            _check_ranges(
                "hidden_param_ranges", self.hidden_param_ranges, len(sysdef.param_names)
            ),
        )
        object.__setattr__(
            self,
            "init_state_ranges",
            _check_ranges("init_state_ranges", self.init_state_ranges, sysdef.state_dim),
        )
        if not (np.isfinite(self.inner_dt) and self.inner_dt > 0):
            raise ConfigurationError(f"inner_dt must be > 0, got {self.inner_dt}")
        if self.record_every < 1:
            raise ConfigurationError(f"record_every must be >= 1, got {self.record_every}")

    @classmethod
    def for_system(
        cls,
        system_id: str,
        hidden_param_ranges=None,
        init_state_ranges=None,
        inner_dt: float = 0.01,
        record_every: int = 10,
    ) -> "FullDtSpec":
        """Spec with dimensions filled in from the named system."""
        info = system_info(system_id)
        if hidden_param_ranges is None:
            hidden_param_ranges = default_hidden_ranges(system_id)
        if init_state_ranges is None:
            init_state_ranges = default_init_ranges(system_id)
        return cls(
            system_id=system_id,
            state_dim=info["state_dim"],
            qoi_dim=info["qoi_dim"],
            hidden_param_ranges=hidden_param_ranges,
            init_state_ranges=init_state_ranges,
            inner_dt=inner_dt,
            record_every=record_every,
        )

    @property
    def dt(self) -> float:
        """QoI recording step."""
        return self.record_every * self.inner_dt


def _in_box(values, ranges) -> bool:
    return all(lo <= v <= hi for v, (lo, hi) in zip(values, ranges))


@dataclass(frozen=True)
class SimRun:
    """One fully specified simulator execution.

    hidden_params are consumed by the integrator and never emitted;
    params (the explicit ones) are copied verbatim onto the output
    trajectory and default to empty.
    """

    spec: FullDtSpec
    hidden_params: tuple[float, ...]
    initial_state: tuple[float, ...]
    n_step: int
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_params", tuple(float(v) for v in self.hidden_params))
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if len(self.hidden_params) != len(self.spec.hidden_param_ranges):
            raise ConfigurationError(
                f"expected {len(self.spec.hidden_param_ranges)} hidden parameters, "
                f"got {len(self.hidden_params)}"
            )
        if len(self.initial_state) != self.spec.state_dim:
            raise ConfigurationError(
                f"expected state of dim {self.spec.state_dim}, "
                f"got {len(self.initial_state)}"
            )
        if not _in_box(self.hidden_params, self.spec.hidden_param_ranges):
            raise ConfigurationError(
                f"hidden parameters {self.hidden_params} outside declared ranges"
            )
        if not _in_box(self.initial_state, self.spec.init_state_ranges):
            raise ConfigurationError(
                f"initial state {self.initial_state} outside declared ranges"
            )
        if self.n_step < 1:
            raise ConfigurationError(f"n_step must be >= 1, got {self.n_step}")


def _rk4_kernel(rhs, s, p, h):
    k1 = rhs(s, p)
    k2 = rhs(tuple(si + 0.5 * h * ki for si, ki in zip(s, k1)), p)
    k3 = rhs(tuple(si + 0.5 * h * ki for si, ki in zip(s, k2)), p)
    k4 = rhs(tuple(si + h * ki for si, ki in zip(s, k3)), p)
    return tuple(
        si + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for si, a, b, c, d in zip(s, k1, k2, k3, k4)
    )


def rk4_step(system_id: str, hidden_params, state, dt: float) -> np.ndarray:
    """Advance a system state by one classical RK4 step of size dt."""
    sysdef = _get_system(system_id)
    s = tuple(float(v) for v in np.asarray(state, dtype=np.float64))
    if len(s) != sysdef.state_dim:
        raise ConfigurationError(
            f"{system_id}: state has dim {len(s)}, expected {sysdef.state_dim}"
        )
    p = tuple(float(v) for v in hidden_params)
    if len(p) != len(sysdef.param_names):
        raise ConfigurationError(
            f"{system_id}: expected {len(sysdef.param_names)} hidden parameters, "
            f"got {len(p)}"
        )
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    out = _rk4_kernel(sysdef.rhs, s, p, dt)
    if not all(math.isfinite(v) for v in out):
        raise DivergenceError(f"{system_id}: integration blew up within one step")
    return np.array(out, dtype=np.float64)


def run_full_dt(run: SimRun) -> Trajectory:
    """Integrate one run and return only its QoI time series.

    Advances n_step * record_every inner RK4 steps, evaluating the QoI
    extractor at the initial state and after every record_every-th inner
    step: n_step+1 recorded entries in total.  Pure and deterministic:
    identical runs produce bit-identical trajectories.
    """
    spec = run.spec
    sysdef = _get_system(spec.system_id)
    rhs, qoi = sysdef.rhs, sysdef.qoi
    h = spec.inner_dt
    p = run.hidden_params
    s = run.initial_state

    first = qoi(s)
    if len(first) != spec.qoi_dim:
        raise ConfigurationError(
            f"{spec.system_id}: QoI extractor returned dim {len(first)}, "
            f"expected {spec.qoi_dim}"
        )
    rows = np.empty((run.n_step + 1, spec.qoi_dim), dtype=np.float64)
    rows[0] = first
    for n in range(1, run.n_step + 1):
        for _ in range(spec.record_every):
            s = _rk4_kernel(rhs, s, p, h)
        if not all(math.isfinite(v) for v in s):
            raise DivergenceError(
                f"{spec.system_id}: integration blew up at recording step {n} "
                f"(inner step {n * spec.record_every})"
            )
        rows[n] = qoi(s)
    return Trajectory(dt=spec.dt, qois=rows, params=explicit_params(run.params))
