"""Online use of a trained flow map and validation instrumentation.

Prediction needs only a short initial window of QoI states (one memory
span) and the explicit parameters; the model then advances the QoI like
a multi-step time integrator for an arbitrary horizon.  Validation
compares such rollouts against full-simulator references via pointwise
errors, one-sided amplitude spectra with ranked peaks, and, for QoIs
that are truncated Fourier series of a periodic surface quantity, a
closed-form L2 error between series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import FlowMapModel, FourierSeries
from .errors import ConfigurationError, DataError
from .fml import rollout_k

__all__ = [
    "SpectrumResult",
    "predict_qoi",
    "fourier_eval",
    "fourier_fit",
    "spectrum",
    "pointwise_error",
    "l2_surface_error",
    "write_series_csv",
    "read_series_csv",
    "write_fourier_csv",
    "read_fourier_csv",
]

_PEAK_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class SpectrumResult:
    """One-sided amplitude spectrum with peaks ranked by amplitude.

    frequencies are in cycles per time unit, strictly increasing up to
    the Nyquist rate; ranked_peaks holds (frequency, amplitude) pairs of
    the strict local maxima, largest amplitude first.
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray
    ranked_peaks: tuple[tuple[float, float], ...]

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        a = np.asarray(self.amplitudes, dtype=np.float64)
        if f.ndim != 1 or f.shape != a.shape:
            raise ConfigurationError(
                f"frequencies/amplitudes must be equal-length vectors, "
                f"got {f.shape} and {a.shape}"
            )
        if np.any(np.diff(f) <= 0):
            raise ConfigurationError("frequencies must be strictly increasing")
        if np.any(a < 0):
            raise ConfigurationError("amplitudes must be nonnegative")
        peaks = tuple((float(pf), float(pa)) for pf, pa in self.ranked_peaks)
        amps = [pa for _, pa in peaks]
        if any(x < y for x, y in zip(amps, amps[1:])):
            raise ConfigurationError("ranked_peaks must be sorted by amplitude")
        f.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "ranked_peaks", peaks)


def predict_qoi(model: FlowMapModel, initial_window, params=(), horizon_steps: int = 1) -> np.ndarray:
    """Predict the QoI continuation for horizon_steps recording steps
    from a (memory_steps+1)-state initial window.

    Exactly the training-time rollout (shared implementation): the
    prediction depends only on the window values and explicit
    parameters, never on the hidden parameters that produced them.
    """
    if horizon_steps < 1:
        raise ConfigurationError(f"horizon_steps must be >= 1, got {horizon_steps}")
    return rollout_k(model, initial_window, params, k=horizon_steps)


def fourier_eval(series: FourierSeries, theta) -> np.ndarray | float:
    """Evaluate a0 + sum_n a_n cos(n theta) + b_n sin(n theta)."""
    th = np.asarray(theta, dtype=np.float64)
    n = np.arange(1, series.order + 1)
    ang = np.multiply.outer(th, n)
    out = series.a0 + np.cos(ang) @ series.a + np.sin(ang) @ series.b
    if th.ndim == 0:
        return float(out)
    return out


def fourier_fit(theta, values, order: int) -> FourierSeries:
    """Least-squares fit of a truncated Fourier series to samples
    (theta_i, value_i).

    Needs at least 2*order+1 samples at angles distinct enough for full
    rank; for equispaced angles over [0, 2pi) the result coincides with
    the discrete Fourier projection.
    """
    th = np.asarray(theta, dtype=np.float64).reshape(-1)
    val = np.asarray(values, dtype=np.float64).reshape(-1)
    if order < 0:
        raise ConfigurationError(f"order must be >= 0, got {order}")
    if th.shape != val.shape:
        raise DataError(
            f"theta/value sample counts differ: {th.shape[0]} vs {val.shape[0]}"
        )
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(val))):
        raise DataError("samples contain non-finite values")
    n_coef = 2 * order + 1
    if th.shape[0] < n_coef:
        raise DataError(
            f"need at least {n_coef} samples to fit order {order}, got {th.shape[0]}"
        )
    n = np.arange(1, order + 1)
    ang = np.multiply.outer(th, n)
    design = np.concatenate(
        [np.ones((th.shape[0], 1)), np.cos(ang), np.sin(ang)], axis=1
    )
    coef, _, rank, _ = np.linalg.lstsq(design, val, rcond=None)
    if rank < n_coef:
        raise DataError(
            f"rank-deficient fit: design rank {rank} < {n_coef} coefficients "
            f"(sample angles not distinct enough)"
        )
    return FourierSeries(
        a0=float(coef[0]), a=coef[1 : order + 1], b=coef[order + 1 :]
    )


def spectrum(signal, dt: float) -> SpectrumResult:
    """One-sided amplitude spectrum of a real signal.

    The mean is removed and a periodic Hann window applied before the
    transform, so nearly periodic signals that are not bin-aligned still
    produce stable, well-separated peaks.  Amplitudes are scaled so a
    unit-amplitude bin-aligned sinusoid reports 1.0 at its bin.  Peaks
    are strict local maxima above a tiny relative floor, ranked by
    amplitude (frequency breaks ties).
    """
    x = np.asarray(signal, dtype=np.float64).reshape(-1)
    if x.shape[0] < 16:
        raise DataError(f"need at least 16 samples for a spectrum, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise DataError("signal contains non-finite samples")
    if not (np.isfinite(dt) and dt > 0):
        raise ConfigurationError(f"dt must be finite and > 0, got {dt}")
    m = x.shape[0]
    x = x - x.mean()
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(m) / m)
    y = np.fft.rfft(x * window)
    freqs = np.fft.rfftfreq(m, d=dt)
    amps = np.abs(y) * (2.0 / window.sum())
    amps[0] *= 0.5
    if m % 2 == 0:
        amps[-1] *= 0.5
    floor = amps.max() * _PEAK_FLOOR_REL
    peaks = [
        (float(freqs[i]), float(amps[i]))
        for i in range(1, amps.shape[0] - 1)
        if amps[i] > amps[i - 1] and amps[i] > amps[i + 1] and amps[i] > floor
    ]
    peaks.sort(key=lambda p: (-p[1], p[0]))
    return SpectrumResult(
        frequencies=freqs, amplitudes=amps, ranked_peaks=tuple(peaks)
    )


def pointwise_error(pred, ref) -> np.ndarray:
    """Elementwise absolute error |pred - ref| between two QoI series."""
    p = np.asarray(pred, dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if p.shape != r.shape:
        raise DataError(f"series shapes differ: {p.shape} vs {r.shape}")
    return np.abs(p - r)


def l2_surface_error(pred: FourierSeries, ref: FourierSeries) -> float:
    """L2 distance over one period between two truncated Fourier series,
    sqrt(integral of (P_pred - P_ref)^2 over [-pi, pi]), via the closed
    form sqrt(2 pi da0^2 + pi sum(da_n^2 + db_n^2))."""
    if pred.order != ref.order:
        raise DataError(
            f"series order mismatch: {pred.order} vs {ref.order}"
        )
    da0 = pred.a0 - ref.a0
    da = pred.a - ref.a
    db = pred.b - ref.b
    return float(
        np.sqrt(2.0 * np.pi * da0 * da0 + np.pi * (np.sum(da * da) + np.sum(db * db)))
    )


def write_series_csv(path, t, values, names=None) -> None:
    """Write a time series as CSV: header t,<names>, one row per step.

    Floats are rendered with repr, the shortest exact round trip, so
    identical arrays always produce identical bytes.
    """
    tv = np.asarray(t, dtype=np.float64).reshape(-1)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape[0] != tv.shape[0]:
        raise DataError(
            f"time column has {tv.shape[0]} rows, values have {arr.shape[0]}"
        )
    if names is None:
        names = [f"q{i}" for i in range(arr.shape[1])]
    names = list(names)
    if len(names) != arr.shape[1]:
        raise DataError(f"{len(names)} names for {arr.shape[1]} components")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(",".join(["t"] + names) + "\n")
        for ti, row in zip(tv, arr):
            f.write(",".join([repr(float(ti))] + [repr(float(v)) for v in row]) + "\n")


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read a series CSV; returns (t, values (rows, components), names)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty CSV") from None
        if len(header) < 2 or header[0] != "t":
            raise DataError(
                f"{path}: expected header 't,<component names>', got {header!r}"
            )
        names = header[1:]
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as e:
                raise DataError(f"{path}: row {i + 2}: {e}") from e
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    return table[:, 0], table[:, 1:], names


def write_fourier_csv(path, series: FourierSeries) -> None:
    """Write a Fourier series as CSV rows term,value with terms
    a0, a1..aN, b1..bN."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("term,value\n")
        f.write(f"a0,{series.a0!r}\n")
        for i, v in enumerate(series.a, start=1):
            f.write(f"a{i},{float(v)!r}\n")
        for i, v in enumerate(series.b, start=1):
            f.write(f"b{i},{float(v)!r}\n")


def read_fourier_csv(path) -> FourierSeries:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["term", "value"]:
            raise DataError(
                f"{path}: expected header 'term,value', got {header!r}"
            )
        entries = {}
        for i, row in enumerate(reader):
            if len(row) != 2:
                raise DataError(f"{path}: row {i + 2} is not a term,value pair")
            term, value = row
            try:
                entries[term] = float(value)
            except ValueError as e:
                raise DataError(f"{path}: row {i + 2}: {e}") from e
    if "a0" not in entries:
        raise DataError(f"{path}: missing constant term a0")
    order = 0
    while f"a{order + 1}" in entries or f"b{order + 1}" in entries:
        order += 1
    expected = {"a0"}
    expected.update(f"a{n}" for n in range(1, order + 1))
    expected.update(f"b{n}" for n in range(1, order + 1))
    if set(entries) != expected:
        missing = sorted(expected - set(entries))
        extra = sorted(set(entries) - expected)
        raise DataError(
            f"{path}: inconsistent coefficient terms "
            f"(missing {missing}, unexpected {extra})"
        )
    return FourierSeries(
        a0=entries["a0"],
        a=np.array([entries[f"a{n}"] for n in range(1, order + 1)]),
        b=np.array([entries[f"b{n}"] for n in range(1, order + 1)]),
    )
