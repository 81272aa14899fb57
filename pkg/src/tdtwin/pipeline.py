"""Data machinery: randomized simulator campaigns, burst extraction, and
bit-exact persistence.

A campaign repeatedly executes the full simulator under hidden
parameters and initial conditions drawn uniformly from configured boxes,
keeps only the QoI trajectories, then slices each trajectory into short
training bursts at random start offsets.  Every random draw is derived
from one root seed through numpy's splittable SeedSequence: run j uses
spawn key (0, j), its burst offsets use (1, j).  Workers therefore
produce output identical to a sequential run, byte for byte.

File formats (little-endian throughout):

dataset  magic "FMLD", u32 version=1, u32 qoi_dim, u32 param_dim,
         u32 memory_steps, u32 rollout_steps, u64 n_data, f64 dt;
         then n_data records of burst_len*qoi_dim + param_dim f64.
traject. magic "FMLT", u32 version=1, u32 qoi_dim, u32 param_dim,
         u64 n_records, f64 dt; then per record a u64 entry count
         followed by count*qoi_dim f64 QoIs and param_dim f64 params.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .core import Burst, BurstDataset, Trajectory, burst_length
from .errors import ConfigurationError, DataError, DivergenceError
from .sims import FullDtSpec, SimRun, run_full_dt

__all__ = [
    "GenerationPlan",
    "sample_inputs",
    "generate_trajectories",
    "iter_trajectories",
    "extract_bursts",
    "extract_bursts_from",
    "save_dataset",
    "load_dataset",
    "save_trajectories",
    "load_trajectories",
    "TrajectoryFileWriter",
    "DatasetFileWriter",
    "read_json_config",
    "plan_from_config",
    "GENERATION_CONFIG_KEYS",
]

_DATASET_MAGIC = b"FMLD"
_TRAJ_MAGIC = b"FMLT"
_FORMAT_VERSION = 1
_DATASET_HEADER = struct.Struct("<4sIIIIIQd")
_TRAJ_HEADER = struct.Struct("<4sIIIQd")
_U64 = struct.Struct("<Q")


@dataclass(frozen=True)
class GenerationPlan:
    """One fully specified data-generation campaign."""

    sim: FullDtSpec
    num_sims: int
    num_steps: int
    memory_steps: int
    rollout_steps: int
    bursts_per_traj: int
    seed: int

    def __post_init__(self):
        if self.num_sims < 1:
            raise ConfigurationError(f"num_sims must be >= 1, got {self.num_sims}")
        n_l = burst_length(self.memory_steps, self.rollout_steps)
        if self.num_steps < self.memory_steps + 2:
            raise ConfigurationError(
                f"num_steps must be >= memory_steps+2, got {self.num_steps}"
            )
        if self.num_steps + 1 < n_l:
            raise ConfigurationError(
                f"trajectories of {self.num_steps + 1} entries cannot hold "
                f"one burst of length {n_l}"
            )
        if self.bursts_per_traj < 1:
            raise ConfigurationError(
                f"bursts_per_traj must be >= 1, got {self.bursts_per_traj}"
            )
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError(f"seed must be a u64, got {self.seed}")

    @property
    def burst_len(self) -> int:
        return burst_length(self.memory_steps, self.rollout_steps)

    @property
    def windows_per_traj(self) -> int:
        """Number of valid burst start offsets per trajectory."""
        return self.num_steps + 2 - self.burst_len

    @property
    def n_data(self) -> int:
        return self.bursts_per_traj * self.num_sims


def _run_inputs(plan: GenerationPlan, j: int) -> SimRun:
    rng = np.random.default_rng(np.random.SeedSequence(plan.seed, spawn_key=(0, j)))
    hidden = tuple(rng.uniform(lo, hi) for lo, hi in plan.sim.hidden_param_ranges)
    init = tuple(rng.uniform(lo, hi) for lo, hi in plan.sim.init_state_ranges)
    return SimRun(
        spec=plan.sim,
        hidden_params=hidden,
        initial_state=init,
        n_step=plan.num_steps,
    )


def sample_inputs(plan: GenerationPlan) -> list[SimRun]:
    """Draw all num_sims run inputs i.i.d. uniform over the configured
    boxes.  Run j depends only on (seed, j), so the sequence is
    reproducible and order-independent."""
    return [_run_inputs(plan, j) for j in range(plan.num_sims)]


def iter_trajectories(plan: GenerationPlan, workers: int | None = None) -> Iterator[Trajectory]:
    """Yield the campaign's trajectories in plan order.

    With workers > 1 the runs fan out across processes; results are still
    committed in plan order, so output is identical to sequential runs.
    A blown-up integration aborts with the failing run index and its
    reproducible inputs.
    """
    runs = sample_inputs(plan)
    if workers is not None and workers > 1 and plan.num_sims > 1:
        chunk = max(1, plan.num_sims // (workers * 8))
        with multiprocessing.Pool(processes=workers) as pool:
            results = pool.imap(run_full_dt, runs, chunksize=chunk)
            yield from _reraise_with_run(results, runs)
    else:
        yield from _reraise_with_run(map(run_full_dt, runs), runs)


def _reraise_with_run(results, runs) -> Iterator[Trajectory]:
    it = iter(results)
    for j, run in enumerate(runs):
        try:
            yield next(it)
        except DivergenceError as e:
            raise DivergenceError(
                f"run {j} diverged: {e}; inputs hidden_params={run.hidden_params}, "
                f"initial_state={run.initial_state}"
            ) from e


def generate_trajectories(plan: GenerationPlan, workers: int | None = None) -> list[Trajectory]:
    """All trajectories of the campaign, in plan order."""
    return list(iter_trajectories(plan, workers=workers))


def _burst_starts(count: int, n_bursts: int, seed: int, j: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, j)))
    starts = rng.choice(count, size=n_bursts, replace=False)
    starts.sort()
    return starts


def extract_bursts_from(
    trajectory: Trajectory,
    index: int,
    memory_steps: int,
    rollout_steps: int,
    bursts_per_traj: int,
    seed: int,
) -> list[Burst]:
    """Slice one trajectory into bursts at deterministic random offsets.

    Start offsets are drawn uniformly without replacement from the valid
    window positions {0, ..., len-burst_len}; each burst copies
    burst_len consecutive entries verbatim together with the
    trajectory's explicit parameters.
    """
    n_l = burst_length(memory_steps, rollout_steps)
    count = len(trajectory) - n_l + 1
    if count < 1:
        raise DataError(
            f"trajectory {index}: {len(trajectory)} entries cannot hold "
            f"a burst of length {n_l}"
        )
    if bursts_per_traj > count:
        raise DataError(
            f"trajectory {index}: requested {bursts_per_traj} bursts but only "
            f"{count} distinct windows of length {n_l} exist"
        )
    starts = _burst_starts(count, bursts_per_traj, seed, index)
    return [
        Burst(entries=trajectory.qois[s : s + n_l], params=trajectory.params)
        for s in starts
    ]


def extract_bursts(
    trajectories: Iterable[Trajectory],
    memory_steps: int,
    rollout_steps: int,
    bursts_per_traj: int,
    seed: int,
) -> BurstDataset:
    """Assemble the training dataset: bursts_per_traj bursts from each
    trajectory, n_data = bursts_per_traj * num_sims in total."""
    bursts: list[Burst] = []
    dims: tuple[int, int, float] | None = None
    for j, traj in enumerate(trajectories):
        if dims is None:
            dims = (traj.qoi_dim, traj.param_dim, traj.dt)
        elif (traj.qoi_dim, traj.param_dim, traj.dt) != dims:
            raise DataError(
                f"trajectory {j}: dims/dt {(traj.qoi_dim, traj.param_dim, traj.dt)} "
                f"differ from first trajectory {dims}"
            )
        bursts.extend(
            extract_bursts_from(
                traj, j, memory_steps, rollout_steps, bursts_per_traj, seed
            )
        )
    if dims is None:
        raise DataError("no trajectories to extract bursts from")
    return BurstDataset(
        qoi_dim=dims[0],
        param_dim=dims[1],
        memory_steps=memory_steps,
        rollout_steps=rollout_steps,
        dt=dims[2],
        bursts=tuple(bursts),
    )


def _f64_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _read_exact(f, n: int, what: str, path) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(
            f"{path}: truncated file: needed {n} bytes for {what}, found {len(buf)}"
        )
    return buf


class DatasetFileWriter:
    """Streams burst records to a dataset file, one or many at a time.

    The record count is patched into the header on close, so writers can
    emit records as they are produced without knowing the total.
    """

    def __init__(self, path, qoi_dim, param_dim, memory_steps, rollout_steps, dt):
        burst_length(memory_steps, rollout_steps)
        self.path = path
        self.qoi_dim = int(qoi_dim)
        self.param_dim = int(param_dim)
        self.memory_steps = int(memory_steps)
        self.rollout_steps = int(rollout_steps)
        self.dt = float(dt)
        self.n_written = 0
        self._f = open(path, "wb")
        self._f.write(self._header(0))

    def _header(self, n_data: int) -> bytes:
        return _DATASET_HEADER.pack(
            _DATASET_MAGIC,
            _FORMAT_VERSION,
            self.qoi_dim,
            self.param_dim,
            self.memory_steps,
            self.rollout_steps,
            n_data,
            self.dt,
        )

    def write(self, burst: Burst) -> None:
        n_l = burst_length(self.memory_steps, self.rollout_steps)
        if len(burst) != n_l or burst.qoi_dim != self.qoi_dim:
            raise DataError(
                f"burst shape {burst.entries.shape} incompatible with "
                f"dataset ({n_l}, {self.qoi_dim})"
            )
        if burst.params.shape[0] != self.param_dim:
            raise DataError(
                f"burst has {burst.params.shape[0]} params, dataset declares "
                f"{self.param_dim}"
            )
        self._f.write(_f64_bytes(burst.entries))
        self._f.write(_f64_bytes(burst.params))
        self.n_written += 1

    def close(self) -> None:
        if self._f.closed:
            return
        self._f.seek(0)
        self._f.write(self._header(self.n_written))
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def save_dataset(dataset: BurstDataset, path) -> None:
    """Write a dataset file; save/load round trips are bit-exact."""
    with DatasetFileWriter(
        path,
        dataset.qoi_dim,
        dataset.param_dim,
        dataset.memory_steps,
        dataset.rollout_steps,
        dataset.dt,
    ) as w:
        for b in dataset.bursts:
            w.write(b)


def load_dataset(path) -> BurstDataset:
    """Read a dataset file, with a distinct diagnostic per failure mode:
    magic mismatch, version mismatch, truncation, size inconsistency,
    and corrupt record payloads."""
    with open(path, "rb") as f:
        head = _read_exact(f, _DATASET_HEADER.size, "dataset header", path)
        magic, version, n_v, n_p, n_m, n_r, n_data, dt = _DATASET_HEADER.unpack(head)
        if magic != _DATASET_MAGIC:
            raise DataError(
                f"{path}: magic mismatch: got {magic!r}, expected {_DATASET_MAGIC!r}"
            )
        if version != _FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported dataset format version {version} "
                f"(supported: {_FORMAT_VERSION})"
            )
        if n_v < 1 or n_m < 0 or n_r < 1:
            raise DataError(f"{path}: nonsensical header dims n_V={n_v}, n_M={n_m}, n_R={n_r}")
        n_l = burst_length(n_m, n_r)
        rec_vals = n_l * n_v + n_p
        expected = n_data * rec_vals * 8
        payload = f.read()
    if len(payload) < expected:
        raise DataError(
            f"{path}: truncated file: header declares {n_data} records "
            f"({expected} bytes), found {len(payload)}"
        )
    if len(payload) > expected:
        raise DataError(
            f"{path}: size inconsistency: {len(payload) - expected} trailing bytes "
            f"beyond the {n_data} declared records"
        )
    table = np.frombuffer(payload, dtype="<f8").reshape(n_data, rec_vals)
    bursts = []
    for i in range(n_data):
        try:
            bursts.append(
                Burst(
                    entries=table[i, : n_l * n_v].reshape(n_l, n_v),
                    params=table[i, n_l * n_v :],
                )
            )
        except ConfigurationError as e:
            raise DataError(f"{path}: record {i} is corrupt: {e}") from e
    return BurstDataset(
        qoi_dim=n_v,
        param_dim=n_p,
        memory_steps=n_m,
        rollout_steps=n_r,
        dt=dt,
        bursts=tuple(bursts),
    )


class TrajectoryFileWriter:
    """Streams trajectories to disk as they are generated, so large
    campaigns never hold the whole set in memory."""

    def __init__(self, path, qoi_dim, param_dim, dt):
        self.path = path
        self.qoi_dim = int(qoi_dim)
        self.param_dim = int(param_dim)
        self.dt = float(dt)
        self.n_written = 0
        self._f = open(path, "wb")
        self._f.write(self._header(0))

    def _header(self, n_records: int) -> bytes:
        return _TRAJ_HEADER.pack(
            _TRAJ_MAGIC,
            _FORMAT_VERSION,
            self.qoi_dim,
            self.param_dim,
            n_records,
            self.dt,
        )

    def write(self, traj: Trajectory) -> None:
        if traj.qoi_dim != self.qoi_dim or traj.param_dim != self.param_dim:
            raise DataError(
                f"trajectory dims ({traj.qoi_dim}, {traj.param_dim}) incompatible "
                f"with file ({self.qoi_dim}, {self.param_dim})"
            )
        if traj.dt != self.dt:
            raise DataError(f"trajectory dt {traj.dt} != file dt {self.dt}")
        self._f.write(_U64.pack(len(traj)))
        self._f.write(_f64_bytes(traj.qois))
        self._f.write(_f64_bytes(traj.params))
        self.n_written += 1

    def close(self) -> None:
        if self._f.closed:
            return
        self._f.seek(0)
        self._f.write(self._header(self.n_written))
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def save_trajectories(trajectories: Iterable[Trajectory], path) -> None:
    it = iter(trajectories)
    try:
        first = next(it)
    except StopIteration:
        raise DataError("no trajectories to save") from None
    with TrajectoryFileWriter(path, first.qoi_dim, first.param_dim, first.dt) as w:
        w.write(first)
        for traj in it:
            w.write(traj)


def load_trajectories(path) -> list[Trajectory]:
    with open(path, "rb") as f:
        head = _read_exact(f, _TRAJ_HEADER.size, "trajectory header", path)
        magic, version, n_v, n_p, n_records, dt = _TRAJ_HEADER.unpack(head)
        if magic != _TRAJ_MAGIC:
            raise DataError(
                f"{path}: magic mismatch: got {magic!r}, expected {_TRAJ_MAGIC!r}"
            )
        if version != _FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported trajectory format version {version} "
                f"(supported: {_FORMAT_VERSION})"
            )
        if n_v < 1:
            raise DataError(f"{path}: nonsensical header dim n_V={n_v}")
        out = []
        for i in range(n_records):
            (count,) = _U64.unpack(_read_exact(f, 8, f"record {i} entry count", path))
            if count < 1:
                raise DataError(f"{path}: record {i} declares {count} entries")
            body = _read_exact(f, (count * n_v + n_p) * 8, f"record {i} payload", path)
            vals = np.frombuffer(body, dtype="<f8")
            try:
                out.append(
                    Trajectory(
                        dt=dt,
                        qois=vals[: count * n_v].reshape(count, n_v),
                        params=vals[count * n_v :],
                    )
                )
            except ConfigurationError as e:
                raise DataError(f"{path}: record {i} is corrupt: {e}") from e
        trailing = f.read(1)
    if trailing:
        raise DataError(
            f"{path}: size inconsistency: trailing bytes beyond the "
            f"{n_records} declared records"
        )
    return out


GENERATION_CONFIG_KEYS = (
    "system",
    "ranges",
    "N_sim",
    "N_step",
    "n_M",
    "n_R",
    "n_B",
    "dt",
    "inner_dt",
    "seed",
)
_RANGE_KEYS = ("hidden", "init")


def read_json_config(path) -> dict:
    """Load a JSON config document; parse errors become config errors."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    return doc


def _as_int(problems, doc, key, minimum=None):
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        problems.append(f"{key}: expected an integer, got {v!r}")
        return None
    if minimum is not None and v < minimum:
        problems.append(f"{key}: must be >= {minimum}, got {v}")
        return None
    return v


def _as_number(problems, doc, key):
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{key}: expected a number, got {v!r}")
        return None
    if not np.isfinite(v) or v <= 0:
        problems.append(f"{key}: must be finite and > 0, got {v}")
        return None
    return float(v)


def _parse_ranges(problems, doc):
    ranges = doc.get("ranges")
    if ranges is None:
        return None, None
    if not isinstance(ranges, dict):
        problems.append(f"ranges: expected an object, got {ranges!r}")
        return None, None
    unknown = sorted(set(ranges) - set(_RANGE_KEYS))
    if unknown:
        problems.append(
            f"ranges: unknown keys {', '.join(unknown)} (allowed: hidden, init)"
        )
    out = {}
    for key in _RANGE_KEYS:
        if key not in ranges:
            out[key] = None
            continue
        val = ranges[key]
        ok = isinstance(val, list) and all(
            isinstance(r, list)
            and len(r) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in r)
            for r in val
        )
        if not ok:
            problems.append(f"ranges.{key}: expected a list of [lo, hi] pairs")
            out[key] = None
        else:
            out[key] = tuple((float(lo), float(hi)) for lo, hi in val)
    return out["hidden"], out["init"]


def plan_from_config(doc: dict) -> GenerationPlan:
    """Build a GenerationPlan from a config document with the strict key
    schema: system, ranges, N_sim, N_step, n_M, n_R, n_B, dt, inner_dt,
    seed.  Unknown keys are rejected; all schema violations are listed
    in one error before aborting."""
    problems: list[str] = []
    unknown = sorted(set(doc) - set(GENERATION_CONFIG_KEYS))
    if unknown:
        problems.append(
            f"unknown config keys: {', '.join(unknown)} "
            f"(allowed: {', '.join(GENERATION_CONFIG_KEYS)})"
        )
    system = doc.get("system")
    if not isinstance(system, str):
        problems.append(f"system: expected a system name string, got {system!r}")
    n_sim = _as_int(problems, doc, "N_sim", minimum=1)
    n_step = _as_int(problems, doc, "N_step", minimum=1)
    n_m = _as_int(problems, doc, "n_M", minimum=0)
    n_r = _as_int(problems, doc, "n_R", minimum=1)
    n_b = _as_int(problems, doc, "n_B", minimum=1)
    dt = _as_number(problems, doc, "dt")
    if "inner_dt" in doc:
        inner_dt = _as_number(problems, doc, "inner_dt")
    elif dt is not None:
        inner_dt = dt / 10.0
    else:
        inner_dt = None
    seed = doc.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append(f"seed: expected a u64 integer, got {seed!r}")
        seed = None
    hidden_ranges, init_ranges = _parse_ranges(problems, doc)

    record_every = None
    if dt is not None and inner_dt is not None:
        ratio = dt / inner_dt
        record_every = int(round(ratio))
        if record_every < 1 or abs(record_every * inner_dt - dt) > 1e-9 * dt:
            problems.append(
                f"dt ({dt}) must be an integer multiple of inner_dt ({inner_dt})"
            )
            record_every = None
    if problems:
        raise ConfigurationError(
            "invalid generation config:\n  " + "\n  ".join(problems)
        )
    spec = FullDtSpec.for_system(
        system,
        hidden_param_ranges=hidden_ranges,
        init_state_ranges=init_ranges,
        inner_dt=inner_dt,
        record_every=record_every,
    )
    return GenerationPlan(
        sim=spec,
        num_sims=n_sim,
        num_steps=n_step,
        memory_steps=n_m,
        rollout_steps=n_r,
        bursts_per_traj=n_b,
        seed=seed,
    )
