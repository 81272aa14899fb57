"""Shared-type invariants: construction checks, immutability, identities."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdtwin import (
    Burst,
    BurstDataset,
    ConfigurationError,
    FlowMapModel,
    FourierSeries,
    Trajectory,
    burst_length,
    validate_dataset,
)
from tdtwin.core import explicit_params, field_names, qoi_vector


def make_burst(length=4, qoi_dim=2, param_dim=0, fill=1.0):
    entries = np.full((length, qoi_dim), fill)
    return Burst(entries=entries, params=np.zeros(param_dim))


def make_dataset(n=3, memory_steps=1, rollout_steps=2, qoi_dim=2):
    length = burst_length(memory_steps, rollout_steps)
    bursts = tuple(make_burst(length, qoi_dim, 0, fill=float(i)) for i in range(n))
    return BurstDataset(
        qoi_dim=qoi_dim,
        param_dim=0,
        memory_steps=memory_steps,
        rollout_steps=rollout_steps,
        dt=0.1,
        bursts=bursts,
    )


def test_burst_length_examples():
    assert burst_length(49, 10) == 60
    assert burst_length(19, 5) == 25
    assert burst_length(0, 1) == 2


@given(st.integers(0, 500), st.integers(1, 500))
def test_burst_length_counts_window_plus_rollout(m, r):
    assert burst_length(m, r) == m + 1 + r


def test_burst_length_rejects_bad_counts():
    with pytest.raises(ConfigurationError):
        burst_length(-1, 1)
    with pytest.raises(ConfigurationError):
        burst_length(0, 0)


def test_qoi_vector_validates():
    v = qoi_vector([1.0, 2.0])
    assert v.dtype == np.float64 and not v.flags.writeable
    with pytest.raises(ConfigurationError):
        qoi_vector([[1.0]])
    with pytest.raises(ConfigurationError):
        qoi_vector([np.nan])


def test_explicit_params_may_be_empty():
    assert explicit_params().shape == (0,)
    with pytest.raises(ConfigurationError):
        explicit_params([np.inf])


def test_trajectory_shape_and_immutability():
    q = np.arange(6.0).reshape(3, 2)
    traj = Trajectory(dt=0.1, qois=q, params=())
    assert len(traj) == 3 and traj.qoi_dim == 2 and traj.param_dim == 0
    with pytest.raises(ValueError):
        traj.qois[0, 0] = 9.0
    # the stored array is a copy, not a view of the input
    q[0, 0] = 99.0
    assert traj.qois[0, 0] == 0.0


def test_trajectory_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        Trajectory(dt=0.0, qois=np.ones((2, 1)), params=())
    with pytest.raises(ConfigurationError):
        Trajectory(dt=0.1, qois=np.ones(3), params=())
    with pytest.raises(ConfigurationError):
        Trajectory(dt=0.1, qois=np.array([[1.0], [np.nan]]), params=())


def test_trajectory_equality_is_by_value():
    a = Trajectory(dt=0.1, qois=np.ones((2, 1)), params=(3.0,))
    b = Trajectory(dt=0.1, qois=np.ones((2, 1)), params=(3.0,))
    c = Trajectory(dt=0.1, qois=np.ones((2, 1)), params=(4.0,))
    assert a == b and a != c


def test_burst_rejects_non_finite():
    with pytest.raises(ConfigurationError):
        Burst(entries=np.array([[1.0], [np.nan]]), params=())


def test_dataset_stacked_shapes():
    ds = make_dataset(n=4, memory_steps=2, rollout_steps=3, qoi_dim=2)
    entries, params = ds.stacked()
    assert entries.shape == (4, 6, 2)
    assert params.shape == (4, 0)
    assert ds.n_data == 4 and ds.burst_len == 6


def test_dataset_requires_burst_instances():
    with pytest.raises(ConfigurationError):
        BurstDataset(
            qoi_dim=1,
            param_dim=0,
            memory_steps=0,
            rollout_steps=1,
            dt=0.1,
            bursts=(np.zeros((2, 1)),),
        )


def test_validate_dataset_reports_every_violation():
    good = make_burst(length=4, qoi_dim=2)
    short = make_burst(length=3, qoi_dim=2)
    wide = make_burst(length=4, qoi_dim=3)
    ds = BurstDataset(
        qoi_dim=2,
        param_dim=0,
        memory_steps=1,
        rollout_steps=2,
        dt=0.1,
        bursts=(good, short, wide),
    )
    problems = validate_dataset(ds)
    assert len(problems) == 2
    assert any("burst 1" in p and "length" in p for p in problems)
    assert any("burst 2" in p and "qoi_dim" in p for p in problems)
    assert validate_dataset(make_dataset()) == []


def _toy_model(qoi_dim=1, param_dim=0, memory_steps=1, hidden=(3,)):
    widths = ((memory_steps + 1) * qoi_dim + param_dim, *hidden, qoi_dim)
    weights = tuple(
        np.zeros((widths[i + 1], widths[i])) for i in range(len(widths) - 1)
    )
    biases = tuple(np.zeros(widths[i + 1]) for i in range(len(widths) - 1))
    return FlowMapModel(
        qoi_dim=qoi_dim,
        param_dim=param_dim,
        memory_steps=memory_steps,
        layer_widths=widths,
        weights=weights,
        biases=biases,
        norm_mean=np.zeros(qoi_dim),
        norm_scale=np.ones(qoi_dim),
    )


def test_model_window_and_input_dims():
    m = _toy_model(qoi_dim=2, param_dim=1, memory_steps=3, hidden=(5,))
    assert m.window_len == 4
    assert m.input_dim == 4 * 2 + 1
    ps = m.parameters()
    assert len(ps) == 2 * len(m.weights)
    assert ps[0] is m.weights[0] and ps[1] is m.biases[0]


def test_model_rejects_inconsistent_widths():
    with pytest.raises(ConfigurationError):
        FlowMapModel(
            qoi_dim=1,
            param_dim=0,
            memory_steps=1,
            layer_widths=(3, 4, 1),
            weights=(np.zeros((4, 3)), np.zeros((1, 4))),
            biases=(np.zeros(4), np.zeros(1)),
            norm_mean=np.zeros(1),
            norm_scale=np.ones(1),
        )


def test_model_rejects_nonpositive_scale():
    with pytest.raises(ConfigurationError):
        FlowMapModel(
            qoi_dim=1,
            param_dim=0,
            memory_steps=0,
            layer_widths=(1, 2, 1),
            weights=(np.zeros((2, 1)), np.zeros((1, 2))),
            biases=(np.zeros(2), np.zeros(1)),
            norm_mean=np.zeros(1),
            norm_scale=np.zeros(1),
        )


@given(
    st.integers(0, 6).flatmap(
        lambda n: st.tuples(
            st.floats(-1e6, 1e6),
            st.lists(
                st.floats(-1e6, 1e6), min_size=n, max_size=n
            ),
            st.lists(
                st.floats(-1e6, 1e6), min_size=n, max_size=n
            ),
        )
    )
)
def test_fourier_series_coefficient_round_trip(parts):
    a0, a, b = parts
    s = FourierSeries(a0=a0, a=np.array(a), b=np.array(b))
    back = FourierSeries.from_coefficients(s.coefficients())
    assert back == s
    assert s.order == len(a)


def test_fourier_series_rejects_even_coefficient_count():
    with pytest.raises(ConfigurationError):
        FourierSeries.from_coefficients(np.zeros(4))
    with pytest.raises(ConfigurationError):
        FourierSeries(a0=0.0, a=np.zeros(2), b=np.zeros(3))


def test_field_names_lists_dataclass_fields():
    assert field_names(Trajectory) == ("dt", "qois", "params")
    assert "entries" in field_names(Burst)
