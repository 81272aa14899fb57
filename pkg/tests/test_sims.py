"""Simulator correctness against closed-form dynamics.

The oscillator with hidden (sigma, omega, c) has an exact limit cycle of
radius sqrt(sigma) and angular rate omega - c*sigma, which gives the
integrator and recording pipeline an analytic oracle.  The relaxation
oscillator at mu=0 reduces to the unit-frequency harmonic oscillator.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdtwin import (
    ConfigurationError,
    DivergenceError,
    FullDtSpec,
    SimRun,
    run_full_dt,
)
from tdtwin.sims import (
    SYSTEM_IDS,
    default_hidden_ranges,
    default_init_ranges,
    rk4_step,
    system_info,
)


def sl_spec(**kw):
    kw.setdefault("hidden_param_ranges", ((0.3, 1.6), (0.8, 1.8), (-0.6, 0.6)))
    kw.setdefault("init_state_ranges", ((-2.0, 2.0), (-2.0, 2.0)))
    kw.setdefault("inner_dt", 0.02)
    kw.setdefault("record_every", 5)
    return FullDtSpec.for_system("stuart_landau", **kw)


def test_registry_contents():
    assert SYSTEM_IDS == ("lorenz63", "stuart_landau", "van_der_pol")
    info = system_info("stuart_landau")
    assert info["state_dim"] == 2 and info["qoi_dim"] == 2
    assert info["param_names"] == ("sigma", "omega", "c")
    assert system_info("van_der_pol")["qoi_dim"] == 1
    assert system_info("lorenz63")["state_dim"] == 3
    with pytest.raises(ConfigurationError):
        system_info("heat_equation")


def test_default_ranges_have_system_arity():
    for sid in SYSTEM_IDS:
        info = system_info(sid)
        assert len(default_hidden_ranges(sid)) == len(info["param_names"])
        assert len(default_init_ranges(sid)) == info["state_dim"]


def test_spec_dt_is_inner_dt_times_record_every():
    spec = sl_spec(inner_dt=0.02, record_every=5)
    assert spec.dt == pytest.approx(0.1)


def test_spec_rejects_wrong_range_arity():
    with pytest.raises(ConfigurationError):
        FullDtSpec.for_system("van_der_pol", hidden_param_ranges=((0.5, 2.0), (0.0, 1.0)))
    with pytest.raises(ConfigurationError):
        FullDtSpec.for_system("stuart_landau", init_state_ranges=((0.0, 1.0),))


def test_sim_run_validates_inputs():
    spec = sl_spec()
    with pytest.raises(ConfigurationError):
        SimRun(spec=spec, hidden_params=(1.0, 1.0), initial_state=(1.0, 1.0), n_step=5)
    with pytest.raises(ConfigurationError):
        SimRun(
            spec=spec,
            hidden_params=(1.0, 1.0, 0.0),
            initial_state=(5.0, 0.0),
            n_step=5,
        )
    with pytest.raises(ConfigurationError):
        SimRun(
            spec=spec, hidden_params=(1.0, 1.0, 0.0), initial_state=(1.0, 1.0), n_step=0
        )


def test_limit_cycle_radius_matches_sqrt_sigma():
    # after the transient decays, the recorded orbit sits on r = sqrt(sigma)
    spec = sl_spec()
    for sigma in (0.6, 1.0, 1.4):
        run = SimRun(
            spec=spec,
            hidden_params=(sigma, 1.2, 0.0),
            initial_state=(1.5, -0.7),
            n_step=600,
        )
        traj = run_full_dt(run)
        r = np.hypot(traj.qois[300:, 0], traj.qois[300:, 1])
        assert np.max(np.abs(r - np.sqrt(sigma))) < 1e-7


def test_rotation_rate_includes_shear_term():
    # angular rate on the cycle is omega - c*sigma, not omega itself
    spec = sl_spec()
    sigma, omega, c = 0.9, 1.3, 0.4
    run = SimRun(
        spec=spec,
        hidden_params=(sigma, omega, c),
        initial_state=(1.0, 0.5),
        n_step=800,
    )
    traj = run_full_dt(run)
    ang = np.unwrap(np.arctan2(traj.qois[400:, 1], traj.qois[400:, 0]))
    rate = np.polyfit(np.arange(ang.shape[0]) * spec.dt, ang, 1)[0]
    assert rate == pytest.approx(omega - c * sigma, abs=1e-7)


def test_harmonic_limit_of_relaxation_oscillator():
    # mu=0 turns the system into x'' = -x: x(t) = cos(t) for x0=(1,0)
    spec = FullDtSpec.for_system(
        "van_der_pol",
        hidden_param_ranges=((0.0, 0.0),),
        init_state_ranges=((1.0, 1.0), (0.0, 0.0)),
        inner_dt=0.01,
        record_every=10,
    )
    run = SimRun(spec=spec, hidden_params=(0.0,), initial_state=(1.0, 0.0), n_step=100)
    traj = run_full_dt(run)
    t = np.arange(101) * spec.dt
    assert traj.qois.shape == (101, 1)
    assert np.max(np.abs(traj.qois[:, 0] - np.cos(t))) < 1e-8


def test_rk4_step_is_fourth_order():
    # halving h must shrink the one-step error by about 2^5
    state = (12.0, 9.0, 31.0)
    p = (10.0, 28.0, 8.0 / 3.0)
    fine = state
    for _ in range(64):
        fine = rk4_step("lorenz63", p, fine, 0.01 / 64)
    err = []
    for h in (0.01, 0.005):
        coarse = state
        for _ in range(int(round(0.01 / h))):
            coarse = rk4_step("lorenz63", p, coarse, h)
        err.append(np.max(np.abs(np.asarray(coarse) - np.asarray(fine))))
    order = np.log2(err[0] / err[1])
    assert 3.7 < order < 5.2


def test_rk4_step_validates_and_detects_blowup():
    with pytest.raises(ConfigurationError):
        rk4_step("stuart_landau", (1.0, 1.0, 0.0), (1.0,), 0.1)
    with pytest.raises(ConfigurationError):
        rk4_step("stuart_landau", (1.0, 1.0), (1.0, 1.0), 0.1)
    with pytest.raises(DivergenceError):
        rk4_step("van_der_pol", (2.0,), (1e155, 1e155), 1.0)


def test_run_divergence_names_recording_step():
    spec = FullDtSpec.for_system(
        "van_der_pol",
        hidden_param_ranges=((0.0, 100.0),),
        init_state_ranges=((-10.0, 10.0), (-10.0, 10.0)),
        inner_dt=1.5,
        record_every=1,
    )
    run = SimRun(spec=spec, hidden_params=(80.0,), initial_state=(6.0, 6.0), n_step=40)
    with pytest.raises(DivergenceError, match="step"):
        run_full_dt(run)


def test_trajectory_layout_and_determinism():
    spec = sl_spec()
    run = SimRun(
        spec=spec, hidden_params=(1.0, 1.1, 0.1), initial_state=(0.4, 1.1), n_step=17
    )
    a = run_full_dt(run)
    b = run_full_dt(run)
    assert a == b
    assert len(a) == 18 and a.dt == pytest.approx(0.1)
    assert np.array_equal(a.qois[0], [0.4, 1.1])


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.5, 1.5),
    st.floats(0.9, 1.6),
    st.floats(-1.9, 1.9),
    st.floats(-1.9, 1.9),
)
def test_in_range_runs_stay_finite(sigma, omega, x0, y0):
    spec = sl_spec()
    run = SimRun(
        spec=spec,
        hidden_params=(sigma, omega, 0.0),
        initial_state=(x0, y0),
        n_step=20,
    )
    traj = run_full_dt(run)
    assert traj.qois.shape == (21, 2)
    assert np.all(np.isfinite(traj.qois))
