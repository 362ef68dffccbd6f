import math

import numpy as np
import pytest

from bohmtraj import _kernels
from bohmtraj.dynamics import (NodeSingularityError, TermCountError, TrajectorySpec,
                               conserved_series, integrate, relative_drift,
                               velocity_expanded, velocity_generic)
from bohmtraj.integrability import AxisTerm, ConservedQuantity
from bohmtraj.wavefunction import Superposition, amplitude, density

from conftest import FIG1_BLUE, FIG2_CHAOTIC, FIG2_T0, W3


def circle_quantity():
    return ConservedQuantity.build([AxisTerm.pair(0, 1, 1.0, 2.0), AxisTerm.pair(0, 1, 1.0, 2.0)], "r^2")


def random_points(psi, rng, count):
    x = rng.uniform(-2.0, 2.0, (count, psi.dim)) / psi.sqrt_omegas
    t = rng.uniform(0.1, 20.0, count)
    return x, t


def test_velocity_zero_at_t0(case_a, rng):
    x, _ = random_points(case_a, rng, 50)
    assert np.all(velocity_generic(case_a, x, 0.0) == 0.0)
    assert np.all(velocity_expanded(case_a, x, 0.0) == 0.0)


def test_velocity_is_phase_gradient(case_b, rng):
    # independent oracle: finite differences of arg(psi)
    h = 1e-6
    for x, t in zip(*random_points(case_b, rng, 20)):
        v = velocity_generic(case_b, x, t)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            ratio = amplitude(case_b, x + e, t) / amplitude(case_b, x - e, t)
            fd = np.angle(ratio) / (2 * h)
            assert fd == pytest.approx(v[i], rel=1e-6, abs=1e-6)


def test_expanded_matches_generic_at_fig2_point(case_b):
    x = np.array(FIG2_CHAOTIC)
    a = velocity_generic(case_b, x, FIG2_T0)
    b = velocity_expanded(case_b, x, FIG2_T0)
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_two_term_reduction_keeps_single_frequency(rng):
    # c = 0 leaves only the sin(dE_12 t) contribution
    full = Superposition.from_quanta(W3, [(1, 0, 0), (0, 1, 0), (0, 0, 2)], [0.6, 0.8, 0.0])
    assert len(full) == 2
    x, t = random_points(full, rng, 100)
    a = velocity_generic(full, x, t)
    de = full.energies[0] - full.energies[1]
    period = 2 * math.pi / abs(de)
    assert np.allclose(velocity_generic(full, x, t + period), a, rtol=1e-8, atol=1e-12)
    assert np.allclose(velocity_expanded(full, x, t), a, rtol=1e-10, atol=1e-14)


def test_term_count_error():
    psi = Superposition.from_quanta((1.0, 2.0), [(0, 0), (1, 0), (0, 1), (2, 0)])
    with pytest.raises(TermCountError):
        velocity_expanded(psi, np.zeros(2), 1.0)


def test_node_singularity():
    psi = Superposition.from_quanta((1.0, math.sqrt(2)), [(1, 0), (0, 1)])
    with pytest.raises(NodeSingularityError):
        velocity_generic(psi, np.zeros(2), 1.0)
    with pytest.raises(NodeSingularityError):
        velocity_generic(psi, np.array([0.5, 0.5]), 1.0, min_density=1.0)


def test_resonant_velocity_vanishes(rng):
    psi = Superposition.from_quanta((1, 1, 1), [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
    x, t = random_points(psi, rng, 1000)
    assert np.max(np.abs(velocity_generic(psi, x, t))) < 1e-13


def test_kernel_velocity_matches_numpy(case_c, rng):
    field = case_c.kernel_field()
    for x, t in zip(*random_points(case_c, rng, 20)):
        out = np.zeros(3)
        rho = _kernels.velocity_field(x.copy(), t, 1, field, out)
        assert np.allclose(out, velocity_generic(case_c, x, t), rtol=1e-12, atol=1e-14)
        assert rho == pytest.approx(density(case_c, x, t), rel=1e-12)


def test_spec_validation(case_a):
    with pytest.raises(ValueError):
        TrajectorySpec(case_a, (0.1, 0.2), t_end=1.0)
    with pytest.raises(ValueError):
        TrajectorySpec(case_a, FIG1_BLUE, t0=1.0, t_end=1.0)
    with pytest.raises(ValueError):
        TrajectorySpec(case_a, FIG1_BLUE, rel_tol=0.1)
    with pytest.raises(ValueError):
        TrajectorySpec(case_a, FIG1_BLUE, sample_interval=0.0)


def test_sample_times_cover_span(case_a):
    spec = TrajectorySpec(case_a, FIG1_BLUE, t0=1.0, t_end=2.005, sample_interval=0.01)
    t = spec.sample_times()
    assert t[0] == 1.0 and t[-1] == 2.005
    assert np.all(np.diff(t) > 0)


def test_circle_orbit():
    psi = Superposition.from_quanta((1.0, math.sqrt(2)), [(1, 0), (0, 1)])
    traj = integrate(TrajectorySpec(psi, (1.0, 0.0), t_end=100.0))
    assert traj.completed and traj.t[-1] == 100.0
    r2 = np.sum(traj.x ** 2, axis=1)
    assert np.max(np.abs(r2 - 1.0)) < 1e-8
    # the orbit does move
    assert np.ptp(traj.x[:, 0]) > 1.0
    series = conserved_series(traj, circle_quantity())
    assert series.max_drift < 1e-8


def test_nonzero_start_time_and_diagnostics(case_b):
    spec = TrajectorySpec(case_b, FIG2_CHAOTIC, t0=FIG2_T0, t_end=FIG2_T0 + 5.0)
    traj = integrate(spec)
    d = traj.diagnostics()
    assert traj.t[0] == FIG2_T0 and d["termination"] == "reached"
    assert d["accepted_steps"] > 0 and d["samples"] == traj.t.size
    assert np.all(np.diff(traj.t) > 0) and np.all(np.isfinite(traj.x))
    assert d["min_density"] >= spec.guard()


def test_time_reversal(case_a):
    fwd = integrate(TrajectorySpec(case_a, FIG1_BLUE, t0=1.0, t_end=11.0))
    back = integrate(TrajectorySpec(case_a, fwd.x[-1], t0=11.0, t_end=1.0))
    assert back.completed and np.all(np.diff(back.t) < 0)
    assert np.max(np.abs(back.x[-1] - np.array(FIG1_BLUE))) < 1e-11


def test_dense_output_matches_direct_stop(case_a):
    traj = integrate(TrajectorySpec(case_a, FIG1_BLUE, t0=1.0, t_end=6.0, sample_interval=0.25))
    direct = integrate(TrajectorySpec(case_a, FIG1_BLUE, t0=1.0, t_end=3.5, sample_interval=2.5))
    k = np.flatnonzero(np.isclose(traj.t, 3.5))[0]
    assert np.allclose(traj.x[k], direct.x[-1], atol=1e-9)


def test_initial_density_below_guard():
    psi = Superposition.from_quanta((1.0, math.sqrt(2)), [(1, 0), (0, 1)])
    with pytest.raises(NodeSingularityError):
        integrate(TrajectorySpec(psi, (1e-9, 0.0), t0=0.5, t_end=1.0))


def test_node_proximity_termination(case_b):
    # a guard above most of the density forces an early, reported stop
    spec = TrajectorySpec(case_b, FIG2_CHAOTIC, t0=FIG2_T0, t_end=FIG2_T0 + 50.0,
                          min_density_guard=0.9 * density(case_b, np.array(FIG2_CHAOTIC), FIG2_T0))
    traj = integrate(spec)
    assert traj.reason == "node-proximity"
    assert traj.t_reached < spec.t_end
    assert traj.guard_rejections > 0
    assert traj.min_density >= spec.guard()


def test_relative_drift_denominator():
    assert relative_drift(np.array([0.5]), 0.25)[0] == 0.25
    assert relative_drift(np.array([3.0]), 2.0)[0] == 0.5


def test_singular_samples_are_flagged(case_b):
    traj = integrate(TrajectorySpec(case_b, FIG2_CHAOTIC, t0=FIG2_T0, t_end=FIG2_T0 + 1.0))
    traj.x[3, 2] = 0.0
    q = ConservedQuantity.build([AxisTerm("skip"), AxisTerm("skip"),
                                 AxisTerm.pair(0, 2, W3[2], 1.0)])
    series = conserved_series(traj, q)
    assert series.singular[3] and series.singular.sum() == 1
    assert math.isfinite(series.max_drift)
