import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offsetqa import (AnnealSchedule, HamiltonianOperator, IsingInstance,
                      OffsetVector, ValidationError, compensate_couplings,
                      default_schedule)


def test_default_schedule_endpoints(schedule):
    assert schedule.a_of_c(0.0) == pytest.approx(8.0)
    assert schedule.a_of_c(1.0) == 0.0
    assert schedule.b_of_c(0.0) == 0.0
    assert schedule.b_of_c(1.0) == pytest.approx(12.0)
    assert np.array_equal(schedule.s, schedule.c)


def test_eval_global_quadratic_envelopes(schedule):
    a, b = schedule.eval_global(0.3)
    # table is a piecewise-linear sampling of the quadratics
    assert a == pytest.approx(8.0 * 0.49, abs=1e-4)
    assert b == pytest.approx(12.0 * 0.09, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0))
def test_c_of_s_inverts_s_of_c(schedule, s):
    c = schedule.c_of_s(s)
    assert schedule.s_of_c(c) == pytest.approx(s, abs=1e-12)


def test_c_of_s_flat_segment_midpoint():
    sched = AnnealSchedule(c=np.array([0.0, 0.4, 0.6, 1.0]),
                           s=np.array([0.0, 0.5, 0.5, 1.0]),
                           A=np.array([2.0, 1.0, 1.0, 0.0]),
                           B=np.array([0.0, 1.0, 1.0, 2.0]))
    assert sched.c_of_s(0.5) == pytest.approx(0.5)


def test_eval_per_qubit_offset_direction(schedule):
    delta = np.array([0.05, -0.05, 0.0])
    a_i, b_i = schedule.eval_per_qubit(0.5, delta)
    a0, b0 = schedule.eval_global(0.5)
    # positive offset advances the anneal: less driver, more problem
    assert a_i[0] < a0 < a_i[1]
    assert b_i[0] > b0 > b_i[1]
    assert a_i[2] == pytest.approx(a0)


def test_eval_per_qubit_clamps_at_ends(schedule):
    a_i, b_i = schedule.eval_per_qubit(0.98, np.array([0.1]))
    assert a_i[0] == 0.0
    assert b_i[0] == pytest.approx(12.0)
    a_i, _ = schedule.eval_per_qubit(0.01, np.array([-0.1]))
    assert a_i[0] == pytest.approx(8.0)


def test_schedule_validation():
    c = np.linspace(0, 1, 5)
    with pytest.raises(ValidationError):
        AnnealSchedule(c=c, s=c[::-1], A=(1 - c) ** 2, B=c ** 2)
    with pytest.raises(ValidationError):
        AnnealSchedule(c=c, s=c, A=(1 - c) ** 2, B=c ** 2 + 0.5)
    with pytest.raises(ValidationError):
        AnnealSchedule(c=c, s=c, A=np.ones(5), B=c ** 2)
    with pytest.raises(ValidationError):
        AnnealSchedule(c=c + 0.1, s=c, A=(1 - c) ** 2, B=c ** 2)


def test_schedule_roundtrip(tmp_path, schedule):
    path = tmp_path / "schedule.csv"
    schedule.save(path)
    back = AnnealSchedule.load(path)
    assert np.array_equal(back.c, schedule.c)
    assert np.array_equal(back.A, schedule.A)
    assert np.array_equal(back.B, schedule.B)


# -- offsets -------------------------------------------------------------------

def test_offset_quantization_cases():
    vec = OffsetVector(delta=np.array([0.0031, 0.001, 0.003, -0.001, 0.005]))
    q = vec.quantized().delta
    # round-half-even on the 0.002 grid
    assert q == pytest.approx([0.004, 0.0, 0.004, 0.0, 0.004])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-0.1, max_value=0.1), min_size=1, max_size=8))
def test_quantization_stays_on_grid_and_close(deltas):
    vec = OffsetVector(delta=np.asarray(deltas))
    q = vec.quantized()
    assert np.all(np.abs(q.delta - vec.delta) <= 0.001 + 1e-12)
    steps = q.delta / 0.002
    assert np.allclose(steps, np.round(steps), atol=1e-9)
    assert np.all(np.abs(q.delta) <= 0.1)


def test_offset_bound_enforced():
    with pytest.raises(ValidationError):
        OffsetVector(delta=np.array([0.11]))
    vec = OffsetVector(delta=np.array([0.2]), bound=0.25)
    assert vec.clamped().delta[0] == pytest.approx(0.2)


def test_offsets_roundtrip(tmp_path):
    vec = OffsetVector(delta=np.array([0.004, -0.02, 0.0]))
    path = tmp_path / "offsets.json"
    vec.save(path)
    back = OffsetVector.load(path)
    assert np.array_equal(back.delta, vec.delta)
    assert back.bound == vec.bound
    assert back.granularity == vec.granularity


# -- compensation ----------------------------------------------------------------

def test_compensation_restores_pair_energy(schedule, fm_pair):
    offsets = OffsetVector(delta=np.array([0.05, -0.05]))
    comp = compensate_couplings(fm_pair, schedule, offsets, s_star=0.3, rescale=0.85)
    _, b_global = schedule.eval_global(0.3)
    _, b_i = schedule.eval_per_qubit(0.3, offsets.delta)
    (_, _, j_new), = comp.couplings
    # sqrt(B_i B_j) J' equals the rescaled intended coupling energy at s*
    assert np.sqrt(b_i[0] * b_i[1]) * j_new == pytest.approx(0.85 * b_global * -1.0)
    assert comp.metadata["compensation"] == {"s_star": 0.3, "rescale": 0.85}


def test_compensation_zero_offsets_is_pure_rescale(schedule, biased_pair):
    comp = compensate_couplings(biased_pair, schedule,
                                OffsetVector.zeros(2), s_star=0.3, rescale=0.85)
    assert comp.couplings[0][2] == pytest.approx(-0.85)
    assert np.allclose(comp.h, 0.85 * biased_pair.h)


def test_compensated_diagonal_matches_uniform_at_s_star(schedule):
    # zero-field instance: compensated per-qubit diagonal at s* is exactly
    # the rescaled uniform diagonal
    rng = np.random.default_rng(5)
    inst = IsingInstance(n=4, h=np.zeros(4),
                         couplings=[(0, 1, -1.0), (1, 2, 0.8), (2, 3, -0.5), (0, 3, 1.0)])
    offsets = OffsetVector(delta=rng.uniform(-0.05, 0.05, size=4))
    comp = compensate_couplings(inst, schedule, offsets, s_star=0.3, rescale=0.85)
    op = HamiltonianOperator.at_fraction(comp, schedule, 0.3, offsets=offsets)
    ref = HamiltonianOperator.uniform_at_fraction(inst, schedule, 0.3)
    assert np.allclose(op.diag, 0.85 * ref.diag, atol=1e-12)


def test_compensation_validates_arguments(schedule, fm_pair):
    with pytest.raises(ValidationError):
        compensate_couplings(fm_pair, schedule, OffsetVector.zeros(2), s_star=0.0)
    with pytest.raises(ValidationError):
        compensate_couplings(fm_pair, schedule, OffsetVector.zeros(3))
    with pytest.raises(ValidationError):
        compensate_couplings(fm_pair, schedule, OffsetVector.zeros(2), rescale=1.2)
