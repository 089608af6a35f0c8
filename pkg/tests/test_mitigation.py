import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offsetqa import (MitigationAborted, MitigationConfig, OffsetVector,
                      SampleSet, SamplerConfig, ValidationError,
                      antimitigation_run, run_mitigation, single_offset_step,
                      update_offsets)
from offsetqa.mitigation import SEED_STRIDE, MitigationTrace, p_gs


def zeros(n=3, bound=0.1, granularity=0.002):
    return OffsetVector(np.zeros(n), bound=bound, granularity=granularity)


def test_update_first_step_halves_target():
    # k=1 damping is 1/2, so from zero the step lands at alpha*mu/2
    out = update_offsets(zeros(), np.ones(3), alpha=0.04, k=1)
    assert np.allclose(out.delta, 0.02)


def test_update_decay_toward_zero():
    prev = OffsetVector(np.array([0.06, -0.03, 0.0]))
    out = update_offsets(prev, np.zeros(3), alpha=0.04, k=1, quantize=False)
    assert np.allclose(out.delta, prev.delta / 2.0)
    out4 = update_offsets(prev, np.zeros(3), alpha=0.04, k=4, quantize=False)
    assert np.allclose(out4.delta, prev.delta * (2.0 / 3.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000),
       st.integers(min_value=1, max_value=30))
def test_update_contracts_onto_target(seed, k):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    prev = OffsetVector(rng.uniform(-0.1, 0.1, n))
    mu = rng.uniform(0.0, 1.0, n)
    alpha = float(rng.uniform(-0.1, 0.1))
    out = update_offsets(prev, mu, alpha, k, quantize=False)
    assert np.all(np.abs(out.delta - alpha * mu)
                  <= np.abs(prev.delta - alpha * mu) + 1e-15)
    assert np.all(np.abs(out.delta) <= prev.bound + 1e-12)


def test_update_validation():
    with pytest.raises(ValidationError):
        update_offsets(zeros(), np.ones(3), alpha=0.04, k=0)
    with pytest.raises(ValidationError):
        update_offsets(zeros(), np.ones(4), alpha=0.04, k=1)
    with pytest.raises(ValidationError):
        update_offsets(zeros(), np.array([0.0, np.nan, 0.0]), alpha=0.04, k=1)


def test_single_step_quantizes():
    out = single_offset_step(np.array([0.0, 1.0, 0.5]), alpha=0.04)
    assert np.allclose(out.delta, [0.0, 0.04, 0.02])
    # 0.015 sits exactly between grid lines; ties round to the even rung
    out2 = single_offset_step(np.array([0.5]), alpha=0.03)
    assert out2.delta[0] == pytest.approx(0.016)


def test_p_gs_empty_rejected():
    empty = SampleSet(n=2, states=np.array([], dtype=np.int64),
                      multiplicities=np.array([], dtype=np.int64),
                      sampler="test", seed=None)
    with pytest.raises(ValidationError):
        p_gs(empty, [0])


def test_config_validation():
    with pytest.raises(ValidationError):
        MitigationConfig(alpha=0.2, offset_bound=0.1)
    with pytest.raises(ValidationError):
        MitigationConfig(n_iterations=0)
    with pytest.raises(ValidationError):
        MitigationConfig(track_gaps=True, gap_grid=(0.3, 0.6))
    d = MitigationConfig(alpha=0.04).to_json_dict()
    assert d["alpha"] == 0.04
    assert d["sampler"]["backend"] == "schrodinger"


def boltzmann_config(**kw):
    sampler = SamplerConfig(backend="classical-boltzmann", shots=2000, seed=0)
    return MitigationConfig(sampler=sampler, **kw)


def test_run_structure_and_seeding(triangle_afm, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=3)
    trace = run_mitigation(triangle_afm, schedule, config)
    assert len(trace.iterations) == 3
    assert [r.k for r in trace.iterations] == [1, 2, 3]
    assert [r.seed for r in trace.iterations] == [SEED_STRIDE * k for k in (1, 2, 3)]
    assert np.all(trace.iterations[0].offsets_before == 0.0)
    for prev, cur in zip(trace.iterations, trace.iterations[1:]):
        assert np.array_equal(cur.offsets_before, prev.offsets_after)
    assert np.array_equal(trace.final_offsets.delta,
                          trace.iterations[-1].offsets_after)
    final = trace.final_record
    assert final is not None and final.k == 4
    assert np.array_equal(final.offsets_before, final.offsets_after)
    assert trace.baseline_p_gs == trace.iterations[0].p_gs
    assert trace.final_p_gs == final.p_gs
    # T=0 reference sampler never leaves the ground manifold
    assert trace.baseline_p_gs == 1.0
    # offsets stay on the granularity grid and inside [0, alpha]
    for rec in trace.iterations:
        steps = rec.offsets_after / 0.002
        assert np.allclose(steps, np.round(steps), atol=1e-9)
        assert np.all(rec.offsets_after >= -1e-12)
        assert np.all(rec.offsets_after <= 0.04 + 1e-12)
        assert np.all((0.0 <= rec.mu) & (rec.mu <= 1.0))
        assert rec.total_draws == 2000
        assert not rec.compensated


def test_run_is_deterministic(triangle_afm, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=2)
    a = run_mitigation(triangle_afm, schedule, config)
    b = run_mitigation(triangle_afm, schedule, config)
    assert a.to_json_dict() == b.to_json_dict()


def test_antimitigation_flips_sign(triangle_afm, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=2)
    trace = antimitigation_run(triangle_afm, schedule, config)
    assert trace.config["alpha"] == -0.04
    for rec in trace.iterations:
        assert np.all(rec.offsets_after <= 1e-12)


def test_compensated_run_keeps_original_metrics(triangle_afm, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=2, compensate=True)
    trace = run_mitigation(triangle_afm, schedule, config)
    # rescaled couplings leave the zero-field AFM ground set alone, and
    # p_gs is judged against the original instance either way
    assert trace.baseline_p_gs == 1.0
    assert all(rec.compensated for rec in trace.iterations)


def test_scc_tracking(triangle_afm, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=1, track_scc=True,
                              evaluate_final=False)
    trace = run_mitigation(triangle_afm, schedule, config)
    scc = trace.iterations[0].scc
    assert scc is not None
    # six ground states merge to three antipodal coupons, drawn uniformly
    assert 1.0 <= scc < 1.2


def test_gap_tracking(fm_pair, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=1, track_gaps=True,
                              gap_grid=(0.2, 0.5, 0.8), evaluate_final=False)
    trace = run_mitigation(fm_pair, schedule, config)
    gap = trace.iterations[0].min_third_gap
    assert gap is not None and gap > 0.0


def test_trace_roundtrip(tmp_path, triangle_afm, schedule):
    config = boltzmann_config(alpha=0.04, n_iterations=2, track_scc=True)
    trace = run_mitigation(triangle_afm, schedule, config)
    path = tmp_path / "trace.json"
    trace.save(path)
    loaded = MitigationTrace.load(path)
    assert loaded.to_json_dict() == trace.to_json_dict()
    assert np.array_equal(loaded.final_offsets.delta, trace.final_offsets.delta)
    assert loaded.final_offsets.bound == trace.final_offsets.bound


def test_trace_rejects_wrong_format():
    with pytest.raises(ValidationError):
        MitigationTrace.from_json_dict({"format": "something-else"})
    with pytest.raises(ValidationError):
        MitigationTrace.from_json_dict({"format": "offsetqa-mitigation-trace",
                                        "version": 99})


def test_aborted_run_carries_partial_trace(biased_pair, schedule):
    sampler = SamplerConfig(anneal_time=5.0, shots=100, norm_tol=1e-300)
    config = MitigationConfig(alpha=0.04, n_iterations=2, sampler=sampler)
    with pytest.raises(MitigationAborted) as exc_info:
        run_mitigation(biased_pair, schedule, config)
    trace = exc_info.value.trace
    assert trace.aborted
    assert len(trace.iterations) == 0
    assert np.all(trace.final_offsets.delta == 0.0)
