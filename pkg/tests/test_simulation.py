import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from distobs.corpus import detectable_instance
from distobs.graph import build_graph
from distobs.spectral import WeightMatrix, make_weight
from distobs.synthesis import SynthesisOptions, _offsets, make_design, synthesize, zero_design
from distobs.simulation import (SimulationDiverged, decay_rate, error_dynamics_check, error_floor,
                                final_relative_error, rewrite_defect, simulate, trace_to_csv)
from distobs.sysmodel import LtiSystem


@pytest.fixture
def fixture_design(path3, scalar_plant, scalar_weight):
    return synthesize(path3, scalar_weight, scalar_plant)


def horizon(r):
    return max(60, math.floor(math.log(1e-8) / math.log(r)) + 1)


def lifted_norms(d, v0, K):
    """||(eps, z)(k)|| from iterating the closed loop directly, k = 0..K."""
    v, out = v0.copy(), [np.linalg.norm(v0)]
    for _ in range(K):
        v = d.closed_loop @ v
        out.append(np.linalg.norm(v))
    return np.array(out)


def test_zero_initial_error_is_fixed_point(scalar_plant, fixture_design):
    x0 = np.array([0.7])
    tr = simulate(scalar_plant, fixture_design, x0, [x0] * 3, [np.zeros(mu) for mu in fixture_design.mu], K=60)
    assert not tr.err_norms.any() and not tr.joint_norm.any()
    assert error_dynamics_check(scalar_plant, fixture_design, tr)
    assert decay_rate(tr) == (0.0, True)
    assert final_relative_error(tr) == 0.0


def test_zero_initial_error_with_inexact_weights(path3, scalar_plant):
    w = make_weight(path3, 0.3)
    d = synthesize(path3, w, scalar_plant)
    x0 = np.array([1.3])
    tr = simulate(scalar_plant, d, x0, [x0] * 3, K=80)
    assert tr.err_norms.max() <= error_floor(tr)
    assert final_relative_error(tr) == 0.0
    assert error_dynamics_check(scalar_plant, d, tr)


def test_final_relative_error_cases(path3):
    sys = LtiSystem([[0.5]], ([[1.0]],) * 3)
    d = zero_design(make_weight(path3, 0.5), sys)
    tr = simulate(sys, d, [1.0], K=10)
    assert final_relative_error(tr) == pytest.approx(0.5 ** 10)
    tr.err_norms[:, 0] = 0.0
    assert final_relative_error(tr) == np.inf


def test_stable_plant_zero_gains_decay(path3):
    sys = LtiSystem(np.diag([0.8, 0.3]), (np.zeros((1, 2)),) * 3)
    d = zero_design(make_weight(path3, 0.5), sys)
    tr = simulate(sys, d, np.array([1.0, 1.0]), K=80)
    assert decay_rate(tr, burn_in=20).rate == pytest.approx(0.8, abs=1e-3)


def test_scalar_decay_rate():
    sys = LtiSystem([[0.75]], ([[1.0]],) * 3)
    g = build_graph(3, [(0, 1), (1, 2)])
    tr = simulate(sys, zero_design(make_weight(g, 0.5), sys), [2.0], K=100)
    dr = decay_rate(tr)
    assert not dr.degenerate
    assert dr.rate == pytest.approx(0.75, abs=1e-3)


def test_fixture_decay_bound(path3, scalar_plant, scalar_weight):
    opts = [SynthesisOptions(), SynthesisOptions(stage="B", max_restarts=2, sweeps=30)]
    for d in (synthesize(path3, scalar_weight, scalar_plant, o) for o in opts):
        tr = simulate(scalar_plant, d, K=60)
        vals, V = np.linalg.eig(d.closed_loop)
        margin = np.linalg.cond(V) * np.sqrt(d.closed_loop.shape[0])
        assert final_relative_error(tr) < d.achieved_radius ** 60 * margin


def test_err_norms_match_states(scalar_plant, fixture_design):
    tr = simulate(scalar_plant, fixture_design, seed=3, K=40)
    recomputed = np.linalg.norm(tr.errors, axis=2).T
    assert_allclose(tr.err_norms, recomputed, rtol=0, atol=1e-12)
    assert tr.meta["seed"] == 3


def test_rewrite_identity_and_row_sum_sabotage(path3, scalar_plant, scalar_weight, fixture_design):
    tr = simulate(scalar_plant, fixture_design, K=60)
    assert error_dynamics_check(scalar_plant, fixture_design, tr)
    W = scalar_weight.W.copy()
    W[1, 1] += 0.05  # row 2 now sums to 1.05
    bad_w = WeightMatrix(scalar_weight.alpha, W, np.linalg.eigvalsh(W), path3)
    d = fixture_design
    bad = make_design(bad_w, scalar_plant, d.H, d.S, d.Q, d.R, d.mu)
    tr = simulate(scalar_plant, bad, K=20)
    assert rewrite_defect(scalar_plant, bad, tr) > 1e-3
    assert not error_dynamics_check(scalar_plant, bad, tr)


def _fill_outside(X, P, rs, cs, rng):
    X = X.copy()
    ro, co = _offsets(rs), _offsets(cs)
    for i in range(len(rs)):
        for j in range(len(cs)):
            if not P[i, j]:
                X[ro[i]:ro[i + 1], co[j]:co[j + 1]] = rng.standard_normal((rs[i], cs[j]))
    return X


def test_locality_never_reads_non_neighbour_blocks():
    inst = detectable_instance(11)
    d = synthesize(inst.graph, inst.w, inst.sys)
    assert sum(d.mu) > 0
    rng = np.random.default_rng(0)
    P = inst.graph.pattern.astype(bool)
    m, n, r, mu = inst.graph.m, inst.sys.n, inst.sys.r, d.mu
    W = inst.w.W.copy()
    W[~P] = rng.standard_normal(int((~P).sum()))
    garbage = dataclasses.replace(
        d,
        w=dataclasses.replace(inst.w, W=W),
        H=_fill_outside(d.H, P, [n] * m, r, rng), S=_fill_outside(d.S, P, [n] * m, mu, rng),
        Q=_fill_outside(d.Q, P, mu, r, rng), R=_fill_outside(d.R, P, mu, mu, rng))
    t1, t2 = simulate(inst.sys, d, K=30), simulate(inst.sys, garbage, K=30)
    assert_array_equal(t1.xhat, t2.xhat)
    assert_array_equal(t1.z, t2.z)


def test_divergence_reports_step(path3):
    sys = LtiSystem([[1.5]], ([[0.0]],) * 3)
    d = zero_design(make_weight(path3, 0.5), sys)
    with pytest.raises(SimulationDiverged) as info:
        simulate(sys, d, [1.0], K=100)
    # error equals the state, so it first exceeds 1e12 times its initial size at ceil(log 1e12 / log 1.5)
    assert info.value.step == math.ceil(12 * math.log(10) / math.log(1.5))


def test_simulate_input_errors(scalar_plant, identity_plant, fixture_design):
    with pytest.raises(ValueError):
        simulate(scalar_plant, fixture_design, K=0)
    with pytest.raises(ValueError):
        simulate(identity_plant, fixture_design)
    with pytest.raises(ValueError):
        simulate(scalar_plant, fixture_design, xhat0=[np.zeros(1)] * 2)


def test_trace_csv(scalar_plant, fixture_design):
    tr = simulate(scalar_plant, fixture_design, K=10, seed=5)
    text = trace_to_csv(tr)
    lines = text.splitlines()
    assert lines[0].startswith("# ") and "seed=5" in lines[0] and "alpha=0.5" in lines[0]
    assert lines[1] == "k,err_1,err_2,err_3,joint_norm"
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    assert data.shape == (11, 5)
    assert_array_equal(data[:, 0], np.arange(11))
    assert_array_equal(data[:, 1:4], tr.err_norms.T)
    assert_array_equal(data[:, 4], tr.joint_norm)


def test_corpus_convergence_and_decay():
    for seed in range(100):
        inst = detectable_instance(seed)
        d = synthesize(inst.graph, inst.w, inst.sys)
        r = d.achieved_radius
        K = horizon(r)
        tr = simulate(inst.sys, d, K=2 * K, seed=seed)
        assert error_dynamics_check(inst.sys, d, tr), seed
        # in exact arithmetic the error obeys the closed loop; this carries no rounding floor
        exact = lifted_norms(d, tr.stacked(0), 2 * K)
        assert exact[K] < 1e-6 * exact[0], seed
        slope = np.polyfit(np.arange(K, 2 * K + 1), np.log(exact[K:]), 1)[0]
        assert np.exp(slope) <= r + 0.02, seed
        # the simulated errors match until rounding, which grows with the plant state
        floor_ratio = error_floor(tr, K) / tr.err_norms[:, 0].max()
        assert tr.err_norms[:, K].max() <= max(1e-6, floor_ratio) * tr.err_norms[:, 0].max(), seed
        # decay_rate drops samples at the floor; it is degenerate when nothing above it remains
        dr = decay_rate(tr, burn_in=K)
        if not dr.degenerate:
            assert dr.rate <= r + 0.02, seed
