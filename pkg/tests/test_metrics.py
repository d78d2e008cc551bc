from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepwise_tas.channel import generate_rayleigh
from stepwise_tas.errors import DegenerateMeasureError, InvalidArgumentError
from stepwise_tas.metrics import (
    LinkStats,
    Measure,
    MeasureKind,
    PowerModel,
    consumed_power,
    db_to_linear,
    evaluate,
    link_stats,
    linear_to_db,
    rate,
    scalar_objective,
    sinr,
)
from stepwise_tas.precoders import PrecoderSpec, precode_matrix

REF = PowerModel.reference()


def _stats(t, u):
    return LinkStats(np.asarray(t, float), np.asarray(u, float))


def test_power_model_reference_values():
    assert REF.xi == pytest.approx(2.5)
    assert (REF.q_tx, REF.q_rx, REF.q_sync) == (0.048, 0.048, 0.062)


@pytest.mark.parametrize("kwargs", [dict(xi=0.5), dict(q_tx=-1.0), dict(q_sync=math.inf)])
def test_power_model_validation(kwargs):
    base = dict(xi=2.5, q_tx=0.048, q_rx=0.048, q_sync=0.062)
    base.update(kwargs)
    with pytest.raises(InvalidArgumentError):
        PowerModel(**base)


def test_measure_validation():
    with pytest.raises(InvalidArgumentError):
        Measure.spectral(2, [2.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        Measure.spectral(2, [1.0])
    with pytest.raises(InvalidArgumentError):
        Measure(MeasureKind.EE, (1.0,))
    assert Measure.energy(3).weights == (1.0, 1.0, 1.0)


def test_link_stats_single_user():
    h = np.array([[1 + 1j], [2.0]])
    a = np.array([[0.5], [0.5j]])
    s = link_stats(h, a)
    assert s.u[0] == 0.0
    assert s.t[0] == pytest.approx(abs(0.5 + 0.5j + 1j) ** 2)


def test_link_stats_against_scripted_sums():
    rng = np.random.default_rng(5)
    h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    a = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    s = link_stats(h, a)
    for k in range(2):
        t = abs(sum(h[n, k] * a[n, k] for n in range(3))) ** 2
        u = sum(abs(sum(h[n, k] * a[n, j] for n in range(3))) ** 2 for j in range(2) if j != k)
        assert s.t[k] == pytest.approx(t, rel=1e-12)
        assert s.u[k] == pytest.approx(u, rel=1e-12)


def test_link_stats_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        link_stats(np.ones((3, 2)), np.ones((2, 2)))


def test_zf_link_has_no_interference():
    h = generate_rayleigh(6, 4, 1).gains
    assert np.max(link_stats(h, precode_matrix(h, PrecoderSpec.zf())).u) <= 1e-18


def test_sinr_examples():
    assert sinr(_stats([1], [0]), 2.0)[0] == 2.0
    assert sinr(_stats([2], [1]), 1.0)[0] == 1.0
    assert np.all(sinr(_stats([3, 4], [1, 2]), 0.0) == 0.0)
    with pytest.raises(InvalidArgumentError):
        sinr(_stats([1], [0]), -0.1)
    with pytest.raises(InvalidArgumentError):
        sinr(_stats([1], [0]), np.array([0.1, -1.0]))


def test_rate_examples():
    assert rate(_stats([1], [0]), 1.0)[0] == pytest.approx(1.0, rel=1e-15)
    assert rate(_stats([3], [0]), 1.0)[0] == pytest.approx(2.0, rel=1e-15)
    assert np.all(rate(_stats([3, 1], [0, 2]), 0.0) == 0.0)


def test_vectorized_over_powers():
    s = _stats([1.0, 2.0], [0.5, 0.0])
    p = np.array([0.0, 0.5, 2.0])
    r = rate(s, p)
    assert r.shape == (3, 2)
    for i, pi in enumerate(p):
        assert np.allclose(r[i], rate(s, float(pi)))
    m = Measure.energy(2)
    assert np.allclose(evaluate(m, s, 3, p), [evaluate(m, s, 3, float(pi)) for pi in p])


def test_consumed_power_examples():
    assert consumed_power(0, 0.0, REF, 4) == pytest.approx(0.502, abs=1e-15)
    assert consumed_power(24, 1.0, REF, 4) == pytest.approx(4.154, abs=1e-14)
    for ell in (0, 3, 50):
        for p in (0.0, 0.3, 9.0):
            diff = consumed_power(ell + 1, p, REF, 4) - consumed_power(ell, p, REF, 4)
            assert diff == pytest.approx(REF.q_tx, abs=1e-14)
    with pytest.raises(InvalidArgumentError):
        consumed_power(-1, 0.0, REF, 4)


def test_evaluate_examples():
    # rates (1, 3): SINR 1 and 7
    s = _stats([1.0, 7.0], [0.0, 0.0])
    assert evaluate(Measure.spectral(2), s, 1, 1.0) == pytest.approx(2.0, rel=1e-15)
    # four users at 2.077 bit/s/Hz each, l = 24, p = 1 W: Q = 4.154 W
    s4 = _stats([2**2.077 - 1] * 4, [0.0] * 4)
    assert evaluate(Measure.spectral(4), s4, 24, 1.0) == pytest.approx(2.077, rel=1e-12)
    assert evaluate(Measure.energy(4, REF), s4, 24, 1.0) == pytest.approx(0.5, rel=1e-12)


def test_ee_zero_at_zero_power():
    s = _stats([3.0, 1.0], [0.2, 0.1])
    assert evaluate(Measure.energy(2), s, 5, 0.0) == 0.0


def test_ee_undefined_without_power():
    zero = PowerModel(xi=1.0, q_tx=0.0, q_rx=0.0, q_sync=0.0)
    with pytest.raises(DegenerateMeasureError):
        evaluate(Measure.energy(1, zero), _stats([1.0], [0.0]), 3, 0.0)
    with pytest.raises(DegenerateMeasureError):
        scalar_objective(Measure.energy(1, zero), _stats([1.0], [0.0]), 3)


def test_weight_count_must_match():
    with pytest.raises(InvalidArgumentError):
        evaluate(Measure.spectral(3), _stats([1.0], [0.0]), 1, 1.0)


def test_db_helpers():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(10) == pytest.approx(10.0)
    assert db_to_linear(-30) == pytest.approx(1e-3)
    assert linear_to_db(100.0) == pytest.approx(20.0)
    assert linear_to_db(0.0) == -math.inf
    with pytest.raises(InvalidArgumentError):
        linear_to_db(-1.0)


_vec = st.lists(st.floats(0, 50), min_size=1, max_size=5)


@settings(max_examples=60, deadline=None)
@given(t=_vec, data=st.data())
def test_monotone_in_power(t, data):
    k = len(t)
    u = data.draw(st.lists(st.floats(0, 50), min_size=k, max_size=k))
    s = _stats(t, u)
    p = np.sort(np.array(data.draw(st.lists(st.floats(0, 100), min_size=2, max_size=20))))
    r = sinr(s, p)
    assert np.all(np.diff(r, axis=0) >= -1e-12)
    se = evaluate(Measure.spectral(k), s, k, p)
    assert np.all(np.diff(np.atleast_1d(se)) >= -1e-12)


@settings(max_examples=40, deadline=None)
@given(t=_vec, data=st.data())
def test_weighted_sum_linearity(t, data):
    k = len(t)
    u = data.draw(st.lists(st.floats(0, 50), min_size=k, max_size=k))
    w1 = data.draw(st.lists(st.floats(0.01, 5), min_size=k, max_size=k))
    w2 = data.draw(st.lists(st.floats(0.01, 5), min_size=k, max_size=k))
    p = data.draw(st.floats(0, 20))
    s = _stats(t, u)
    both = evaluate(Measure.spectral(k, [a + b for a, b in zip(w1, w2)]), s, k, p)
    parts = evaluate(Measure.spectral(k, w1), s, k, p) + evaluate(Measure.spectral(k, w2), s, k, p)
    assert both == pytest.approx(parts, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(t=_vec, data=st.data())
def test_scalar_objective_matches_evaluate(t, data):
    k = len(t)
    u = data.draw(st.lists(st.floats(0, 50), min_size=k, max_size=k))
    p = data.draw(st.floats(0, 20))
    ell = data.draw(st.integers(1, 64))
    s = _stats(t, u)
    for m in (Measure.spectral(k), Measure.energy(k)):
        assert scalar_objective(m, s, ell)(p) == pytest.approx(evaluate(m, s, ell, p), rel=1e-12, abs=1e-15)


def test_cached_equals_from_scratch():
    h = generate_rayleigh(5, 3, 9).gains
    a = precode_matrix(h, PrecoderSpec.rzf(0.4))
    p = 0.7
    m = Measure.energy(3)
    cross = h.T @ a
    se = 0.0
    for k in range(3):
        sig = abs(cross[k, k]) ** 2 * p
        intf = sum(abs(cross[k, j]) ** 2 for j in range(3) if j != k) * p
        se += math.log2(1 + sig / (1 + intf)) / 3
    ee = se / (2.5 * p + 5 * 0.048 + 3 * 0.048 + 4 * 0.062)
    assert evaluate(m, link_stats(h, a), 5, p) == pytest.approx(ee, rel=1e-12)
