from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepwise_tas.channel import generate_rayleigh
from stepwise_tas.errors import (
    DegenerateChannelError,
    InvalidArgumentError,
    NumericalDegeneracyError,
    RankDeficiencyError,
)
from stepwise_tas.metrics import link_stats
from stepwise_tas.precoders import (
    REFRESH_INTERVAL,
    PrecoderKind,
    PrecoderSpec,
    apply_update,
    precode_direct,
    precode_matrix,
    rank_one_update,
    update_terms,
    with_spec,
)

MRT = PrecoderSpec.mrt()
ZF = PrecoderSpec.zf()


def _rel(x, ref):
    return np.linalg.norm(x - ref) / np.linalg.norm(ref)


def _textbook(h, spec):
    """Independent direct formulas, normalized by the Frobenius norm."""
    hc = h.conj()
    if spec.kind is PrecoderKind.MRT:
        x = hc
    else:
        x = hc @ np.linalg.inv(h.T @ hc + spec.lam * np.eye(h.shape[1]))
    return x / np.linalg.norm(x)


def _rand_h(ell, k, seed):
    return generate_rayleigh(ell, k, seed).gains


# ---------------------------------------------------------------------------
# spec


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        PrecoderSpec.rzf(0.0)
    with pytest.raises(InvalidArgumentError):
        PrecoderSpec.rzf(-1.0)
    with pytest.raises(InvalidArgumentError):
        PrecoderSpec(PrecoderKind.ZF, 0.1)
    assert PrecoderSpec("rzf", 2).lam == 2.0
    assert str(PrecoderSpec.rzf(0.5)) == "rzf(lambda=0.5)"
    assert str(ZF) == "zf" and not MRT.uses_inverse and ZF.uses_inverse


# ---------------------------------------------------------------------------
# direct construction


def test_mrt_two_antenna_example():
    h = np.array([[1.0], [1j]])
    st_ = precode_direct(h, MRT)
    assert st_.beta == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert np.allclose(st_.a_matrix, np.array([[1 / math.sqrt(2)], [-1j / math.sqrt(2)]]), atol=1e-15)
    assert abs((h.T @ st_.a_matrix)[0, 0]) ** 2 == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("lam", [1e-3, 0.5, 7.0])
def test_rzf_single_user_equals_mrt(lam):
    h = _rand_h(5, 1, 3)
    rzf = precode_direct(h, PrecoderSpec.rzf(lam))
    mrt = precode_direct(h, MRT)
    assert _rel(rzf.a_matrix, mrt.a_matrix) < 1e-14
    norm = np.linalg.norm(h)
    assert rzf.beta == pytest.approx((norm**2 + lam) / norm, rel=1e-13)


def test_zf_nulls_cross_terms():
    h = _rand_h(4, 2, 8)
    cross = h.T @ precode_matrix(h, ZF)
    assert abs(cross[0, 1]) <= 1e-10 and abs(cross[1, 0]) <= 1e-10
    assert cross[0, 0].real > 0 and abs(cross[0, 0] - cross[1, 1]) < 1e-12


@pytest.mark.parametrize("spec", [MRT, ZF, PrecoderSpec.rzf(0.3)])
@pytest.mark.parametrize("seed", range(10))
def test_direct_matches_textbook(spec, seed):
    h = _rand_h(6, 3, seed)
    st_ = precode_direct(h, spec)
    assert _rel(st_.a_matrix, _textbook(h, spec)) < 1e-12
    assert abs(np.sum(np.abs(st_.a_matrix) ** 2) - 1.0) < 1e-12
    if spec.uses_inverse:
        j = h.T @ h.conj() + spec.lam * np.eye(3)
        assert np.allclose(st_.j_inv @ j, np.eye(3), atol=1e-8)
        assert np.allclose(st_.j_zero, h.T @ h.conj(), atol=1e-12)
        # beta = trace(J^-2 J(0))^(-1/2)
        ji = np.linalg.inv(j)
        assert st_.beta == pytest.approx(np.trace(ji @ ji @ st_.j_zero).real ** -0.5, rel=1e-10)


def test_zf_rank_deficiency_carries_dimensions():
    with pytest.raises(RankDeficiencyError) as exc:
        precode_direct(_rand_h(2, 3, 0), ZF)
    assert (exc.value.level, exc.value.n_users) == (2, 3)
    h = np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex)
    with pytest.raises(RankDeficiencyError):
        precode_direct(h, ZF)


@pytest.mark.parametrize("spec", [MRT, ZF, PrecoderSpec.rzf(1.0)])
def test_zero_channel_is_degenerate(spec):
    with pytest.raises(DegenerateChannelError):
        precode_direct(np.zeros((3, 2)), spec)


def test_rzf_defined_below_k():
    st_ = precode_direct(_rand_h(1, 4, 2), PrecoderSpec.rzf(1e-3))
    assert abs(np.sum(np.abs(st_.a_matrix) ** 2) - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# rank-one update


def test_mrt_zero_row_update():
    st_ = precode_direct(_rand_h(3, 2, 1), MRT)
    upd = rank_one_update(st_, np.zeros(2))
    assert upd.mu == 1.0
    assert not np.any(upd.b_vector) and not np.any(upd.d_matrix)
    new = apply_update(st_, np.zeros(2), upd)
    assert not np.any(new.a_matrix[-1])


def test_mrt_beta_additivity():
    h = np.array([[math.sqrt(2), 0], [0, math.sqrt(3)]], dtype=complex)
    st_ = precode_direct(h, MRT)
    for _ in range(2):
        st_ = apply_update(st_, np.zeros(2), rank_one_update(st_, np.zeros(2)))
    assert st_.beta == pytest.approx(1 / math.sqrt(5), rel=1e-15)


def test_mrt_mu_bounds_and_zero_d():
    st_ = precode_direct(_rand_h(4, 3, 5), MRT)
    upd = rank_one_update(st_, _rand_h(1, 3, 6)[0])
    assert 0 < upd.mu <= 1
    assert not np.any(upd.d_matrix)


def test_rzf_3x2_update_matches_direct():
    h = _rand_h(3, 2, 21)
    g = _rand_h(1, 2, 22)[0]
    spec = PrecoderSpec.rzf(0.5)
    new = apply_update(precode_direct(h, spec), g, rank_one_update(precode_direct(h, spec), g))
    ref = _textbook(np.vstack([h, g]), spec)
    assert _rel(new.a_matrix, ref) < 1e-9


@pytest.mark.parametrize("spec", [ZF, PrecoderSpec.rzf(0.5), PrecoderSpec.rzf(1e-3)])
def test_boxed_delta_formula(spec):
    # evaluate Delta with the explicit E matrix and compare with the update
    h = _rand_h(5, 3, 30)
    g = _rand_h(1, 3, 31)[0]
    st_ = precode_direct(h, spec)
    j0 = h.T @ h.conj()
    ji = np.linalg.inv(j0 + spec.lam * np.eye(3))
    c = (g.conj() @ ji @ g).real
    r = ji @ g / math.sqrt(1 + c)
    nr2 = np.vdot(r, r).real
    e = (nr2 * np.eye(3) - ji) @ j0 - j0 @ ji
    delta = nr2 / (1 + c) + (r.conj() @ e @ r).real
    upd = rank_one_update(st_, g)
    assert upd.delta == pytest.approx(delta, rel=1e-10)
    assert np.allclose(upd.r_vector, r, rtol=1e-10)
    # normalization recursion against the stacked direct precoder
    direct = precode_direct(np.vstack([h, g]), spec)
    assert 1 / direct.beta**2 == pytest.approx(1 / st_.beta**2 + delta, rel=1e-10)
    if spec.kind is PrecoderKind.ZF:
        assert delta == pytest.approx(-nr2, rel=1e-10)


@pytest.mark.parametrize("spec", [ZF, PrecoderSpec.rzf(0.5)])
def test_d_matrix_sign(spec):
    h = _rand_h(6, 2, 40)
    g = _rand_h(1, 2, 41)[0]
    st_ = precode_direct(h, spec)
    upd = rank_one_update(st_, g)
    direct = precode_direct(np.vstack([h, g]), spec)
    d_true = direct.a_matrix[:-1] - math.sqrt(upd.mu) * st_.a_matrix
    assert np.linalg.norm(upd.d_matrix - d_true) < 1e-12
    assert np.allclose(upd.b_vector, direct.a_matrix[-1], atol=1e-13)
    expected = -st_.beta * math.sqrt(upd.mu) * np.outer(h.conj() @ upd.r_vector, upd.r_vector.conj())
    assert np.allclose(upd.d_matrix, expected, atol=1e-14)


def test_update_terms_cross_change_matches_direct():
    h = _rand_h(5, 3, 50)
    gs = _rand_h(7, 3, 51)
    for spec in (MRT, ZF, PrecoderSpec.rzf(0.2)):
        st_ = precode_direct(h, spec)
        terms = update_terms(st_, gs)
        cross = h.T @ st_.a_matrix
        for m, g in enumerate(gs):
            new = precode_direct(np.vstack([h, g]), spec)
            mu = (new.beta / st_.beta) ** 2
            assert terms.mu[m] == pytest.approx(mu, rel=1e-11)
            dcross = np.vstack([h, g]).T @ new.a_matrix - math.sqrt(mu) * cross
            assert np.allclose(terms.dcross[m], dcross, atol=1e-12)


def test_level_and_invariants_after_update():
    spec = PrecoderSpec.rzf(0.7)
    st_ = precode_direct(_rand_h(3, 2, 60), spec)
    g = _rand_h(1, 2, 61)[0]
    new = apply_update(st_, g, rank_one_update(st_, g))
    assert new.level == st_.level + 1
    assert abs(np.sum(np.abs(new.a_matrix) ** 2) - 1) < 1e-10
    j = new.h_matrix.T @ new.h_matrix.conj() + 0.7 * np.eye(2)
    assert np.allclose(new.j_inv @ j, np.eye(2), atol=1e-8)


def test_mrt_chain_of_five():
    rows = _rand_h(6, 3, 70)
    st_ = precode_direct(rows[:1], MRT)
    for i in range(1, 6):
        st_ = apply_update(st_, rows[i], rank_one_update(st_, rows[i]))
    assert _rel(st_.a_matrix, _textbook(rows, MRT)) < 1e-9


def test_refresh_bounds_long_chains():
    spec = PrecoderSpec.rzf(0.1)
    rows = _rand_h(2 * REFRESH_INTERVAL + 5, 2, 80)
    st_ = precode_direct(rows[:1], spec)
    for i in range(1, len(rows)):
        st_ = apply_update(st_, rows[i], rank_one_update(st_, rows[i]))
    assert st_.since_refresh == (len(rows) - 1) % REFRESH_INTERVAL
    ref = precode_direct(rows, spec)
    assert _rel(st_.a_matrix, ref.a_matrix) < 1e-9
    assert _rel(st_.j_inv, ref.j_inv) < 1e-9


def test_spec_mismatch_and_length_errors():
    st_ = precode_direct(_rand_h(3, 2, 1), MRT)
    with pytest.raises(InvalidArgumentError):
        rank_one_update(st_, np.ones(2), ZF)
    with pytest.raises(InvalidArgumentError):
        rank_one_update(st_, np.ones(3))


def test_lost_definiteness_is_reported():
    st_ = precode_direct(_rand_h(4, 2, 2), ZF)
    broken = dataclasses.replace(st_, j_inv=-np.eye(2, dtype=complex))
    with pytest.raises(NumericalDegeneracyError):
        rank_one_update(broken, np.ones(2))


def test_checked_update_flags_wrong_normalization():
    st_ = precode_direct(_rand_h(4, 2, 3), PrecoderSpec.rzf(0.5))
    g = _rand_h(1, 2, 4)[0]
    rank_one_update(st_, g, check=True)
    skewed = dataclasses.replace(st_, beta=st_.beta * 1.01)
    with pytest.raises(NumericalDegeneracyError):
        rank_one_update(skewed, g, check=True)


def test_psd_guard_holds():
    st_ = precode_direct(_rand_h(8, 4, 5), PrecoderSpec.rzf(1e-3))
    terms = update_terms(st_, _rand_h(50, 4, 6))
    assert np.all(terms.c >= -1e-12)


def test_with_spec_rebuilds():
    st_ = precode_direct(_rand_h(5, 2, 9), MRT)
    assert with_spec(st_, MRT) is st_
    assert with_spec(st_, ZF).spec == ZF


# ---------------------------------------------------------------------------
# properties


@pytest.mark.parametrize("seed", range(20))
def test_rzf_large_lambda_tends_to_mrt(seed):
    h = _rand_h(7, 3, seed)
    lam = 1e8 * np.trace(h.T @ h.conj()).real
    assert _rel(precode_matrix(h, PrecoderSpec.rzf(lam)), precode_matrix(h, MRT)) < 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_zf_zero_interference(seed):
    h = _rand_h(4 + seed % 5, 4, seed)
    assert np.max(link_stats(h, precode_matrix(h, ZF)).u) <= 1e-18


_SPECS = st.sampled_from([MRT, ZF, PrecoderSpec.rzf(0.1), PrecoderSpec.rzf(1.0), PrecoderSpec.rzf(25.0)])


@settings(max_examples=60, deadline=None)
@given(spec=_SPECS, k=st.integers(1, 4), length=st.integers(1, 16), seed=st.integers(0, 2**32))
def test_reconstruction_equivalence(spec, k, length, seed):
    rows = _rand_h(length + k, k, seed)
    start = k if spec.kind is PrecoderKind.ZF else 1
    st_ = precode_direct(rows[:start], spec)
    for ell in range(start + 1, start + length):
        g = rows[ell - 1]
        st_ = apply_update(st_, g, rank_one_update(st_, g))
        ref = precode_direct(rows[:ell], spec)
        assert _rel(st_.a_matrix, ref.a_matrix) < 1e-9
        assert abs(st_.beta - ref.beta) / ref.beta < 1e-9
        assert abs(np.sum(np.abs(st_.a_matrix) ** 2) - 1) < 1e-10
        if spec.uses_inverse:
            assert _rel(st_.j_inv, ref.j_inv) < 1e-9
            assert np.allclose(st_.j_zero, ref.j_zero, atol=1e-12)
