"""Linear precoders (MRT, ZF, RZF) and their exact rank-one row updates.

Notation
--------
``H`` is the l x K sub-channel (one row per active antenna) and ``A`` the
l x K precoder, normalized so that ``trace(A A^H) = 1``.

Gram convention: this module stores ``J(lam) = H^T conj(H) + lam I``
(entry ``[i, j] = sum_n H[n, i] conj(H[n, j])``), i.e. the complex conjugate
of the usual ``H^H H``. With that choice appending the row ``g^T`` adds
``g g^H`` to ``J`` and every update formula below uses ``g`` unconjugated.

Precoders::

    MRT  A = beta conj(H),               beta = trace(J(0))^(-1/2)
    RZF  A = beta conj(H) J(lam)^-1,     beta = trace(J(lam)^-2 J(0))^(-1/2)
    ZF   RZF with lam = 0

Appending ``g^T`` gives ``A' = [sqrt(mu) A + D ; b^T]``. For RZF/ZF::

    c     = g^H J^-1 g
    r     = J^-1 g / sqrt(1 + c)
    E     = (|r|^2 I - J^-1) J(0) - J(0) J^-1
    Delta = |r|^2 / (1 + c) + r^H E r
    mu    = 1 / (1 + beta^2 Delta)
    D     = -beta sqrt(mu) conj(H) r r^H
    b     = beta sqrt(mu) / sqrt(1 + c) * conj(r)

and ``J'^-1 = J^-1 - r r^H``. Note the minus sign on ``D``: it follows from
``conj(H) J'^-1 = conj(H) J^-1 - conj(H) r r^H``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    DegenerateChannelError,
    InvalidArgumentError,
    NumericalDegeneracyError,
    RankDeficiencyError,
)

__all__ = [
    "PrecoderKind",
    "PrecoderSpec",
    "PrecoderState",
    "RankOneUpdate",
    "UpdateTerms",
    "precode_direct",
    "precode_matrix",
    "update_terms",
    "rank_one_update",
    "apply_update",
    "with_spec",
    "REFRESH_INTERVAL",
    "RANK_TOL",
]

#: Sherman-Morrison updates between two direct recomputations of J^-1.
REFRESH_INTERVAL = 64
#: ZF needs lambda_min(J(0)) > RANK_TOL * trace(J(0)) / K.
RANK_TOL = 1e-10
_PSD_TOL = 1e-12


class PrecoderKind(str, enum.Enum):
    MRT = "mrt"
    ZF = "zf"
    RZF = "rzf"


@dataclass(frozen=True)
class PrecoderSpec:
    """Which precoder to use; ``lam`` is the RZF regularizer."""

    kind: PrecoderKind
    lam: float = 0.0

    def __post_init__(self):
        kind = PrecoderKind(self.kind)
        object.__setattr__(self, "kind", kind)
        lam = float(self.lam)
        if kind is PrecoderKind.RZF:
            if not (lam > 0 and math.isfinite(lam)):
                raise InvalidArgumentError(f"RZF needs a finite regularizer lambda > 0, got {self.lam}")
        elif kind is PrecoderKind.ZF:
            if lam != 0.0:
                raise InvalidArgumentError("ZF fixes lambda = 0")
        else:
            lam = 0.0
        object.__setattr__(self, "lam", lam)

    @classmethod
    def mrt(cls) -> "PrecoderSpec":
        return cls(PrecoderKind.MRT)

    @classmethod
    def zf(cls) -> "PrecoderSpec":
        return cls(PrecoderKind.ZF)

    @classmethod
    def rzf(cls, lam: float) -> "PrecoderSpec":
        return cls(PrecoderKind.RZF, lam)

    @property
    def uses_inverse(self) -> bool:
        return self.kind is not PrecoderKind.MRT

    def __str__(self):
        if self.kind is PrecoderKind.RZF:
            return f"rzf(lambda={self.lam:g})"
        return self.kind.value


@dataclass
class PrecoderState:
    """Precoder of an l-antenna sub-channel plus the bookkeeping for updates.

    ``j_inv`` and ``j_zero`` are ``None`` for MRT.
    """

    spec: PrecoderSpec
    h_matrix: np.ndarray
    a_matrix: np.ndarray
    beta: float
    j_inv: Optional[np.ndarray] = None
    j_zero: Optional[np.ndarray] = None
    since_refresh: int = 0

    @property
    def level(self) -> int:
        return self.h_matrix.shape[0]

    @property
    def n_users(self) -> int:
        return self.h_matrix.shape[1]


@dataclass
class RankOneUpdate:
    """Quantities that turn the l-antenna precoder into the (l+1)-antenna one.

    ``r_vector`` and ``delta`` are ``None`` for MRT.
    """

    mu: float
    d_matrix: np.ndarray
    b_vector: np.ndarray
    r_vector: Optional[np.ndarray] = None
    delta: Optional[float] = None


class UpdateTerms(NamedTuple):
    """Rank-one terms for a batch of M candidate rows.

    ``dcross[m, k, j] = h_k^T d_j + g_k b_j`` (M x K x K) is the change of
    the cross gains beyond the ``sqrt(mu)`` scaling; it is all the candidate
    scan needs from ``D``. Rows flagged in ``degenerate`` have ``mu = nan``.
    """

    mu: np.ndarray
    b: np.ndarray
    dcross: np.ndarray
    r: Optional[np.ndarray]
    delta: np.ndarray
    c: Optional[np.ndarray]
    degenerate: np.ndarray


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _gram(h: np.ndarray) -> np.ndarray:
    return _hermitize(h.T @ h.conj())


def _check_rank(j_zero: np.ndarray, level: int) -> None:
    k = j_zero.shape[0]
    trace = float(np.trace(j_zero).real)
    lam_min = float(np.linalg.eigvalsh(j_zero)[0])
    if level < k or lam_min <= RANK_TOL * trace / k:
        raise RankDeficiencyError(level, k, f"smallest Gram eigenvalue {lam_min:.3e}")


def precode_matrix(h_matrix, spec: PrecoderSpec) -> np.ndarray:
    """Return only the normalized precoding matrix for ``h_matrix``."""
    return precode_direct(h_matrix, spec).a_matrix


def precode_direct(h_matrix, spec: PrecoderSpec) -> PrecoderState:
    """Build the precoder state for ``h_matrix`` from scratch.

    Raises
    ------
    DegenerateChannelError
        If ``h_matrix`` is identically zero.
    RankDeficiencyError
        For ZF when ``J(0)`` is not safely invertible (including ``l < K``).
    """
    h = np.array(h_matrix, dtype=np.complex128, ndmin=2)
    if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
        raise InvalidArgumentError(f"channel must be a non-empty l x K matrix, got shape {h.shape}")
    if not np.any(h):
        raise DegenerateChannelError("all-zero channel: the precoder normalization is undefined")
    if spec.kind is PrecoderKind.MRT:
        beta = 1.0 / math.sqrt(float(np.sum(h.real**2 + h.imag**2)))
        return PrecoderState(spec, h, beta * h.conj(), beta)

    k = h.shape[1]
    j_zero = _gram(h)
    if spec.kind is PrecoderKind.ZF:
        _check_rank(j_zero, h.shape[0])
    j_lam = j_zero + spec.lam * np.eye(k)
    j_inv = _hermitize(np.linalg.inv(j_lam))
    # trace(J^-2 J(0)) = ||conj(H) J^-1||_F^2; the Frobenius form avoids the
    # 1/lam^2 cancellation of the trace form when J(0) is rank deficient
    x = np.linalg.solve(j_lam.T, h.conj().T).T
    beta = 1.0 / math.sqrt(float(np.sum(x.real**2 + x.imag**2)))
    return PrecoderState(spec, h, beta * x, beta, j_inv, j_zero)


def update_terms(state: PrecoderState, g_rows) -> UpdateTerms:
    """Rank-one terms for appending each row of ``g_rows`` (M x K) to ``state``.

    Costs O(K) per candidate for MRT and O(K^2 + l K) for RZF/ZF, where two
    products with the l x K matrices keep the quadratic forms accurate.
    """
    g = np.atleast_2d(np.asarray(g_rows, dtype=np.complex128))
    beta = state.beta
    if state.spec.kind is PrecoderKind.MRT:
        norm2 = np.sum(g.real**2 + g.imag**2, axis=1)
        mu = 1.0 / (1.0 + beta**2 * norm2)
        b = (beta * np.sqrt(mu))[:, None] * g.conj()
        dcross = g[:, :, None] * b[:, None, :]
        return UpdateTerms(mu, b, dcross, None, norm2, None, np.zeros(len(g), dtype=bool))

    j_inv = state.j_inv
    x = g @ j_inv.T  # rows are J^-1 g
    c = np.einsum("mk,mk->m", g.conj(), x).real
    if np.any(c < -_PSD_TOL * (1.0 + np.abs(c))):
        raise NumericalDegeneracyError("g^H J^-1 g < 0: inverse Gram matrix lost positive semidefiniteness")
    c = np.maximum(c, 0.0)
    root = np.sqrt(1.0 + c)[:, None]
    r = x / root
    lam = state.spec.lam
    nr2 = np.sum(r.real**2 + r.imag**2, axis=1)
    # The quadratic forms inside r^H E r go through H rather than J(0):
    # r^H J(0) r = |conj(H) r|^2 and r^H J^-1 J(0) r = <conj(H) J^-1 r, conj(H) r>
    # with conj(H) J^-1 = A / beta. Forming them from J(0) or J(lam) - lam I
    # cancels catastrophically when lam is tiny and J(0) rank deficient.
    hr = r @ state.h_matrix.conj().T
    hjr = (r @ state.a_matrix.T) / beta
    r_j0_r = np.sum(hr.real**2 + hr.imag**2, axis=1)
    r_jinv_j0_r = np.einsum("ml,ml->m", hjr.conj(), hr).real
    # r^H E r = |r|^2 r^H J(0) r - r^H J^-1 J(0) r - r^H J(0) J^-1 r
    rer = nr2 * r_j0_r - 2.0 * r_jinv_j0_r
    delta = nr2 / (1.0 + c) + rer
    denom = 1.0 + beta**2 * delta
    degenerate = ~(denom > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(degenerate, np.nan, 1.0 / denom)
        scale = beta * np.sqrt(mu)
    b = (scale / np.sqrt(1.0 + c))[:, None] * r.conj()
    # H^T A = beta (I - lam J^-1), so the cross gains change by
    # beta sqrt(mu) lam r r^H; summing H^T D and g b^T instead cancels badly
    dcross = (lam * scale)[:, None, None] * r[:, :, None] * r.conj()[:, None, :]
    return UpdateTerms(mu, b, dcross, r, delta, c, degenerate)


def rank_one_update(state: PrecoderState, g, spec: Optional[PrecoderSpec] = None, check: bool = False) -> RankOneUpdate:
    """Rank-one update quantities for appending the row ``g`` to ``state``.

    With ``check=True`` the updated normalization is compared with a direct
    recomputation on the stacked channel and a mismatch raises
    :class:`NumericalDegeneracyError`.
    """
    if spec is not None and spec != state.spec:
        raise InvalidArgumentError(f"state was built for {state.spec}, not {spec}")
    g = np.asarray(g, dtype=np.complex128).reshape(-1)
    if g.shape[0] != state.n_users:
        raise InvalidArgumentError(f"g must have length {state.n_users}, got {g.shape[0]}")
    terms = update_terms(state, g[None, :])
    if terms.degenerate[0]:
        raise NumericalDegeneracyError(
            f"{state.spec} update at level {state.level}: 1 + beta^2 Delta <= 0; recompute the precoder directly"
        )
    mu = float(terms.mu[0])
    if terms.r is None:
        d = np.zeros_like(state.a_matrix)
        upd = RankOneUpdate(mu, d, terms.b[0])
    else:
        r = terms.r[0]
        d = -state.beta * math.sqrt(mu) * np.outer(state.h_matrix.conj() @ r, r.conj())
        upd = RankOneUpdate(mu, d, terms.b[0], r, float(terms.delta[0]))
    if check:
        direct = precode_direct(np.vstack([state.h_matrix, g]), state.spec)
        inc = 1.0 / (state.beta**2 * mu)
        ref = 1.0 / direct.beta**2
        if not math.isclose(inc, ref, rel_tol=1e-8, abs_tol=1e-12):
            raise NumericalDegeneracyError(
                f"rank-one normalization {inc!r} disagrees with direct recomputation {ref!r}"
            )
    return upd


def apply_update(state: PrecoderState, g, upd: RankOneUpdate) -> PrecoderState:
    """Return the state for ``[H; g^T]`` using the precomputed ``upd``.

    Every :data:`REFRESH_INTERVAL` updates the inverse Gram matrix is
    recomputed directly to bound drift.
    """
    g = np.asarray(g, dtype=np.complex128).reshape(-1)
    sqrt_mu = math.sqrt(upd.mu)
    h = np.vstack([state.h_matrix, g])
    a = np.vstack([sqrt_mu * state.a_matrix + upd.d_matrix, upd.b_vector])
    beta = state.beta * sqrt_mu
    if not state.spec.uses_inverse:
        return PrecoderState(state.spec, h, a, beta)
    j_zero = state.j_zero + np.outer(g, g.conj())
    since = state.since_refresh + 1
    if since >= REFRESH_INTERVAL:
        j_inv = _hermitize(np.linalg.inv(j_zero + state.spec.lam * np.eye(state.n_users)))
        since = 0
    else:
        j_inv = state.j_inv - np.outer(upd.r_vector, upd.r_vector.conj())
    return PrecoderState(state.spec, h, a, beta, j_inv, j_zero, since)


def with_spec(state: PrecoderState, spec: PrecoderSpec) -> PrecoderState:
    """Rebuild ``state`` directly under another precoder spec."""
    if spec == state.spec:
        return state
    return precode_direct(state.h_matrix, spec)
