"""SINR, rates, consumed power and the two optimization measures.

Units: the channel is noise-normalized and the transmit power ``p`` is in
Watts, so ``p = 1`` (0 dB) is a unit-SNR budget. Rates are bits/s/Hz and
energy efficiency is reported in bits/Joule under a 1 Hz bandwidth.

Every function that takes ``p`` also accepts an array of powers and then
returns one value per power (trailing axis for per-user quantities).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateMeasureError, InvalidArgumentError

__all__ = [
    "PowerModel",
    "MeasureKind",
    "Measure",
    "LinkStats",
    "link_stats",
    "cross_gains",
    "sinr",
    "rate",
    "consumed_power",
    "evaluate",
    "scalar_objective",
    "db_to_linear",
    "linear_to_db",
]

_LN2 = math.log(2.0)


def db_to_linear(x_db: float) -> float:
    """``x`` dB -> ``10 ** (x / 10)``."""
    return 10.0 ** (float(x_db) / 10.0)


def linear_to_db(x: float) -> float:
    """Inverse of :func:`db_to_linear`; ``0`` maps to ``-inf``."""
    x = float(x)
    if x < 0:
        raise InvalidArgumentError(f"cannot convert negative value {x} to dB")
    if x == 0:
        return -math.inf
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class PowerModel:
    """Total consumed power ``Q = xi p + l q_tx + K q_rx + (K + 1) q_sync``.

    Parameters
    ----------
    xi : float
        Inverse power-amplifier efficiency (>= 1).
    q_tx, q_rx : float
        Circuit power of one transmit / receive RF chain, Watts.
    q_sync : float
        Power of one local oscillator, Watts.
    """

    xi: float
    q_tx: float
    q_rx: float
    q_sync: float

    def __post_init__(self):
        for name in ("xi", "q_tx", "q_rx", "q_sync"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidArgumentError(f"power model field {name} must be finite")
            object.__setattr__(self, name, v)
        if self.xi < 1:
            raise InvalidArgumentError(f"xi must be >= 1, got {self.xi}")
        if min(self.q_tx, self.q_rx, self.q_sync) < 0:
            raise InvalidArgumentError("circuit powers must be nonnegative")

    @classmethod
    def reference(cls) -> "PowerModel":
        """Amplifier efficiency 0.4, 48 mW per RF chain, 62 mW per oscillator."""
        return cls(xi=1 / 0.4, q_tx=0.048, q_rx=0.048, q_sync=0.062)

    def fixed(self, ell: int, k_users: int) -> float:
        return ell * self.q_tx + k_users * self.q_rx + (k_users + 1) * self.q_sync


class MeasureKind(str, enum.Enum):
    SE = "se"
    EE = "ee"


@dataclass(frozen=True)
class Measure:
    """Weighted spectral efficiency or weighted energy efficiency."""

    kind: MeasureKind
    weights: tuple
    power_model: Optional[PowerModel] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasureKind(self.kind))
        w = tuple(float(x) for x in np.asarray(self.weights, dtype=float).ravel())
        if not w:
            raise InvalidArgumentError("weights must be non-empty")
        if not all(x > 0 and math.isfinite(x) for x in w):
            raise InvalidArgumentError(f"weights must be strictly positive and finite, got {w}")
        object.__setattr__(self, "weights", w)
        if self.kind is MeasureKind.EE and self.power_model is None:
            raise InvalidArgumentError("energy efficiency needs a power model")

    @classmethod
    def spectral(cls, n_users: int, weights: Optional[Sequence[float]] = None) -> "Measure":
        return cls(MeasureKind.SE, _weights(n_users, weights))

    @classmethod
    def energy(
        cls, n_users: int, power_model: Optional[PowerModel] = None, weights: Optional[Sequence[float]] = None
    ) -> "Measure":
        return cls(MeasureKind.EE, _weights(n_users, weights), power_model or PowerModel.reference())

    @property
    def n_users(self) -> int:
        return len(self.weights)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)


def _weights(n_users, weights):
    if weights is None:
        return (1.0,) * int(n_users)
    if len(weights) != n_users:
        raise InvalidArgumentError(f"expected {n_users} weights, got {len(weights)}")
    return tuple(weights)


@dataclass(frozen=True)
class LinkStats:
    """Per-user signal gains ``t`` and interference coefficients ``u``."""

    t: np.ndarray
    u: np.ndarray

    @property
    def n_users(self) -> int:
        return self.t.shape[0]


def cross_gains(h_matrix, a_matrix) -> np.ndarray:
    """K x K matrix with entry ``[k, j] = h_k^T a_j``."""
    h = np.asarray(h_matrix)
    a = np.asarray(a_matrix)
    if h.ndim != 2 or h.shape != a.shape:
        raise InvalidArgumentError(f"H and A must have the same l x K shape, got {h.shape} and {a.shape}")
    return h.T @ a


def stats_from_cross(cross: np.ndarray) -> LinkStats:
    power = cross.real**2 + cross.imag**2
    t = np.diagonal(power).copy()
    off = power.copy()
    np.fill_diagonal(off, 0.0)
    return LinkStats(t, off.sum(axis=1))


def link_stats(h_matrix, a_matrix) -> LinkStats:
    """``t_k = |h_k^T a_k|^2`` and ``u_k = sum_{j != k} |h_k^T a_j|^2``."""
    return stats_from_cross(cross_gains(h_matrix, a_matrix))


def _check_power(p):
    if isinstance(p, (float, int)):
        if not p >= 0:
            raise InvalidArgumentError("transmit power must be nonnegative")
        return np.float64(p)
    p = np.asarray(p, dtype=float)
    if not np.all(p >= 0):
        raise InvalidArgumentError("transmit power must be nonnegative")
    return p


def sinr(stats: LinkStats, p) -> np.ndarray:
    """``t_k p / (1 + u_k p)`` for every user (last axis)."""
    p = _check_power(p)[..., None]
    return stats.t * p / (1.0 + stats.u * p)


def rate(stats: LinkStats, p) -> np.ndarray:
    """``log2(1 + SINR_k)`` in bits/s/Hz."""
    return np.log1p(sinr(stats, p)) / _LN2


def consumed_power(ell: int, p, model: PowerModel, k_users: int):
    if ell < 0:
        raise InvalidArgumentError("ell must be nonnegative")
    p = _check_power(p)
    q = model.xi * p + model.fixed(ell, k_users)
    return float(q) if q.ndim == 0 else q


def evaluate(measure: Measure, stats: LinkStats, ell: int, p):
    """Measure value at ``ell`` active antennas and power ``p``.

    Spectral efficiency is ``mean_k(w_k R_k)``; energy efficiency divides it
    by :func:`consumed_power`.
    """
    if stats.n_users != measure.n_users:
        raise InvalidArgumentError(f"measure has {measure.n_users} weights but the link has {stats.n_users} users")
    se = rate(stats, p) @ measure.w / measure.n_users
    if measure.kind is MeasureKind.EE:
        q = np.asarray(consumed_power(ell, p, measure.power_model, measure.n_users))
        if np.any(q <= 0):
            raise DegenerateMeasureError("consumed power is zero; energy efficiency is undefined")
        se = se / q
    return float(se) if np.ndim(se) == 0 else se


def scalar_objective(measure: Measure, stats: LinkStats, ell: int):
    """Return ``f(p)`` equal to ``evaluate(measure, stats, ell, p)`` for scalar ``p``.

    Pure-Python loop over users without validation; meant for tight scalar
    searches where per-call numpy overhead dominates.
    """
    if stats.n_users != measure.n_users:
        raise InvalidArgumentError(f"measure has {measure.n_users} weights but the link has {stats.n_users} users")
    terms = list(zip(stats.t.tolist(), stats.u.tolist(), measure.weights))
    scale = 1.0 / (measure.n_users * _LN2)
    log1p = math.log1p
    if measure.kind is MeasureKind.SE:
        return lambda p: scale * sum(w * log1p(t * p / (1.0 + u * p)) for t, u, w in terms)
    model = measure.power_model
    fixed = model.fixed(ell, measure.n_users)
    xi = model.xi
    if fixed <= 0:
        raise DegenerateMeasureError("consumed power is zero; energy efficiency is undefined")
    return lambda p: scale * sum(w * log1p(t * p / (1.0 + u * p)) for t, u, w in terms) / (xi * p + fixed)
