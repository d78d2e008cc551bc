"""Channel matrices: i.i.d. Rayleigh generation and JSON persistence.

Random streams come from numpy's ``Philox`` bit generator (a counter-based
PRNG) keyed through ``SeedSequence``. Per-trial seeds are derived from a
master seed and the trial index alone, so any trial can be regenerated
without replaying the ones before it.

Circularly symmetric Gaussian entries are formed as ``(x + iy) / sqrt(2)``
with ``x, y`` drawn by ``Generator.standard_normal`` (ziggurat transform).
Streams are bit-exact within one numpy version only.

Antenna indices are 1-based at every public boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChannelParseError, InvalidArgumentError

__all__ = [
    "ChannelMatrix",
    "generate_rayleigh",
    "trial_seed",
    "stream",
    "row",
    "save_channel",
    "load_channel",
]

_SEED_MAX = 2**64 - 1


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """N x K complex channel between the antenna array and the users.

    The gains are normalized so the noise at every user has unit variance.
    The array is made read-only on construction so instances can be shared
    between workers.
    """

    gains: np.ndarray
    seed: int = 0
    label: str = ""
    distribution: str = field(default="given")

    def __post_init__(self):
        g = np.array(self.gains, dtype=np.complex128, copy=True)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise InvalidArgumentError(f"gains must be a non-empty 2-D matrix, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidArgumentError("gains contain non-finite entries")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @property
    def n_antennas(self) -> int:
        return self.gains.shape[0]

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ChannelMatrix):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.label == other.label
            and self.gains.shape == other.gains.shape
            and np.array_equal(self.gains, other.gains)
        )

    def rows(self, indices) -> np.ndarray:
        """Stack the rows for the given 1-based antenna indices."""
        idx = np.asarray(list(indices), dtype=int)
        if idx.size and (idx.min() < 1 or idx.max() > self.n_antennas):
            raise InvalidArgumentError(f"antenna indices must lie in [1, {self.n_antennas}]")
        return self.gains[idx - 1]


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= _SEED_MAX:
        raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def trial_seed(master_seed: int, trial: int) -> int:
    """Derive the 64-bit channel seed of Monte-Carlo trial ``trial``."""
    ss = np.random.SeedSequence(_check_seed(master_seed), spawn_key=(int(trial),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_rayleigh(n_antennas: int, n_users: int, seed: int) -> ChannelMatrix:
    """Draw an N x K matrix with i.i.d. CN(0, 1) entries.

    Parameters
    ----------
    n_antennas, n_users : int
        Matrix dimensions, both at least 1.
    seed : int
        Unsigned 64-bit seed; the result is a pure function of
        ``(n_antennas, n_users, seed)``.
    """
    if int(n_antennas) < 1 or int(n_users) < 1:
        raise InvalidArgumentError(
            f"dimensions must be positive, got n_antennas={n_antennas}, n_users={n_users}"
        )
    rng = stream(seed)
    shape = (int(n_antennas), int(n_users))
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    gains = (re + 1j * im) / math.sqrt(2.0)
    return ChannelMatrix(gains, seed=int(seed), label=f"rayleigh-{n_antennas}x{n_users}", distribution="rayleigh")


def row(channel: ChannelMatrix, n: int) -> np.ndarray:
    """Return g(n), the n-th row of G (1-based) as a length-K vector."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= channel.n_antennas:
        raise InvalidArgumentError(f"antenna index must be in [1, {channel.n_antennas}], got {n!r}")
    return channel.gains[int(n) - 1].copy()


def save_channel(channel: ChannelMatrix, path) -> None:
    """Write ``channel`` as JSON; floats are stored with round-trip precision."""
    doc = {
        "n_antennas": channel.n_antennas,
        "n_users": channel.n_users,
        "gains_re": channel.gains.real.tolist(),
        "gains_im": channel.gains.imag.tolist(),
        "seed": channel.seed,
        "label": channel.label,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _parse_matrix(doc: dict, key: str, n: int, k: int) -> np.ndarray:
    rows = doc.get(key)
    if not isinstance(rows, list):
        raise ChannelParseError(f"field '{key}': expected a list of {n} rows")
    if len(rows) != n:
        raise ChannelParseError(f"field '{key}': expected {n} rows, got {len(rows)}")
    for i, r in enumerate(rows, start=1):
        if not isinstance(r, list):
            raise ChannelParseError(f"field '{key}' row {i}: expected a list")
        if len(r) != k:
            raise ChannelParseError(f"field '{key}' row {i}: expected {k} columns, got {len(r)}")
        for j, v in enumerate(r, start=1):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ChannelParseError(f"field '{key}' row {i} column {j}: expected a number, got {v!r}")
    return np.array(rows, dtype=np.float64)


def load_channel(path) -> ChannelMatrix:
    """Read a channel written by :func:`save_channel`.

    Raises
    ------
    ChannelParseError
        On empty files, invalid JSON (with line/column) or any field that
        does not match the documented layout.
    """
    text = Path(path).read_text()
    if not text.strip():
        raise ChannelParseError(f"{path}: empty channel file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ChannelParseError(f"{path}: top-level value must be an object")
    for key in ("n_antennas", "n_users"):
        v = doc.get(key)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ChannelParseError(f"{path}: field '{key}' must be a positive integer, got {v!r}")
    n, k = doc["n_antennas"], doc["n_users"]
    try:
        re = _parse_matrix(doc, "gains_re", n, k)
        im = _parse_matrix(doc, "gains_im", n, k)
    except ChannelParseError as exc:
        raise ChannelParseError(f"{path}: {exc}") from None
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= _SEED_MAX:
        raise ChannelParseError(f"{path}: field 'seed' must be an unsigned 64-bit integer")
    label = doc.get("label", "")
    if not isinstance(label, str):
        raise ChannelParseError(f"{path}: field 'label' must be a string")
    gains = np.empty((n, k), dtype=np.complex128)
    gains.real = re
    gains.imag = im
    if not np.all(np.isfinite(gains)):
        raise ChannelParseError(f"{path}: gains contain non-finite values")
    return ChannelMatrix(gains, seed=seed, label=label, distribution="file")
