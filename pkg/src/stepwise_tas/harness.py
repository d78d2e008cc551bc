"""Monte-Carlo sweeps over ``l_max`` for the stepwise algorithm and baselines.

Variants
--------
proposed      stepwise selection with the stopping rule
forced_lmax   stepwise selection forced to exactly ``l_max`` antennas
random_lmax   uniformly random ``l_max``-subset, power optimized
random_lstar  uniformly random subset of the size the proposed variant
              chose on the same channel realization

Trial ``t`` draws its channel from ``trial_seed(master_seed, t)`` and its
random subsets from ``stream(master_seed, t, variant, l_max)``; nothing
depends on the order in which trials run.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .channel import generate_rayleigh, stream, trial_seed
from .errors import InvalidArgumentError, TASError
from .metrics import Measure, MeasureKind, PowerModel, db_to_linear
from .oracle import random_tas
from .precoders import PrecoderKind, PrecoderSpec
from .stepwise import AlgoConfig, run

__all__ = [
    "VARIANTS",
    "ExperimentConfig",
    "TrialRecord",
    "SweepRow",
    "SweepResult",
    "TrialError",
    "run_trial",
    "run_sweep",
    "emit_csv",
    "read_csv",
    "emit_summary",
    "write_trials",
]

VARIANTS = ("proposed", "random_lmax", "random_lstar", "forced_lmax")
_VARIANT_KEY = {name: i for i, name in enumerate(VARIANTS)}
CSV_HEADER = ["variant", "l_max", "mean_measure", "stderr_measure", "mean_l_star", "mean_p_star", "trials"]


class TrialError(TASError, RuntimeError):
    """A trial failed; carries the trial index and its channel seed."""

    def __init__(self, trial: int, seed: int, cause: Exception):
        self.trial = trial
        self.seed = seed
        super().__init__(f"trial {trial} (channel seed {seed}) failed: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ExperimentConfig:
    n_antennas: int
    n_users: int
    trials: int
    l_max_sweep: tuple
    p_max: float
    precoder: PrecoderSpec
    measure: Measure
    master_seed: int = 0
    variants: tuple = VARIANTS
    workers: int = 1
    power_grid: int = 256
    refine_iters: int = 40

    def __post_init__(self):
        sweep = tuple(sorted({int(v) for v in self.l_max_sweep}))
        object.__setattr__(self, "l_max_sweep", sweep)
        variants = tuple(v for v in VARIANTS if v in set(self.variants))
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise InvalidArgumentError(f"unknown variants: {sorted(unknown)}")
        if not variants:
            raise InvalidArgumentError("at least one variant is required")
        object.__setattr__(self, "variants", variants)
        if self.trials < 1:
            raise InvalidArgumentError("trials must be >= 1")
        if not sweep:
            raise InvalidArgumentError("l_max_sweep must be non-empty")
        if sweep[0] < self.n_users or sweep[-1] > self.n_antennas:
            raise InvalidArgumentError(
                f"l_max values must lie in [K, N] = [{self.n_users}, {self.n_antennas}], got {list(sweep)}"
            )
        if self.measure.n_users != self.n_users:
            raise InvalidArgumentError("measure weights must have one entry per user")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")

    @classmethod
    def reference(cls, trials: int = 100, master_seed: int = 0, **overrides) -> "ExperimentConfig":
        """N=128, K=4, P_max = 0 dB = 1 W, MRT, energy efficiency, reference power model."""
        args = dict(
            n_antennas=128,
            n_users=4,
            trials=trials,
            l_max_sweep=(4, 8, 16, 24, 32, 64, 128),
            p_max=1.0,
            precoder=PrecoderSpec.mrt(),
            measure=Measure.energy(4, PowerModel.reference()),
            master_seed=master_seed,
        )
        args.update(overrides)
        return cls(**args)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build from the JSON config layout documented in the README."""
        if not isinstance(doc, dict):
            raise InvalidArgumentError("config must be a JSON object")

        def need(key):
            if key not in doc:
                raise InvalidArgumentError(f"config field '{key}' is required")
            return doc[key]

        try:
            k = int(need("n_users"))
            if "p_max" in doc and "p_max_db" in doc:
                raise InvalidArgumentError("give either 'p_max' or 'p_max_db', not both")
            if "p_max_db" in doc:
                p_max = db_to_linear(float(doc["p_max_db"]))
            else:
                p_max = float(doc.get("p_max", 1.0))
            prec = doc.get("precoder", "mrt")
            if isinstance(prec, dict):
                kind, lam = prec.get("kind", "mrt"), prec.get("lambda", 0.0)
            else:
                kind, lam = prec, doc.get("lambda", 0.0)
            try:
                spec = PrecoderSpec(PrecoderKind(str(kind).lower()), float(lam))
            except ValueError as exc:
                raise InvalidArgumentError(f"config field 'precoder': {exc}") from None
            weights = doc.get("weights")
            mkind = str(doc.get("measure", "ee")).lower()
            if mkind == "ee":
                pm = doc.get("power_model", {})
                model = PowerModel(
                    xi=float(pm.get("xi", 2.5)),
                    q_tx=float(pm.get("q_tx", 0.048)),
                    q_rx=float(pm.get("q_rx", 0.048)),
                    q_sync=float(pm.get("q_sync", 0.062)),
                )
                measure = Measure.energy(k, model, weights)
            elif mkind == "se":
                measure = Measure.spectral(k, weights)
            else:
                raise InvalidArgumentError(f"config field 'measure': expected 'se' or 'ee', got {mkind!r}")
            return cls(
                n_antennas=int(need("n_antennas")),
                n_users=k,
                trials=int(doc.get("trials", 100)),
                l_max_sweep=tuple(need("l_max_sweep")),
                p_max=p_max,
                precoder=spec,
                measure=measure,
                master_seed=int(doc.get("master_seed", 0)),
                variants=tuple(doc.get("variants", VARIANTS)),
                workers=int(doc.get("workers", 1)),
                power_grid=int(doc.get("power_grid", 256)),
                refine_iters=int(doc.get("refine_iters", 40)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"invalid config value: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(doc)

    def algo(self, l_max: int, force_full: bool = False) -> AlgoConfig:
        return AlgoConfig(
            l_max=l_max,
            p_max=self.p_max,
            precoder=self.precoder,
            measure=self.measure,
            force_full=force_full,
            power_grid=self.power_grid,
            refine_iters=self.refine_iters,
        )


@dataclass
class TrialRecord:
    trial: int
    seed: int
    variant: str
    l_max: int
    value: float
    l_star: int
    p_star: float
    selected: List[int]


@dataclass
class SweepRow:
    variant: str
    l_max: int
    mean_measure: float
    stderr_measure: float
    mean_l_star: float
    mean_p_star: float
    trials: int


@dataclass
class SweepResult:
    rows: List[SweepRow]
    records: List[TrialRecord] = field(default_factory=list)

    def row(self, variant: str, l_max: int) -> SweepRow:
        for r in self.rows:
            if r.variant == variant and r.l_max == l_max:
                return r
        raise KeyError((variant, l_max))

    def series(self, variant: str, attr: str = "mean_measure") -> Dict[int, float]:
        return {r.l_max: getattr(r, attr) for r in self.rows if r.variant == variant}

    def trial_values(self, variant: str, l_max: int) -> List[TrialRecord]:
        return sorted((r for r in self.records if r.variant == variant and r.l_max == l_max), key=lambda r: r.trial)


def run_trial(config: ExperimentConfig, trial: int) -> List[TrialRecord]:
    """All requested variants at every sweep point for one channel realization."""
    seed = trial_seed(config.master_seed, trial)
    try:
        channel = generate_rayleigh(config.n_antennas, config.n_users, seed)
        out: List[TrialRecord] = []
        want = set(config.variants)
        for l_max in config.l_max_sweep:
            proposed = None
            if want & {"proposed", "random_lstar"}:
                proposed = run(channel, config.algo(l_max))
                if "proposed" in want:
                    out.append(TrialRecord(trial, seed, "proposed", l_max, proposed.measure_value,
                                           proposed.l_star, proposed.p_star, sorted(proposed.selected)))
            if "forced_lmax" in want:
                forced = run(channel, config.algo(l_max, force_full=True))
                out.append(TrialRecord(trial, seed, "forced_lmax", l_max, forced.measure_value,
                                       forced.l_star, forced.p_star, sorted(forced.selected)))
            for variant in ("random_lmax", "random_lstar"):
                if variant not in want:
                    continue
                size = l_max if variant == "random_lmax" else proposed.l_star
                rng = stream(config.master_seed, trial, _VARIANT_KEY[variant], l_max)
                base = random_tas(channel, size, config.precoder, config.measure, config.p_max, rng,
                                  config.power_grid, config.refine_iters)
                out.append(TrialRecord(trial, seed, variant, l_max, base.value, size, base.power, base.subset))
        return out
    except TASError as exc:
        raise TrialError(trial, seed, exc) from exc
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise TrialError(trial, seed, exc) from exc


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _stderr(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    m = _mean(values)
    var = math.fsum((v - m) ** 2 for v in values) / (n - 1)
    return math.sqrt(var / n)


def _aggregate(config: ExperimentConfig, records: List[TrialRecord]) -> List[SweepRow]:
    groups: Dict[tuple, List[TrialRecord]] = {}
    for rec in records:
        groups.setdefault((rec.variant, rec.l_max), []).append(rec)
    rows = []
    for variant in sorted(config.variants):
        for l_max in config.l_max_sweep:
            recs = sorted(groups.get((variant, l_max), []), key=lambda r: r.trial)
            values = [r.value for r in recs]
            rows.append(SweepRow(
                variant=variant,
                l_max=l_max,
                mean_measure=_mean(values),
                stderr_measure=_stderr(values),
                mean_l_star=_mean([r.l_star for r in recs]),
                mean_p_star=_mean([r.p_star for r in recs]),
                trials=len(recs),
            ))
    return rows


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Run every trial (optionally in worker processes) and aggregate by trial index."""
    trials = range(config.trials)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_trial = list(pool.map(run_trial, [config] * config.trials, trials))
    else:
        per_trial = [run_trial(config, t) for t in trials]
    records = [rec for recs in per_trial for rec in recs]
    return SweepResult(_aggregate(config, records), records)


def emit_csv(result: SweepResult, path=None) -> str:
    """Write the sweep table as CSV (to ``path`` if given) and return the text.

    Floats are written with ``repr`` so :func:`read_csv` recovers them exactly.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(result.rows, key=lambda r: (r.variant, r.l_max)):
        writer.writerow([r.variant, r.l_max, repr(r.mean_measure), repr(r.stderr_measure),
                         repr(r.mean_l_star), repr(r.mean_p_star), r.trials])
    text = buf.getvalue()
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return text


def read_csv(path_or_text) -> SweepResult:
    text = path_or_text
    if not isinstance(text, str) or "\n" not in text:
        text = Path(path_or_text).read_text()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise InvalidArgumentError(f"unexpected CSV header {reader.fieldnames}")
    rows = [
        SweepRow(d["variant"], int(d["l_max"]), float(d["mean_measure"]), float(d["stderr_measure"]),
                 float(d["mean_l_star"]), float(d["mean_p_star"]), int(d["trials"]))
        for d in reader
    ]
    return SweepResult(rows)


def emit_summary(result: SweepResult, measure_kind: Optional[MeasureKind] = None) -> str:
    """Fixed-width text table of the sweep."""
    unit = {MeasureKind.EE: "bits/J", MeasureKind.SE: "bit/s/Hz"}.get(measure_kind, "")
    head = f"{'variant':<14}{'l_max':>6}{'mean':>12}{'stderr':>11}{'E{L*}':>9}{'E{P*} [W]':>11}{'trials':>8}"
    lines = [head + (f"   measure in {unit}" if unit else ""), "-" * len(head)]
    for r in sorted(result.rows, key=lambda r: (r.variant, r.l_max)):
        lines.append(
            f"{r.variant:<14}{r.l_max:>6}{r.mean_measure:>12.6f}{r.stderr_measure:>11.6f}"
            f"{r.mean_l_star:>9.2f}{r.mean_p_star:>11.5f}{r.trials:>8}"
        )
    return "\n".join(lines) + "\n"


def write_trials(result: SweepResult, path) -> None:
    """Per-trial JSONL dump, ordered by trial, variant and l_max."""
    recs = sorted(result.records, key=lambda r: (r.trial, r.variant, r.l_max))
    with open(path, "w") as fh:
        for rec in recs:
            fh.write(json.dumps(asdict(rec)) + "\n")
