"""Canvas-level simulation of screening: does add-then-remove beat add-only?

The simulator abstracts a canvas as an area budget filled with (area,
confidence) draws. The add-only form fills for T iterations and reports
G1 = phi + N unscreened. The add-then-remove form interleaves a removal
of every draw below eta, refilling the freed budget next iteration, and
reports G2 the same way. Both forms of a trial consume an identical draw
sequence, so with eta = 0 they produce bitwise-identical canvases.

Alongside the Monte Carlo estimate, removal events are checked with exact
rational arithmetic: for a threshold partition, the mean confidence of
the kept draws can never fall below the mean over all draws. The same
module carries the two-pass overlap bound (an object overlapped in two
passes is more likely to be removed in at least one than to persist, as
long as the second-pass removal probability is at least one half),
evaluated exactly on a rational grid and, optionally, by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ConfigError

# One-sided 99% normal quantile, used for the lower confidence bound of
# the paired G2 - G1 difference.
Z_99 = 2.3263478740408408


def make_sampler(spec: str) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Sampler from a spec string.

    uniform:a,b | beta:a,b | twopoint:p,lo,hi | constant:v
    """
    name, _, arg_text = spec.partition(":")
    try:
        args = [float(a) for a in arg_text.split(",")] if arg_text else []
    except ValueError as exc:
        raise ConfigError(f"bad distribution arguments in {spec!r}") from exc
    if name == "uniform" and len(args) == 2 and args[0] < args[1]:
        lo, hi = args
        return lambda rng, n: rng.uniform(lo, hi, n)
    if name == "beta" and len(args) == 2 and args[0] > 0 and args[1] > 0:
        a, b = args
        return lambda rng, n: rng.beta(a, b, n)
    if name == "twopoint" and len(args) == 3 and 0 <= args[0] <= 1:
        p, lo, hi = args
        return lambda rng, n: np.where(rng.random(n) < p, lo, hi)
    if name == "constant" and len(args) == 1 and args[0] > 0:
        value = args[0]
        return lambda rng, n: np.full(n, value)
    raise ConfigError(f"unknown or malformed distribution spec {spec!r}")


@dataclass
class SimConfig:
    trials: int = 1000
    iterations: int = 10
    eta: float = 0.2
    capacity: float = 50.0
    confidence: str = "uniform:0,1"
    area: str = "constant:1"
    seed: int = 0
    replacement: bool = True
    pool_size: int | None = None  # finite-pool mode when replacement=False

    def validate(self):
        if self.trials < 1 or self.iterations < 1:
            raise ConfigError("trials and iterations must be >= 1")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")
        if self.capacity <= 0:
            raise ConfigError(f"capacity must be > 0, got {self.capacity}")
        if not self.replacement and (self.pool_size is None or self.pool_size < 1):
            raise ConfigError("finite-pool mode needs pool_size >= 1")


class DrawStream:
    """Deterministic (area, confidence) sequence for one trial.

    With replacement the stream is unbounded; in finite-pool mode a fixed
    pool is pregenerated and dealt once, after which next() returns None.
    """

    _CHUNK = 256

    def __init__(self, rng: np.random.Generator, config: SimConfig):
        self._rng = rng
        self._area = make_sampler(config.area)
        self._conf = make_sampler(config.confidence)
        self._finite = not config.replacement
        self._areas = np.empty(0)
        self._confs = np.empty(0)
        self._index = 0
        if self._finite:
            self._areas = self._area(rng, config.pool_size)
            self._confs = self._conf(rng, config.pool_size)

    def next(self) -> tuple[float, float] | None:
        if self._index >= len(self._areas):
            if self._finite:
                return None
            self._areas = self._area(self._rng, self._CHUNK)
            self._confs = self._conf(self._rng, self._CHUNK)
            self._index = 0
        pair = (float(self._areas[self._index]), float(self._confs[self._index]))
        self._index += 1
        return pair


@dataclass(frozen=True)
class RemovalEvent:
    """One screening step of one trial, with exact rational means."""

    phi_before: float
    phi_after: float
    removed: int
    kept: int
    mean_all: Fraction
    mean_kept: Fraction | None  # None when the canvas emptied


@dataclass
class TrialOutcome:
    g: float
    phi: float
    count: int
    events: list[RemovalEvent] = field(default_factory=list)


def _phi(areas: list[float], confs: list[float]) -> float:
    if not areas:
        return 0.0
    return math.fsum(a * q for a, q in zip(areas, confs)) / math.fsum(areas)


def _fill(stream: DrawStream, areas: list[float], confs: list[float],
          capacity: float):
    """Add draws until one would overflow the budget (that draw is spent
    and discarded, ending the pass) or the stream runs dry."""
    total = math.fsum(areas)
    while True:
        pair = stream.next()
        if pair is None:
            return
        area, conf = pair
        if total + area > capacity:
            return
        areas.append(area)
        confs.append(conf)
        total += area


def run_trial(config: SimConfig, trial: int, remove: bool) -> TrialOutcome:
    """One simulated canvas. The same (config.seed, trial) pair always
    yields the same draw stream, whichever form consumes it."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                       spawn_key=(trial,)))
    stream = DrawStream(rng, config)
    areas: list[float] = []
    confs: list[float] = []
    outcome = TrialOutcome(g=0.0, phi=0.0, count=0)
    for _ in range(config.iterations):
        _fill(stream, areas, confs, config.capacity)
        if remove:
            phi_before = _phi(areas, confs)
            kept = [(a, q) for a, q in zip(areas, confs) if q >= config.eta]
            removed = len(areas) - len(kept)
            if removed:
                exact = [Fraction(q) for q in confs]
                mean_all = sum(exact) / len(exact)
                kept_exact = [f for f, q in zip(exact, confs) if q >= config.eta]
                mean_kept = (sum(kept_exact) / len(kept_exact)
                             if kept_exact else None)
                areas = [a for a, _ in kept]
                confs = [q for _, q in kept]
                outcome.events.append(RemovalEvent(
                    phi_before=phi_before, phi_after=_phi(areas, confs),
                    removed=removed, kept=len(kept),
                    mean_all=mean_all, mean_kept=mean_kept))
    outcome.phi = _phi(areas, confs)
    outcome.count = len(areas)
    outcome.g = outcome.phi + outcome.count
    return outcome


@dataclass
class ComparisonReport:
    config: SimConfig
    mean_g1: float
    mean_g2: float
    diff_mean: float
    diff_std: float
    diff_lcb99: float
    frac_g2_ge_g1: float
    monotonic_trials: int
    removal_events: int
    partition_violations: int
    g1: np.ndarray
    g2: np.ndarray

    @property
    def monotonic_all(self) -> bool:
        return self.monotonic_trials == self.config.trials

    @property
    def partition_ok(self) -> bool:
        return self.partition_violations == 0


def compare_forms(config: SimConfig) -> ComparisonReport:
    """Run both forms over all trials and aggregate the comparison."""
    config.validate()
    g1 = np.empty(config.trials)
    g2 = np.empty(config.trials)
    monotonic_trials = 0
    events = 0
    violations = 0
    for trial in range(config.trials):
        add_only = run_trial(config, trial, remove=False)
        add_remove = run_trial(config, trial, remove=True)
        g1[trial] = add_only.g
        g2[trial] = add_remove.g
        monotone = all(ev.phi_after >= ev.phi_before for ev in add_remove.events)
        if monotone:
            monotonic_trials += 1
        for ev in add_remove.events:
            events += 1
            if ev.mean_kept is not None and ev.mean_kept < ev.mean_all:
                violations += 1
    diff = g2 - g1
    diff_mean = float(np.mean(diff))
    diff_std = float(np.std(diff, ddof=1)) if config.trials > 1 else 0.0
    lcb = diff_mean - Z_99 * diff_std / math.sqrt(config.trials)
    return ComparisonReport(
        config=config, mean_g1=float(np.mean(g1)), mean_g2=float(np.mean(g2)),
        diff_mean=diff_mean, diff_std=diff_std, diff_lcb99=lcb,
        frac_g2_ge_g1=float(np.mean(diff >= 0.0)),
        monotonic_trials=monotonic_trials, removal_events=events,
        partition_violations=violations, g1=g1, g2=g2)


@dataclass(frozen=True)
class OverlapCell:
    p1: Fraction
    p2: Fraction
    removed_either: Fraction
    persists_both: Fraction

    @property
    def holds(self) -> bool:
        return self.removed_either >= self.persists_both


def overlap_bound_exact(p1: Fraction, p2: Fraction) -> OverlapCell:
    """Exact comparison of P(removed in some pass) = p1 + (1 - p1) p2
    against P(survives both) = (1 - p1)(1 - p2)."""
    return OverlapCell(
        p1=p1, p2=p2,
        removed_either=p1 + (1 - p1) * p2,
        persists_both=(1 - p1) * (1 - p2))


def overlap_grid(p1_step: Fraction = Fraction(1, 10),
                 p2_start: Fraction = Fraction(1, 2),
                 p2_step: Fraction = Fraction(1, 20)) -> list[OverlapCell]:
    """The full rational grid p1 in [0, 1], p2 in [p2_start, 1]."""
    cells = []
    p1 = Fraction(0)
    while p1 <= 1:
        p2 = p2_start
        while p2 <= 1:
            cells.append(overlap_bound_exact(p1, p2))
            p2 += p2_step
        p1 += p1_step
    return cells


def overlap_bound_sampled(p1: float, p2: float, samples: int,
                          seed: int = 0) -> tuple[float, float]:
    """Monte Carlo companion to the exact bound: empirical frequencies of
    (removed in some pass, survives both)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    first = rng.random(samples) < p1
    second = rng.random(samples) < p2
    removed = first | (~first & second)
    persists = ~first & ~second
    return float(np.mean(removed)), float(np.mean(persists))
