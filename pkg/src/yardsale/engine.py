"""Time evolution, seeded replicas, ensembles and saturation-time sweeps.

Draw order of one time step (each draw a uniform double from the replica's
generator):

1. ``i = floor(u * N)``
2. ``j = floor(u * (N - 1))``, shifted up by one if ``j >= i``
3. probabilistic-choice model only: strategy draws ``u_i``, ``u_j``
4. ``alpha``
5. winner coin, ``i`` wins when ``u < 0.5``
6. independent split mode only: a second ``alpha`` and coin for the TF part

Replica ``r`` of master seed ``s`` evolves with
``SFC64(SeedSequence(s, spawn_key=(r, 0)))``; its quenched parameters come
from ``SeedSequence(s, spawn_key=(r, 1))``. Any replica can therefore be
rerun on its own, in any order or thread.
"""

from __future__ import annotations

import functools
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from numba import njit

from .exchange import (
    CODE_CHOICE,
    CODE_SPLIT,
    RULE_SKIP,
    ModelSpec,
    RealizedModel,
    WealthVector,
    _choose_rule,
    _split_stake,
    _tf_stake,
    _transfer,
    _ys_stake,
    realize,
)

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 20
DEFAULT_TOLERANCE = 0.02


@dataclass(frozen=True)
class SimConfig:
    n_agents: int
    model: ModelSpec
    max_steps: int
    seed: int = 0
    ensemble_size: int = 1
    total_money: Optional[float] = None
    schedule: str = "geometric"
    growth: float = 1.05
    record_every: int = 1

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError("n_agents must be at least 2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.schedule not in ("geometric", "linear"):
            raise ValueError(f"schedule must be 'geometric' or 'linear', got {self.schedule!r}")
        if self.schedule == "geometric" and not self.growth > 1.0:
            raise ValueError("growth must exceed 1 for a geometric schedule")
        if self.total_money is None:
            object.__setattr__(self, "total_money", float(self.n_agents))
        elif not self.total_money > 0:
            raise ValueError("total_money must be positive")


@dataclass(frozen=True)
class RichestSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None  # standard error across replicas


@dataclass(frozen=True)
class SaturationResult:
    t_c: Optional[int]
    saturated_value: Optional[float]
    criterion_window: int
    criterion_tolerance: float

    @property
    def found(self) -> bool:
        return self.t_c is not None


@dataclass(frozen=True)
class ScalingFit:
    a: float
    b: float
    r_squared: float


@dataclass
class ReplicaResult:
    index: int
    times: np.ndarray
    max_wealth: np.ndarray
    final: np.ndarray


@dataclass
class EnsembleResult:
    """Per-replica records kept in replica-index order.

    Reductions are recomputed from that order, so merging partial ensembles
    gives the same numbers as one run over all replicas.
    """

    times: np.ndarray
    indices: np.ndarray
    max_wealth: np.ndarray  # (replicas, samples)
    finals: np.ndarray  # (replicas, N)

    @property
    def series(self) -> RichestSeries:
        r = self.max_wealth.shape[0]
        se = self.max_wealth.std(axis=0, ddof=1) / np.sqrt(r) if r > 1 else np.zeros(self.times.shape)
        return RichestSeries(self.times, self.max_wealth.mean(axis=0), se)

    @property
    def pooled(self) -> np.ndarray:
        return self.finals.ravel()

    def merge(self, other: "EnsembleResult") -> "EnsembleResult":
        if not np.array_equal(self.times, other.times):
            raise ValueError("cannot merge ensembles recorded on different schedules")
        idx = np.concatenate([self.indices, other.indices])
        if np.unique(idx).size != idx.size:
            raise ValueError("ensembles share replica indices")
        order = np.argsort(idx, kind="stable")
        return EnsembleResult(
            self.times,
            idx[order],
            np.concatenate([self.max_wealth, other.max_wealth])[order],
            np.concatenate([self.finals, other.finals])[order],
        )


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def dynamics_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(seed, spawn_key=(replica, 0))))


def disorder_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(seed, spawn_key=(replica, 1))))


# ---------------------------------------------------------------------------
# Compiled evolution loop
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _kernels(code: int, skip: bool, indep: bool):
    """Compile the step loops for one model variant.

    The variant flags are closure constants, so numba folds the dispatch on
    them away; a runtime switch costs a factor of several in throughput.
    """

    @njit(nogil=True, inline="always")
    def step(w, rng, is_tf, lam, ps):
        n = w.shape[0]
        i = int(rng.random() * n)
        j = int(rng.random() * (n - 1))
        if j >= i:
            j += 1
        ui = 0.0
        uj = 0.0
        if code == CODE_CHOICE:
            ui = rng.random()
            uj = rng.random()
        alpha = rng.random()
        if rng.random() < 0.5:
            win, lose = i, j
        else:
            win, lose = j, i
        if code == CODE_SPLIT:
            if indep:
                alpha2 = rng.random()
                if rng.random() < 0.5:
                    win2, lose2 = i, j
                else:
                    win2, lose2 = j, i
                # both parts are priced on the pre-trade wealths
                ys = _ys_stake(lam[i] * w[i], lam[j] * w[j], alpha)
                tf = alpha2 * (w[lose2] - lam[lose2] * w[lose2])
                w[win] += ys
                w[lose] -= ys
                w[win2] += tf
                w[lose2] -= tf
                if w[i] < 0.0 or w[j] < 0.0:
                    raise RuntimeError("split trade drove a wealth negative")
            else:
                _transfer(w, win, lose, _split_stake(w[i], w[j], lam[i], lam[j], alpha, lose == i))
            return
        rule = _choose_rule(code, is_tf, ps, skip, i, j, ui, uj)
        if rule == RULE_SKIP:
            return
        if rule == 0:
            stake = _ys_stake(w[i], w[j], alpha)
        else:
            stake = _tf_stake(w[lose], alpha)
        _transfer(w, win, lose, stake)

    @njit(nogil=True)
    def advance(w, rng, n_steps, is_tf, lam, ps):
        for _ in range(n_steps):
            step(w, rng, is_tf, lam, ps)

    @njit(nogil=True)
    def evolve(w, rng, record_times, out_max, is_tf, lam, ps):
        t = 0
        for r in range(record_times.shape[0]):
            target = record_times[r]
            while t < target:
                step(w, rng, is_tf, lam, ps)
                t += 1
            out_max[r] = w.max()

    return advance, evolve


def _compiled(rm: RealizedModel):
    return _kernels(rm.code, rm.skip_disagreement, rm.independent_split)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def init_population(config: SimConfig) -> WealthVector:
    """Equal split of the total money."""
    w = np.full(config.n_agents, config.total_money / config.n_agents)
    return WealthVector(w, float(config.total_money))


def step(state: WealthVector, model, rng: np.random.Generator, n_steps: int = 1) -> WealthVector:
    """Advance ``state`` by ``n_steps`` transactions.

    ``model`` may be a model definition with explicit parameters or a :class:`RealizedModel`.
    """
    rm = model if isinstance(model, RealizedModel) else realize(model, len(state))
    w = state.wealths.copy()
    advance, _ = _compiled(rm)
    advance(w, rng, int(n_steps), rm.is_tf, rm.lambdas, rm.ps)
    return WealthVector(w, state.total)


def record_times(config: SimConfig) -> np.ndarray:
    """Step counts at which the richest wealth is sampled, ending at max_steps."""
    T = config.max_steps
    if config.schedule == "linear":
        t = np.arange(config.record_every, T + 1, config.record_every, dtype=np.int64)
    else:
        k_max = int(np.ceil(np.log(T) / np.log(config.growth))) + 1
        t = np.unique(np.round(config.growth ** np.arange(k_max + 1)).astype(np.int64))
        t = t[(t >= 1) & (t <= T)]
    if t.size == 0 or t[-1] != T:
        t = np.append(t, np.int64(T))
    return t


def run_replica(config: SimConfig, replica: int = 0) -> ReplicaResult:
    """Run one replica; output depends only on ``(config, replica)``."""
    rm = realize(config.model, config.n_agents, disorder_rng(config.seed, replica))
    rng = dynamics_rng(config.seed, replica)
    w = init_population(config).wealths
    times = record_times(config)
    out = np.empty(times.shape[0])
    _, evolve = _compiled(rm)
    evolve(w, rng, times, out, rm.is_tf, rm.lambdas, rm.ps)
    return ReplicaResult(replica, times, out, w)


def run_ensemble(config: SimConfig, replicas: Optional[Iterable[int]] = None,
                 threads: int = 1) -> EnsembleResult:
    """Run independent replicas (default ``range(ensemble_size)``).

    With ``threads > 1`` replicas run concurrently; the compiled loop
    releases the GIL.
    """
    idx = sorted(range(config.ensemble_size) if replicas is None else set(replicas))
    if not idx:
        raise ValueError("no replicas requested")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: run_replica(config, r), idx))
    else:
        results = [run_replica(config, r) for r in idx]
    return EnsembleResult(
        results[0].times,
        np.array(idx, dtype=np.int64),
        np.stack([r.max_wealth for r in results]),
        np.stack([r.final for r in results]),
    )


def detect_saturation(series: RichestSeries, window: int = DEFAULT_WINDOW,
                      tolerance: float = DEFAULT_TOLERANCE, noise_z: float = 2.0) -> SaturationResult:
    """First time the smoothed series reaches its plateau.

    The plateau level is the mean of the last two windows. Sliding
    ``window``-sample means are compared with it; ``t_c`` is the first
    recorded time of the first window whose mean lies within
    ``tolerance * plateau``, the band widened by ``noise_z`` times the
    window's mean replica standard error when the series carries one.
    Successive samples share replicas and are strongly correlated, so the
    errors are not divided down by the window length.

    Not found when that window starts less than two windows before the end,
    or when the last two windows still differ by more than the band.
    """
    v = np.asarray(series.values, dtype=np.float64)
    t = np.asarray(series.times)
    if window < 1:
        raise ValueError("window must be positive")
    if v.size < 2 * window:
        raise ValueError(f"series of {v.size} samples is shorter than two windows ({2 * window})")
    kernel = np.ones(window) / window
    means = np.convolve(v, kernel, mode="valid")
    plateau = v[-2 * window:].mean()
    band = np.full(means.shape, tolerance * abs(plateau))
    if series.stderr is not None and noise_z > 0:
        se = np.asarray(series.stderr, dtype=np.float64)
        band += noise_z * np.convolve(se, kernel, mode="valid")
    missing = SaturationResult(None, None, window, tolerance)
    if abs(means[-1] - means[-1 - window]) > band[-1]:
        return missing
    inside = np.nonzero(np.abs(means - plateau) <= band)[0]
    if inside.size == 0 or inside[0] > v.size - 2 * window:
        return missing
    k = int(inside[0])
    return SaturationResult(int(t[k]), float(v[k:].mean()), window, tolerance)


def fit_scaling(n_values: Sequence[float], t_c: Sequence[float]) -> ScalingFit:
    """Least-squares line through ``log t_c = log a + b log N``."""
    x = np.log(np.asarray(n_values, dtype=np.float64))
    y = np.log(np.asarray(t_c, dtype=np.float64))
    if x.size < 3 or np.unique(x).size < 3:
        raise ValueError(f"need at least 3 distinct N values, got {x.size}")
    b, loga = np.polyfit(x, y, 1)
    resid = y - (loga + b * x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(np.exp(loga)), float(b), float(r2))


class InsufficientSaturation(ValueError):
    """Fewer than three N values saturated; ``result`` holds the per-N rows."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class SweepResult:
    n_values: list
    t_c: list  # None where no saturation was found
    saturated_values: list
    fit: Optional[ScalingFit] = None
    series: dict = field(default_factory=dict)


def sweep_tc(template: SimConfig, n_values: Sequence[int],
             max_steps: Optional[Mapping[int, int]] = None,
             window: int = DEFAULT_WINDOW, tolerance: float = DEFAULT_TOLERANCE,
             noise_z: float = 2.0, threads: int = 1) -> SweepResult:
    """Saturation time for each N, then the power-law fit ``t_c = a N^b``.

    ``max_steps`` optionally overrides the template's step budget per N. N
    values that never saturate are dropped with a warning.
    """
    ns = [int(n) for n in n_values]
    if len(set(ns)) < 3:
        raise ValueError(f"need at least 3 distinct N values, got {ns}")
    res = SweepResult([], [], [])
    for n in ns:
        steps = (max_steps or {}).get(n, template.max_steps)
        mean = template.total_money / template.n_agents
        cfg = replace(template, n_agents=n, max_steps=steps, total_money=mean * n)
        series = run_ensemble(cfg, threads=threads).series
        sat = detect_saturation(series, window, tolerance, noise_z)
        log.info("N=%d t_c=%s", n, sat.t_c)
        if not sat.found:
            warnings.warn(f"N={n} did not saturate within {steps} steps", RuntimeWarning, stacklevel=2)
        res.n_values.append(n)
        res.t_c.append(sat.t_c)
        res.saturated_values.append(sat.saturated_value)
        res.series[n] = series
    ok = [(n, t) for n, t in zip(res.n_values, res.t_c) if t is not None]
    if len({n for n, _ in ok}) < 3:
        raise InsufficientSaturation(f"only {len(ok)} N values saturated; need 3 for a scaling fit", res)
    res.fit = fit_scaling([n for n, _ in ok], [t for _, t in ok])
    return res
