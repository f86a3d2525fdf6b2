"""Experiments: fraction sweeps, adaptive runs, critical fractions, parameter sweeps.

Each (grid point, replica) pair draws from its own rng stream keyed on the
master seed, so results do not depend on worker count or completion order.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import (
    Category,
    InvalidParam,
    Params,
    RunResult,
    TaxsimError,
    initial_population,
    rng_stream,
    validate,
)
from .network import SocialGraph, Topology, build_graph
from .simulation import simulate

log = logging.getLogger(__name__)

METRICS = RunResult.COLUMNS

# stream-key tags, one per experiment kind
_FRACTION_SWEEP, _CRITICAL, _PARAM_SWEEP, _SINGLE_RUN = 1, 2, 3, 4

AXES = ("tax_d", "penalty_h", "audit_p")
DEFAULT_GRIDS = {
    "tax_d": [float(x) for x in range(1, 11)],
    "penalty_h": [float(x) for x in range(1, 11)],
    "audit_p": [round(0.1 * k, 10) for k in range(11)],
}


class EmptyCategory(TaxsimError):
    pass


class MixedNotClassifiable(TaxsimError, ValueError):
    pass


class NoFlipFound(TaxsimError):
    pass


class CipollaLabel(str, enum.Enum):
    SMART = "Smart"
    NAIVE = "Naive"
    BANDIT = "Bandit"
    STUPID = "Stupid"


@dataclass
class SweepCurve:
    """Replica statistics of the final state as a function of one variable.

    ``mean``/``sd``/``count`` map each name in ``METRICS`` to an array over the
    grid; ``count`` is the number of replicas in which the metric was defined
    (a category average is undefined when the category is empty).
    """

    swept_variable: str
    grid: np.ndarray
    n_replicas: int
    mean: dict[str, np.ndarray]
    sd: dict[str, np.ndarray]
    count: dict[str, np.ndarray]
    offset: float = 0.0
    skipped: list[tuple[float, str]] = field(default_factory=list)
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def se(self, metric: str) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sd[metric] / np.sqrt(self.count[metric])

    def at(self, value: float) -> int:
        hits = np.flatnonzero(np.isclose(self.grid, value))
        if not len(hits):
            raise KeyError(f"{value} not on the {self.swept_variable} grid")
        return int(hits[0])


@dataclass(frozen=True)
class Threshold:
    value: float
    half_width: float


@dataclass
class ThresholdReport:
    f_th: Threshold | None
    a: Threshold | None
    b: Threshold | None
    c: Threshold | None

    def items(self) -> list[tuple[str, Threshold | None]]:
        return [("f_th", self.f_th), ("a", self.a), ("b", self.b), ("c", self.c)]


@dataclass
class CriticalFraction:
    value: float
    half_width: float
    table: list[dict]
    flips: int
    imitation_factor_IF: float
    capital_factor_CF: float
    init_believeness: str


def _aggregate(finals: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(replicas, 7) -> mean, sd (ddof=1, 0 for a single value), count; NaN-aware."""
    count = np.sum(~np.isnan(finals), axis=0)
    mean = np.full(finals.shape[1], np.nan)
    sd = np.full(finals.shape[1], np.nan)
    for k in range(finals.shape[1]):
        col = finals[:, k][~np.isnan(finals[:, k])]
        if len(col):
            mean[k] = col.mean()
            sd[k] = col.std(ddof=1) if len(col) > 1 else 0.0
    return mean, sd, count


def _curve(name: str, grid: Sequence[float], finals: list[np.ndarray], n_replicas: int) -> SweepCurve:
    stats = [_aggregate(f) for f in finals]
    mean = {m: np.array([s[0][k] for s in stats]) for k, m in enumerate(METRICS)}
    sd = {m: np.array([s[1][k] for s in stats]) for k, m in enumerate(METRICS)}
    count = {m: np.array([s[2][k] for s in stats]) for k, m in enumerate(METRICS)}
    return SweepCurve(name, np.asarray(grid, dtype=float), n_replicas, mean, sd, count)


def _map(fn: Callable, tasks: Iterable, jobs: int = 1) -> list:
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# ---------------------------------------------------------------- fraction sweep


def _fixed_run(task) -> np.ndarray:
    params, f, key = task
    rng = rng_stream(params.seed, key)
    pop = initial_population(params.n_players, (f, 1.0 - f, 0.0), rng, params.init_believeness)
    return simulate(pop, params, rng, adapt=False).as_array()[-1]


def expected_final_capitals(params: Params, f: float) -> dict[str, float]:
    """Large-N expectation of the final average capitals without adaptation.

    Per turn a taxpayer nets g - d plus the f*d units the donations bring to
    anyone, an evader nets g - p*h plus the same, and the population as a
    whole loses p*h on every evader.
    """
    g, d, p, h, T = params.gain_g, params.tax_d, params.audit_p, params.penalty_h, params.turns_T
    return {
        "avg_capital_taxpayers": T * (g - d + f * d),
        "avg_capital_evaders": T * (g - p * h + f * d),
        "avg_capital_all": T * (g - (1.0 - f) * p * h),
    }


def zero_crossing(grid: np.ndarray, y: np.ndarray, se: np.ndarray | None = None) -> Threshold | None:
    """Upward zero crossing of ``y``, linearly interpolated.

    The crossing used is the one above the last negative grid value, so an
    isolated noisy dip below the threshold does not move it. The half-width
    is three standard errors of the bracketing points divided by the local
    slope.
    """
    ok = ~np.isnan(y)
    xs, ys = np.asarray(grid)[ok], np.asarray(y)[ok]
    ses = np.zeros_like(ys) if se is None else np.asarray(se)[ok]
    neg = np.flatnonzero(ys < 0)
    if not len(neg) or neg[-1] == len(ys) - 1:
        return None
    k = int(neg[-1])
    x0, x1, y0, y1 = xs[k], xs[k + 1], ys[k], ys[k + 1]
    slope = (y1 - y0) / (x1 - x0)
    x = x0 - y0 / slope
    hw = 3.0 * max(ses[k], ses[k + 1]) / slope
    return Threshold(float(x), float(hw))


def sweep_fraction(
    params: Params,
    rescale: bool = False,
    replicas: int = 20,
    grid: Sequence[float] | None = None,
    jobs: int = 1,
) -> tuple[SweepCurve, ThresholdReport]:
    """Final capitals versus the taxpayer share ``f`` with fixed categories.

    Thresholds are always computed from the unshifted curves (a, b, c) and
    from the taxpayer curve shifted so that the all-evader community sits at
    zero (f_th). ``rescale`` only decides which curves are returned.
    """
    validate(params)
    grid = np.round(np.arange(0, 101) / 100.0, 10) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise InvalidParam("grid", list(grid), "strictly increasing")
    tasks = [(params, float(f), (_FRACTION_SWEEP, k, r)) for k, f in enumerate(grid) for r in range(replicas)]
    rows = np.array(_map(_fixed_run, tasks, jobs))
    finals = [rows[k * replicas : (k + 1) * replicas] for k in range(len(grid))]
    curve = _curve("f", grid, finals, replicas)

    if not np.isclose(grid[0], 0.0):
        raise InvalidParam("grid", list(grid), "starting at f=0 (needed for the rescaling offset)")
    offset = float(curve.mean["avg_capital_all"][0])
    offset_se = float(curve.se("avg_capital_all")[0])

    report = ThresholdReport(
        f_th=zero_crossing(
            grid,
            curve.mean["avg_capital_taxpayers"] - offset,
            np.sqrt(curve.se("avg_capital_taxpayers") ** 2 + offset_se**2),
        ),
        a=zero_crossing(grid, curve.mean["avg_capital_evaders"], curve.se("avg_capital_evaders")),
        b=zero_crossing(grid, curve.mean["avg_capital_all"], curve.se("avg_capital_all")),
        c=zero_crossing(grid, curve.mean["avg_capital_taxpayers"], curve.se("avg_capital_taxpayers")),
    )
    if rescale:
        for m in ("avg_capital_all", "avg_capital_taxpayers", "avg_capital_evaders"):
            curve.mean[m] = curve.mean[m] - offset
        curve.offset = offset
    return curve, report


def classify_cipolla(category: Category, f: float, thresholds: ThresholdReport) -> CipollaLabel:
    category = Category(category)
    if category is Category.MIXED:
        raise MixedNotClassifiable("mixed players have no Cipolla quadrant")
    if category is Category.TAXPAYER:
        if thresholds.c is None:
            raise EmptyCategory("threshold c is not available")
        return CipollaLabel.SMART if f >= thresholds.c.value else CipollaLabel.NAIVE
    if thresholds.a is None:
        raise EmptyCategory("threshold a is not available")
    return CipollaLabel.BANDIT if f >= thresholds.a.value else CipollaLabel.STUPID


# ---------------------------------------------------------------- adaptive runs


def single_run_rng(seed: int) -> np.random.Generator:
    """Stream used by a stand-alone adaptive run (graph first, then population)."""
    return rng_stream(seed, (_SINGLE_RUN, 0))


def run_adaptive(
    params: Params,
    initial_fractions: tuple[float, float, float],
    graph: SocialGraph | None = None,
    turns: int | None = None,
    rng: np.random.Generator | None = None,
) -> RunResult:
    """Game turns interleaved with adaptation steps.

    Without a ``graph`` a small-world graph is built from the run's own rng
    (stream 0 of ``params.seed`` unless ``rng`` is given).
    """
    validate(params, strict_game=False)
    if rng is None:
        rng = single_run_rng(params.seed)
    if graph is None:
        graph = build_graph(params.n_players, Topology.SMALL_WORLD, params.rewire_r, rng)
    pop = initial_population(params.n_players, initial_fractions, rng, params.init_believeness)
    return simulate(pop, params, rng, graph=graph, adapt=True, turns=turns)


def _adaptive_run(task) -> np.ndarray:
    params, fractions, key, turns = task
    rng = rng_stream(params.seed, key)
    graph = build_graph(params.n_players, Topology.SMALL_WORLD, params.rewire_r, rng)
    pop = initial_population(params.n_players, fractions, rng, params.init_believeness)
    res = simulate(pop, params, rng, graph=graph, adapt=True, turns=turns)
    window = max(1, turns // 10)
    c = res.avg_capital_all
    growth = (c[-1] - c[-1 - window]) / window
    return np.concatenate([res.as_array()[-1], [growth]])


def outcome_flags(final_row: np.ndarray) -> tuple[bool, bool]:
    """(taxpayer majority over evaders, collective capital growing at the end)."""
    return bool(final_row[0] > final_row[1]), bool(final_row[7] > 0.0)


def find_critical_initial_fraction(
    params: Params,
    imitation_factor: float | None = None,
    capital_factor: float | None = None,
    replicas: int = 20,
    grid: Sequence[float] | None = None,
    turns: int = 2000,
    resolution: float = 0.005,
    jobs: int = 1,
) -> CriticalFraction:
    """Initial taxpayer share where the replica-majority outcome turns good.

    A run is good when the final taxpayer share exceeds the evader share and
    the collective average capital still grows over the last tenth of the
    run. The grid is scanned, then the highest bad-to-good step is bisected
    down to ``resolution``.
    """
    changes = {}
    if imitation_factor is not None:
        changes["imitation_factor_IF"] = float(imitation_factor)
    if capital_factor is not None:
        changes["capital_factor_CF"] = float(capital_factor)
    params = validate(params.with_(**changes), strict_game=False)
    grid = np.round(np.arange(40, 71) / 100.0, 10) if grid is None else np.asarray(grid, dtype=float)

    def evaluate(fs: Sequence[float]) -> list[dict]:
        tasks = [
            (params, (float(f), 1.0 - float(f), 0.0), (_CRITICAL, int(round(f * 100000)), r), turns)
            for f in fs
            for r in range(replicas)
        ]
        rows = _map(_adaptive_run, tasks, jobs)
        out = []
        for k, f in enumerate(fs):
            chunk = rows[k * replicas : (k + 1) * replicas]
            flags = [outcome_flags(row) for row in chunk]
            n_evader = sum(bool(row[1] > row[0]) for row in chunk)
            n_major = sum(a for a, _ in flags)
            n_growth = sum(b for _, b in flags)
            n_good = sum(a and b for a, b in flags)
            out.append(
                dict(f=float(f), n_good=n_good, n_majority=n_major, n_evader_majority=n_evader,
                     n_growth=n_growth, n_replicas=replicas, good=n_good * 2 > replicas)
            )
        return out

    table = evaluate(grid)
    good = [row["good"] for row in table]
    flips = sum(1 for x, y in zip(good, good[1:]) if x != y)
    ups = [k for k in range(len(good) - 1) if not good[k] and good[k + 1]]
    if not ups:
        raise NoFlipFound(
            f"no bad-to-good flip on [{grid[0]:.3f}, {grid[-1]:.3f}] for IF={params.imitation_factor_IF}, "
            f"CF={params.capital_factor_CF}"
        )
    k = ups[-1]
    lo, hi = float(grid[k]), float(grid[k + 1])
    while hi - lo > resolution + 1e-12:
        mid = round(0.5 * (lo + hi), 10)
        row = evaluate([mid])[0]
        table.append(row)
        if row["good"]:
            hi = mid
        else:
            lo = mid
    table.sort(key=lambda r: r["f"])
    return CriticalFraction(
        value=0.5 * (lo + hi),
        half_width=0.5 * (hi - lo),
        table=table,
        flips=flips,
        imitation_factor_IF=params.imitation_factor_IF,
        capital_factor_CF=params.capital_factor_CF,
        init_believeness=params.init_believeness,
    )


def sweep_parameter(
    params: Params,
    axis: str,
    grid: Sequence[float] | None = None,
    initial_fractions: tuple[float, float, float] = (0.6, 0.4, 0.0),
    replicas: int = 20,
    turns: int = 2000,
    jobs: int = 1,
) -> SweepCurve:
    """Final composition and capitals of adaptive runs versus tax, penalty or audit probability.

    The h > d and g < d orderings are not enforced here (the tax sweep crosses
    the penalty); points that break any other constraint are skipped and
    listed in ``curve.skipped``.
    """
    if axis not in AXES:
        raise InvalidParam("axis", axis, f"one of {AXES}")
    grid = list(DEFAULT_GRIDS[axis] if grid is None else grid)
    kept, skipped, point_params = [], [], []
    for value in grid:
        try:
            v = int(value) if axis != "audit_p" and float(value).is_integer() else value
            p = validate(params.with_(**{axis: v}), strict_game=False)
        except InvalidParam as exc:
            log.warning("skipping %s=%s: %s", axis, value, exc)
            skipped.append((float(value), str(exc)))
            continue
        if p.penalty_h <= p.tax_d or p.gain_g >= p.tax_d:
            log.warning("%s=%s breaks the base-game ordering (d=%d, h=%d, g=%d)", axis, value, p.tax_d, p.penalty_h, p.gain_g)
        kept.append(float(value))
        point_params.append(p)
    axis_code = AXES.index(axis)
    tasks = [
        (p, tuple(initial_fractions), (_PARAM_SWEEP, axis_code, k, r), turns)
        for k, p in enumerate(point_params)
        for r in range(replicas)
    ]
    rows = np.array(_map(_adaptive_run, tasks, jobs)) if tasks else np.zeros((0, 8))
    finals = [rows[k * replicas : (k + 1) * replicas, :7] for k in range(len(kept))]
    curve = _curve(axis, kept, finals, replicas)
    curve.skipped = skipped
    if len(kept) > 1 and np.any(np.diff(curve.grid) <= 0):
        raise InvalidParam("grid", grid, "strictly increasing")
    return curve

