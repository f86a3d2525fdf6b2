"""Domain types, parameter validation and the seeded random-number contract."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

MISSING = float("nan")  # category average over an empty category

INIT_BELIEVENESS_MODES = ("uniform_half", "uniform", "ones")
UPDATE_ORDERS = ("imitation_first", "capital_first")


class Category(enum.IntEnum):
    TAXPAYER = 0
    EVADER = 1
    MIXED = 2


class TaxsimError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParam(TaxsimError, ValueError):
    def __init__(self, name: str, value: Any, constraint: str):
        self.name = name
        self.value = value
        self.constraint = constraint
        super().__init__(f"invalid {name}={value!r}: requires {constraint}")


class PopulationTooSmall(TaxsimError, ValueError):
    pass


@dataclass(frozen=True)
class Params:
    """All model constants of one simulation.

    Integer capital quantities (tax, penalty, gain) are kept as ints so that
    per-player capital stays integral in the base game.
    """

    n_players: int = 1000
    tax_d: int = 2
    penalty_h: int = 3
    audit_p: float = 0.4
    gain_g: int = 1
    imitation_factor_IF: float = 1.0
    capital_factor_CF: float = 1.0
    delta_B: float = 0.01
    rewire_r: float = 0.02
    turns_T: int = 100
    seed: int = 0
    init_believeness: str = "uniform_half"
    update_order: str = "imitation_first"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "Params":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise InvalidParam(unknown[0], raw[unknown[0]], "a known parameter name")
        kwargs = {}
        for name, value in raw.items():
            kwargs[name] = _coerce(name, known[name].type, value)
        return cls(**kwargs)

    def with_(self, **changes: Any) -> "Params":
        return replace(self, **changes)


def _coerce(name: str, type_name: Any, value: Any) -> Any:
    kind = type_name if isinstance(type_name, str) else type_name.__name__
    try:
        if kind == "int":
            if isinstance(value, str):
                value = value.strip()
                try:
                    return int(value)
                except ValueError:
                    value = float(value)  # "2.0" is accepted, "2.5" is not
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        raise InvalidParam(name, value, f"a value of type {kind}") from None


def validate(params: Params, strict_game: bool = True) -> Params:
    """Check every invariant of ``params`` and return it unchanged.

    ``strict_game=False`` drops the ``h > d`` and ``g < d`` orderings, which
    the tax/penalty sweeps deliberately cross.
    """
    p = params
    if not isinstance(p.n_players, int) or p.n_players < 1:
        raise InvalidParam("n_players", p.n_players, "a positive integer")
    for name in ("tax_d", "penalty_h", "gain_g", "turns_T"):
        value = getattr(p, name)
        if not isinstance(value, int) or value < 1:
            raise InvalidParam(name, value, "a positive integer")
    if strict_game:
        if not p.penalty_h > p.tax_d:
            raise InvalidParam("penalty_h", p.penalty_h, "h>d")
        if not p.gain_g < p.tax_d:
            raise InvalidParam("gain_g", p.gain_g, "g<d")
    for name in ("audit_p", "rewire_r"):
        value = getattr(p, name)
        if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
            raise InvalidParam(name, value, "0<=value<=1")
    if not 0.0 < p.delta_B < 1.0:
        raise InvalidParam("delta_B", p.delta_B, "0<delta_B<1")
    for name in ("imitation_factor_IF", "capital_factor_CF"):
        value = getattr(p, name)
        if not (math.isfinite(value) and value >= 0.0):
            raise InvalidParam(name, value, "a finite non-negative real")
    if not isinstance(p.seed, int) or not 0 <= p.seed < 2**64:
        raise InvalidParam("seed", p.seed, "a 64-bit unsigned integer")
    if p.init_believeness not in INIT_BELIEVENESS_MODES:
        raise InvalidParam("init_believeness", p.init_believeness, f"one of {INIT_BELIEVENESS_MODES}")
    if p.update_order not in UPDATE_ORDERS:
        raise InvalidParam("update_order", p.update_order, f"one of {UPDATE_ORDERS}")
    return p


def rng_stream(seed: int, stream_id: int | tuple[int, ...] = 0) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, stream_id)``.

    The stream id is folded into the SeedSequence spawn key, so a sweep can
    address the stream of (grid point, replica) without any shared state.
    """
    key = (stream_id,) if isinstance(stream_id, (int, np.integer)) else tuple(stream_id)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class PlayerState:
    category: Category
    capital: float = 0.0
    believeness: float = 1.0


@dataclass
class Population:
    """Struct-of-arrays view of all players; index i is player i."""

    category: np.ndarray  # int8 codes of Category
    capital: np.ndarray  # float64
    believeness: np.ndarray  # float64

    @property
    def n(self) -> int:
        return len(self.category)

    @classmethod
    def from_players(cls, players: list[PlayerState]) -> "Population":
        return cls(
            np.array([int(pl.category) for pl in players], dtype=np.int8),
            np.array([pl.capital for pl in players], dtype=np.float64),
            np.array([pl.believeness for pl in players], dtype=np.float64),
        )

    def player(self, i: int) -> PlayerState:
        return PlayerState(Category(int(self.category[i])), float(self.capital[i]), float(self.believeness[i]))

    def copy(self) -> "Population":
        return Population(self.category.copy(), self.capital.copy(), self.believeness.copy())

    def fractions(self) -> np.ndarray:
        counts = np.bincount(self.category, minlength=3).astype(np.float64)
        return counts / self.n


def initial_population(
    n_players: int,
    fractions: tuple[float, float, float],
    rng: np.random.Generator,
    init_believeness: str = "uniform_half",
) -> Population:
    """Randomly placed population with the requested (taxpayer, evader, mixed) shares.

    Counts are rounded; evaders absorb the rounding remainder.
    """
    f_t, f_e, f_m = (float(x) for x in fractions)
    if min(f_t, f_e, f_m) < 0 or abs(f_t + f_e + f_m - 1.0) > 1e-9:
        raise InvalidParam("initial_fractions", fractions, "non-negative shares summing to 1")
    n_t = int(round(f_t * n_players))
    n_m = int(round(f_m * n_players))
    n_m = min(n_m, n_players - n_t)
    n_e = n_players - n_t - n_m
    codes = np.empty(n_players, dtype=np.int8)
    codes[:n_t] = Category.TAXPAYER
    codes[n_t : n_t + n_e] = Category.EVADER
    codes[n_t + n_e :] = Category.MIXED
    codes = codes[rng.permutation(n_players)]

    u = rng.random(n_players)
    if init_believeness == "uniform_half":
        believe = 0.5 + 0.5 * u
    elif init_believeness == "uniform":
        believe = u
    elif init_believeness == "ones":
        believe = np.ones(n_players)
    else:
        raise InvalidParam("init_believeness", init_believeness, f"one of {INIT_BELIEVENESS_MODES}")
    # Mixed players start undecided-at-random regardless of mode.
    believe = np.where(codes == Category.MIXED, u, believe)
    return Population(codes, np.zeros(n_players), believe)


@dataclass
class RunResult:
    """Per-turn series; row 0 is the initial state.

    Category averages are NaN while the category is empty.
    """

    fraction_taxpayers: np.ndarray
    fraction_evaders: np.ndarray
    fraction_mixed: np.ndarray
    avg_capital_all: np.ndarray
    avg_capital_taxpayers: np.ndarray
    avg_capital_evaders: np.ndarray
    avg_capital_mixed: np.ndarray
    seed: int
    params: Params
    final_population: Population | None = field(default=None, repr=False)

    COLUMNS = (
        "fraction_taxpayers",
        "fraction_evaders",
        "fraction_mixed",
        "avg_capital_all",
        "avg_capital_taxpayers",
        "avg_capital_evaders",
        "avg_capital_mixed",
    )

    @classmethod
    def from_stats(cls, stats: np.ndarray, seed: int, params: Params, final: Population | None = None) -> "RunResult":
        cols = [np.ascontiguousarray(stats[:, k]) for k in range(7)]
        return cls(*cols, seed=seed, params=params, final_population=final)

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in self.COLUMNS])

    @property
    def n_turns(self) -> int:
        return len(self.fraction_taxpayers) - 1
