"""Believeness dynamics: imitation, economic dissatisfaction and category changes.

The per-player functions below state the rules one player at a time; the
``_adapt`` kernel applies the same rules to the whole population in one
synchronous sweep (census from a frozen snapshot, then updates, then
transitions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .engine import EVADER, MIXED, TAXPAYER, redraw_slot
from .model import Category, Params, PlayerState, Population
from .network import SocialGraph


@dataclass(frozen=True)
class NeighborhoodCensus:
    taxpayer_count: int
    evader_count: int
    mixed_count: int
    own_category: Category

    @property
    def total(self) -> int:
        return self.taxpayer_count + self.evader_count + self.mixed_count

    @property
    def same_category_count(self) -> int:
        return (self.taxpayer_count, self.evader_count, self.mixed_count)[int(self.own_category)]

    @property
    def other_categories_count(self) -> int:
        return self.total - self.same_category_count


def census(graph: SocialGraph, categories: np.ndarray, player_index: int) -> NeighborhoodCensus:
    if graph.fully_connected:
        counts = np.bincount(categories, minlength=3)
        counts[int(categories[player_index])] -= 1
    else:
        lo, hi = graph.indptr[player_index], graph.indptr[player_index + 1]
        counts = np.bincount(categories[graph.indices[lo:hi]], minlength=3)
    return NeighborhoodCensus(int(counts[0]), int(counts[1]), int(counts[2]), Category(int(categories[player_index])))


def _clamp(b: float) -> float:
    return min(1.0, max(0.0, b))


def imitation_update(player: PlayerState, census: NeighborhoodCensus, params: Params) -> float:
    step = params.imitation_factor_IF * params.delta_B
    b = player.believeness
    if player.category is Category.MIXED:
        if census.mixed_count < census.taxpayer_count + census.evader_count:
            if census.evader_count > census.taxpayer_count:
                return _clamp(b - step)
            return _clamp(b + step)
        # mixed majority (or tie): drift toward undecided, never past it
        if b > 0.5:
            return max(0.5, b - step)
        return min(0.5, b + step)
    if census.same_category_count < census.other_categories_count:
        return _clamp(b - step)
    return _clamp(b + step)


def capital_factor_update(player: PlayerState, params: Params) -> float:
    """Only players with strictly negative capital are affected."""
    b = player.believeness
    if player.capital >= 0:
        return b
    step = params.capital_factor_CF * params.delta_B
    if player.category is Category.MIXED and b >= 0.5:
        return _clamp(b + step)
    return _clamp(b - step)


def resolve_transition(player: PlayerState, rng: np.random.Generator | float) -> PlayerState:
    """Category change once believeness reaches a bound.

    ``rng`` may also be the pre-drawn uniform for this player. Believeness is
    redrawn uniformly on [0, 1] on every category change.
    """
    b = player.believeness
    new_cat = None
    if player.category is Category.MIXED:
        if b <= 0.0:
            new_cat = Category.EVADER
        elif b >= 1.0:
            new_cat = Category.TAXPAYER
    elif b <= 0.0:
        new_cat = Category.MIXED
    if new_cat is None:
        return PlayerState(player.category, player.capital, b)
    u = rng if isinstance(rng, float) else float(rng.random())
    return PlayerState(new_cat, player.capital, u)


@njit(cache=True)
def _census_counts(category, indptr, indices, full, out):
    n = category.shape[0]
    if full:
        tot = np.zeros(3, dtype=np.int64)
        for i in range(n):
            tot[category[i]] += 1
        for i in range(n):
            for c in range(3):
                out[i, c] = tot[c]
            out[i, category[i]] -= 1
    else:
        for i in range(n):
            out[i, 0] = 0
            out[i, 1] = 0
            out[i, 2] = 0
            for k in range(indptr[i], indptr[i + 1]):
                out[i, category[indices[k]]] += 1


@njit(cache=True)
def _imitate(c, b, nt, ne, nm, step):
    if c == MIXED:
        if nm < nt + ne:
            if ne > nt:
                b -= step
            else:
                b += step
        elif b > 0.5:
            b = max(0.5, b - step)
        else:
            b = min(0.5, b + step)
    else:
        same = nt if c == TAXPAYER else ne
        if same < nt + ne + nm - same:
            b -= step
        else:
            b += step
    return min(1.0, max(0.0, b))


@njit(cache=True)
def _capital(c, b, cap, step):
    if cap < 0.0:
        if c == MIXED and b >= 0.5:
            b += step
        else:
            b -= step
    return min(1.0, max(0.0, b))


@njit(cache=True)
def _adapt(category, capital, believe, draws, slot, indptr, indices, full, if_step, cf_step, capital_first, counts):
    n = category.shape[0]
    _census_counts(category, indptr, indices, full, counts)
    for i in range(n):
        c = category[i]
        b = believe[i]
        if capital_first:
            b = _capital(c, b, capital[i], cf_step)
            b = _imitate(c, b, counts[i, 0], counts[i, 1], counts[i, 2], if_step)
        else:
            b = _imitate(c, b, counts[i, 0], counts[i, 1], counts[i, 2], if_step)
            b = _capital(c, b, capital[i], cf_step)
        believe[i] = b
    for i in range(n):
        c = category[i]
        b = believe[i]
        if c == MIXED:
            if b <= 0.0:
                category[i] = EVADER
                believe[i] = draws[i, slot]
            elif b >= 1.0:
                category[i] = TAXPAYER
                believe[i] = draws[i, slot]
        elif b <= 0.0:
            category[i] = MIXED
            believe[i] = draws[i, slot]


def adaptation_step(
    players: Population,
    graph: SocialGraph,
    params: Params,
    rng: np.random.Generator | None = None,
    draws: np.ndarray | None = None,
) -> Population:
    """Synchronous believeness update and transitions for everybody (in place).

    Either ``rng`` or a pre-drawn ``(n, draw_width)`` block must be given;
    only the redraw column of the block is used.
    """
    slot = redraw_slot(params.tax_d)
    if draws is None:
        draws = np.zeros((players.n, slot + 1))
        draws[:, slot] = rng.random(players.n)
    counts = np.empty((players.n, 3), dtype=np.int64)
    _adapt(
        players.category,
        players.capital,
        players.believeness,
        draws,
        slot,
        graph.indptr,
        graph.indices,
        graph.fully_connected,
        params.imitation_factor_IF * params.delta_B,
        params.capital_factor_CF * params.delta_B,
        params.update_order == "capital_first",
        counts,
    )
    return players
