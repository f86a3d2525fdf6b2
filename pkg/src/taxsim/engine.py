"""One synchronous turn of the base game: external gain, then game A or B.

Every player owns a fixed block of uniform draws per turn (``draw_width``
slots), so results do not depend on the order in which players are visited::

    slot 0        mixed player's A/B coin
    slot 1        audit draw for game B
    slots 2..d+1  recipient draws for game A
    slot d+2      believeness redraw (used by the adaptation step)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import Category, Params, Population, PopulationTooSmall

SLOT_COIN = 0
SLOT_AUDIT = 1
SLOT_RECIPIENTS = 2

TAXPAYER = int(Category.TAXPAYER)
EVADER = int(Category.EVADER)
MIXED = int(Category.MIXED)


def draw_width(tax_d: int) -> int:
    return tax_d + 3


def redraw_slot(tax_d: int) -> int:
    return tax_d + 2


@dataclass(frozen=True)
class TurnOutcome:
    caught_evaders: int
    total_donated: int
    total_gain: int


@njit(cache=True)
def _pick_recipients(u, donor, n, out, excluded):
    """Map ``len(out)`` uniforms to distinct indices in [0, n) other than ``donor``.

    The k-th uniform selects among the n-1-k indices not yet excluded, so the
    picks are a uniform sample without replacement. ``excluded`` is scratch
    space of length ``len(out) + 1``.
    """
    d = out.shape[0]
    excluded[0] = donor
    n_ex = 1
    for k in range(d):
        span = n - 1 - k
        v = int(u[k] * span)
        if v >= span:
            v = span - 1
        for j in range(n_ex):
            if v >= excluded[j]:
                v += 1
        out[k] = v
        # keep the excluded list sorted for the next skip pass
        pos = n_ex
        while pos > 0 and excluded[pos - 1] > v:
            excluded[pos] = excluded[pos - 1]
            pos -= 1
        excluded[pos] = v
        n_ex += 1


@njit(cache=True)
def _play_turn(category, capital, draws, d, h, p, g):
    """Apply gain and every player's game for one turn; returns (caught, a_plays)."""
    n = category.shape[0]
    for i in range(n):
        capital[i] += g
    recipients = np.empty(d, dtype=np.int64)
    scratch = np.empty(d + 1, dtype=np.int64)
    caught = 0
    a_plays = 0
    for i in range(n):
        c = category[i]
        plays_a = c == TAXPAYER or (c == MIXED and draws[i, SLOT_COIN] < 0.5)
        if plays_a:
            _pick_recipients(draws[i, SLOT_RECIPIENTS : SLOT_RECIPIENTS + d], i, n, recipients, scratch)
            for k in range(d):
                capital[recipients[k]] += 1.0
            capital[i] -= d
            a_plays += 1
        elif draws[i, SLOT_AUDIT] < p:
            capital[i] -= h
            caught += 1
    return caught, a_plays


def _check_population(n: int, d: int) -> None:
    if n - 1 < d:
        raise PopulationTooSmall(f"cannot choose {d} distinct recipients among {n - 1} other players")


def apply_gain(players: Population, params: Params) -> Population:
    """Add the external gain to every player (in place); returns ``players``."""
    players.capital += params.gain_g
    return players


def play_game_a(player_index: int, players: Population, params: Params, rng: np.random.Generator) -> Population:
    """Donor gives one unit to each of ``tax_d`` distinct other players (in place)."""
    n, d = players.n, params.tax_d
    _check_population(n, d)
    out = np.empty(d, dtype=np.int64)
    _pick_recipients(rng.random(d), player_index, n, out, np.empty(d + 1, dtype=np.int64))
    players.capital[player_index] -= d
    players.capital[out] += 1.0
    return players


def play_game_b(player_index: int, players: Population, params: Params, rng: np.random.Generator) -> Population:
    """With probability ``audit_p`` the player loses ``penalty_h`` (destroyed)."""
    if rng.random() < params.audit_p:
        players.capital[player_index] -= params.penalty_h
    return players


def step_turn(players: Population, params: Params, rng: np.random.Generator) -> tuple[Population, TurnOutcome]:
    """One turn of the base game, in place. Consumes one ``(n, draw_width)`` block."""
    n, d = players.n, params.tax_d
    _check_population(n, d)
    draws = rng.random((n, draw_width(d)))
    caught, a_plays = _play_turn(
        players.category, players.capital, draws, d, float(params.penalty_h), float(params.audit_p), float(params.gain_g)
    )
    return players, TurnOutcome(int(caught), int(d * a_plays), int(params.gain_g * n))
