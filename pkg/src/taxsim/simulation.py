"""Run driver: interleaves game turns and (optionally) adaptation steps."""

from __future__ import annotations

import numpy as np
from numba import njit

from .adaptation import _adapt
from .engine import _check_population, _play_turn, draw_width
from .model import Params, Population, RunResult
from .network import SocialGraph

_CHUNK_DRAWS = 1 << 19  # doubles drawn per rng call


@njit(cache=True)
def _record(category, capital, out):
    n = category.shape[0]
    cnt = np.zeros(3)
    tot = np.zeros(3)
    for i in range(n):
        cnt[category[i]] += 1.0
        tot[category[i]] += capital[i]
    for c in range(3):
        out[c] = cnt[c] / n
        out[4 + c] = tot[c] / cnt[c] if cnt[c] > 0 else np.nan
    out[3] = (tot[0] + tot[1] + tot[2]) / n


@njit(cache=True)
def _run_chunk(
    category, capital, believe, draws, stats, t0, d, h, p, g,
    adapt, indptr, indices, full, if_step, cf_step, capital_first, counts, caught,
):
    slot = d + 2
    for k in range(draws.shape[0]):
        c, _ = _play_turn(category, capital, draws[k], d, h, p, g)
        caught[t0 + k] = c
        if adapt:
            _adapt(category, capital, believe, draws[k], slot, indptr, indices, full, if_step, cf_step, capital_first, counts)
        _record(category, capital, stats[t0 + k + 1])


def simulate(
    players: Population,
    params: Params,
    rng: np.random.Generator,
    graph: SocialGraph | None = None,
    adapt: bool = False,
    turns: int | None = None,
    return_caught: bool = False,
):
    """Advance ``players`` in place for ``turns`` turns and return the series.

    Per turn one ``(n, draw_width)`` block of uniforms is consumed; blocks are
    drawn several turns at a time, which yields the same sequence as drawing
    them one by one.
    """
    n, d = players.n, params.tax_d
    _check_population(n, d)
    turns = params.turns_T if turns is None else int(turns)
    if adapt and graph is None:
        raise ValueError("adaptation needs a social graph")
    if graph is not None and graph.n_players != n:
        raise ValueError(f"graph has {graph.n_players} nodes for {n} players")

    width = draw_width(d)
    stats = np.empty((turns + 1, 7))
    caught = np.zeros(turns, dtype=np.int64)
    _record(players.category, players.capital, stats[0])
    if graph is None:
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices = np.zeros(0, dtype=np.int64)
        full = True
    else:
        indptr, indices, full = graph.indptr, graph.indices, graph.fully_connected
    counts = np.empty((n, 3), dtype=np.int64)
    per_chunk = max(1, _CHUNK_DRAWS // (n * width))
    t = 0
    while t < turns:
        k = min(per_chunk, turns - t)
        draws = rng.random((k, n, width))
        _run_chunk(
            players.category, players.capital, players.believeness, draws, stats, t,
            d, float(params.penalty_h), float(params.audit_p), float(params.gain_g),
            adapt, indptr, indices, full,
            params.imitation_factor_IF * params.delta_B,
            params.capital_factor_CF * params.delta_B,
            params.update_order == "capital_first",
            counts, caught,
        )
        t += k
    result = RunResult.from_stats(stats, params.seed, params, players)
    if return_caught:
        return result, caught
    return result


