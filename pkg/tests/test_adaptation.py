import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E, M, T, make_population
from taxsim.adaptation import (
    NeighborhoodCensus,
    adaptation_step,
    capital_factor_update,
    census,
    imitation_update,
    resolve_transition,
)
from taxsim.engine import draw_width, redraw_slot
from taxsim.model import Category, Params, PlayerState, initial_population, rng_stream
from taxsim.network import SocialGraph, Topology, _from_adjacency, build_graph
from taxsim.simulation import simulate

P = Params(imitation_factor_IF=1.0, capital_factor_CF=1.0)


def cen(own, t=0, e=0, m=0):
    return NeighborhoodCensus(t, e, m, own)


def test_census_counts_add_up():
    c = cen(T, 3, 1, 0)
    assert c.same_category_count == 3
    assert c.other_categories_count == 1
    assert c.total == 4


def test_taxpayer_in_taxpayer_neighbourhood_gains_belief():
    b = imitation_update(PlayerState(T, 0, 0.5), cen(T, 3, 1, 0), P)
    assert b == pytest.approx(0.51)


def test_outnumbered_evader_loses_belief():
    b = imitation_update(PlayerState(E, 0, 0.5), cen(E, 2, 1, 1), P)
    assert b == pytest.approx(0.49)


def test_tie_counts_as_increase():
    b = imitation_update(PlayerState(T, 0, 0.5), cen(T, 2, 2, 0), P)
    assert b == pytest.approx(0.51)


def test_belief_never_exceeds_one():
    assert imitation_update(PlayerState(T, 0, 0.995), cen(T, 4), P) == 1.0


def test_undecided_mixed_stays_undecided():
    assert imitation_update(PlayerState(M, 0, 0.5), cen(M, 1, 0, 3), P) == 0.5


def test_mixed_tie_with_others_drifts_to_half_without_overshoot():
    assert imitation_update(PlayerState(M, 0, 0.505), cen(M, 1, 1, 2), P) == 0.5
    assert imitation_update(PlayerState(M, 0, 0.2), cen(M, 1, 1, 2), P) == pytest.approx(0.21)


def test_mixed_minority_follows_evaders():
    b = imitation_update(PlayerState(M, 0, 0.3), cen(M, 1, 2, 1), P)
    assert b == pytest.approx(0.29)


def test_mixed_minority_tie_goes_up():
    b = imitation_update(PlayerState(M, 0, 0.3), cen(M, 1, 1, 0), P)
    assert b == pytest.approx(0.31)


def test_negative_capital_erodes_evader_belief():
    assert capital_factor_update(PlayerState(E, -5, 0.40), P) == pytest.approx(0.39)


@pytest.mark.parametrize("cat", [T, E, M])
def test_non_negative_capital_leaves_belief(cat):
    assert capital_factor_update(PlayerState(cat, 0, 0.37), P) == 0.37


def test_mixed_negative_capital_pushes_away_from_half():
    assert capital_factor_update(PlayerState(M, -1, 0.50), P.with_(capital_factor_CF=2.0)) == pytest.approx(0.52)
    assert capital_factor_update(PlayerState(M, -1, 0.40), P) == pytest.approx(0.39)


def test_taxpayer_at_zero_becomes_mixed():
    out = resolve_transition(PlayerState(T, 1, 0.0), rng_stream(1, 0))
    assert out.category is Category.MIXED
    assert 0.0 <= out.believeness <= 1.0


def test_interior_mixed_unchanged():
    out = resolve_transition(PlayerState(M, 1, 0.7), rng_stream(1, 0))
    assert out == PlayerState(M, 1, 0.7)


def test_mixed_exits():
    assert resolve_transition(PlayerState(M, 0, 1.0), 0.25) == PlayerState(T, 0, 0.25)
    assert resolve_transition(PlayerState(M, 0, 0.0), 0.75) == PlayerState(E, 0, 0.75)


def _reference_step(pop, graph, params, draws):
    """Per-player rules applied to a frozen snapshot; oracle for the kernel."""
    slot = redraw_slot(params.tax_d)
    snap = pop.category.copy()
    out = pop.copy()
    for i in range(pop.n):
        player = pop.player(i)
        c = census(graph, snap, i)
        if params.update_order == "capital_first":
            b = capital_factor_update(player, params)
            b = imitation_update(PlayerState(player.category, player.capital, b), c, params)
        else:
            b = imitation_update(player, c, params)
            b = capital_factor_update(PlayerState(player.category, player.capital, b), params)
        new = resolve_transition(PlayerState(player.category, player.capital, b), float(draws[i, slot]))
        out.category[i] = int(new.category)
        out.believeness[i] = new.believeness
    return out


@pytest.mark.property
@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(5, 60),
    r=st.floats(0, 0.5),
    if_=st.sampled_from([0.0, 1.0, 3.0, 20.0]),
    cf=st.sampled_from([0.0, 1.0, 5.0, 40.0]),
    order=st.sampled_from(["imitation_first", "capital_first"]),
    full=st.booleans(),
    seed=st.integers(0, 2**32),
)
def test_kernel_matches_per_player_rules(n, r, if_, cf, order, full, seed):
    params = Params(n_players=n, imitation_factor_IF=if_, capital_factor_CF=cf, update_order=order)
    rng = rng_stream(seed, 0)
    graph = build_graph(n, Topology.FULLY_CONNECTED if full else Topology.SMALL_WORLD, r, rng)
    pop = initial_population(n, (0.4, 0.4, 0.2), rng, "uniform")
    pop.capital[:] = rng.integers(-5, 5, n)
    pop.believeness[rng.random(n) < 0.2] = rng.choice([0.0, 0.5, 1.0])
    draws = rng.random((n, draw_width(params.tax_d)))
    expected = _reference_step(pop, graph, params, draws)
    adaptation_step(pop, graph, params, draws=draws)
    assert np.array_equal(pop.category, expected.category)
    assert np.allclose(pop.believeness, expected.believeness, rtol=0, atol=1e-15)
    assert np.all((pop.believeness >= 0) & (pop.believeness <= 1))


def test_zero_factors_freeze_everything():
    params = Params(n_players=500, imitation_factor_IF=0.0, capital_factor_CF=0.0, turns_T=300)
    rng = rng_stream(3, 0)
    graph = build_graph(500, "small_world", 0.02, rng)
    pop = initial_population(500, (0.5, 0.3, 0.2), rng)
    b0, c0 = pop.believeness.copy(), pop.category.copy()
    res = simulate(pop, params, rng, graph=graph, adapt=True)
    assert np.array_equal(pop.believeness, b0)
    assert np.array_equal(pop.category, c0)
    assert np.all(res.fraction_taxpayers == res.fraction_taxpayers[0])


def test_zealots_never_change():
    params = Params(n_players=300, imitation_factor_IF=0.0, capital_factor_CF=0.0, init_believeness="ones")
    rng = rng_stream(4, 0)
    graph = build_graph(300, "small_world", 0.02, rng)
    pop = initial_population(300, (0.5, 0.5, 0.0), rng, "ones")
    c0 = pop.category.copy()
    simulate(pop, params, rng, graph=graph, adapt=True, turns=500)
    assert np.array_equal(pop.category, c0)
    assert np.all(pop.believeness == 1.0)


def test_taxpayer_among_taxpayers_never_loses_belief():
    rng = rng_stream(5, 0)
    graph = build_graph(20, "small_world", 0.0, rng)
    pop = make_population([T] * 20, capital=np.arange(20), believeness=rng.random(20))
    b0 = pop.believeness.copy()
    adaptation_step(pop, graph, P, rng)
    assert np.all(pop.believeness >= b0)


def test_update_is_synchronous_under_relabelling():
    n = 200
    params = P
    rng = rng_stream(6, 0)
    graph = build_graph(n, "small_world", 0.1, rng)
    pop = initial_population(n, (0.45, 0.45, 0.1), rng, "uniform")
    pop.capital[:] = rng.integers(-3, 3, n)
    pop.believeness[:] = np.round(pop.believeness * 20) / 100  # many players near the lower bound
    draws = rng.random((n, draw_width(params.tax_d)))

    perm = rng.permutation(n)  # player i becomes player perm[i]
    adj = [set() for _ in range(n)]
    for u, v in graph.edges():
        adj[perm[u]].add(int(perm[v]))
        adj[perm[v]].add(int(perm[u]))
    graph_p = _from_adjacency(adj, Topology.SMALL_WORLD, 0)
    pop_p = pop.copy()
    draws_p = np.empty_like(draws)
    pop_p.category[perm] = pop.category
    pop_p.capital[perm] = pop.capital
    pop_p.believeness[perm] = pop.believeness
    draws_p[perm] = draws

    adaptation_step(pop, graph, params, draws=draws)
    adaptation_step(pop_p, graph_p, params, draws=draws_p)
    assert np.array_equal(pop_p.category[perm], pop.category)
    assert np.array_equal(pop_p.believeness[perm], pop.believeness)
    assert np.any(pop.category == int(M))


@pytest.mark.property
@settings(max_examples=30, deadline=None)
@given(
    if_=st.floats(0, 50),
    cf=st.floats(0, 50),
    f=st.floats(0, 1),
    seed=st.integers(0, 2**32),
)
def test_believeness_stays_in_unit_interval(if_, cf, f, seed):
    n = 60
    params = Params(n_players=n, imitation_factor_IF=if_, capital_factor_CF=cf, turns_T=40)
    rng = rng_stream(seed, 0)
    graph = build_graph(n, "small_world", 0.1, rng)
    pop = initial_population(n, (f, (1 - f) * 0.7, (1 - f) * 0.3), rng, "uniform")
    res = simulate(pop, params, rng, graph=graph, adapt=True)
    assert np.all((pop.believeness >= 0) & (pop.believeness <= 1))
    sums = res.fraction_taxpayers + res.fraction_evaders + res.fraction_mixed
    assert np.all(np.abs(sums - 1) <= 1e-12)
