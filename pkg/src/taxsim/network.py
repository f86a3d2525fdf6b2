"""Imitation topology: fully connected or a Watts-Strogatz small-world ring."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from .model import PopulationTooSmall, TaxsimError

RING_K = 4  # two short-range ties on each side


class Topology(str, enum.Enum):
    FULLY_CONNECTED = "fully_connected"
    SMALL_WORLD = "small_world"


class IndexOutOfRange(TaxsimError, IndexError):
    pass


@dataclass(frozen=True)
class SocialGraph:
    """Undirected graph in CSR form; fully connected graphs store no edges."""

    topology: Topology
    n_players: int
    indptr: np.ndarray
    indices: np.ndarray
    rewired_edges: int = 0

    @property
    def fully_connected(self) -> bool:
        return self.topology is Topology.FULLY_CONNECTED

    def degrees(self) -> np.ndarray:
        if self.fully_connected:
            return np.full(self.n_players, self.n_players - 1)
        return np.diff(self.indptr)

    def edges(self) -> list[tuple[int, int]]:
        """Each undirected edge once, as (u, v) with u < v, sorted."""
        if self.fully_connected:
            n = self.n_players
            return [(u, v) for u in range(n) for v in range(u + 1, n)]
        out = []
        for u in range(self.n_players):
            for v in self.indices[self.indptr[u] : self.indptr[u + 1]]:
                if u < v:
                    out.append((u, int(v)))
        return out

    def n_edges(self) -> int:
        if self.fully_connected:
            return self.n_players * (self.n_players - 1) // 2
        return len(self.indices) // 2


def _from_adjacency(adj: list[set[int]], topology: Topology, rewired: int) -> SocialGraph:
    lists = [sorted(s) for s in adj]
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(x) for x in lists])
    indices = np.fromiter((v for x in lists for v in x), dtype=np.int64, count=int(indptr[-1]))
    return SocialGraph(topology, len(lists), indptr, indices, rewired)


def build_graph(
    n_players: int,
    topology: Topology | str = Topology.SMALL_WORLD,
    rewire_r: float = 0.02,
    rng: np.random.Generator | None = None,
) -> SocialGraph:
    """Build the imitation graph.

    Small-world: ring with each node tied to its two nearest nodes on each
    side, then each ring edge (u, u+j) independently has its far endpoint
    moved with probability ``rewire_r`` to a uniformly random node that is
    neither u nor already adjacent to u. Edges are visited j=1 for all u,
    then j=2, as in the usual Watts-Strogatz construction.
    """
    topology = Topology(topology)
    if topology is Topology.FULLY_CONNECTED:
        empty = np.zeros(0, dtype=np.int64)
        return SocialGraph(topology, n_players, np.zeros(n_players + 1, dtype=np.int64), empty)
    if n_players < RING_K + 1:
        raise PopulationTooSmall(f"small-world ring with k={RING_K} needs at least {RING_K + 1} players, got {n_players}")
    if rng is None:
        rng = np.random.default_rng()

    n = n_players
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, RING_K // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)

    rewired = 0
    if rewire_r > 0:
        for j in range(1, RING_K // 2 + 1):
            hits = rng.random(n) < rewire_r
            for u in np.flatnonzero(hits):
                u = int(u)
                v = (u + j) % n
                if v not in adj[u] or len(adj[u]) >= n - 1:
                    # edge already moved away by an earlier rewiring, or u saturated
                    continue
                while True:
                    w = int(rng.integers(n))
                    if w != u and w not in adj[u]:
                        break
                adj[u].discard(v)
                adj[v].discard(u)
                adj[u].add(w)
                adj[w].add(u)
                rewired += 1
    return _from_adjacency(adj, topology, rewired)


def neighbors(graph: SocialGraph, player_index: int) -> list[int]:
    """Neighbors of ``player_index`` in ascending order."""
    if not 0 <= player_index < graph.n_players:
        raise IndexOutOfRange(f"player index {player_index} outside [0, {graph.n_players})")
    if graph.fully_connected:
        return [v for v in range(graph.n_players) if v != player_index]
    lo, hi = graph.indptr[player_index], graph.indptr[player_index + 1]
    return [int(v) for v in graph.indices[lo:hi]]


def write_edge_list(graph: SocialGraph, path: str | os.PathLike) -> None:
    """One ``u v`` line per undirected edge."""
    with open(path, "w") as fh:
        for u, v in graph.edges():
            fh.write(f"{u} {v}\n")


def read_edge_list(path: str | os.PathLike, n_players: int) -> SocialGraph:
    adj = [set() for _ in range(n_players)]
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            u, v = (int(x) for x in line.split())
            adj[u].add(v)
            adj[v].add(u)
    return _from_adjacency(adj, Topology.SMALL_WORLD, 0)
