"""Transmission network topology, its line graph, and k-hop normalized adjacencies.

The network is an undirected simple graph after parallel-line merging.  The
line graph has one node per transmission line; nodes are adjacent when the
lines share a bus.  Spatial aggregation operates on a degree-normalized
reachability matrix over k hops of the line graph.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import DisconnectedNetwork, SelfLoop, UnknownBus


@dataclass(frozen=True)
class Bus:
    bus_id: str
    latitude_deg: float
    longitude_deg: float


@dataclass(frozen=True)
class Line:
    line_id: str
    from_bus: str
    to_bus: str
    susceptance_pu: float
    length_km: float
    conductor_ref: str

    def endpoints(self):
        """Endpoints as (lower bus_id, higher bus_id) so ordering is canonical."""
        a, b = sorted((self.from_bus, self.to_bus))
        return a, b


@dataclass(frozen=True)
class BusNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]

    def bus_index(self) -> dict[str, int]:
        return {b.bus_id: i for i, b in enumerate(self.buses)}

    def line_index(self) -> dict[str, int]:
        return {ln.line_id: i for i, ln in enumerate(self.lines)}

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class LineGraphTopology:
    line_ids: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def node_count(self) -> int:
        return len(self.line_ids)

    def adjacency(self) -> sp.csr_matrix:
        """Boolean single-hop adjacency (no self-loops)."""
        n = self.node_count
        if not self.edges:
            return sp.csr_matrix((n, n))
        rows = [i for i, j in self.edges] + [j for i, j in self.edges]
        cols = [j for i, j in self.edges] + [i for i, j in self.edges]
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class LineGraphAdjacency:
    k: int
    line_ids: tuple[str, ...]
    matrix: sp.csr_matrix


def _as_bus(raw) -> Bus:
    if isinstance(raw, Bus):
        return raw
    return Bus(str(raw["bus_id"]), float(raw["latitude_deg"]), float(raw["longitude_deg"]))


def _as_line(raw) -> Line:
    if isinstance(raw, Line):
        return raw
    return Line(
        str(raw["line_id"]),
        str(raw["from_bus"]),
        str(raw["to_bus"]),
        float(raw["susceptance_pu"]),
        float(raw["length_km"]),
        str(raw["conductor_ref"]),
    )


def build_network(
    raw_buses: Iterable,
    raw_lines: Iterable,
    conductor_ratings: Mapping[str, float] | None = None,
) -> BusNetwork:
    """Validate and assemble a connected simple network, merging parallel lines.

    Parallel lines between the same bus pair are merged into one: susceptances
    add, the length is the maximum of the members, and the surviving line_id
    and conductor_ref come from the highest-rated member.  Rating is taken
    from ``conductor_ratings`` when given, otherwise the member's susceptance
    is used as a proxy.
    """
    buses = [_as_bus(b) for b in raw_buses]
    lines = [_as_line(ln) for ln in raw_lines]
    if not buses or not lines:
        raise ValueError("bus and line lists must be non-empty")
    seen = set()
    for b in buses:
        if b.bus_id in seen:
            raise ValueError(f"duplicate bus_id {b.bus_id!r}")
        seen.add(b.bus_id)

    bus_ids = {b.bus_id for b in buses}
    for ln in lines:
        if ln.from_bus == ln.to_bus:
            raise SelfLoop(f"line {ln.line_id!r} connects bus {ln.from_bus!r} to itself")
        for end in (ln.from_bus, ln.to_bus):
            if end not in bus_ids:
                raise UnknownBus(f"line {ln.line_id!r} references undeclared bus {end!r}")
        if ln.susceptance_pu <= 0 or ln.length_km <= 0:
            raise ValueError(f"line {ln.line_id!r}: susceptance and length must be positive")

    def rating(ln: Line) -> float:
        if conductor_ratings is not None and ln.conductor_ref in conductor_ratings:
            return float(conductor_ratings[ln.conductor_ref])
        return ln.susceptance_pu

    groups: dict[tuple[str, str], list[Line]] = {}
    for ln in lines:
        groups.setdefault(ln.endpoints(), []).append(ln)

    merged = []
    for members in groups.values():
        lead = max(members, key=lambda ln: (rating(ln), ln.line_id))
        merged.append(
            Line(
                lead.line_id,
                lead.from_bus,
                lead.to_bus,
                sum(ln.susceptance_pu for ln in members),
                max(ln.length_km for ln in members),
                lead.conductor_ref,
            )
        )
    merged.sort(key=lambda ln: ln.line_id)

    _check_connected(buses, merged)
    return BusNetwork(tuple(buses), tuple(merged))


def _check_connected(buses, lines):
    index = {b.bus_id: i for i, b in enumerate(buses)}
    adj: list[list[int]] = [[] for _ in buses]
    for ln in lines:
        i, j = index[ln.from_bus], index[ln.to_bus]
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    if len(seen) != len(buses):
        missing = sorted(b.bus_id for b in buses if index[b.bus_id] not in seen)
        raise DisconnectedNetwork(f"network has more than one component; unreachable buses {missing}")


def line_graph(network: BusNetwork) -> LineGraphTopology:
    """Line graph of the network: one node per line, edges where lines share a bus.

    Node order follows sorted line_id so downstream matrices are reproducible.
    """
    line_ids = tuple(ln.line_id for ln in network.lines)
    incident: dict[str, list[int]] = {b.bus_id: [] for b in network.buses}
    for idx, ln in enumerate(network.lines):
        incident[ln.from_bus].append(idx)
        incident[ln.to_bus].append(idx)
    edges = set()
    for members in incident.values():
        for i, j in combinations(sorted(members), 2):
            edges.add((i, j))
    return LineGraphTopology(line_ids, tuple(sorted(edges)))


def khop_adjacency(topology: LineGraphTopology, k: int) -> LineGraphAdjacency:
    """Degree-normalized reachability within k hops, self-loops included.

    R[i, j] = 1 iff j is within k hops of i (R's diagonal is all ones), and the
    returned matrix is D^{-1/2} R D^{-1/2} with D = diag(row sums of R).
    Saturates once k reaches the line-graph diameter; only k <= 0 is rejected.
    """
    if k <= 0:
        raise ValueError(f"hop count must be >= 1, got {k}")
    n = topology.node_count
    adj = topology.adjacency()
    if n == 1:
        reach = np.ones((1, 1))
    else:
        dist = dijkstra(adj, unweighted=True, limit=float(k))
        reach = (dist <= k).astype(float)
        np.fill_diagonal(reach, 1.0)
    deg = reach.sum(axis=1)
    scale = 1.0 / np.sqrt(deg)
    normalized = reach * scale[:, None] * scale[None, :]
    return LineGraphAdjacency(k, topology.line_ids, sp.csr_matrix(normalized))


def identity_adjacency(topology: LineGraphTopology) -> LineGraphAdjacency:
    """Identity operator: disables spatial aggregation but keeps the code path."""
    n = topology.node_count
    return LineGraphAdjacency(0, topology.line_ids, sp.identity(n, format="csr"))


# -- file formats -----------------------------------------------------------

def read_buses_csv(path) -> list[Bus]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Bus(r["bus_id"], float(r["lat"]), float(r["lon"])) for r in rows]


def write_buses_csv(path, buses: Iterable[Bus]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "lat", "lon"])
        for b in buses:
            w.writerow([b.bus_id, repr(b.latitude_deg), repr(b.longitude_deg)])


def read_lines_csv(path) -> list[Line]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        Line(
            r["line_id"],
            r["from_bus"],
            r["to_bus"],
            float(r["susceptance_pu"]),
            float(r["length_km"]),
            r["conductor_ref"],
        )
        for r in rows
    ]


def write_lines_csv(path, lines: Iterable[Line]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "from_bus", "to_bus", "susceptance_pu", "length_km", "conductor_ref"])
        for ln in lines:
            w.writerow(
                [ln.line_id, ln.from_bus, ln.to_bus, repr(ln.susceptance_pu), repr(ln.length_km), ln.conductor_ref]
            )


def write_adjacency_csv(path, adjacency: LineGraphAdjacency) -> None:
    """Coordinate-triplet dump (row, col, value) for inspection."""
    coo = adjacency.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for i in order:
            w.writerow([coo.row[i], coo.col[i], repr(float(coo.data[i]))])
