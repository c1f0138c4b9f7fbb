"""Two-stage grid operation: day-ahead DC dispatch and hourly real-time redispatch.

The day-ahead stage schedules controllable generation and renewable
curtailment over 24 hours against forecast line limits and loads.  Real time
re-solves each hour with true limits and loads, paying adjustment prices
c_plus / c_minus for deviations from the schedule and ramping against the
previous hour's final dispatch.  Both stages are convex QPs with diagonal
quadratics (the real-time cross term is removed with a net-deviation
variable d = r_plus - r_minus).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible
from ..netgraph import BusNetwork
from .qp import QpWorkspace

T_HOURS = 24


@dataclass(frozen=True)
class Generator:
    gen_id: str
    bus: str
    kind: str                # "controllable" or "renewable"
    c1: float = 0.0          # $/MWh
    c2: float = 0.0          # $/MWh^2
    pmin: float = 0.0
    pmax: float = 0.0
    ramp_down: float = 0.0   # <= 0, MW/h
    ramp_up: float = 0.0     # >= 0, MW/h
    c_plus: float = 0.0      # upward redispatch price
    c_minus: float = 0.0     # downward redispatch price


@dataclass
class GridSpec:
    network: BusNetwork
    generators: tuple[Generator, ...]
    reference_bus: str
    s_base_mva: float = 100.0

    def __post_init__(self):
        bus_ids = {b.bus_id for b in self.network.buses}
        if self.reference_bus not in bus_ids:
            raise ValueError(f"reference bus {self.reference_bus!r} not in the network")
        seen = set()
        for g in self.generators:
            if g.gen_id in seen:
                raise ValueError(f"duplicate gen_id {g.gen_id!r}")
            seen.add(g.gen_id)
            if g.bus not in bus_ids:
                raise ValueError(f"generator {g.gen_id!r} sits at unknown bus {g.bus!r}")
            if g.kind == "controllable":
                if not g.c_plus > g.c1 > g.c_minus:
                    raise ValueError(
                        f"generator {g.gen_id!r} violates c_plus > c1 > c_minus")
                if g.ramp_down > 0 or g.ramp_up < 0:
                    raise ValueError(f"generator {g.gen_id!r} ramp signs are wrong")
            elif g.kind == "renewable":
                if g.c1 != 0 or g.c2 != 0 or g.pmin != 0:
                    raise ValueError(f"renewable {g.gen_id!r} must have zero costs and pmin")
            else:
                raise ValueError(f"unknown generator kind {g.kind!r}")
            if g.pmin > g.pmax or g.c2 < 0:
                raise ValueError(f"generator {g.gen_id!r} has inconsistent limits or c2 < 0")

    @property
    def controllable(self):
        return [g for g in self.generators if g.kind == "controllable"]

    @property
    def renewable(self):
        return [g for g in self.generators if g.kind == "renewable"]

    def line_susceptance_mw(self) -> np.ndarray:
        return np.array([ln.susceptance_pu * self.s_base_mva for ln in self.network.lines])

    def to_json_dict(self) -> dict:
        return {
            "s_base_mva": self.s_base_mva,
            "reference_bus": self.reference_bus,
            "generators": [vars(g) | {} for g in self.generators],
        }

    @classmethod
    def from_json(cls, path, network: BusNetwork) -> "GridSpec":
        with open(path) as fh:
            raw = json.load(fh)
        gens = tuple(Generator(
            gen_id=str(g["gen_id"]), bus=str(g["bus"]), kind=g["kind"],
            c1=float(g.get("c1", 0.0)), c2=float(g.get("c2", 0.0)),
            pmin=float(g.get("pmin", 0.0)), pmax=float(g.get("pmax", 0.0)),
            ramp_down=float(g.get("ramp_down", 0.0)), ramp_up=float(g.get("ramp_up", 0.0)),
            c_plus=float(g.get("c_plus", 0.0)), c_minus=float(g.get("c_minus", 0.0)),
        ) for g in raw["generators"])
        return cls(network, gens, str(raw["reference_bus"]),
                   float(raw.get("s_base_mva", 100.0)))


@dataclass
class DispatchSolution:
    gen_ids: tuple[str, ...]
    p: np.ndarray            # (nc, 24)
    curtail_da: np.ndarray   # (nr, 24)
    theta: np.ndarray        # (nb, 24)
    flows: np.ndarray        # (E, 24)
    hour_cost: np.ndarray    # (24,)
    objective: float


@dataclass
class RedispatchSolution:
    r_plus: np.ndarray       # (nc,)
    r_minus: np.ndarray      # (nc,)
    curtail_rt: np.ndarray   # (nr,)
    theta: np.ndarray        # (nb,)
    flows: np.ndarray        # (E,)
    final_dispatch: np.ndarray  # (nc,)
    hour_cost: float         # full real-time objective value (Eq-9a style accounting)


def _laplacian(grid: GridSpec) -> np.ndarray:
    idx = grid.network.bus_index()
    nb = grid.network.n_buses
    lap = np.zeros((nb, nb))
    for ln, b_mw in zip(grid.network.lines, grid.line_susceptance_mw()):
        a, b = idx[ln.from_bus], idx[ln.to_bus]
        lap[a, a] += b_mw
        lap[b, b] += b_mw
        lap[a, b] -= b_mw
        lap[b, a] -= b_mw
    return lap


def _flow_rows(grid: GridSpec) -> np.ndarray:
    """Per-line row over bus angles: flow = B_ij (theta_i - theta_j)."""
    idx = grid.network.bus_index()
    rows = np.zeros((grid.network.n_lines, grid.network.n_buses))
    for r, (ln, b_mw) in enumerate(zip(grid.network.lines, grid.line_susceptance_mw())):
        rows[r, idx[ln.from_bus]] = b_mw
        rows[r, idx[ln.to_bus]] = -b_mw
    return rows


class DayAheadTemplate:
    """Prebuilt constraint structure of the 24-hour scheduling QP."""

    def __init__(self, grid: GridSpec, engine: str = "auto"):
        self.grid = grid
        nc, nr = len(grid.controllable), len(grid.renewable)
        nb, ne = grid.network.n_buses, grid.network.n_lines
        self.nc, self.nr, self.nb, self.ne = nc, nr, nb, ne
        n = (nc + nr + nb) * T_HOURS
        self.n = n
        self.ip = lambda g, t: g * T_HOURS + t
        self.icur = lambda j, t: nc * T_HOURS + j * T_HOURS + t
        self.ith = lambda b, t: (nc + nr) * T_HOURS + b * T_HOURS + t

        quad = np.zeros(n)
        lin = np.zeros(n)
        for g_i, g in enumerate(grid.controllable):
            for t in range(T_HOURS):
                quad[self.ip(g_i, t)] = 2.0 * g.c2
                lin[self.ip(g_i, t)] = g.c1
        self.quad, self.lin = quad, lin

        bus_idx = grid.network.bus_index()
        lap = _laplacian(grid)
        # balance rows: p - cur - L theta = load - sum(avail at bus)
        eq = np.zeros((nb * T_HOURS, n))
        for g_i, g in enumerate(grid.controllable):
            for t in range(T_HOURS):
                eq[bus_idx[g.bus] * T_HOURS + t, self.ip(g_i, t)] = 1.0
        for j, g in enumerate(grid.renewable):
            for t in range(T_HOURS):
                eq[bus_idx[g.bus] * T_HOURS + t, self.icur(j, t)] = -1.0
        for b in range(nb):
            for t in range(T_HOURS):
                row = b * T_HOURS + t
                for b2 in range(nb):
                    if lap[b, b2] != 0.0:
                        eq[row, self.ith(b2, t)] = -lap[b, b2]
        self.eq = eq

        flow = _flow_rows(grid)
        blocks = []
        for g_i, g in enumerate(grid.controllable):
            for t in range(1, T_HOURS):
                row = np.zeros(n)
                row[self.ip(g_i, t)] = 1.0
                row[self.ip(g_i, t - 1)] = -1.0
                blocks.append(row)
        self.n_ramp = len(blocks)
        for e in range(ne):
            for t in range(T_HOURS):
                row = np.zeros(n)
                for b in range(nb):
                    if flow[e, b] != 0.0:
                        row[self.ith(b, t)] = flow[e, b]
                blocks.append(row)
        self.ineq = np.array(blocks) if blocks else np.zeros((0, n))
        self.flow_rows_matrix = flow

        A = np.vstack([eq, self.ineq, np.eye(n)])
        m_eq = eq.shape[0]
        eq_mask = np.zeros(A.shape[0], dtype=bool)
        eq_mask[:m_eq] = True
        # the reference-angle pins live in the box part and are equalities too
        for t in range(T_HOURS):
            eq_mask[m_eq + self.ineq.shape[0] + self.ith(bus_idx[grid.reference_bus], t)] = True
        self.m_eq = m_eq
        self.ws = QpWorkspace(quad, A, eq_mask, engine=engine, q_hint=lin)
        self._warm = None

    def bounds(self, line_limits, load_forecast, renew_avail):
        grid = self.grid
        n = self.n
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for g_i, g in enumerate(grid.controllable):
            for t in range(T_HOURS):
                lo[self.ip(g_i, t)] = g.pmin
                hi[self.ip(g_i, t)] = g.pmax
        for j in range(self.nr):
            for t in range(T_HOURS):
                lo[self.icur(j, t)] = 0.0
                hi[self.icur(j, t)] = renew_avail[j, t]
        ref = self.grid.network.bus_index()[grid.reference_bus]
        for t in range(T_HOURS):
            lo[self.ith(ref, t)] = 0.0
            hi[self.ith(ref, t)] = 0.0

        bus_idx = grid.network.bus_index()
        rhs = np.zeros(self.nb * T_HOURS)
        for b_id, b in bus_idx.items():
            for t in range(T_HOURS):
                rhs[b * T_HOURS + t] = load_forecast[b, t]
        for j, g in enumerate(grid.renewable):
            b = bus_idx[g.bus]
            for t in range(T_HOURS):
                rhs[b * T_HOURS + t] -= renew_avail[j, t]

        ineq_lo = np.empty(self.ineq.shape[0])
        ineq_hi = np.empty(self.ineq.shape[0])
        r = 0
        for g in grid.controllable:
            for _ in range(1, T_HOURS):
                ineq_lo[r] = g.ramp_down
                ineq_hi[r] = g.ramp_up
                r += 1
        for e in range(self.ne):
            for t in range(T_HOURS):
                ineq_lo[r] = -line_limits[e, t]
                ineq_hi[r] = line_limits[e, t]
                r += 1
        l = np.concatenate([rhs, ineq_lo, lo])
        u = np.concatenate([rhs, ineq_hi, hi])
        return l, u

    def solve(self, line_limits, load_forecast, renew_avail,
              tol=1e-7, max_iter=200000) -> DispatchSolution:
        line_limits = np.asarray(line_limits, dtype=float)
        if np.any(line_limits <= 0):
            raise ValueError("line limits must be positive")
        l, u = self.bounds(line_limits, load_forecast, renew_avail)
        try:
            x, y, info = self.ws.solve(self.lin, l, u, tol=tol, max_iter=max_iter,
                                       warm=self._warm)
        except Infeasible as err:
            raise Infeasible(f"day-ahead dispatch infeasible: {err}") from err
        self._warm = (x, y, info["z"])
        grid = self.grid
        p = np.array([[x[self.ip(g, t)] for t in range(T_HOURS)] for g in range(self.nc)])
        cur = np.array([[x[self.icur(j, t)] for t in range(T_HOURS)] for j in range(self.nr)]) \
            if self.nr else np.zeros((0, T_HOURS))
        theta = np.array([[x[self.ith(b, t)] for t in range(T_HOURS)] for b in range(self.nb)])
        flows = self.flow_rows_matrix @ theta
        c1 = np.array([g.c1 for g in grid.controllable])
        c2 = np.array([g.c2 for g in grid.controllable])
        hour_cost = (c2[:, None] * p**2 + c1[:, None] * p).sum(axis=0)
        return DispatchSolution(tuple(g.gen_id for g in grid.controllable),
                                p, cur, theta, flows, hour_cost, float(hour_cost.sum()))


class RealTimeTemplate:
    """Prebuilt one-hour redispatch QP; variables [r+, r-, d, cur, theta]."""

    def __init__(self, grid: GridSpec, engine: str = "auto"):
        self.grid = grid
        nc, nr = len(grid.controllable), len(grid.renewable)
        nb, ne = grid.network.n_buses, grid.network.n_lines
        self.nc, self.nr, self.nb, self.ne = nc, nr, nb, ne
        n = 3 * nc + nr + nb
        self.n = n
        self.irp = lambda g: g
        self.irm = lambda g: nc + g
        self.id_ = lambda g: 2 * nc + g
        self.icur = lambda j: 3 * nc + j
        self.ith = lambda b: 3 * nc + nr + b

        quad = np.zeros(n)
        for g_i, g in enumerate(grid.controllable):
            quad[self.id_(g_i)] = 2.0 * g.c2
        self.quad = quad

        bus_idx = grid.network.bus_index()
        lap = _laplacian(grid)
        # d - r+ + r- = 0 per controllable unit, then bus balance
        eq = np.zeros((nc + nb, n))
        for g_i in range(nc):
            eq[g_i, self.id_(g_i)] = 1.0
            eq[g_i, self.irp(g_i)] = -1.0
            eq[g_i, self.irm(g_i)] = 1.0
        for g_i, g in enumerate(grid.controllable):
            eq[nc + bus_idx[g.bus], self.id_(g_i)] = 1.0
        for j, g in enumerate(grid.renewable):
            eq[nc + bus_idx[g.bus], self.icur(j)] = -1.0
        for b in range(nb):
            for b2 in range(nb):
                if lap[b, b2] != 0.0:
                    eq[nc + b, self.ith(b2)] = -lap[b, b2]
        self.eq = eq

        flow = _flow_rows(grid)
        ineq = np.zeros((ne, n))
        for e in range(ne):
            for b in range(nb):
                if flow[e, b] != 0.0:
                    ineq[e, self.ith(b)] = flow[e, b]
        self.ineq = ineq
        self.flow_rows_matrix = flow

        A = np.vstack([eq, ineq, np.eye(n)])
        eq_mask = np.zeros(A.shape[0], dtype=bool)
        eq_mask[:nc + nb] = True
        eq_mask[nc + nb + ne + self.ith(bus_idx[grid.reference_bus])] = True
        self.ws = QpWorkspace(quad, A, eq_mask, engine=engine)
        self._warm = None

    def solve(self, schedule, prev_final, true_limits, true_load, renew_avail,
              tol=1e-7, max_iter=200000) -> RedispatchSolution:
        """One hour of redispatch against the scheduled dispatch for that hour."""
        grid = self.grid
        nc, nr, nb = self.nc, self.nr, self.nb
        n = self.n
        lin = np.zeros(n)
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for g_i, g in enumerate(grid.controllable):
            p_star = schedule[g_i]
            lin[self.irp(g_i)] = g.c_plus
            lin[self.irm(g_i)] = -g.c_minus
            lin[self.id_(g_i)] = 2.0 * g.c2 * p_star
            lo[self.irp(g_i)] = 0.0
            hi[self.irp(g_i)] = max(0.0, g.pmax - p_star)
            lo[self.irm(g_i)] = 0.0
            hi[self.irm(g_i)] = max(0.0, p_star - g.pmin)
            d_lo = max(g.pmin - p_star, g.ramp_down + prev_final[g_i] - p_star)
            d_hi = min(g.pmax - p_star, g.ramp_up + prev_final[g_i] - p_star)
            lo[self.id_(g_i)] = min(d_lo, d_hi)
            hi[self.id_(g_i)] = max(d_lo, d_hi)
        for j in range(nr):
            lo[self.icur(j)] = 0.0
            hi[self.icur(j)] = renew_avail[j]
        bus_idx = grid.network.bus_index()
        ref = bus_idx[grid.reference_bus]
        lo[self.ith(ref)] = 0.0
        hi[self.ith(ref)] = 0.0

        rhs = np.zeros(nc + nb)
        for b in range(nb):
            rhs[nc + b] = true_load[b]
        for g_i, g in enumerate(grid.controllable):
            rhs[nc + bus_idx[g.bus]] -= schedule[g_i]
        for j, g in enumerate(grid.renewable):
            rhs[nc + bus_idx[g.bus]] -= renew_avail[j]

        l = np.concatenate([rhs, -np.asarray(true_limits, dtype=float), lo])
        u = np.concatenate([rhs, np.asarray(true_limits, dtype=float), hi])
        try:
            x, y, info = self.ws.solve(lin, l, u, tol=tol, max_iter=max_iter,
                                       warm=self._warm)
        except Infeasible as err:
            raise Infeasible(f"real-time redispatch infeasible: {err}") from err
        self._warm = (x, y, info["z"])

        r_plus = x[:nc].copy()
        r_minus = x[nc:2 * nc].copy()
        cur = x[3 * nc:3 * nc + nr].copy()
        theta = x[3 * nc + nr:].copy()
        final = np.asarray(schedule) + x[2 * nc:3 * nc]
        c1 = np.array([g.c1 for g in grid.controllable])
        c2 = np.array([g.c2 for g in grid.controllable])
        cp = np.array([g.c_plus for g in grid.controllable])
        cm = np.array([g.c_minus for g in grid.controllable])
        cost = float(np.sum(c2 * final**2 + c1 * np.asarray(schedule)
                            + cp * r_plus - cm * r_minus))
        return RedispatchSolution(r_plus, r_minus, cur, theta,
                                  self.flow_rows_matrix @ theta, final, cost)


def day_ahead(grid: GridSpec, line_limits, load_forecast, renew_avail,
              engine: str = "auto", tol: float = 1e-7) -> DispatchSolution:
    sol = DayAheadTemplate(grid, engine=engine).solve(line_limits, load_forecast,
                                                      renew_avail, tol=tol)
    check_day_ahead(grid, sol, line_limits, load_forecast, renew_avail)
    return sol


def real_time(grid: GridSpec, schedule, prev_final, true_limits, true_load,
              renew_avail, engine: str = "auto", tol: float = 1e-7) -> RedispatchSolution:
    sol = RealTimeTemplate(grid, engine=engine).solve(schedule, prev_final,
                                                      true_limits, true_load,
                                                      renew_avail, tol=tol)
    check_real_time(grid, sol, schedule, prev_final, true_limits, true_load, renew_avail)
    return sol


# -- independent constraint evaluation ----------------------------------------------

def _scaled_violation(value, bound_lo, bound_hi):
    scale = 1.0 + max(abs(bound_lo) if np.isfinite(bound_lo) else 0.0,
                      abs(bound_hi) if np.isfinite(bound_hi) else 0.0)
    v = 0.0
    if np.isfinite(bound_lo):
        v = max(v, (bound_lo - value) / scale)
    if np.isfinite(bound_hi):
        v = max(v, (value - bound_hi) / scale)
    return v


def check_day_ahead(grid: GridSpec, sol: DispatchSolution, line_limits,
                    load_forecast, renew_avail, tol: float = 1e-6) -> float:
    """Re-evaluates every scheduling constraint from first principles."""
    worst = 0.0
    for g_i, g in enumerate(grid.controllable):
        for t in range(T_HOURS):
            worst = max(worst, _scaled_violation(sol.p[g_i, t], g.pmin, g.pmax))
            if t >= 1:
                worst = max(worst, _scaled_violation(sol.p[g_i, t] - sol.p[g_i, t - 1],
                                                     g.ramp_down, g.ramp_up))
    for j in range(len(grid.renewable)):
        for t in range(T_HOURS):
            worst = max(worst, _scaled_violation(sol.curtail_da[j, t], 0.0,
                                                 renew_avail[j, t]))
    flow = _flow_rows(grid) @ sol.theta
    for e in range(grid.network.n_lines):
        for t in range(T_HOURS):
            worst = max(worst, _scaled_violation(flow[e, t], -line_limits[e, t],
                                                 line_limits[e, t]))
    worst = max(worst, _balance_violation(grid, sol.p, sol.curtail_da, sol.theta,
                                          load_forecast, renew_avail))
    ref = grid.network.bus_index()[grid.reference_bus]
    worst = max(worst, float(np.max(np.abs(sol.theta[ref]))))
    if worst > tol:
        raise Infeasible(f"day-ahead solution violates constraints by {worst:.3e}")
    return worst


def _balance_violation(grid, p, cur, theta, loads, avail) -> float:
    bus_idx = grid.network.bus_index()
    nb = grid.network.n_buses
    inj = np.zeros((nb,) + p.shape[1:]) if p.ndim > 1 else np.zeros(nb)
    for g_i, g in enumerate(grid.controllable):
        inj[bus_idx[g.bus]] += p[g_i]
    for j, g in enumerate(grid.renewable):
        inj[bus_idx[g.bus]] += avail[j] - cur[j]
    inj -= loads
    lap = _laplacian(grid)
    resid = inj - np.tensordot(lap, theta, axes=(1, 0))
    scale = 1.0 + np.max(np.abs(loads))
    return float(np.max(np.abs(resid)) / scale)


def check_real_time(grid: GridSpec, sol: RedispatchSolution, schedule, prev_final,
                    true_limits, true_load, renew_avail, tol: float = 1e-6) -> float:
    worst = 0.0
    for g_i, g in enumerate(grid.controllable):
        worst = max(worst, _scaled_violation(sol.r_plus[g_i], 0.0, g.pmax - schedule[g_i]))
        worst = max(worst, _scaled_violation(sol.r_minus[g_i], 0.0, schedule[g_i] - g.pmin))
        worst = max(worst, _scaled_violation(sol.final_dispatch[g_i], g.pmin, g.pmax))
        worst = max(worst, _scaled_violation(sol.final_dispatch[g_i] - prev_final[g_i],
                                             g.ramp_down, g.ramp_up))
        link = sol.final_dispatch[g_i] - schedule[g_i] - sol.r_plus[g_i] + sol.r_minus[g_i]
        worst = max(worst, abs(link) / (1.0 + abs(schedule[g_i])))
    for j in range(len(grid.renewable)):
        worst = max(worst, _scaled_violation(sol.curtail_rt[j], 0.0, renew_avail[j]))
    flow = _flow_rows(grid) @ sol.theta
    for e in range(grid.network.n_lines):
        worst = max(worst, _scaled_violation(flow[e], -true_limits[e], true_limits[e]))
    p_final = sol.final_dispatch.reshape(-1, 1)
    worst = max(worst, _balance_violation(grid, p_final, sol.curtail_rt.reshape(-1, 1),
                                          sol.theta.reshape(-1, 1),
                                          np.asarray(true_load).reshape(-1, 1),
                                          np.asarray(renew_avail).reshape(-1, 1)))
    ref = grid.network.bus_index()[grid.reference_bus]
    worst = max(worst, abs(sol.theta[ref]))
    if worst > tol:
        raise Infeasible(f"real-time solution violates constraints by {worst:.3e}")
    return worst


# -- one operated day -----------------------------------------------------------------

@dataclass
class OperationReport:
    """Per-hour day-ahead and redispatch accounting for one operated day."""

    da_cost: np.ndarray        # (24,)
    up_rd_mw: np.ndarray
    down_rd_mw: np.ndarray
    up_rd_cost: np.ndarray
    down_rd_cost: np.ndarray
    rd_cost: np.ndarray        # realized hour cost minus the day-ahead hour cost
    total_cost: np.ndarray     # (24,) realized cost per hour
    da_curtail_mwh: np.ndarray
    rt_curtail_mwh: np.ndarray

    @property
    def totals(self) -> dict:
        return {
            "da_cost": float(self.da_cost.sum()),
            "up_rd_mw": float(self.up_rd_mw.sum()),
            "down_rd_mw": float(self.down_rd_mw.sum()),
            "up_rd_cost": float(self.up_rd_cost.sum()),
            "down_rd_cost": float(self.down_rd_cost.sum()),
            "rd_cost": float(self.rd_cost.sum()),
            "total_cost": float(self.total_cost.sum()),
            "da_curtail_mwh": float(self.da_curtail_mwh.sum()),
            "rt_curtail_mwh": float(self.rt_curtail_mwh.sum()),
        }


def operate_day(grid: GridSpec, da_limits, da_loads, true_limits, true_loads,
                renew_avail, templates=None, engine: str = "auto",
                tol: float = 1e-7) -> tuple[OperationReport, DispatchSolution]:
    """Day-ahead solve followed by 24 sequential real-time redispatches.

    Hour 1 ramps against the day-ahead schedule of hour 1 (no earlier state
    exists); later hours ramp against the previous hour's final dispatch.
    """
    if templates is None:
        templates = (DayAheadTemplate(grid, engine), RealTimeTemplate(grid, engine))
    da_t, rt_t = templates
    try:
        da = da_t.solve(da_limits, da_loads, renew_avail, tol=tol)
    except Infeasible as err:
        raise Infeasible(f"stage=day-ahead: {err}") from err
    check_day_ahead(grid, da, da_limits, da_loads, renew_avail)

    cp = np.array([g.c_plus for g in grid.controllable])
    cm = np.array([g.c_minus for g in grid.controllable])
    rep = OperationReport(*(np.zeros(T_HOURS) for _ in range(9)))
    rep.da_cost[:] = da.hour_cost
    rep.da_curtail_mwh[:] = da.curtail_da.sum(axis=0) if da.curtail_da.size else 0.0

    prev_final = da.p[:, 0].copy()
    for t in range(T_HOURS):
        try:
            rt = rt_t.solve(da.p[:, t], prev_final, true_limits[:, t],
                            true_loads[:, t], renew_avail[:, t], tol=tol)
        except Infeasible as err:
            raise Infeasible(f"stage=real-time hour={t}: {err}") from err
        check_real_time(grid, rt, da.p[:, t], prev_final, true_limits[:, t],
                        true_loads[:, t], renew_avail[:, t])
        rep.up_rd_mw[t] = rt.r_plus.sum()
        rep.down_rd_mw[t] = rt.r_minus.sum()
        rep.up_rd_cost[t] = float(cp @ rt.r_plus)
        rep.down_rd_cost[t] = -float(cm @ rt.r_minus)
        rep.total_cost[t] = rt.hour_cost
        rep.rd_cost[t] = rt.hour_cost - da.hour_cost[t]
        rep.rt_curtail_mwh[t] = rt.curtail_rt.sum()
        prev_final = rt.final_dispatch
    return rep, da
