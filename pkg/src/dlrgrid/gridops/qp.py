"""Convex QP solver: operator-splitting iterations plus active-set polish.

Problems carry a diagonal quadratic term and are solved in the box form
min 1/2 x'Px + q'x s.t. l <= Ax <= u (equalities encoded as l == u).  The
iteration loop runs in a compiled extension when available, with a numpy
fallback selected at import; every accepted solution ships with a KKT
certificate checked outside the solver loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import Infeasible, IterationLimit

try:
    from . import _qpcore

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _qpcore = None
    HAVE_COMPILED = False

from . import _qpcore_py

_RHO_EQ_SCALE = 1e3
_RHO_MIN, _RHO_MAX = 1e-6, 1e6


def _core(engine: str):
    if engine == "auto":
        return (_qpcore, "compiled") if HAVE_COMPILED else (_qpcore_py, "python")
    if engine == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled QP core is not available")
        return _qpcore, "compiled"
    if engine == "python":
        return _qpcore_py, "python"
    raise ValueError(f"unknown engine {engine!r}")


@dataclass
class QpProblem:
    """min 1/2 x' diag(quad_diag) x + linear' x subject to the listed constraints."""

    quad_diag: np.ndarray
    linear: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_lower: np.ndarray | None = None
    ineq_upper: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.quad_diag = np.asarray(self.quad_diag, dtype=float)
        self.linear = np.asarray(self.linear, dtype=float)
        n = self.linear.size
        if self.quad_diag.size != n:
            raise ValueError("quad_diag and linear dimensions differ")
        if np.any(self.quad_diag < 0):
            raise ValueError("quadratic diagonal must be nonnegative (convexity)")
        if self.lower is None:
            self.lower = np.full(n, -np.inf)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)

    @property
    def n(self) -> int:
        return self.linear.size

    def stacked(self):
        """Box form (A, l, u): equality rows, inequality rows, then identity rows."""
        n = self.n
        blocks, lows, highs = [], [], []
        if self.eq_matrix is not None and len(self.eq_matrix):
            eq = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
            rhs = np.atleast_1d(np.asarray(self.eq_rhs, dtype=float))
            blocks.append(eq)
            lows.append(rhs)
            highs.append(rhs)
        if self.ineq_matrix is not None and len(self.ineq_matrix):
            gi = np.atleast_2d(np.asarray(self.ineq_matrix, dtype=float))
            blocks.append(gi)
            lows.append(np.atleast_1d(np.asarray(self.ineq_lower, dtype=float)))
            highs.append(np.atleast_1d(np.asarray(self.ineq_upper, dtype=float)))
        blocks.append(np.eye(n))
        lows.append(self.lower)
        highs.append(self.upper)
        A = np.ascontiguousarray(np.vstack(blocks))
        return A, np.concatenate(lows), np.concatenate(highs)

    def objective(self, x) -> float:
        return float(0.5 * np.dot(self.quad_diag * x, x) + np.dot(self.linear, x))


@dataclass
class QpSolution:
    x: np.ndarray
    duals: np.ndarray
    objective: float
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    comp_gap: float
    engine: str = "python"


def kkt_residuals(P_diag, q, A, l, u, x, y):
    """Certificate residuals computed independently of the solver iterates.

    Returns (primal, dual, complementarity); complementarity includes dual
    sign violations (y > 0 on a row away from its upper bound and vice versa).
    """
    ax = A @ x
    prim = float(np.max(np.maximum(ax - u, 0.0), initial=0.0))
    prim = max(prim, float(np.max(np.maximum(l - ax, 0.0), initial=0.0)))
    dual = float(np.max(np.abs(P_diag * x + q + A.T @ y), initial=0.0))

    yp = np.maximum(y, 0.0)
    ym = np.maximum(-y, 0.0)
    gap_u = np.where(np.isfinite(u), np.minimum(np.abs(u - ax), 1.0), 1.0) * yp
    gap_l = np.where(np.isfinite(l), np.minimum(np.abs(ax - l), 1.0), 1.0) * ym
    eq = np.isfinite(u) & np.isfinite(l) & (u - l < 1e-12)
    gap_u[eq] = 0.0
    gap_l[eq] = 0.0
    comp = float(np.max(gap_u + gap_l, initial=0.0))
    return prim, dual, comp


def _ruiz_scaling(P_diag, A, q_hint, iters=10):
    """Modified Ruiz equilibration of [[P, A'], [A, 0]] plus cost scaling."""
    m, n = A.shape
    D = np.ones(n)
    E = np.ones(m)
    c = 1.0
    Ps = P_diag.copy()
    As = A.copy()
    qs = q_hint.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Ps), np.max(np.abs(As), axis=0, initial=0.0))
        row = np.max(np.abs(As), axis=1, initial=0.0)
        d = 1.0 / np.sqrt(np.where(col > 0, col, 1.0))
        e = 1.0 / np.sqrt(np.where(row > 0, row, 1.0))
        Ps *= d * d
        qs *= d
        As = e[:, None] * As * d[None, :]
        D *= d
        E *= e
        norm_p = np.mean(np.abs(Ps)) if n else 0.0
        norm_q = np.max(np.abs(qs), initial=0.0)
        gamma = max(norm_p, norm_q)
        gamma = 1.0 / gamma if gamma > 0 else 1.0
        Ps *= gamma
        qs *= gamma
        c *= gamma
    return D, E, c, Ps, np.ascontiguousarray(As)


class QpWorkspace:
    """Prefactorized solver state reusable across solves that share P and A."""

    def __init__(self, P_diag, A, eq_mask, engine="auto", sigma=1e-6, alpha=1.6,
                 rho0=0.1, q_hint=None):
        self.P_diag = np.asarray(P_diag, dtype=float)
        self.A = np.ascontiguousarray(A, dtype=float)
        self.eq_mask = np.asarray(eq_mask, dtype=bool)
        self.m, self.n = self.A.shape
        self.sigma = sigma
        self.alpha = alpha
        self.core, self.engine = _core(engine)
        if q_hint is None:
            q_hint = np.ones(self.n)
        self.D, self.E, self.c, self.Ps, self.As = _ruiz_scaling(
            self.P_diag, self.A, np.asarray(q_hint, dtype=float))
        self._set_rho(np.where(self.eq_mask, rho0 * _RHO_EQ_SCALE, rho0))

    def _set_rho(self, rho):
        self.rho = np.clip(rho, _RHO_MIN, _RHO_MAX)
        K = np.diag(self.Ps + self.sigma) + self.As.T @ (self.rho[:, None] * self.As)
        self.L = np.ascontiguousarray(np.linalg.cholesky(K))

    def solve(self, q, l, u, tol=1e-8, max_iter=50000, warm=None):
        """Solve for new (q, l, u); returns (x, y, info).

        info carries the certificate, iteration count and the z iterate for
        warm starting.  Raises Infeasible on a primal infeasibility
        certificate, IterationLimit when max_iter passes without meeting tol.
        """
        q = np.asarray(q, dtype=float)
        l = np.asarray(l, dtype=float)
        u = np.asarray(u, dtype=float)
        qs = self.c * self.D * q
        ls = self.E * l
        us = self.E * u

        if warm is not None:
            wx, wy, wz = warm
            x = wx / self.D
            z = np.clip(self.E * wz, ls, us)
            y = self.c * wy / self.E
        else:
            x = np.zeros(self.n)
            z = np.clip(np.zeros(self.m), ls, us)
            y = np.zeros(self.m)

        eps = max(tol, 1e-9)
        total_it = 0
        best = None

        def track(bx, by, res):
            nonlocal best
            if best is None or max(res) < max(best[2]):
                best = (bx, by, res)

        while total_it < max_iter:
            y_before = y.copy()
            budget = min(6000, max_iter - total_it)
            converged, it, rp, rd = self.core.run_admm(
                self.Ps, qs, self.As, self.L, self.rho, self.sigma, self.alpha,
                ls, us, x, z, y, budget, 25, eps * 0.1, eps * 0.1)
            total_it += it

            xu = self.D * x
            yu = self.E * y / self.c
            res = kkt_residuals(self.P_diag, q, self.A, l, u, xu, yu)
            track(xu, yu, res)
            if max(res) <= tol:
                return xu, yu, self._info(total_it, res, z / self.E, polished=False)

            if converged or max(res) <= 1e3 * tol:
                cand = self._polish(q, l, u, xu, yu)
                if cand is not None:
                    px, py, pres = cand
                    track(px, py, pres)
                    if max(pres) <= tol:
                        return px, py, self._info(total_it, pres, z / self.E, polished=True)

            self._check_infeasible(y - y_before, ls, us)

            if converged:
                eps *= 0.1
            else:
                scaled_rp = rp / max(1e-12, np.max(np.abs(self.As @ x), initial=0.0),
                                     np.max(np.abs(z), initial=0.0))
                scaled_rd = rd / max(1e-12, np.max(np.abs(self.Ps * x), initial=0.0),
                                     np.max(np.abs(qs), initial=0.0),
                                     np.max(np.abs(self.As.T @ y), initial=0.0))
                ratio = np.sqrt(scaled_rp / max(scaled_rd, 1e-16))
                if ratio > 5.0 or ratio < 0.2:
                    self._set_rho(self.rho * ratio)

        if best is not None and max(best[2]) <= 10 * tol:
            bx, by, res = best
            return bx, by, self._info(total_it, res, z / self.E, polished=True)
        worst = max(best[2]) if best is not None else np.inf
        raise IterationLimit(
            f"QP did not reach tol={tol} in {max_iter} iterations (best certificate {worst:.3e})")

    def _info(self, iterations, res, z, polished):
        return {"iterations": iterations, "status": "solved", "primal": res[0],
                "dual": res[1], "comp": res[2], "z": z, "polished": polished}

    def _check_infeasible(self, dy, ls, us, eps_inf=1e-6):
        """OSQP-style primal infeasibility certificate in scaled space."""
        ndy = np.max(np.abs(dy), initial=0.0)
        if ndy <= 1e-14:
            return
        dy = dy / ndy
        if np.any(np.isinf(us) & (dy > eps_inf)):
            return
        if np.any(np.isinf(ls) & (dy < -eps_inf)):
            return
        if np.max(np.abs(self.As.T @ dy), initial=0.0) > eps_inf:
            return
        dyp = np.maximum(dy, 0.0)
        dym = np.minimum(dy, 0.0)
        fin_u = np.isfinite(us)
        fin_l = np.isfinite(ls)
        support = float(us[fin_u] @ dyp[fin_u] + ls[fin_l] @ dym[fin_l])
        if support < -eps_inf:
            raise Infeasible("primal infeasibility certificate found")

    def _polish(self, q, l, u, x, y, delta=1e-9):
        """Equality-constrained resolve on the detected active set (Schur form)."""
        ax = self.A @ x
        ytol = 1e-6 * max(1.0, np.max(np.abs(y), initial=0.0))
        span = np.where(np.isfinite(u) & np.isfinite(l), u - l, np.inf)
        eq_rows = span < 1e-12
        ztol = 1e-5 * np.maximum(1.0, np.abs(ax))
        low = eq_rows | ((y < -ytol) & np.isfinite(l)) | (np.isfinite(l) & (ax - l < ztol))
        up = (~low) & (((y > ytol) & np.isfinite(u)) | (np.isfinite(u) & (u - ax < ztol)))
        active = low | up
        if not np.any(active):
            return None
        G = self.A[active]
        b = np.where(low, l, u)[active]
        p_reg = self.P_diag + delta
        try:
            S = G @ (G / p_reg).T + delta * np.eye(G.shape[0])
            chol = cho_factor(S, check_finite=False)
        except np.linalg.LinAlgError:
            return None

        def kkt_solve(r1, r2):
            nu = cho_solve(chol, G @ (r1 / p_reg) - r2, check_finite=False)
            return (r1 - G.T @ nu) / p_reg, nu

        px, nu = kkt_solve(-q, b)
        for _ in range(3):  # refine against the unregularized KKT system
            r1 = -q - self.P_diag * px - G.T @ nu
            r2 = b - G @ px
            dx, dnu = kkt_solve(r1, r2)
            px = px + dx
            nu = nu + dnu
        py = np.zeros(self.m)
        py[active] = nu
        return px, py, kkt_residuals(self.P_diag, q, self.A, l, u, px, py)


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 50000,
             engine: str = "auto") -> QpSolution:
    """Solve a QpProblem and return the solution with its KKT certificate."""
    A, l, u = problem.stacked()
    eq_mask = np.isfinite(l) & np.isfinite(u) & (u - l < 1e-12)
    ws = QpWorkspace(problem.quad_diag, A, eq_mask, engine=engine, q_hint=problem.linear)
    x, y, info = ws.solve(problem.linear, l, u, tol=tol, max_iter=max_iter)
    return QpSolution(
        x=x,
        duals=y,
        objective=problem.objective(x),
        status=info["status"],
        iterations=info["iterations"],
        primal_residual=info["primal"],
        dual_residual=info["dual"],
        comp_gap=info["comp"],
        engine=ws.engine,
    )
