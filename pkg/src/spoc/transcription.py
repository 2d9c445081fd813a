"""Multiple-domain LGR transcription of an :class:`OcpDefinition`.

Decision vector layout (all scaled)::

    [ Y (P support points x n_y, point-major) | U (P-1 collocation points x n_u) | t_0 .. t_D ]

Support points of consecutive mesh intervals and domains share one variable,
so state continuity costs no rows.  The global collocation points are every
support point except the last one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import casadi as ca
import numpy as np
import scipy.sparse as sp

from .lgr import differentiation_matrix, lgr_points
from .ocp import ConstraintKind, OcpDefinition
from .solution import DomainSolution, TrajectorySolution

try:  # silence the legacy-numpy notice; callbacks rely on ufunc dispatch
    ca.GlobalOptions.setNumpyMode(-1)
except AttributeError:  # pragma: no cover
    pass

MIN_DOMAIN_DURATION = 0.1


class LayoutError(ValueError):
    pass


class TranscriptionError(ValueError):
    pass


@dataclass
class Domain:
    breaks: np.ndarray
    degrees: np.ndarray
    active: tuple[tuple[int, str], ...] = ()
    tangency_at_entry: bool = True

    def __post_init__(self):
        self.breaks = np.asarray(self.breaks, dtype=float)
        self.degrees = np.asarray(self.degrees, dtype=int)

    @property
    def n_points(self) -> int:
        return int(self.degrees.sum())


@dataclass
class DomainLayout:
    """Ordered domains plus interface-time guesses and bound windows.

    ``times`` has D+1 entries (t0, interfaces, tf); ``time_bounds`` is
    (D+1, 2).  Endpoint windows are intersected with the problem's own
    initial/final time bounds at transcription.
    """

    domains: list[Domain]
    times: np.ndarray
    time_bounds: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.time_bounds is None:
            tb = np.column_stack([self.times, self.times])
            tb[0] = (-np.inf, np.inf)
            tb[-1] = (-np.inf, np.inf)
            self.time_bounds = tb
        self.time_bounds = np.asarray(self.time_bounds, dtype=float)

    @classmethod
    def single(cls, t0: float, tf: float, n_intervals: int, degree: int) -> "DomainLayout":
        dom = Domain(np.linspace(-1.0, 1.0, n_intervals + 1), np.full(n_intervals, degree))
        return cls([dom], np.array([t0, tf]))

    def check(self) -> None:
        if not self.domains:
            raise LayoutError("layout has no domains")
        if len(self.times) != len(self.domains) + 1:
            raise LayoutError("need one interface time per domain boundary")
        for d, dom in enumerate(self.domains):
            if dom.degrees.size == 0:
                raise LayoutError(f"domain {d} has no mesh intervals")
            if dom.breaks.size != dom.degrees.size + 1:
                raise LayoutError(f"domain {d}: breaks and degrees disagree")
            if dom.breaks[0] != -1.0 or dom.breaks[-1] != 1.0 or np.any(np.diff(dom.breaks) <= 0):
                raise LayoutError(f"domain {d}: mesh must partition [-1, 1]")
            if np.any(dom.degrees < 1):
                raise LayoutError(f"domain {d}: degrees must be positive")
        if np.any(np.diff(self.times) <= 0):
            raise LayoutError("interface time guesses must be strictly increasing")
        lo, hi = self.time_bounds[:, 0], self.time_bounds[:, 1]
        if np.any(lo > hi):
            raise LayoutError("inverted interface window")
        # interior windows must be disjoint and ordered
        inner = slice(1, len(self.times) - 1)
        ilo, ihi = lo[inner], hi[inner]
        if np.any(ihi[:-1] > ilo[1:]):
            raise LayoutError("interface windows overlap")

    @property
    def n_points(self) -> int:
        return sum(d.n_points for d in self.domains) + 1


class Evaluation(NamedTuple):
    objective: float
    residuals: np.ndarray
    poisoned: bool


@dataclass
class RowBlock:
    name: str
    rows: slice
    kind: str  # defect | path | equality | tangency | boundary | safeguard
    domain: int = -1
    constraint: int = -1


@dataclass
class SparseNlp:
    problem: OcpDefinition
    layout: DomainLayout
    x: ca.SX
    f_expr: ca.SX
    g_expr: ca.SX
    x0: np.ndarray
    lbx: np.ndarray
    ubx: np.ndarray
    lbg: np.ndarray
    ubg: np.ndarray
    blocks: list[RowBlock]
    offsets: list[int]  # first global support point of every domain
    pattern_rows: np.ndarray = field(repr=False, default=None)
    pattern_cols: np.ndarray = field(repr=False, default=None)
    _fg: ca.Function = field(repr=False, default=None)

    def __post_init__(self):
        self._fg = ca.Function("fg", [self.x], [self.f_expr, self.g_expr])

    # -- layout -------------------------------------------------------
    @property
    def n_x(self) -> int:
        return self.x.numel()

    @property
    def n_g(self) -> int:
        return self.g_expr.numel()

    @property
    def n_points(self) -> int:
        return self.layout.n_points

    def state_index(self, point: int, j: int = 0) -> int:
        return point * self.problem.n_y + j

    def control_index(self, point: int, j: int = 0) -> int:
        return self.n_points * self.problem.n_y + point * self.problem.n_u + j

    def time_index(self, d: int) -> int:
        return self.n_x - (len(self.layout.domains) + 1) + d

    def block(self, name: str) -> RowBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    # -- evaluation ---------------------------------------------------
    def evaluate(self, x) -> Evaluation:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_x,):
            raise ValueError(f"decision vector must have length {self.n_x}")
        f, g = self._fg(x)
        f = float(f)
        g = np.asarray(g, dtype=float).ravel()
        poisoned = not (np.isfinite(f) and np.all(np.isfinite(g)))
        return Evaluation(f, g, poisoned)

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        g = self.evaluate(x).residuals
        gv = np.maximum(self.lbg - g, 0.0) + np.maximum(g - self.ubg, 0.0)
        xv = np.maximum(self.lbx - x, 0.0) + np.maximum(x - self.ubx, 0.0)
        return float(max(gv.max(initial=0.0), xv.max(initial=0.0)))

    def jacobian_pattern(self) -> sp.csr_matrix:
        data = np.ones(self.pattern_rows.size, dtype=bool)
        pat = sp.coo_matrix((data, (self.pattern_rows, self.pattern_cols)), shape=(self.n_g, self.n_x))
        pat.sum_duplicates()
        return pat.tocsr()

    def fd_jacobian(self, x) -> sp.csr_matrix:
        """Sparse central-difference Jacobian using column groups of the pattern."""
        x = np.asarray(x, dtype=float)
        pat = self.jacobian_pattern().tocsc()
        groups = column_groups(pat)
        h = np.cbrt(np.finfo(float).eps) * (1.0 + np.abs(x))
        rows_out, cols_out, vals_out = [], [], []
        for group in groups:
            step = np.zeros_like(x)
            step[group] = h[group]
            gp = self.evaluate(x + step).residuals
            gm = self.evaluate(x - step).residuals
            diff = gp - gm
            for c in group:
                r = pat.indices[pat.indptr[c]:pat.indptr[c + 1]]
                rows_out.append(r)
                cols_out.append(np.full(r.size, c))
                vals_out.append(diff[r] / (2.0 * h[c]))
        rows = np.concatenate(rows_out) if rows_out else np.zeros(0, int)
        cols = np.concatenate(cols_out) if cols_out else np.zeros(0, int)
        vals = np.concatenate(vals_out) if vals_out else np.zeros(0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_g, self.n_x))

    def fd_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = np.cbrt(np.finfo(float).eps) * (1.0 + np.abs(x))
        grad = np.empty_like(x)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h[j]
            grad[j] = (self.evaluate(x + e).objective - self.evaluate(x - e).objective) / (2 * h[j])
        return grad

    # -- results ------------------------------------------------------
    def unpack(self, x):
        """Physical (Y, U, times) from a scaled decision vector."""
        x = np.asarray(x, dtype=float)
        pr = self.problem
        sc = pr.scaling
        P = self.n_points
        ys = x[: P * pr.n_y].reshape(P, pr.n_y)
        us = x[P * pr.n_y: P * pr.n_y + (P - 1) * pr.n_u].reshape(P - 1, pr.n_u)
        ts = x[-(len(self.layout.domains) + 1):]
        return sc.unscale_state(ys), sc.unscale_control(us), sc.unscale_time(ts)

    def solution(self, x, *, status: str = "unknown") -> TrajectorySolution:
        Y, U, times = self.unpack(x)
        doms = []
        for d, dom in enumerate(self.layout.domains):
            o = self.offsets[d]
            n = dom.n_points
            doms.append(DomainSolution(
                float(times[d]), float(times[d + 1]), dom.breaks.copy(), dom.degrees.copy(),
                Y[o:o + n + 1].copy(), U[o:o + n].copy(), tuple(dom.active),
            ))
        return TrajectorySolution(doms, objective=self.evaluate(x).objective, status=status)

    def structure(self) -> dict:
        """JSON-friendly summary of dimensions, bounds and sparsity."""
        return {
            "n_x": self.n_x,
            "n_g": self.n_g,
            "nnz_jacobian": int(self.jacobian_pattern().nnz),
            "domains": [
                {
                    "breaks": dom.breaks.tolist(),
                    "degrees": dom.degrees.tolist(),
                    "active": [list(a) for a in dom.active],
                    "time_window": self.layout.time_bounds[d + 1].tolist(),
                }
                for d, dom in enumerate(self.layout.domains)
            ],
            "blocks": [
                {"name": b.name, "kind": b.kind, "start": b.rows.start, "stop": b.rows.stop}
                for b in self.blocks
            ],
            "lbx": _jsonable(self.lbx),
            "ubx": _jsonable(self.ubx),
            "lbg": _jsonable(self.lbg),
            "ubg": _jsonable(self.ubg),
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.structure(), fh, indent=1)


def _jsonable(a):
    return [None if not np.isfinite(v) else float(v) for v in a]


def column_groups(pattern: sp.csc_matrix) -> list[np.ndarray]:
    """Greedy partition of columns into structurally orthogonal groups."""
    pattern = pattern.tocsc()
    n_rows, n_cols = pattern.shape
    groups: list[list[int]] = []
    used_rows: list[np.ndarray] = []
    for c in range(n_cols):
        rows = pattern.indices[pattern.indptr[c]:pattern.indptr[c + 1]]
        placed = False
        for gi, mask in enumerate(used_rows):
            if not mask[rows].any():
                mask[rows] = True
                groups[gi].append(c)
                placed = True
                break
        if not placed:
            mask = np.zeros(n_rows, dtype=bool)
            mask[rows] = True
            used_rows.append(mask)
            groups.append([c])
    return [np.array(g) for g in groups]


def _cols(cols, n):
    out = []
    for c in cols:
        c = ca.SX(c)
        if c.numel() == 1 and n > 1:
            c = ca.repmat(c, n, 1)
        out.append(c)
    return ca.horzcat(*out)


def _scale_cols(M, scale, shift):
    n = M.shape[0]
    S = ca.repmat(ca.DM(np.asarray(scale, float)).T, n, 1)
    B = ca.repmat(ca.DM(np.asarray(shift, float)).T, n, 1)
    return M * S + B


def transcribe(problem: OcpDefinition, layout: DomainLayout, guess) -> SparseNlp:
    """Build the sparse NLP for ``problem`` on ``layout`` initialised from ``guess``.

    ``guess`` is anything exposing ``t0``, ``tf``, ``state_at(t)`` and
    ``control_at(t)`` (a :class:`TrajectorySolution` or a simple guess).
    """
    layout.check()
    pr = problem
    sc = pr.scaling
    n_y, n_u = pr.n_y, pr.n_u
    D = len(layout.domains)
    span = layout.times[-1] - layout.times[0]
    tol = 1e-6 * max(1.0, abs(span))
    if layout.times[0] < guess.t0 - tol or layout.times[-1] > guess.tf + tol:
        raise TranscriptionError(
            f"guess covers [{guess.t0}, {guess.tf}] but layout spans "
            f"[{layout.times[0]}, {layout.times[-1]}]"
        )

    # ---- static structure -------------------------------------------
    offsets = []
    tau_col, dom_of_col, d_blocks, w_col = [], [], [], []
    interval_support = []  # global support indices per interval, for the pattern
    P = layout.n_points
    o = 0
    for d, dom in enumerate(layout.domains):
        offsets.append(o)
        for k, n in enumerate(dom.degrees):
            a, b = dom.breaks[k], dom.breaks[k + 1]
            rule = lgr_points(int(n)).mapped(a, b)
            dm = differentiation_matrix(lgr_points(int(n))) * (2.0 / (b - a))
            rows = np.arange(o, o + n)
            cols = np.arange(o, o + n + 1)
            d_blocks.append((rows, cols, dm))
            interval_support.append((rows, cols))
            tau_col.append(rule.nodes)
            w_col.append(rule.weights)
            dom_of_col.append(np.full(n, d))
            o += int(n)
    tau_col = np.concatenate(tau_col)
    w_col = np.concatenate(w_col)
    dom_of_col = np.concatenate(dom_of_col)
    n_col = P - 1
    assert o == n_col

    dr, dc, dv = [], [], []
    for rows, cols, dm in d_blocks:
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        dr.append(rr.ravel())
        dc.append(cc.ravel())
        dv.append(dm.ravel())
    dmat = sp.csc_matrix((np.concatenate(dv), (np.concatenate(dr), np.concatenate(dc))),
                         shape=(n_col, P))
    # t(tau) = t_{d-1} (1 - tau)/2 + t_d (1 + tau)/2 ; half-duration = (t_d - t_{d-1})/2
    idx = np.arange(n_col)
    tmap = sp.csc_matrix(
        (np.concatenate([(1 - tau_col) / 2, (1 + tau_col) / 2]),
         (np.concatenate([idx, idx]), np.concatenate([dom_of_col, dom_of_col + 1]))),
        shape=(n_col, D + 1),
    )
    hmap = sp.csc_matrix(
        (np.concatenate([-0.5 * np.ones(n_col), 0.5 * np.ones(n_col)]),
         (np.concatenate([idx, idx]), np.concatenate([dom_of_col, dom_of_col + 1]))),
        shape=(n_col, D + 1),
    )

    # ---- symbolic variables -----------------------------------------
    nx = P * n_y + n_col * n_u + D + 1
    x = ca.SX.sym("x", nx)
    ys = ca.reshape(x[: P * n_y], n_y, P).T
    us = ca.reshape(x[P * n_y: P * n_y + n_col * n_u], n_u, n_col).T
    tsv = x[P * n_y + n_col * n_u:]
    Y = _scale_cols(ys, sc.state_scale, sc.state_shift)
    U = _scale_cols(us, sc.control_scale, sc.control_shift)
    times = tsv * sc.time_scale + sc.time_shift
    t_col = ca.mtimes(ca.DM(tmap), times)
    half = ca.mtimes(ca.DM(hmap), times)
    Ycol = Y[:n_col, :]
    p = pr.params

    g_parts, lbg, ubg, blocks = [], [], [], []
    prow, pcol = [], []  # jacobian pattern
    row = 0
    tcols = P * n_y + n_col * n_u + np.arange(D + 1)
    ycols = lambda pt: pt * n_y + np.arange(n_y)  # noqa: E731
    ucols = lambda pt: P * n_y + pt * n_u + np.arange(n_u)  # noqa: E731

    def add(name, kind, expr, lo, hi, deps, domain=-1, constraint=-1):
        nonlocal row
        expr = ca.vec(expr) if expr.shape[1] > 1 else expr
        m = expr.numel()
        g_parts.append(expr)
        lbg.append(np.broadcast_to(np.asarray(lo, float), (m,)))
        ubg.append(np.broadcast_to(np.asarray(hi, float), (m,)))
        for i, cols in enumerate(deps):
            prow.append(np.full(len(cols), row + i))
            pcol.append(np.asarray(cols))
        blocks.append(RowBlock(name, slice(row, row + m), kind, domain, constraint))
        row += m

    # collocated dynamics
    F = _cols(pr.dynamics(Ycol, U, t_col, p), n_col)
    half_mat = ca.repmat(half, 1, n_y)
    inv_scale = ca.repmat(ca.DM(1.0 / np.asarray(sc.state_scale, float)).T, n_col, 1)
    defects = ca.mtimes(ca.DM(dmat), ys) - half_mat * F * inv_scale
    defect_deps = []
    for rows, cols in interval_support:
        for r in rows:
            d = dom_of_col[r]
            dep = np.concatenate([np.concatenate([ycols(c) for c in cols]), ucols(r),
                                  tcols[[d, d + 1]]])
            defect_deps.extend([dep] * n_y)
    add("defects", "defect", ca.vec(defects.T), 0.0, 0.0, defect_deps)

    # path constraints and index reduction
    values = {}

    def cvalue(i, order):
        key = (i, order)
        if key not in values:
            con = pr.path_constraints[i]
            fn = con.evaluate if order == 0 else con.derivatives[order - 1]
            values[key] = _cols([fn(Ycol, U, t_col, p)], n_col)
        return values[key]

    for d, dom in enumerate(layout.domains):
        pts = np.arange(offsets[d], offsets[d] + dom.n_points)
        active = dict(dom.active)
        point_deps = [np.concatenate([ycols(r), ucols(r), tcols[[d, d + 1]]]) for r in pts]
        for i, con in enumerate(pr.path_constraints):
            if i in active:
                which = active[i]
                if con.kind != ConstraintKind.STATE or not con.derivatives:
                    raise TranscriptionError(f"constraint {con.name!r} cannot be index-reduced")
                q = con.order
                dscale = con.scale / sc.time_scale**q
                expr = cvalue(i, q)[pts.tolist()] / dscale
                add(f"equality[{d}][{con.name}]", "equality", expr, 0.0, 0.0, point_deps, d, i)
                if dom.tangency_at_entry:
                    r0 = int(pts[0])
                    tang = []
                    for j in range(q):
                        s = cvalue(i, j)[r0]
                        if j == 0:
                            s = s - con.bound(which)
                        tang.append(s / (con.scale / sc.time_scale**j))
                    add(f"tangency[{d}][{con.name}]", "tangency", ca.vertcat(*tang), 0.0, 0.0,
                        [point_deps[0]] * q, d, i)
            elif con.enforced:
                expr = cvalue(i, 0)[pts.tolist()] / con.scale
                add(f"path[{d}][{con.name}]", "path", expr, con.lower / con.scale,
                    con.upper / con.scale, point_deps, d, i)

    y0 = Y[0, :].T
    yf = Y[P - 1, :].T
    t0, tf = times[0], times[D]
    if pr.boundary is not None:
        b = ca.vertcat(*[ca.SX(v) for v in pr.boundary(y0, t0, yf, tf, p)])
        blo, bhi = pr.boundary_bounds
        deps = np.concatenate([ycols(0), ycols(P - 1), tcols[[0, D]]])
        add("boundary", "boundary", b, blo, bhi, [deps] * b.numel())

    gaps = ca.vertcat(*[tsv[d + 1] - tsv[d] for d in range(D)])
    add("safeguard", "safeguard", gaps, MIN_DOMAIN_DURATION / sc.time_scale, np.inf,
        [tcols[[d, d + 1]] for d in range(D)])

    # objective
    f = ca.SX(pr.mayer(y0, t0, yf, tf, p))
    if pr.lagrange is not None:
        L = _cols([pr.lagrange(Ycol, U, t_col, p)], n_col)
        f = f + ca.sum1(half * ca.DM(w_col) * L)

    # ---- bounds -----------------------------------------------------
    slo, shi = pr.state_box()
    ilo, ihi = pr.initial_box()
    flo, fhi = pr.final_box()
    ylo = np.tile(slo, (P, 1))
    yhi = np.tile(shi, (P, 1))
    ylo[0], yhi[0] = ilo, ihi
    ylo[-1], yhi[-1] = flo, fhi
    clo, chi = pr.control_box()
    tb = layout.time_bounds.copy()
    tb[0] = (max(tb[0, 0], pr.initial_time_bounds[0]), min(tb[0, 1], pr.initial_time_bounds[1]))
    tb[-1] = (max(tb[-1, 0], pr.final_time_bounds[0]), min(tb[-1, 1], pr.final_time_bounds[1]))
    if np.any(tb[:, 0] > tb[:, 1]):
        raise TranscriptionError("endpoint time window does not meet the problem's time bounds")
    lbx = np.concatenate([
        sc.scale_state(ylo).ravel(),
        np.tile(sc.scale_control(clo), n_col),
        sc.scale_time(tb[:, 0]),
    ])
    ubx = np.concatenate([
        sc.scale_state(yhi).ravel(),
        np.tile(sc.scale_control(chi), n_col),
        sc.scale_time(tb[:, 1]),
    ])

    # ---- initial point ------------------------------------------------
    t_guess = np.clip(layout.times, tb[:, 0], tb[:, 1])
    t_support = np.empty(P)
    t_support[:n_col] = tmap @ t_guess
    t_support[-1] = t_guess[-1]
    y_guess = np.asarray(guess.state_at(np.clip(t_support, guess.t0, guess.tf)), float)
    u_guess = np.asarray(guess.control_at(np.clip(t_support[:n_col], guess.t0, guess.tf)), float)
    x0 = np.concatenate([
        sc.scale_state(y_guess).ravel(),
        sc.scale_control(u_guess).ravel(),
        sc.scale_time(t_guess),
    ])
    x0 = np.clip(x0, lbx, ubx)
    if not np.all(np.isfinite(x0)):
        raise TranscriptionError("guess produced non-finite initial values")

    g = ca.vertcat(*g_parts)
    return SparseNlp(
        problem=pr, layout=layout, x=x, f_expr=f, g_expr=g, x0=x0,
        lbx=lbx, ubx=ubx,
        lbg=np.concatenate(lbg) if lbg else np.zeros(0),
        ubg=np.concatenate(ubg) if ubg else np.zeros(0),
        blocks=blocks, offsets=offsets,
        pattern_rows=np.concatenate(prow) if prow else np.zeros(0, int),
        pattern_cols=np.concatenate(pcol) if pcol else np.zeros(0, int),
    )
