"""Trajectory containers and initial guesses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lgr import interpolation_matrix, lgr_points


@dataclass(frozen=True)
class LinearGuess:
    """Straight-line state guess with constant controls on [t0, tf]."""

    t0: float
    tf: float
    y0: np.ndarray
    yf: np.ndarray
    u: np.ndarray

    def state_at(self, t):
        s = (np.asarray(t, float) - self.t0) / (self.tf - self.t0)
        return np.asarray(self.y0)[None, :] + s[:, None] * (np.asarray(self.yf) - self.y0)[None, :]

    def control_at(self, t):
        return np.tile(np.asarray(self.u, float), (np.size(t), 1))


@dataclass
class DomainSolution:
    """One domain of a multiple-domain LGR trajectory."""

    t_start: float
    t_end: float
    breaks: np.ndarray  # mesh points on [-1, 1]
    degrees: np.ndarray
    states: np.ndarray  # (N+1, n_y) at support points
    controls: np.ndarray  # (N, n_u) at collocation points
    active: tuple = ()

    @property
    def n_points(self) -> int:
        return int(np.sum(self.degrees))

    @property
    def tau(self) -> np.ndarray:
        """Support points in the domain's normalized time."""
        pts = []
        for k, n in enumerate(self.degrees):
            rule = lgr_points(int(n)).mapped(self.breaks[k], self.breaks[k + 1])
            pts.append(rule.nodes)
        pts.append([1.0])
        return np.concatenate(pts)

    @property
    def time(self) -> np.ndarray:
        return self.to_time(self.tau)

    def to_time(self, tau):
        return 0.5 * (self.t_end - self.t_start) * (np.asarray(tau) + 1.0) + self.t_start

    def to_tau(self, t):
        return 2.0 * (np.asarray(t) - self.t_start) / (self.t_end - self.t_start) - 1.0

    @property
    def quadrature_weights(self) -> np.ndarray:
        """Physical-time quadrature weights at the collocation points."""
        ws = []
        for k, n in enumerate(self.degrees):
            ws.append(lgr_points(int(n)).mapped(self.breaks[k], self.breaks[k + 1]).weights)
        return np.concatenate(ws) * 0.5 * (self.t_end - self.t_start)

    def intervals(self):
        """Yield (k, support slice, collocation slice, LgrRule on [T_k-1, T_k])."""
        start = 0
        for k, n in enumerate(self.degrees):
            n = int(n)
            rule = lgr_points(n).mapped(self.breaks[k], self.breaks[k + 1])
            yield k, slice(start, start + n + 1), slice(start, start + n), rule
            start += n

    def sample(self, t):
        """States and controls interpolated at physical times inside the domain."""
        tau = np.clip(self.to_tau(np.atleast_1d(t)), -1.0, 1.0)
        n_y, n_u = self.states.shape[1], self.controls.shape[1]
        ys = np.empty((tau.size, n_y))
        us = np.empty((tau.size, n_u))
        k_of = np.clip(np.searchsorted(self.breaks, tau, side="right") - 1, 0, len(self.degrees) - 1)
        for k, ssl, csl, rule in self.intervals():
            mask = k_of == k
            if not mask.any():
                continue
            ys[mask] = interpolation_matrix(rule.support, tau[mask]) @ self.states[ssl]
            us[mask] = control_interpolant(rule, self.controls[csl], tau[mask])
        return ys, us


def control_interpolant(rule, controls, tau):
    """Degree N-1 interpolant through the collocated controls of one interval."""
    if rule.degree == 1:
        return np.repeat(controls[:1], np.size(tau), axis=0)
    return interpolation_matrix(rule.nodes, tau) @ controls


@dataclass
class TrajectorySolution:
    domains: list[DomainSolution]
    objective: float = np.nan
    status: str = "unknown"
    converged: bool = False
    mesh_error: float = np.nan
    arc_report: object = None
    iteration_log: list = field(default_factory=list)

    @property
    def t0(self) -> float:
        return self.domains[0].t_start

    @property
    def tf(self) -> float:
        return self.domains[-1].t_end

    @property
    def interface_times(self) -> np.ndarray:
        return np.array([self.t0] + [d.t_end for d in self.domains])

    @property
    def final_state(self) -> np.ndarray:
        return self.domains[-1].states[-1]

    @property
    def initial_state(self) -> np.ndarray:
        return self.domains[0].states[0]

    def samples(self):
        """Support points of all domains in time order, shared points once.

        Returns (time, states, domain index, is_collocation).
        """
        ts, ys, ds, col = [], [], [], []
        for d, dom in enumerate(self.domains):
            last = d == len(self.domains) - 1
            n = dom.n_points + (1 if last else 0)
            ts.append(dom.time[:n])
            ys.append(dom.states[:n])
            ds.append(np.full(n, d))
            c = np.ones(n, bool)
            if last:
                c[-1] = False
            col.append(c)
        return np.concatenate(ts), np.vstack(ys), np.concatenate(ds), np.concatenate(col)

    def collocation_controls(self) -> np.ndarray:
        return np.vstack([d.controls for d in self.domains])

    def domain_index(self, t) -> np.ndarray:
        edges = self.interface_times
        return np.clip(np.searchsorted(edges, np.atleast_1d(t), side="right") - 1, 0,
                       len(self.domains) - 1)

    def state_at(self, t):
        return self._sample(t)[0]

    def control_at(self, t):
        return self._sample(t)[1]

    def _sample(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        which = self.domain_index(t)
        n_y = self.domains[0].states.shape[1]
        n_u = self.domains[0].controls.shape[1]
        ys = np.empty((t.size, n_y))
        us = np.empty((t.size, n_u))
        for d, dom in enumerate(self.domains):
            mask = which == d
            if mask.any():
                ys[mask], us[mask] = dom.sample(t[mask])
        return ys, us
