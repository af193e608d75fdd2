"""
Smooth nonlinear constraints of the continuous block: the moment balance of
the centroidal dynamics and the exact kinematic boxes. Every residual comes
with an analytic sparse Jacobian and a finite-difference self-check.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import euler_rate_matrix, euler_rate_partials, rotation_matrix, rotation_partials, skew
from .layout import VariableLayout
from .scenario import Scenario


logger = logging.getLogger(__name__)

FD_STEP = 1e-6
JACOBIAN_RTOL = 1e-5


@dataclass
class SmoothResidual:
    """lower <= fun(x) <= upper, with jac(x) the sparse Jacobian of fun."""

    name: str
    fun: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], sp.csr_matrix]
    lower: np.ndarray
    upper: np.ndarray
    columns: np.ndarray

    @property
    def size(self) -> int:
        return self.lower.size

    @property
    def kind(self) -> str:
        return "equality" if np.array_equal(self.lower, self.upper) else "inequality"


class SmoothConstraintSet:
    """Stack of smooth residuals over one flat layout."""

    def __init__(self, n: int, residuals: Sequence[SmoothResidual] = ()):
        self.n = n
        self.residuals: List[SmoothResidual] = list(residuals)

    def __len__(self) -> int:
        return sum(r.size for r in self.residuals)

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate([r.lower for r in self.residuals]) if self.residuals else np.zeros(0)

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([r.upper for r in self.residuals]) if self.residuals else np.zeros(0)

    def values(self, x: np.ndarray) -> np.ndarray:
        if not self.residuals:
            return np.zeros(0)
        return np.concatenate([r.fun(x) for r in self.residuals])

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        if not self.residuals:
            return sp.csr_matrix((0, self.n))
        return sp.vstack([r.jac(x) for r in self.residuals]).tocsr()

    def violation(self, x: np.ndarray) -> np.ndarray:
        c = self.values(x)
        return np.maximum(0.0, np.maximum(self.lower - c, c - self.upper))

    def max_violation(self, x: np.ndarray) -> float:
        v = self.violation(x)
        return float(np.max(v)) if v.size else 0.0

    def check_jacobians(self, x: np.ndarray, columns: Optional[np.ndarray] = None,
                        step: float = FD_STEP, rtol: float = JACOBIAN_RTOL) -> float:
        """
        Compare analytic Jacobians with central differences.

        Returns:
            Largest entry error relative to max(1, |analytic entry|)
        """
        worst = 0.0
        for residual in self.residuals:
            J = residual.jac(x).tocsc()
            cols = residual.columns if columns is None else np.intersect1d(columns, residual.columns)
            for col in cols:
                shifted = x.copy()
                shifted[col] = x[col] + step
                up = residual.fun(shifted)
                shifted[col] = x[col] - step
                down = residual.fun(shifted)
                fd = (up - down) / (2.0 * step)
                exact = J[:, col].toarray().ravel()
                err = float(np.max(np.abs(fd - exact) / np.maximum(1.0, np.abs(exact)))) if fd.size else 0.0
                worst = max(worst, err)
        if worst > rtol:
            logger.warning(f"Jacobian check mismatch: relative error {worst:.2e} > {rtol:.0e}")
        return worst


class _Gather:
    """Reshape a flat vector into the arrays the residuals need."""

    def __init__(self, s: Scenario, layout: VariableLayout):
        self.layout = layout
        self.fingers = [i for i in layout.fingers if not s.robot.is_absent(i)]
        pos = [layout.fingers.index(i) for i in self.fingers]
        self.r = layout.tables["r"]
        self.theta = layout.tables["theta"]
        self.thetadot = layout.tables["thetadot"]
        self.p = layout.tables["p"][:, pos]
        self.lam = layout.tables["lambda"][:, pos]
        self.tau = layout.tables["tau"][:, pos]


def _moment_residual(s: Scenario, g: _Gather) -> SmoothResidual:
    inertia = s.robot.inertia
    dt = s.dt
    N = s.horizon

    def omegas(x):
        theta, rates = x[g.theta], x[g.thetadot]
        return np.array([euler_rate_matrix(theta[t]) @ rates[t] for t in range(N + 1)])

    def fun(x):
        omega = omegas(x)
        r, p, lam, tau = x[g.r], x[g.p], x[g.lam], x[g.tau]
        out = np.zeros((N, 3))
        for t in range(N):
            w = omega[t]
            lhs = inertia @ (omega[t + 1] - w) / dt + np.cross(w, inertia @ w)
            rhs = np.cross(r[t] - p[t], lam[t]).sum(axis=0) + tau[t].sum(axis=0)
            out[t] = lhs - rhs
        return out.reshape(-1)

    def jac(x):
        theta, rates = x[g.theta], x[g.thetadot]
        r, p, lam = x[g.r], x[g.p], x[g.lam]
        rows, cols, vals = [], [], []

        def put(row0, idx, block):
            for a in range(3):
                for b in range(3):
                    if block[a, b] != 0.0:
                        rows.append(row0 + a)
                        cols.append(int(idx[b]))
                        vals.append(block[a, b])

        E = [euler_rate_matrix(theta[t]) for t in range(N + 1)]
        dE = [euler_rate_partials(theta[t], rates[t]) for t in range(N + 1)]
        for t in range(N):
            row0 = 3 * t
            w = E[t] @ rates[t]
            d_now = -inertia / dt + skew(w) @ inertia - skew(inertia @ w)
            d_next = inertia / dt
            put(row0, g.theta[t + 1], d_next @ dE[t + 1])
            put(row0, g.thetadot[t + 1], d_next @ E[t + 1])
            put(row0, g.theta[t], d_now @ dE[t])
            put(row0, g.thetadot[t], d_now @ E[t])
            put(row0, g.r[t], sum((skew(lam[t, k]) for k in range(len(g.fingers))), np.zeros((3, 3))))
            for k in range(len(g.fingers)):
                put(row0, g.p[t, k], -skew(lam[t, k]))
                put(row0, g.lam[t, k], -skew(r[t] - p[t, k]))
                put(row0, g.tau[t, k], -np.eye(3))
        return sp.csr_matrix((vals, (rows, cols)), shape=(3 * N, g.layout.n))

    columns = np.unique(np.concatenate([g.r[:N].ravel(), g.theta.ravel(), g.thetadot.ravel(),
                                        g.p[:N].ravel(), g.lam.ravel(), g.tau.ravel()]))
    zeros = np.zeros(3 * N)
    return SmoothResidual("moment_dynamics", fun, jac, zeros, zeros.copy(), columns)


def _kinematics_residual(s: Scenario, g: _Gather) -> SmoothResidual:
    robot = s.robot
    N = s.horizon
    nf = len(g.fingers)
    a = robot.finger_offsets[g.fingers]
    b = robot.finger_ranges[g.fingers]

    def fun(x):
        theta, r, p = x[g.theta], x[g.r], x[g.p]
        out = np.zeros((N + 1, nf, 3))
        for t in range(N + 1):
            out[t] = (p[t] - r[t]) @ rotation_matrix(theta[t])
        return out.reshape(-1)

    def jac(x):
        theta, r, p = x[g.theta], x[g.r], x[g.p]
        rows, cols, vals = [], [], []
        for t in range(N + 1):
            R = rotation_matrix(theta[t])
            dR = rotation_partials(theta[t])
            for k in range(nf):
                row0 = 3 * (t * nf + k)
                arm = p[t, k] - r[t]
                dtheta = np.stack([dR[j].T @ arm for j in range(3)], axis=1)
                for block, idx in ((R.T, g.p[t, k]), (-R.T, g.r[t]), (dtheta, g.theta[t])):
                    for u in range(3):
                        for v in range(3):
                            if block[u, v] != 0.0:
                                rows.append(row0 + u)
                                cols.append(int(idx[v]))
                                vals.append(block[u, v])
        return sp.csr_matrix((vals, (rows, cols)), shape=(3 * (N + 1) * nf, g.layout.n))

    lower = np.tile(a - b, (N + 1, 1)).reshape(-1)
    upper = np.tile(a + b, (N + 1, 1)).reshape(-1)
    columns = np.unique(np.concatenate([g.r.ravel(), g.theta.ravel(), g.p.ravel()]))
    return SmoothResidual("kinematics_exact", fun, jac, lower, upper, columns)


def build_smooth_dynamics(s: Scenario, layout: VariableLayout) -> SmoothConstraintSet:
    """
    Moment dynamics and exact kinematics as smooth residuals.

    Moment residual per step, with omega = E(theta) thetadot:
        I (omega_{t+1} - omega_t) / dt + omega_t x I omega_t
        - sum_i (r_t - p_t^i) x lambda_t^i - sum_i tau_t^i = 0
    Kinematics: a^i - b^i <= R(theta_t)' (p_t^i - r_t) <= a^i + b^i.
    """
    g = _Gather(s, layout)
    residuals = [_moment_residual(s, g)]
    if g.fingers:
        residuals.append(_kinematics_residual(s, g))
    return SmoothConstraintSet(layout.n, residuals)
