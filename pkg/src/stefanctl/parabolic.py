"""Implicit-Euler solver on the fixed cylinder and its exact discrete adjoint.

Forward step (source taken at the old level)::

    (z^{k+1} - z^k)/dt - b D2 z^{k+1} + c D1 z^{k+1} + d z^{k+1} = g^k

with Dirichlet zeros at both ends.  All steps are assembled into one block
lower-bidiagonal sparse matrix and factored once; the backward (terminal
value) solve is the transposed factorisation, so the pairing identity

    <S(z0, g), q>_R + <z^K, p_T>_K = <z0, p^0>_0 + <g, p>_L

holds to round-off, where ``p`` is the backward solution for ``(p_T, q)``,
``<.,.>_k`` is the physical L2 product at time level ``k`` and the space-time
products use the right-point (R, levels 1..K) and left-point (L, levels
0..K-1) rules.  Forward-marched fields are observed with R, sources and
backward-marched fields are paired with L.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .config import GridSpec
from .errors import GridError, StefanCtlError
from .transform import CoefficientFields


def space_weights(grid: GridSpec) -> np.ndarray:
    """Trapezoid weights in the reference coordinate."""
    w = np.full(grid.n_space, grid.dxi)
    w[0] = w[-1] = 0.5 * grid.dxi
    return w


def time_weights(grid: GridSpec, rule: str) -> np.ndarray:
    w = np.full(grid.n_time, grid.dt)
    if rule == "right":
        w[0] = 0.0
    elif rule == "left":
        w[-1] = 0.0
    elif rule == "trapezoid":
        w[0] = w[-1] = 0.5 * grid.dt
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return w


def quadrature_weights(jac: np.ndarray, grid: GridSpec, rule: str) -> np.ndarray:
    """Space-time weights of the physical measure ``dx dt`` on the cylinder grid."""
    return (time_weights(grid, rule) * jac)[:, None] * space_weights(grid)[None, :]


def inner_product(u, w, jac, grid: GridSpec, rule: str = "right") -> float:
    u, w = np.asarray(u), np.asarray(w)
    if u.shape != grid.shape or w.shape != grid.shape:
        raise GridError("fields are not on the same grid")
    return float(np.sum(quadrature_weights(jac, grid, rule) * u * w))


def space_inner(u, w, jac_k: float, grid: GridSpec) -> float:
    u, w = np.asarray(u), np.asarray(w)
    if u.shape != (grid.n_space,) or w.shape != (grid.n_space,):
        raise GridError("profiles are not on the same grid")
    return float(jac_k * np.dot(space_weights(grid) * u, w))


class ParabolicOperator:
    """Factored forward map for one set of transformed coefficients."""

    def __init__(self, coeffs: CoefficientFields):
        grid = coeffs.grid
        if grid.n_space < 3:
            raise GridError("need at least one interior node")
        self.coeffs = coeffs
        self.grid = grid
        self.jac = np.asarray(coeffs.jac, dtype=float)
        self._n = n = grid.n_space - 2
        self._K = K = grid.n_time - 1
        self.matrix = self._assemble(coeffs, grid, n, K)
        try:
            self._lu = splu(self.matrix, permc_spec="NATURAL")
        except RuntimeError as exc:
            raise StefanCtlError(f"singular time-step matrix: {exc}") from None

    @staticmethod
    def _assemble(coeffs, grid, n, K):
        dt, h = grid.dt, grid.dxi
        b = coeffs.b[1:, 1:-1]
        c = coeffs.c[1:, 1:-1]
        d = coeffs.d[1:, 1:-1]
        diag = 1.0 + dt * (2.0 * b / h**2 + d)
        lower = dt * (-b / h**2 - c / (2.0 * h))  # coefficient of z_{j-1}
        upper = dt * (-b / h**2 + c / (2.0 * h))  # coefficient of z_{j+1}
        lower[:, 0] = 0.0
        upper[:, -1] = 0.0
        N = n * K
        diags = [
            diag.ravel(),
            lower.ravel()[1:],
            upper.ravel()[:-1],
            -np.ones(N - n),
        ]
        return sp.diags(diags, [0, -1, 1, -n], shape=(N, N), format="csc")

    def step_matrix(self, k: int) -> np.ndarray:
        """Dense ``M_k`` acting on interior nodes (``1 <= k <= K``)."""
        n = self._n
        rows = slice((k - 1) * n, k * n)
        return self.matrix[rows, rows].toarray()

    def _check(self, profile, field, name):
        if np.shape(profile) != (self.grid.n_space,):
            raise GridError(f"{name} profile has wrong length")
        if field is not None and np.shape(field) != self.grid.shape:
            raise GridError(f"{name} field is not on the operator grid")

    def forward(self, init, source=None) -> np.ndarray:
        self._check(init, source, "forward")
        n, K, dt = self._n, self._K, self.grid.dt
        rhs = np.zeros((K, n))
        if source is not None:
            rhs += dt * np.asarray(source)[:-1, 1:-1]
        rhs[0] += np.asarray(init)[1:-1]
        z = self.grid.zeros()
        z[0] = init
        z[0, 0] = z[0, -1] = 0.0
        z[1:, 1:-1] = self._lu.solve(rhs.ravel()).reshape(K, n)
        return z

    def backward(self, terminal, source=None) -> np.ndarray:
        self._check(terminal, source, "backward")
        n, K, dt = self._n, self._K, self.grid.dt
        rhs = np.zeros((K, n))
        if source is not None:
            rhs += dt * self.jac[1:, None] * np.asarray(source)[1:, 1:-1]
        rhs[-1] += self.jac[-1] * np.asarray(terminal)[1:-1]
        mu = self._lu.solve(rhs.ravel(), trans="T").reshape(K, n)
        p = self.grid.zeros()
        p[:-1, 1:-1] = mu / self.jac[:-1, None]
        p[-1] = terminal
        p[-1, 0] = p[-1, -1] = 0.0
        return p

    # quadrature in the physical measure
    def pair_states(self, u, w) -> float:
        return inner_product(u, w, self.jac, self.grid, "right")

    def pair_sources(self, u, w) -> float:
        return inner_product(u, w, self.jac, self.grid, "left")

    def pair_profiles(self, u, w, k: int) -> float:
        return space_inner(u, w, self.jac[k], self.grid)

    def norm_profile(self, u, k: int) -> float:
        return float(np.sqrt(max(self.pair_profiles(u, u, k), 0.0)))


def solve_forward(init, source, coeffs: CoefficientFields) -> np.ndarray:
    return ParabolicOperator(coeffs).forward(init, source)


def solve_backward(terminal, source, coeffs: CoefficientFields) -> np.ndarray:
    return ParabolicOperator(coeffs).backward(terminal, source)


def apply_adjoint(op: ParabolicOperator, terminal, source=None) -> np.ndarray:
    """Exact transpose of ``op.forward`` with respect to the physical pairings."""
    return op.backward(terminal, source)


def is_m_matrix(coeffs: CoefficientFields) -> bool:
    """Whether every step matrix has the sign pattern of an M-matrix."""
    g = coeffs.grid
    peclet_ok = np.all(np.abs(coeffs.c[1:, 1:-1]) * g.dxi / 2.0 <= coeffs.b[1:, 1:-1])
    return bool(peclet_ok and np.all(1.0 + g.dt * coeffs.d[1:, 1:-1] > 0))
