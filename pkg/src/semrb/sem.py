"""Reference-element machinery for tensor-product spectral elements.

Velocity lives on the (p+1)^2 Gauss-Lobatto-Legendre (GLL) nodes of each
quadrilateral, pressure on the (p-1)^2 interior Gauss-Legendre nodes
(the Q_p / Q_{p-2} pair). All element integrals use GLL quadrature on the
velocity nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def gll_rule(p: int):
    """Gauss-Lobatto-Legendre nodes and weights with ``p + 1`` points.

    Newton iteration on the Chebyshev-Gauss-Lobatto points, see Canuto et
    al., *Spectral Methods in Fluid Dynamics*, sec. 2.3.
    """
    if p < 1:
        raise ValueError(f"GLL rule needs p >= 1, got {p}")
    n = p + 1
    x = -np.cos(np.pi * np.arange(n) / p)
    P = np.zeros((n, n))
    x_old = x + 2.0
    for _ in range(100):
        if np.max(np.abs(x - x_old)) <= 1e-16:
            break
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(1, p):
            P[:, k + 1] = ((2 * k + 1) * x * P[:, k] - k * P[:, k - 1]) / (k + 1)
        x_old = x
        x = x_old - (x_old * P[:, p] - P[:, p - 1]) / (n * P[:, p])
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(1, p):
        P[:, k + 1] = ((2 * k + 1) * x * P[:, k] - k * P[:, k - 1]) / (k + 1)
    w = 2.0 / (p * n * P[:, p] ** 2)
    # enforce exact symmetry and endpoints
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    w = 0.5 * (w + w[::-1])
    return x, w


def _barycentric_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("nodes must be distinct")
    return 1.0 / np.prod(diff, axis=1)


def diff_matrix(nodes):
    """Differentiation matrix of the Lagrange interpolant on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    bw = _barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (bw[None, :] / bw[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def lagrange_matrix(nodes, points):
    """Evaluate the Lagrange basis on ``nodes`` at ``points``: shape (len(points), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    bw = _barycentric_weights(nodes)
    diff = points[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    L = bw[None, :] / diff
    L /= L.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    L[rows] = exact[rows].astype(float)
    return L


class ReferenceElement:
    """Nodes, weights and operators on ``[-1, 1]^2``.

    Velocity node ``k = a + (p + 1) * b`` sits at ``(nodes_1d[a], nodes_1d[b])``.
    """

    def __init__(self, p: int):
        if p < 2:
            raise ValueError(f"velocity order must be >= 2 for a Q_p/Q_(p-2) pair, got {p}")
        self.order_velocity = p
        self.order_pressure = p - 2
        self.nodes_1d, self.weights_1d = gll_rule(p)
        self.diff_1d = diff_matrix(self.nodes_1d)
        self.pressure_nodes_1d, self.pressure_weights_1d = np.polynomial.legendre.leggauss(p - 1)

        n1 = p + 1
        eye = np.eye(n1)
        self.n_velocity = n1 * n1
        self.n_pressure = (p - 1) ** 2
        self.d_xi = np.kron(eye, self.diff_1d)
        self.d_eta = np.kron(self.diff_1d, eye)
        self.weights = np.kron(self.weights_1d, self.weights_1d)
        # pressure basis sampled at the velocity nodes
        Lp = lagrange_matrix(self.pressure_nodes_1d, self.nodes_1d)
        self.pressure_at_nodes = np.kron(Lp, Lp)

        a, b = np.meshgrid(np.arange(n1), np.arange(n1))
        a, b = a.ravel(), b.ravel()
        on_edge = (a == 0) | (a == p) | (b == 0) | (b == p)
        self.boundary = np.flatnonzero(on_edge)
        self.interior = np.flatnonzero(~on_edge)
        self.node_index = np.stack([a, b], axis=1)

    @property
    def p(self) -> int:
        return self.order_velocity

    @cached_property
    def points(self) -> np.ndarray:
        return np.stack([self.nodes_1d[self.node_index[:, 0]],
                         self.nodes_1d[self.node_index[:, 1]]], axis=1)

    @cached_property
    def pressure_points(self) -> np.ndarray:
        g = self.pressure_nodes_1d
        gx, gy = np.meshgrid(g, g)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def velocity_split(self):
        """Element velocity DOF indices ``(boundary, interior)`` for the stacked
        ``(u_x, u_y)`` vector of length ``2 * n_velocity``."""
        n = self.n_velocity
        bnd = np.concatenate([self.boundary, self.boundary + n])
        inn = np.concatenate([self.interior, self.interior + n])
        return bnd, inn


@dataclass(frozen=True)
class ElementGeometry:
    """Axis-aligned quadrilateral ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float
    element_id: int = 0
    subdomain_id: int = 0

    @property
    def jacobian(self) -> np.ndarray:
        return np.diag([(self.x1 - self.x0) / 2, (self.y1 - self.y0) / 2])

    @property
    def center(self):
        return 0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)

    def map_points(self, ref_points):
        ref_points = np.asarray(ref_points)
        x = self.x0 + (ref_points[..., 0] + 1) * (self.x1 - self.x0) / 2
        y = self.y0 + (ref_points[..., 1] + 1) * (self.y1 - self.y0) / 2
        return np.stack([x, y], axis=-1)


@dataclass
class ElementBlocks:
    """Scalar diffusion/advection operators and the pressure-divergence block.

    ``diffusion`` and ``advection`` act on one velocity component (both
    components share them); ``divergence`` has shape
    ``(n_pressure, 2 * n_velocity)``.
    """

    diffusion: np.ndarray
    advection: np.ndarray
    divergence: np.ndarray
    ref: ReferenceElement

    @property
    def velocity(self) -> np.ndarray:
        return np.kron(np.eye(2), self.diffusion + self.advection)

    def split(self):
        """Return ``(A, B, B_tilde, C, D_bnd, D_int)`` for this element."""
        bnd, inn = self.ref.velocity_split()
        K = self.velocity
        return (K[np.ix_(bnd, bnd)], K[np.ix_(bnd, inn)], K[np.ix_(inn, bnd)],
                K[np.ix_(inn, inn)], self.divergence[:, bnd], self.divergence[:, inn])


def physical_gradients(ref: ReferenceElement, jacobian):
    """Nodal derivative operators ``(G_x, G_y)`` and quadrature weights on a
    parallelogram with constant Jacobian."""
    J = np.asarray(jacobian, dtype=float)
    det = np.linalg.det(J)
    if not det > 0:
        raise ValueError(f"element Jacobian must have positive determinant, got {det}")
    Jinv = np.linalg.inv(J)
    G = [Jinv[0, i] * ref.d_xi + Jinv[1, i] * ref.d_eta for i in range(2)]
    return G, ref.weights * det


def element_blocks(ref: ReferenceElement, geom: ElementGeometry, tensors=None,
                   wind=None) -> ElementBlocks:
    """Element-local operator blocks.

    Parameters
    ----------
    tensors : tuple of (2, 2) arrays, optional
        ``(nu, chi, pi)``: diffusion tensor in ``du/dx_i nu_ij dv/dx_j``,
        divergence tensor in ``psi chi_ij du_j/dx_i`` and advection tensor in
        ``w_i pi_ji du/dx_j v``. Identity by default.
    wind : (2, n_velocity) array, optional
        Advecting velocity at the element nodes; zero if omitted.
    """
    if tensors is None:
        eye = np.eye(2)
        tensors = (eye, eye, eye)
    nu, chi, pi = (np.asarray(t, dtype=float) for t in tensors)
    n = ref.n_velocity
    G, W = physical_gradients(ref, geom.jacobian)

    diffusion = np.zeros((n, n))
    advection = np.zeros((n, n))
    for i in range(2):
        for j in range(2):
            if nu[i, j] != 0.0:
                diffusion += nu[i, j] * (G[j].T @ (W[:, None] * G[i]))
    if wind is not None:
        wind = np.asarray(wind, dtype=float)
        if wind.shape != (2, n):
            raise ValueError(f"wind must have shape (2, {n}), got {wind.shape}")
        for i in range(2):
            for j in range(2):
                if pi[j, i] != 0.0:
                    advection += pi[j, i] * ((W * wind[i])[:, None] * G[j])

    PsiW = ref.pressure_at_nodes.T * W[None, :]
    divergence = np.zeros((ref.n_pressure, 2 * n))
    for j in range(2):
        block = sum(chi[i, j] * G[i] for i in range(2) if chi[i, j] != 0.0)
        if not isinstance(block, int):
            divergence[:, j * n:(j + 1) * n] = PsiW @ block
    return ElementBlocks(diffusion, advection, divergence, ref)
