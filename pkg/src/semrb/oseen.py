"""Steady Navier-Stokes by Oseen fixed-point iteration on the full-order model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import Discretization
from .sem import lagrange_matrix

log = logging.getLogger(__name__)


class SweepError(RuntimeError):
    def __init__(self, mu, state):
        super().__init__(f"Oseen iteration did not converge at mu = {mu:.6g} "
                         f"after {state.iterations} iterations "
                         f"(last increment {state.residual_history[-1]:.3e})")
        self.mu = mu
        self.state = state


@dataclass
class FlowState:
    """A velocity/pressure field at gap height ``mu``.

    ``x`` holds the free DOFs ``(v_bnd, p, v_int)``; ``velocity`` is the nodal
    field ``(2, n_nodes)`` including Dirichlet values.
    """

    x: np.ndarray
    velocity: np.ndarray
    pressure: np.ndarray
    mu: float
    converged: bool = False
    iterations: int = 0
    residual_history: list = field(default_factory=list)


def _state(disc: Discretization, x, mu, **kw) -> FlowState:
    g = disc.gather
    full = g.full_vector(x, disc.dirichlet_values(mu))
    return FlowState(x, g.velocity_field(full), g.pressure_field(full), float(mu), **kw)


def l2_increment(disc, mu):
    """Relative L2(Omega) velocity increment on the deformed domain."""
    w = disc.mass_weights(mu)

    def increment(new, old):
        num = np.sqrt(np.sum(w * (new - old) ** 2))
        den = np.sqrt(np.sum(w * new ** 2))
        return float(num / den) if den > 0 else float(num)

    return increment


def stokes_solve(disc: Discretization, mu) -> FlowState:
    """Single linear solve with zero wind."""
    x = disc.system(mu).solve()
    return _state(disc, x, mu, converged=True, iterations=1)


def oseen_solve(disc: Discretization, mu, initial: FlowState | None = None, tol=1e-8,
                max_iter=100, increment=None) -> FlowState:
    """Iterate ``u^{k+1} = solve(A(mu, u^k))`` until the relative velocity
    increment drops below ``tol``.

    ``initial`` defaults to the Stokes solution. Non-convergence is reported
    through ``converged=False``; the full increment history is kept.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mu = disc.config.check_mu(mu)
    state = initial if initial is not None else stokes_solve(disc, mu)
    increment = increment or l2_increment(disc, mu)
    wind = state.velocity
    history = []
    for k in range(1, max_iter + 1):
        x = disc.system(mu, wind).solve()
        new = _state(disc, x, mu)
        r = increment(new.velocity, wind)
        history.append(r)
        wind = new.velocity
        if r <= tol:
            new.converged, new.iterations, new.residual_history = True, k, history
            return new
    log.warning("Oseen iteration at mu=%g not converged after %d steps (%.3e)",
                mu, max_iter, history[-1])
    new.converged, new.iterations, new.residual_history = False, max_iter, history
    return new


def convergence_ratios(history) -> np.ndarray:
    h = np.asarray(history, dtype=float)
    return h[1:] / h[:-1]


# -- diagnostics -------------------------------------------------------------

def reynolds_estimate(state: FlowState, disc: Discretization, nu=None) -> float:
    """``Re = U L / nu`` with ``U`` the largest speed in the narrowing and ``L = mu``."""
    nu = disc.nu if nu is None else nu
    nodes = disc.mesh.narrowing_nodes()
    U = np.max(np.hypot(state.velocity[0, nodes], state.velocity[1, nodes]))
    return float(U * state.mu / nu)


def flux_through_cut(state: FlowState, disc: Discretization, x_cut: float) -> float:
    """``int u_x dy`` along the vertical line ``x = x_cut`` of the deformed domain."""
    ref, mesh = disc.ref, disc.mesh
    p = ref.p
    L = disc.config.channel_length
    flux = 0.0
    for e, geom in enumerate(mesh.deformed_elements(state.mu)):
        inside = geom.x0 <= x_cut < geom.x1 or (x_cut == geom.x1 == L)
        if not inside:
            continue
        xi = 2 * (x_cut - geom.x0) / (geom.x1 - geom.x0) - 1
        lx = lagrange_matrix(ref.nodes_1d, [xi])[0]
        ux = state.velocity[0, mesh.elem_nodes[e]].reshape(p + 1, p + 1)   # [b, a]
        line = ux @ lx
        flux += float(ref.weights_1d @ line) * (geom.y1 - geom.y0) / 2
    return flux


def divergence_residual(state: FlowState, disc: Discretization) -> float:
    """``|D u| / (|D_x u_x| + |D_y u_y|)``: discrete divergence relative to
    the size of its two terms."""
    from .assembly import assemble_local

    local = assemble_local(disc.mesh, mu=state.mu)
    n = disc.ref.n_velocity
    u = state.velocity[:, disc.mesh.elem_nodes].transpose(1, 0, 2)   # (E, 2, n)
    dx = np.einsum("epn,en->ep", local.divergence[:, :, :n], u[:, 0])
    dy = np.einsum("epn,en->ep", local.divergence[:, :, n:], u[:, 1])
    scale = np.linalg.norm(dx) + np.linalg.norm(dy)
    return float(np.linalg.norm(dx + dy) / scale) if scale > 0 else 0.0


def mirror_asymmetry(state: FlowState, disc: Discretization) -> tuple[float, float]:
    """Relative deviation from ``u_x(x, H-y) = u_x(x, y)`` and ``u_y(x, H-y) = -u_y(x, y)``."""
    coords = disc.mesh.node_coords
    H = disc.config.channel_height
    keys = {(round(x, 9), round(y, 9)): i for i, (x, y) in enumerate(coords)}
    mirror = np.array([keys[(round(x, 9), round(H - y, 9))] for x, y in coords])
    ux, uy = state.velocity
    scale = np.max(np.abs(state.velocity))
    return (float(np.max(np.abs(ux[mirror] - ux)) / scale),
            float(np.max(np.abs(uy[mirror] + uy)) / scale))


# -- snapshot sweeps ---------------------------------------------------------

@dataclass
class SnapshotSet:
    params: np.ndarray
    states: np.ndarray                 # (N_delta, n_snapshots)
    metadata: dict
    iterations: list = field(default_factory=list)
    reynolds: list = field(default_factory=list)

    @property
    def n_snapshots(self) -> int:
        return self.states.shape[1]


def discretization_metadata(disc: Discretization) -> dict:
    return {"p": disc.p, "n_elements": disc.mesh.n_elements, "N_delta": disc.n_dofs,
            "mesh_hash": disc.mesh.fingerprint(), "nu": disc.nu}


def snapshot_sweep(disc: Discretization, params, tol=1e-8, max_iter=100,
                   warm_start=True) -> SnapshotSet:
    """Converged states at every parameter, solved in ascending order.

    With ``warm_start`` each solve starts from the previous fixed point.
    """
    params = np.sort(np.asarray(params, dtype=float))
    for mu in params:
        disc.config.check_mu(mu)
    columns, its, res = [], [], []
    prev = None
    for mu in params:
        state = oseen_solve(disc, mu, prev if warm_start else None, tol, max_iter)
        if not state.converged:
            raise SweepError(mu, state)
        log.info("mu=%.4f converged in %d iterations", mu, state.iterations)
        columns.append(state.x)
        its.append(state.iterations)
        res.append(reynolds_estimate(state, disc))
        prev = state
    return SnapshotSet(params, np.column_stack(columns), discretization_metadata(disc),
                       its, res)
