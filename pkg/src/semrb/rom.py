"""POD-Galerkin reduced model with an offline/online split.

Offline, every parameter-independent piece of the Oseen operator is
projected onto the POD basis: the linear affine terms, their Dirichlet
lifting contributions, and the advection matrices obtained with each POD
mode (and each lifting term) used as wind. Online, the reduced operator at
``(mu, alpha)`` is a contraction of these small arrays with the affine
coefficients and the current reduced coordinates.

The Dirichlet data is an exact quadratic polynomial in ``mu``,
``g(mu) = G_0 + mu G_1 + mu^2 G_2``, because the inflow nodes move affinely
with ``mu`` and the inflow profile is quadratic in ``y``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import Discretization, assemble_affine_family, assemble_local
from .geometry import GeometryConfig, term_descriptors, theta_coefficients

log = logging.getLogger(__name__)

N_LIFT = 3


class ReducedSolveError(RuntimeError):
    pass


@dataclass
class PodBasis:
    """Left singular vectors of the snapshot matrix.

    ``all_modes`` keeps every numerically nonzero mode; ``modes`` is the
    leading ``N`` selected by the energy threshold.
    """

    all_modes: np.ndarray
    singular_values: np.ndarray
    energy_threshold: float
    N: int

    @property
    def modes(self) -> np.ndarray:
        return self.all_modes[:, :self.N]

    @property
    def rank(self) -> int:
        return self.all_modes.shape[1]

    def energy(self) -> np.ndarray:
        """Cumulative retained energy fraction for ``N = 1, 2, ...``."""
        s2 = self.singular_values[:self.rank] ** 2
        return np.cumsum(s2) / np.sum(s2)

    def tail(self, N=None) -> float:
        """Relative Frobenius projection error of the snapshots at size ``N``."""
        N = self.N if N is None else N
        s2 = self.singular_values[:self.rank] ** 2
        return float(np.sqrt(np.sum(s2[N:]) / np.sum(s2)))


def compute_pod(snapshots, energy_threshold=0.9999) -> PodBasis:
    """SVD of the snapshot matrix, keeping the smallest ``N`` whose cumulative
    squared singular values reach ``energy_threshold``."""
    S = np.asarray(snapshots, dtype=float)
    if S.ndim != 2 or S.shape[1] == 0:
        raise ValueError("need at least one snapshot")
    if not 0 < energy_threshold <= 1:
        raise ValueError("energy_threshold must lie in (0, 1]")
    U, s, _ = np.linalg.svd(S, full_matrices=False)
    if s[0] == 0:
        raise ValueError("snapshot matrix is zero")
    rank = int(np.sum(s > s[0] * max(S.shape) * np.finfo(float).eps))
    cum = np.cumsum(s[:rank] ** 2) / np.sum(s[:rank] ** 2)
    N = min(int(np.searchsorted(cum, energy_threshold * (1 - 1e-14))) + 1, rank)
    # fix the sign of each mode for reproducible output
    U = U[:, :rank]
    signs = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(rank)])
    return PodBasis(U * signs, s, float(energy_threshold), N)


def reconstruct(pod_or_modes, coeffs) -> np.ndarray:
    modes = pod_or_modes.all_modes if isinstance(pod_or_modes, PodBasis) else pod_or_modes
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] > modes.shape[1]:
        raise ValueError(f"{coeffs.shape[0]} coefficients for {modes.shape[1]} modes")
    return modes[:, :coeffs.shape[0]] @ coeffs


def lifting_expansion(disc: Discretization) -> np.ndarray:
    """Coefficients ``G`` (3, n_dirichlet) with ``g(mu) = sum_m mu^m G[m]``."""
    samples = np.array([0.0, 1.0, 2.0])
    V = np.vander(samples, N_LIFT, increasing=True)
    g = np.array([disc.dirichlet_values(m, check=False) for m in samples])
    G = np.linalg.solve(V, g)
    probe = 0.5 * sum(disc.config.mu_range)
    exact = disc.dirichlet_values(probe)
    fit = np.vander([probe], N_LIFT, increasing=True)[0] @ G
    if not np.allclose(fit, exact, rtol=1e-12, atol=1e-12 * np.max(np.abs(exact))):
        raise ValueError("Dirichlet data is not quadratic in mu")
    return G


def lift_powers(mu) -> np.ndarray:
    return np.array([1.0, mu, mu * mu])


def project_affine(modes, family, G):
    """Reduced linear terms ``U^T A_i U`` and lifting terms ``-U^T L_i G_m``."""
    U = np.asarray(modes)
    if family.matrices and family.matrices[0].shape[0] != U.shape[0]:
        raise ValueError("modes and affine family have different N_delta")
    mats = np.array([U.T @ (A @ U) for A in family.matrices])
    rhs = np.array([-(U.T @ (L @ G.T)).T for L in family.liftings])
    return mats, rhs


def _advection_pieces(disc, descriptor, wind, U, G):
    local = assemble_local(disc.mesh, descriptor=descriptor, wind=wind, nu=disc.nu)
    ff, fd = disc.gather.scatter(local)
    return U.T @ (ff @ U), -(U.T @ (fd @ G.T)).T


def project_trilinear(modes, disc: Discretization, G, descriptors=None):
    """Reduced advection tensors, one N x N matrix per (descriptor, wind).

    Returns ``adv[a, n]`` (mode ``n`` as wind), ``adv_rhs[a, n, m]`` (its
    lifting action on ``G_m``), ``adv_lift[a, m]`` (lifting term ``m`` as
    wind) and ``adv_lift_rhs[a, m, l]``.
    """
    U = np.asarray(modes)
    gather = disc.gather
    descriptors = descriptors or [d for d in term_descriptors(disc.config) if d.is_advection]
    N = U.shape[1]
    Qa = len(descriptors)
    adv = np.zeros((Qa, N, N, N))
    adv_rhs = np.zeros((Qa, N, N_LIFT, N))
    adv_lift = np.zeros((Qa, N_LIFT, N, N))
    adv_lift_rhs = np.zeros((Qa, N_LIFT, N_LIFT, N))
    mode_winds = [gather.free_velocity_field(U[:, n]) for n in range(N)]
    lift_winds = [gather.velocity_field(gather.full_vector(0.0, G[m])) for m in range(N_LIFT)]
    for a, d in enumerate(descriptors):
        for n, w in enumerate(mode_winds):
            adv[a, n], adv_rhs[a, n] = _advection_pieces(disc, d, w, U, G)
        for m, w in enumerate(lift_winds):
            adv_lift[a, m], adv_lift_rhs[a, m] = _advection_pieces(disc, d, w, U, G)
    return adv, adv_rhs, adv_lift, adv_lift_rhs


@dataclass
class ReducedSolution:
    coeffs: np.ndarray
    mu: float
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)


@dataclass
class ReducedModel:
    """Everything the online phase needs; no array depends on N_delta."""

    config: GeometryConfig
    stokes_index: np.ndarray        # positions of linear terms in the theta list
    advection_index: np.ndarray
    stokes: np.ndarray              # (Qs, N, N)
    stokes_rhs: np.ndarray          # (Qs, 3, N)
    adv: np.ndarray                 # (Qa, N, N, N)  [term, wind mode, test, trial]
    adv_rhs: np.ndarray             # (Qa, N, 3, N)
    adv_lift: np.ndarray            # (Qa, 3, N, N)
    adv_lift_rhs: np.ndarray        # (Qa, 3, 3, N)
    metadata: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.stokes.shape[1]

    @property
    def Q(self) -> int:
        return len(self.stokes_index) + len(self.advection_index)

    def truncate(self, N: int) -> "ReducedModel":
        if not 1 <= N <= self.N:
            raise ValueError(f"cannot truncate a size-{self.N} model to {N}")
        return ReducedModel(
            self.config, self.stokes_index, self.advection_index,
            self.stokes[:, :N, :N], self.stokes_rhs[:, :, :N],
            self.adv[:, :N, :N, :N], self.adv_rhs[:, :N, :, :N],
            self.adv_lift[:, :, :N, :N], self.adv_lift_rhs[:, :, :, :N],
            dict(self.metadata))

    def _thetas(self, mu):
        th = theta_coefficients(self.config, mu).thetas
        return th[self.stokes_index], th[self.advection_index]

    def operators(self, mu, coeffs=None, wind=True):
        """Reduced matrix and right-hand side at ``mu`` with wind ``U coeffs + g(mu)``."""
        ts, ta = self._thetas(mu)
        phi = lift_powers(mu)
        A = np.tensordot(ts, self.stokes, 1)
        b = np.einsum("q,m,qmj->j", ts, phi, self.stokes_rhs)
        if wind:
            A = A + np.einsum("a,m,amjk->jk", ta, phi, self.adv_lift)
            b = b + np.einsum("a,m,l,amlj->j", ta, phi, phi, self.adv_lift_rhs)
            if coeffs is not None:
                A = A + np.einsum("a,n,anjk->jk", ta, coeffs, self.adv)
                b = b + np.einsum("a,n,m,anmj->j", ta, coeffs, phi, self.adv_rhs)
        return A, b

    def step(self, mu, coeffs):
        """One reduced Oseen step, assembly included."""
        A, b = self.operators(mu, coeffs)
        return np.linalg.solve(A, b)

    def online_solve(self, mu, tol=1e-8, max_iter=100) -> ReducedSolution:
        """Reduced Oseen iteration started from the reduced Stokes solution."""
        mu = self.config.check_mu(mu)
        ts, ta = self._thetas(mu)
        phi = lift_powers(mu)
        A0, b0 = self.operators(mu, None, wind=False)
        A1 = A0 + np.einsum("a,m,amjk->jk", ta, phi, self.adv_lift)
        b1 = b0 + np.einsum("a,m,l,amlj->j", ta, phi, phi, self.adv_lift_rhs)
        adv_mu = np.tensordot(ta, self.adv, 1)                                 # (N, N, N)
        rhs_mu = np.einsum("a,m,anmj->nj", ta, phi, self.adv_rhs)              # (N, N)
        try:
            alpha = np.linalg.solve(A0, b0)
            history = []
            for k in range(1, max_iter + 1):
                new = np.linalg.solve(A1 + np.tensordot(alpha, adv_mu, 1), b1 + alpha @ rhs_mu)
                den = np.linalg.norm(new)
                r = float(np.linalg.norm(new - alpha) / den) if den > 0 else 0.0
                history.append(r)
                alpha = new
                if r <= tol:
                    return ReducedSolution(alpha, mu, True, k, history)
        except np.linalg.LinAlgError as exc:
            raise ReducedSolveError(f"singular reduced system at mu = {mu}") from exc
        log.warning("reduced Oseen iteration at mu=%g not converged", mu)
        return ReducedSolution(alpha, mu, False, max_iter, history)


def build_reduced_model(disc: Discretization, pod: PodBasis, n_max=None) -> ReducedModel:
    """Offline phase: project all affine and trilinear pieces."""
    n_max = pod.rank if n_max is None else min(n_max, pod.rank)
    U = pod.all_modes[:, :n_max]
    descriptors = term_descriptors(disc.config)
    s_idx = np.array([i for i, d in enumerate(descriptors) if not d.is_advection])
    a_idx = np.array([i for i, d in enumerate(descriptors) if d.is_advection])
    G = lifting_expansion(disc)
    family = assemble_affine_family(disc.mesh, disc.gather, nu=disc.nu,
                                    descriptors=[descriptors[i] for i in s_idx])
    stokes, stokes_rhs = project_affine(U, family, G)
    adv, adv_rhs, adv_lift, adv_lift_rhs = project_trilinear(
        U, disc, G, [descriptors[i] for i in a_idx])
    meta = {"N_delta": disc.n_dofs, "p": disc.p, "nu": disc.nu,
            "energy_threshold": pod.energy_threshold, "N_threshold": pod.N}
    return ReducedModel(disc.config, s_idx, a_idx, stokes, stokes_rhs, adv, adv_rhs,
                        adv_lift, adv_lift_rhs, meta)


# -- errors ------------------------------------------------------------------

def reduced_velocity(disc: Discretization, modes, solution: ReducedSolution) -> np.ndarray:
    """Nodal velocity of ``U x_N`` plus the Dirichlet data at the solution's ``mu``."""
    x = reconstruct(modes, solution.coeffs)
    g = disc.gather
    return g.velocity_field(g.full_vector(x, disc.dirichlet_values(solution.mu)))


def relative_l2_error(disc: Discretization, mu, velocity, truth) -> float:
    w = disc.mass_weights(mu)
    return float(np.sqrt(np.sum(w * (velocity - truth) ** 2) / np.sum(w * truth ** 2)))


@dataclass
class ErrorTable:
    sizes: np.ndarray
    max_error: np.ndarray
    mean_error: np.ndarray
    errors: np.ndarray              # (len(sizes), n_params)
    iterations: np.ndarray


def error_study(disc: Discretization, pod: PodBasis, model: ReducedModel, truths,
                sizes, tol=1e-8, max_iter=100) -> ErrorTable:
    """Max and mean relative L2 velocity errors of the ROM over ``truths``
    (converged full-order states) for each basis size."""
    sizes = np.asarray(list(sizes), dtype=int)
    errors = np.zeros((len(sizes), len(truths)))
    its = np.zeros_like(errors, dtype=int)
    for i, N in enumerate(sizes):
        sub = model.truncate(int(N))
        for j, truth in enumerate(truths):
            sol = sub.online_solve(truth.mu, tol, max_iter)
            u = reduced_velocity(disc, pod.all_modes, sol)
            errors[i, j] = relative_l2_error(disc, truth.mu, u, truth.velocity)
            its[i, j] = sol.iterations
    return ErrorTable(sizes, errors.max(axis=1), errors.mean(axis=1), errors, its)
