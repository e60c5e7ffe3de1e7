"""Full-order saddle-point system in element-local DOFs, gathering and lifting.

Unknowns are ordered ``(v_bnd, p, v_int)``: velocity DOFs on element
boundaries, element-wise discontinuous pressure, velocity DOFs strictly
inside elements. Only ``v_bnd`` needs gathering; interior velocity and
pressure DOFs are the same in local and global numbering.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import (GeometryConfig, TermDescriptor, deformed_y, term_descriptors,
                       theta_coefficients)
from .mesh import INFLOW, WALL, ChannelMesh
from .sem import ReferenceElement, element_blocks


class AssemblyError(RuntimeError):
    pass


def parabolic_inflow(height):
    """``u_x(0, y) = y (height - y)``."""
    return lambda y: y * (height - y)


@dataclass
class LocalBlockSystem:
    """Element-local blocks of the saddle-point system.

    ``velocity`` holds the scalar velocity operator of every element, shape
    ``(E, n, n)``; it acts identically on both components. ``divergence``
    holds ``int psi div(v)``, shape ``(E, n_p, 2 n)``.
    """

    velocity: np.ndarray
    divergence: np.ndarray
    ref: ReferenceElement

    @property
    def n_elements(self) -> int:
        return self.velocity.shape[0]

    def _blocks(self, rows, cols, mats):
        return sp.block_diag([m[np.ix_(rows, cols)] for m in mats], format="csr")

    def _vector_ops(self):
        eye = np.eye(2)
        return [np.kron(eye, v) for v in self.velocity]

    @cached_property
    def _split(self):
        bnd, inn = self.ref.velocity_split()
        K = self._vector_ops()
        return {
            "A": self._blocks(bnd, bnd, K),
            "B": self._blocks(bnd, inn, K),
            "B_tilde": self._blocks(inn, bnd, K),
            "C": self._blocks(inn, inn, K),
            "D_bnd": sp.block_diag([d[:, bnd] for d in self.divergence], format="csr"),
            "D_int": sp.block_diag([d[:, inn] for d in self.divergence], format="csr"),
        }

    A = property(lambda self: self._split["A"])
    B = property(lambda self: self._split["B"])
    B_tilde = property(lambda self: self._split["B_tilde"])
    C = property(lambda self: self._split["C"])
    D_bnd = property(lambda self: self._split["D_bnd"])
    D_int = property(lambda self: self._split["D_int"])

    @property
    def f_bnd(self):
        return np.zeros(self.A.shape[0])

    @property
    def f_int(self):
        return np.zeros(self.C.shape[0])

    def matrix(self) -> sp.csr_matrix:
        """Ungathered system ``[[A, -D_bnd^T, B], [-D_bnd, 0, -D_int], [B~, -D_int^T, C]]``."""
        s = self._split
        return sp.bmat([
            [s["A"], -s["D_bnd"].T, s["B"]],
            [-s["D_bnd"], None, -s["D_int"]],
            [s["B_tilde"], -s["D_int"].T, s["C"]],
        ], format="csr")

    def __add__(self, other):
        return LocalBlockSystem(self.velocity + other.velocity,
                                self.divergence + other.divergence, self.ref)

    def scaled(self, factor):
        return LocalBlockSystem(factor * self.velocity, factor * self.divergence, self.ref)


class _Pattern:
    """Fixed CSR sparsity for repeated scatter-add of element entries."""

    def __init__(self, rows, cols, shape):
        self.shape = shape
        self.keep = (rows >= 0) & (cols >= 0)
        key = rows[self.keep].astype(np.int64) * shape[1] + cols[self.keep]
        uniq, self.pos = np.unique(key, return_inverse=True)
        r = uniq // shape[1]
        self.indices = (uniq % shape[1]).astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(shape[0] + 1)).astype(np.int32)
        self.nnz = len(uniq)

    def __call__(self, values):
        data = np.bincount(self.pos, weights=values[self.keep], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


class GatherMap:
    """Local-to-global numbering, gather matrix and Dirichlet data.

    ``M`` has one row per local boundary velocity DOF and one column per
    global boundary velocity DOF, so local values are ``M @ global`` and the
    gathered boundary operator is ``M.T @ A @ M``.
    """

    def __init__(self, mesh: ChannelMesh, inflow=None):
        self.mesh = mesh
        ref = self.ref = mesh.ref
        self.inflow = inflow or parabolic_inflow(mesh.config.channel_height)
        E, n = mesh.n_elements, ref.n_velocity
        nb, ni, npr = len(ref.boundary), len(ref.interior), ref.n_pressure

        skel = np.full(mesh.n_nodes, -1)
        skel[mesh.skeleton_nodes] = np.arange(len(mesh.skeleton_nodes))
        n_skel = len(mesh.skeleton_nodes)
        self.n_global_bnd = 2 * n_skel
        self.n_pressure = E * npr
        self.n_interior = E * 2 * ni
        self.n_local_bnd = E * 2 * nb

        bnd_nodes = mesh.elem_nodes[:, ref.boundary]                     # (E, nb)
        local_to_global = np.concatenate(
            [skel[bnd_nodes], skel[bnd_nodes] + n_skel], axis=1)          # (E, 2nb)
        self.local_to_global = local_to_global.ravel()
        self.M = sp.csr_matrix(
            (np.ones(self.n_local_bnd), (np.arange(self.n_local_bnd), self.local_to_global)),
            shape=(self.n_local_bnd, self.n_global_bnd))

        # index of every element velocity DOF in the (v_bnd, p, v_int) vector
        off_p = self.n_global_bnd
        off_i = off_p + self.n_pressure
        bnd, inn = ref.velocity_split()
        vel = np.empty((E, 2 * n), dtype=np.int64)
        vel[:, bnd] = local_to_global
        vel[:, inn] = off_i + np.arange(self.n_interior).reshape(E, 2 * ni)
        self.elem_velocity_index = vel
        self.elem_pressure_index = off_p + np.arange(self.n_pressure).reshape(E, npr)
        self.n_full = off_i + self.n_interior

        # Dirichlet: inflow and walls, both components
        tags = mesh.boundary_tags
        dir_nodes = np.union1d(tags[INFLOW], tags[WALL])
        self.dirichlet_nodes = dir_nodes
        self._wall_nodes = tags[WALL]
        dir_full = np.concatenate([skel[dir_nodes], skel[dir_nodes] + n_skel])
        mask = np.zeros(self.n_full, dtype=bool)
        mask[dir_full] = True
        self.dirichlet_mask = mask[:self.n_global_bnd]
        self.dirichlet_index = np.flatnonzero(mask)
        self.free_index = np.flatnonzero(~mask)
        self.to_free = np.full(self.n_full, -1)
        self.to_free[self.free_index] = np.arange(len(self.free_index))
        self.to_dir = np.full(self.n_full, -1)
        self.to_dir[self.dirichlet_index] = np.arange(len(self.dirichlet_index))

        # full-vector index of each (component, node)
        node_full = np.empty((2, mesh.n_nodes), dtype=np.int64)
        for c in range(2):
            node_full[c, mesh.elem_nodes] = vel[:, c * n:(c + 1) * n]
        self.node_full_index = node_full

    @property
    def n_free(self) -> int:
        return len(self.free_index)

    @property
    def n_dirichlet(self) -> int:
        return len(self.dirichlet_index)

    @property
    def n_free_bnd(self) -> int:
        return int(np.count_nonzero(~self.dirichlet_mask))

    def multiplicity(self) -> np.ndarray:
        """Diagonal of ``M^T M``: number of elements sharing each global DOF."""
        return np.asarray((self.M.T @ self.M).diagonal())

    def dirichlet_values(self, mu, check=True) -> np.ndarray:
        """Prescribed values on the Dirichlet DOFs at gap height ``mu``."""
        if check:
            self.mesh.config.check_mu(mu)
        nodes = self.dirichlet_nodes
        y = deformed_y(self.mesh.config, self.mesh.node_coords[nodes, 1], mu)
        ux = np.asarray(self.inflow(y), dtype=float) * np.ones(len(nodes))
        ux[np.isin(nodes, self._wall_nodes)] = 0.0
        return np.concatenate([ux, np.zeros(len(nodes))])

    @cached_property
    def _patterns(self):
        ref = self.ref
        n, npr = ref.n_velocity, ref.n_pressure
        E = self.mesh.n_elements
        vel, pre = self.elem_velocity_index, self.elem_pressure_index
        rows, cols = [], []
        for c in range(2):
            blk = vel[:, c * n:(c + 1) * n]
            rows.append(np.broadcast_to(blk[:, :, None], (E, n, n)).ravel())
            cols.append(np.broadcast_to(blk[:, None, :], (E, n, n)).ravel())
        rows.append(np.broadcast_to(pre[:, :, None], (E, npr, 2 * n)).ravel())
        cols.append(np.broadcast_to(vel[:, None, :], (E, npr, 2 * n)).ravel())
        rows.append(np.broadcast_to(vel[:, :, None], (E, 2 * n, npr)).ravel())
        cols.append(np.broadcast_to(pre[:, None, :], (E, 2 * n, npr)).ravel())
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        nf, nd = self.n_free, self.n_dirichlet
        ff = _Pattern(self.to_free[rows], self.to_free[cols], (nf, nf))
        fd = _Pattern(self.to_free[rows], self.to_dir[cols], (nf, nd))
        return ff, fd

    def scatter(self, local: LocalBlockSystem):
        """Gathered free-free and free-Dirichlet matrices of a local system."""
        v = local.velocity.ravel()
        d = local.divergence
        values = np.concatenate([v, v, -d.ravel(), -d.transpose(0, 2, 1).ravel()])
        ff, fd = self._patterns
        return ff(values), fd(values)

    # -- vector bookkeeping ------------------------------------------------
    def full_vector(self, x_free, g_dir) -> np.ndarray:
        full = np.empty(self.n_full)
        full[self.free_index] = x_free
        full[self.dirichlet_index] = g_dir
        return full

    def velocity_field(self, full) -> np.ndarray:
        """Nodal velocity ``(2, n_nodes)`` from a full DOF vector."""
        return np.asarray(full)[self.node_full_index]

    def pressure_field(self, full) -> np.ndarray:
        return np.asarray(full)[self.elem_pressure_index]

    def free_velocity_field(self, x_free) -> np.ndarray:
        """Nodal velocity of a free-DOF vector with homogeneous Dirichlet data."""
        return self.velocity_field(self.full_vector(x_free, 0.0))


def build_gather(mesh: ChannelMesh, inflow=None) -> GatherMap:
    return GatherMap(mesh, inflow)


@dataclass
class MonolithicSystem:
    """Gathered, Dirichlet-lifted system ``matrix @ x = rhs`` in free DOFs."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    gather: GatherMap
    lifting: sp.csr_matrix | None = None

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def solve(self) -> np.ndarray:
        try:
            lu = spla.splu(self.matrix.tocsc())
        except RuntimeError as exc:
            raise AssemblyError(f"singular monolithic system: {exc}") from exc
        x = lu.solve(self.rhs)
        if not np.all(np.isfinite(x)):
            raise AssemblyError("singular monolithic system: non-finite solution")
        return x


def _element_wind(mesh, wind):
    wind = np.asarray(wind, dtype=float)
    if wind.shape != (2, mesh.n_nodes):
        raise ValueError(f"wind must have shape (2, {mesh.n_nodes}), got {wind.shape}")
    return wind[:, mesh.elem_nodes].transpose(1, 0, 2)


def _descriptor_tensors(descriptor: TermDescriptor):
    tensors = [np.zeros((2, 2)) for _ in range(3)]
    family = {"nu": 0, "chi": 1, "pi": 2}[descriptor.tensor]
    tensors[family][descriptor.entry] = 1.0
    return tensors


def assemble_local(mesh: ChannelMesh, mu=None, wind=None, nu=1.0,
                   descriptor: TermDescriptor | None = None,
                   include_stokes=True) -> LocalBlockSystem:
    """Sum element blocks into a :class:`LocalBlockSystem`.

    With ``mu`` given, assemble directly on the deformed domain. With
    ``descriptor`` given, assemble only that affine piece on the reference
    domain (unit coefficient, restricted to its subdomain).
    """
    ref = mesh.ref
    if mu is not None and descriptor is not None:
        raise ValueError("affine pieces are assembled on the reference domain only")
    elements = mesh.elements if mu is None else mesh.deformed_elements(mu)
    winds = None if wind is None else _element_wind(mesh, wind)
    E, n = mesh.n_elements, ref.n_velocity
    velocity = np.zeros((E, n, n))
    divergence = np.zeros((E, ref.n_pressure, 2 * n))
    if descriptor is None:
        eye = np.eye(2)
        tensors = (nu * eye if include_stokes else 0 * eye,
                   eye if include_stokes else 0 * eye, eye)
    else:
        tensors = _descriptor_tensors(descriptor)
        tensors[0] = nu * tensors[0]
    for e, geom in enumerate(elements):
        if descriptor is not None and geom.subdomain_id != descriptor.subdomain_id:
            continue
        w = None if winds is None else winds[e]
        blk = element_blocks(ref, geom, tensors, w)
        velocity[e] = blk.diffusion + blk.advection
        divergence[e] = blk.divergence
    return LocalBlockSystem(velocity, divergence, ref)


def gather_and_lift(local: LocalBlockSystem, gather: GatherMap, g_dir) -> MonolithicSystem:
    """Gather boundary DOFs, move the Dirichlet columns to the right-hand side
    and drop the Dirichlet rows."""
    ff, fd = gather.scatter(local)
    f_full = np.concatenate([gather.M.T @ local.f_bnd, np.zeros(gather.n_pressure),
                             local.f_int])
    rhs = f_full[gather.free_index] - fd @ np.asarray(g_dir, dtype=float)
    return MonolithicSystem(ff, rhs, gather, fd)


@dataclass
class AffineFamily:
    """Parameter-independent gathered pieces, one per term descriptor.

    ``matrices[i]`` is the free-free block and ``liftings[i]`` the
    free-Dirichlet block of term ``i``; advection pieces are assembled for
    the given wind.
    """

    descriptors: tuple[TermDescriptor, ...]
    matrices: list
    liftings: list

    def __len__(self):
        return len(self.descriptors)

    def combine(self, thetas, g_dir):
        A = sum(t * m for t, m in zip(thetas, self.matrices))
        L = sum(t * m for t, m in zip(thetas, self.liftings))
        return A.tocsr(), -(L @ g_dir)


def assemble_affine_family(mesh: ChannelMesh, gather: GatherMap, wind=None, nu=1.0,
                           descriptors=None) -> AffineFamily:
    descriptors = descriptors or term_descriptors(mesh.config)
    expected = term_descriptors(mesh.config)
    if any(d not in expected for d in descriptors):
        raise AssemblyError("descriptor does not belong to this geometry")
    mats, lifts = [], []
    for d in descriptors:
        if d.is_advection and wind is None:
            local = assemble_local(mesh, descriptor=d, nu=nu)
            local = local.scaled(0.0)
        else:
            local = assemble_local(mesh, descriptor=d, wind=wind, nu=nu)
        ff, fd = gather.scatter(local)
        mats.append(ff)
        lifts.append(fd)
    return AffineFamily(tuple(descriptors), mats, lifts)


class Discretization:
    """Mesh, reference element, numbering and cached operators for one setup."""

    def __init__(self, config: GeometryConfig | None = None, p: int = 8, nu: float = 1.0,
                 element_width: float = 0.5, rows_per_band: int = 1, inflow=None,
                 mesh: ChannelMesh | None = None):
        if mesh is not None:
            self.config, self.ref, self.mesh = mesh.config, mesh.ref, mesh
        else:
            self.config = config or GeometryConfig(inflow_strip_width=element_width)
            self.ref = ReferenceElement(p)
            self.mesh = ChannelMesh(self.config, self.ref, element_width, rows_per_band)
        self.gather = build_gather(self.mesh, inflow)
        self.nu = float(nu)
        self._stokes_cache = {}

    @property
    def p(self) -> int:
        return self.ref.p

    @property
    def n_dofs(self) -> int:
        return self.gather.n_free

    def dirichlet_values(self, mu, check=True):
        return self.gather.dirichlet_values(mu, check)

    def stokes_part(self, mu):
        """Gathered Stokes blocks on the deformed domain (cached per ``mu``)."""
        key = float(mu)
        if key not in self._stokes_cache:
            if len(self._stokes_cache) > 4:
                self._stokes_cache.clear()
            local = assemble_local(self.mesh, mu=mu, nu=self.nu)
            self._stokes_cache[key] = self.gather.scatter(local)
        return self._stokes_cache[key]

    def advection_part(self, mu, wind):
        local = assemble_local(self.mesh, mu=mu, wind=wind, include_stokes=False)
        return self.gather.scatter(local)

    def system(self, mu, wind=None) -> MonolithicSystem:
        """Direct assembly of the Oseen system on the deformed domain."""
        g = self.dirichlet_values(mu)
        ff, fd = self.stokes_part(mu)
        if wind is not None:
            aff, afd = self.advection_part(mu, wind)
            ff, fd = ff + aff, fd + afd
        return MonolithicSystem(ff, -(fd @ g), self.gather, fd)

    def affine_system(self, family: AffineFamily, mu) -> MonolithicSystem:
        thetas = theta_coefficients(self.config, mu).thetas
        index = {d: i for i, d in enumerate(term_descriptors(self.config))}
        th = np.array([thetas[index[d]] for d in family.descriptors])
        A, rhs = family.combine(th, self.dirichlet_values(mu))
        return MonolithicSystem(A, rhs, self.gather)

    # -- norms -------------------------------------------------------------
    def mass_weights(self, mu) -> np.ndarray:
        """Diagonal GLL mass matrix of one velocity component on the deformed domain."""
        m = np.zeros(self.mesh.n_nodes)
        for e, geom in enumerate(self.mesh.deformed_elements(mu)):
            np.add.at(m, self.mesh.elem_nodes[e], self.ref.weights * np.linalg.det(geom.jacobian))
        return m

    def l2_norm(self, velocity, mu, weights=None) -> float:
        w = self.mass_weights(mu) if weights is None else weights
        return float(np.sqrt(np.sum(w * np.asarray(velocity) ** 2)))
