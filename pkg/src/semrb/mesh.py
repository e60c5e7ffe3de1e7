"""Structured quadrilateral mesh of the channel, aligned with the bands."""
from __future__ import annotations

import hashlib
from functools import cached_property

import numpy as np

from .geometry import (GAP, GeometryConfig, GeometryError, band_of_point,
                       build_subdomains, deformed_y)
from .sem import ElementGeometry, ReferenceElement

INFLOW, OUTFLOW, WALL = "inflow", "outflow", "wall"


def _breaks(start, stop, width, tol=1e-9):
    n = int(round((stop - start) / width))
    if n < 1 or abs(start + n * width - stop) > tol:
        raise GeometryError(f"[{start}, {stop}] is not a multiple of element width {width}")
    return start + width * np.arange(n + 1)


class ChannelMesh:
    """Conforming mesh of the reference channel minus the two solid blocks.

    Parameters
    ----------
    config : GeometryConfig
    ref : ReferenceElement
    element_width : float
        Column width; the narrowing span and the inflow strip must be
        multiples of it.
    rows_per_band : int
        Element rows in each of the three bands.
    """

    def __init__(self, config: GeometryConfig, ref: ReferenceElement,
                 element_width: float = 0.5, rows_per_band: int = 1):
        self.config = config
        self.ref = ref
        self.element_width = float(element_width)
        self.rows_per_band = int(rows_per_band)
        if abs(config.inflow_strip_width - element_width) > 1e-12:
            raise GeometryError("inflow strip must be exactly one element column wide")
        subdomains = build_subdomains(config)
        x0, x1 = config.narrowing_x_span
        xb = np.concatenate([
            _breaks(0.0, x0, element_width),
            _breaks(x0, x1, element_width)[1:],
            _breaks(x1, config.channel_length, element_width)[1:],
        ])
        edges = config.band_edges()
        yb = np.concatenate([[0.0]] + [
            np.linspace(edges[k], edges[k + 1], rows_per_band + 1)[1:] for k in range(3)])

        def owner(cx, cy):
            ids = [sd.subdomain_id for sd in subdomains if sd.contains(cx, cy)]
            return ids[0] if ids else None

        self._build(xb, yb, owner)

    @classmethod
    def from_breaks(cls, config: GeometryConfig, ref: ReferenceElement, x_breaks, y_breaks):
        """Mesh every cell of a tensor grid, ignoring the solid blocks.

        Meant for small test instances; each element is assigned to the band
        containing its centre.
        """
        mesh = cls.__new__(cls)
        mesh.config, mesh.ref = config, ref
        mesh.element_width = float(np.min(np.diff(x_breaks)))
        mesh.rows_per_band = 1
        mesh._build(np.asarray(x_breaks, dtype=float), np.asarray(y_breaks, dtype=float),
                    lambda cx, cy: band_of_point(config, cy))
        return mesh

    def _build(self, xb, yb, owner):
        self.x_breaks, self.y_breaks = xb, yb
        elements, cells = [], []
        for row in range(len(yb) - 1):
            for col in range(len(xb) - 1):
                cx, cy = 0.5 * (xb[col] + xb[col + 1]), 0.5 * (yb[row] + yb[row + 1])
                sid = owner(cx, cy)
                if sid is None:
                    continue
                elements.append(ElementGeometry(xb[col], xb[col + 1], yb[row], yb[row + 1],
                                                len(elements), sid))
                cells.append((col, row))
        self.elements = elements
        self.cells = np.array(cells)
        self._number_nodes()

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def subdomain_ids(self) -> np.ndarray:
        return np.array([e.subdomain_id for e in self.elements])

    def _number_nodes(self):
        p = self.ref.p
        ia, ib = self.ref.node_index[:, 0], self.ref.node_index[:, 1]
        lattice = np.stack([
            self.cells[:, 0:1] * p + ia[None, :],
            self.cells[:, 1:2] * p + ib[None, :],
        ], axis=-1)                                 # (E, n, 2)
        keys = lattice.reshape(-1, 2)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        self.elem_nodes = inverse.reshape(self.n_elements, -1)
        self.n_nodes = len(uniq)
        coords = np.empty((self.n_nodes, 2))
        for e, geom in enumerate(self.elements):
            coords[self.elem_nodes[e]] = geom.map_points(self.ref.points)
        self.node_coords = coords

        on_bnd = np.zeros(self.n_nodes, dtype=bool)
        on_bnd[self.elem_nodes[:, self.ref.boundary].ravel()] = True
        self.skeleton_nodes = np.flatnonzero(on_bnd)
        self.interior_nodes = np.flatnonzero(~on_bnd)

    def _element_edges(self):
        """Yield ``(element, edge-local node indices)`` for all four edges."""
        p = self.ref.p
        ia, ib = self.ref.node_index[:, 0], self.ref.node_index[:, 1]
        local = [np.flatnonzero(ib == 0), np.flatnonzero(ia == p),
                 np.flatnonzero(ib == p), np.flatnonzero(ia == 0)]
        for e in range(self.n_elements):
            for nodes in local:
                yield e, nodes

    @cached_property
    def boundary_tags(self) -> dict[str, np.ndarray]:
        """Global node indices on the inflow, outflow and wall boundaries."""
        count = {}
        for e, nodes in self._element_edges():
            key = tuple(sorted(self.elem_nodes[e, nodes]))
            count[key] = count.get(key, 0) + 1
        tags = {INFLOW: set(), OUTFLOW: set(), WALL: set()}
        L = self.config.channel_length
        for key, c in count.items():
            if c > 1:
                continue
            xs = self.node_coords[list(key), 0]
            if np.allclose(xs, 0.0):
                tags[INFLOW].update(key)
            elif np.allclose(xs, L):
                tags[OUTFLOW].update(key)
            else:
                tags[WALL].update(key)
        return {k: np.array(sorted(v), dtype=int) for k, v in tags.items()}

    def deformed_elements(self, mu: float) -> list[ElementGeometry]:
        """Element geometries on the physical domain at gap height ``mu``."""
        self.config.check_mu(mu)
        out = []
        for e in self.elements:
            y0, y1 = deformed_y(self.config, [e.y0, e.y1], mu)
            out.append(ElementGeometry(e.x0, e.x1, float(y0), float(y1),
                                       e.element_id, e.subdomain_id))
        return out

    def deformed_coords(self, mu: float) -> np.ndarray:
        self.config.check_mu(mu)
        xy = self.node_coords.copy()
        xy[:, 1] = deformed_y(self.config, xy[:, 1], mu)
        return xy

    def narrowing_nodes(self) -> np.ndarray:
        x0, x1 = self.config.narrowing_x_span
        x = self.node_coords[:, 0]
        gap = np.zeros(self.n_nodes, dtype=bool)
        gap[self.elem_nodes[self.subdomain_ids == GAP].ravel()] = True
        return np.flatnonzero((x >= x0 - 1e-12) & (x <= x1 + 1e-12) & gap)

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        h.update(np.asarray([self.ref.p, self.n_elements, self.n_nodes]).tobytes())
        h.update(np.round(self.node_coords, 12).tobytes())
        return h.hexdigest()[:16]
