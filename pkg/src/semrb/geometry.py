"""Parametrized channel-with-narrowing geometry and its affine maps.

The reference channel is ``[0, L] x [0, H]`` with a narrowing (two solid
blocks attached to the bottom and top walls) over ``narrowing_x_span``.
The gap between the blocks has height ``mu`` and is centred at ``H / 2``.

The domain is cut into three horizontal bands (below, inside and above the
gap height). Each band is stretched vertically by a single affine map, so
that every element keeps a constant Jacobian and the parametrized operators
split into a short sum of parameter-independent pieces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOWER, GAP, UPPER = 0, 1, 2
BAND_NAMES = ("lower", "gap", "upper")

# (tensor family, tensor entry) for each operator kind
OPERATOR_KINDS = {
    "diffusion-xx": ("nu", (0, 0)),
    "diffusion-yy": ("nu", (1, 1)),
    "divergence-x": ("chi", (0, 0)),
    "divergence-y": ("chi", (1, 1)),
    "advection-x": ("pi", (0, 0)),
    "advection-y": ("pi", (1, 1)),
}


class GeometryError(ValueError):
    """Invalid geometry configuration or parameter."""


@dataclass(frozen=True)
class GeometryConfig:
    """Channel dimensions and admissible gap heights (all lengths in the
    reference configuration)."""

    channel_length: float = 8.0
    channel_height: float = 3.0
    narrowing_x_span: tuple[float, float] = (3.0, 5.0)
    gap_center_y: float = 1.5
    reference_gap: float = 1.0
    mu_range: tuple[float, float] = (0.1, 2.9)
    inflow_strip_width: float = 0.5

    def __post_init__(self):
        L, H = self.channel_length, self.channel_height
        x0, x1 = self.narrowing_x_span
        lo, hi = self.mu_range
        if L <= 0 or H <= 0:
            raise GeometryError("channel dimensions must be positive")
        if not abs(self.gap_center_y - H / 2) <= 1e-12 * H:
            raise GeometryError("gap must be centred at channel_height / 2")
        if not 0 < x0 < x1 < L:
            raise GeometryError(
                f"narrowing_x_span {self.narrowing_x_span} must lie strictly inside (0, {L})")
        if not 0 < lo <= hi < H:
            raise GeometryError(f"mu_range {self.mu_range} must lie inside (0, {H})")
        if not 0 < self.reference_gap < H:
            raise GeometryError("reference_gap must lie inside (0, channel_height)")
        if not 0 < self.inflow_strip_width < L:
            raise GeometryError("inflow_strip_width must be positive")

    @property
    def wall_height(self) -> float:
        """Height of each solid block in the reference configuration."""
        return (self.channel_height - self.reference_gap) / 2

    def band_edges(self) -> np.ndarray:
        """Reference y coordinates of the band interfaces."""
        H, w = self.channel_height, self.wall_height
        return np.array([0.0, w, H - w, H])

    def check_mu(self, mu: float) -> float:
        lo, hi = self.mu_range
        mu = float(mu)
        if not lo <= mu <= hi:
            raise GeometryError(f"mu = {mu} outside admissible range [{lo}, {hi}]")
        return mu


@dataclass(frozen=True)
class AffineMap:
    """``x_ref = T @ x_def + g``: maps the deformed subdomain onto the
    reference subdomain."""

    T: np.ndarray
    g: np.ndarray
    subdomain_id: int

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.T))

    def to_reference(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.T.T + self.g

    def to_deformed(self, points):
        points = np.asarray(points, dtype=float)
        return np.linalg.solve(self.T, (points - self.g).T).T


@dataclass(frozen=True)
class Subdomain:
    """A band of the reference domain as a union of axis-aligned rectangles
    ``(x0, x1, y0, y1)``."""

    subdomain_id: int
    name: str
    rects: tuple[tuple[float, float, float, float], ...]

    def contains(self, x, y) -> bool:
        return any(x0 <= x <= x1 and y0 <= y <= y1 for x0, x1, y0, y1 in self.rects)

    @property
    def area(self) -> float:
        return sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.rects)


@dataclass(frozen=True)
class TermDescriptor:
    subdomain_id: int
    kind: str

    @property
    def tensor(self) -> str:
        return OPERATOR_KINDS[self.kind][0]

    @property
    def entry(self) -> tuple[int, int]:
        return OPERATOR_KINDS[self.kind][1]

    @property
    def is_advection(self) -> bool:
        return self.kind.startswith("advection")

    def __str__(self):
        return f"{BAND_NAMES[self.subdomain_id]}:{self.kind}"


@dataclass(frozen=True)
class AffineCoefficients:
    thetas: np.ndarray
    term_descriptors: tuple[TermDescriptor, ...] = field(repr=False)

    def __len__(self):
        return len(self.thetas)


def build_subdomains(config: GeometryConfig) -> list[Subdomain]:
    """Split the reference fluid domain into the lower, gap and upper bands.

    The solid blocks of the narrowing are excluded, so the lower and upper
    bands consist of an upstream and a downstream rectangle each.
    """
    x0, x1 = config.narrowing_x_span
    if x0 < config.inflow_strip_width:
        raise GeometryError(
            f"narrowing starting at x = {x0} overlaps the inflow strip "
            f"[0, {config.inflow_strip_width}]")
    L = config.channel_length
    y = config.band_edges()
    lower = ((0.0, x0, y[0], y[1]), (x1, L, y[0], y[1]))
    gap = ((0.0, L, y[1], y[2]),)
    upper = ((0.0, x0, y[2], y[3]), (x1, L, y[2], y[3]))
    return [
        Subdomain(LOWER, "lower", lower),
        Subdomain(GAP, "gap", gap),
        Subdomain(UPPER, "upper", upper),
    ]


def scale_factors(config: GeometryConfig, mu: float) -> tuple[float, float]:
    """Vertical stretch factors ``(s_gap, s_wall)`` from deformed to reference."""
    mu = config.check_mu(mu)
    H = config.channel_height
    s_gap = config.reference_gap / mu
    s_wall = ((H - config.reference_gap) / 2) / ((H - mu) / 2)
    return s_gap, s_wall


def subdomain_maps(config: GeometryConfig, mu: float) -> list[AffineMap]:
    """Affine maps (deformed -> reference) for each band at gap height ``mu``."""
    s_gap, s_wall = scale_factors(config, mu)
    H, yc = config.channel_height, config.gap_center_y
    return [
        AffineMap(np.diag([1.0, s_wall]), np.zeros(2), LOWER),
        AffineMap(np.diag([1.0, s_gap]), np.array([0.0, yc * (1 - s_gap)]), GAP),
        AffineMap(np.diag([1.0, s_wall]), np.array([0.0, H * (1 - s_wall)]), UPPER),
    ]


def transform_tensors(T, nu=1.0):
    """Transformed diffusion tensor and the shared divergence/advection tensor.

    Parameters
    ----------
    T : (2, 2) array_like
        Jacobian of the map from the deformed to the reference subdomain.
    nu : float or (2, 2) array_like
        Diffusion tensor on the deformed subdomain (scalar means isotropic).

    Returns
    -------
    nu_t, chi, pi : (2, 2) ndarray
        ``nu_t = T nu T^T / det T`` and ``chi = pi = T / det T``.
    """
    T = np.asarray(T, dtype=float)
    if T.shape != (2, 2):
        raise ValueError(f"T must be 2x2, got {T.shape}")
    det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
    if not det > 0 or not np.isfinite(det):
        raise GeometryError(f"map Jacobian must have positive determinant, got {det}")
    nu_hat = np.asarray(nu, dtype=float)
    if nu_hat.ndim == 0:
        nu_hat = nu_hat * np.eye(2)
    nu_t = T @ nu_hat @ T.T / det
    chi = T / det
    return nu_t, chi, chi.copy()


def term_descriptors(config: GeometryConfig) -> tuple[TermDescriptor, ...]:
    return tuple(
        TermDescriptor(sd.subdomain_id, kind)
        for sd in build_subdomains(config)
        for kind in OPERATOR_KINDS
    )


def theta_coefficients(config: GeometryConfig, mu: float) -> AffineCoefficients:
    descriptors = term_descriptors(config)
    tensors = [transform_tensors(m.T) for m in subdomain_maps(config, mu)]
    family = {"nu": 0, "chi": 1, "pi": 2}
    thetas = np.array([
        tensors[d.subdomain_id][family[d.tensor]][d.entry] for d in descriptors
    ])
    return AffineCoefficients(thetas, descriptors)


def band_of_point(config: GeometryConfig, y_ref: float) -> int:
    edges = config.band_edges()
    if y_ref < edges[1]:
        return LOWER
    if y_ref <= edges[2]:
        return GAP
    return UPPER


def deformed_y(config: GeometryConfig, y_ref, mu: float):
    """Deformed y coordinate of reference heights ``y_ref``.

    Piecewise affine in ``y_ref`` and affine in ``mu``; no range check on
    ``mu`` so that the dependence can be sampled outside the admissible set.
    """
    y_ref = np.asarray(y_ref, dtype=float)
    H, w = config.channel_height, config.wall_height
    wall = (H - mu) / 2
    lower = y_ref / w * wall
    gap = wall + (y_ref - w) / config.reference_gap * mu
    upper = H - (H - y_ref) / w * wall
    return np.where(y_ref < w, lower, np.where(y_ref <= H - w, gap, upper))
