"""
Mesh Service

Corner-graded triangulations of the half-period domain
Ω = {0 < x < Λ/2, 0 < y < η(x)}.

The domain is the image of the logical square (a, t) ∈ [0, 1]² under a
transfinite (Gordon-Hall) map whose edge a = 0 collapses onto the crest
(or, for outer meshes, runs along the arc r = r_hole), whose edge a = 1 runs
along the bottom and the trough wall with the bottom corner at t = 1/2, and
whose edges t = 0 and t = 1 are the crest wall x = 0 and the surface.
Node circles a = const are geometrically graded toward a = 0; the number of
angular segments doubles outward wherever the circles get long.
"""

import logging
import math
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import brentq

from ...errors import InvalidParameterError, MeshError
from .profile import SurfaceProfile

logger = logging.getLogger(__name__)

# Fine angular sampling used to measure circle lengths.
_ARC_SAMPLES = 129
# Doubling threshold on (circle length / segments) against the target spacing.
_DOUBLING_FACTOR = 1.5


class BoundaryTag(str, Enum):
    """Boundary pieces of the half-period domain"""
    SURFACE = "surface"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"
    ARC = "arc"


# --------------------------------------------------------------------------
# 1. Pydantic Models
# --------------------------------------------------------------------------

class Mesh(BaseModel):
    """Conforming triangulation with tagged boundary edges and its logical map"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nodes: np.ndarray
    logical: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: Tuple[BoundaryTag, ...]
    grading: float
    r_inner: float
    layer_radii: np.ndarray
    corner_point: Tuple[float, float]
    corner_vertex: Optional[int]
    hole_radius: float
    mapping: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask]


# --------------------------------------------------------------------------
# 2. Transfinite map
# --------------------------------------------------------------------------

def _surface_point_at_distance(profile: SurfaceProfile, radius: float) -> float:
    """Abscissa of the surface point at distance ``radius`` from the crest."""
    def gap(x):
        y = float(profile.eta(np.array([x]))[0])
        return math.hypot(x, profile.eta0 - y) - radius

    return brentq(gap, 0.0, profile.half_period, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def transfinite_map(profile: SurfaceProfile, hole_radius: float = 0.0) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """
    Gordon-Hall map (a, t) -> (x, y) of the half-period domain.

    Args:
        profile: Surface profile
        hole_radius: 0 for the full domain, otherwise the radius of the
            removed disc around the crest

    Returns:
        Vectorized callable returning points of shape a.shape + (2,)
    """
    half, eta0 = profile.half_period, profile.eta0
    crest = np.array([0.0, eta0])
    trough = np.array([half, float(profile.eta(np.array([half]))[0])])
    bottom_left = np.array([0.0, 0.0])

    if hole_radius > 0.0:
        x_hole = _surface_point_at_distance(profile, hole_radius)
        y_hole = float(profile.eta(np.array([x_hole]))[0])
        theta_end = math.atan2(x_hole, eta0 - y_hole)
    else:
        x_hole, theta_end = 0.0, 0.0
    wall_top = eta0 - hole_radius

    def inner(t):
        angle = theta_end * t
        return np.stack([hole_radius * np.sin(angle), eta0 - hole_radius * np.cos(angle)], axis=-1)

    def far(t):
        lower = np.stack([2.0 * t * half, np.zeros_like(t)], axis=-1)
        upper = np.stack([np.full_like(t, half), (2.0 * t - 1.0) * trough[1]], axis=-1)
        return np.where((t <= 0.5)[..., None], lower, upper)

    def wall(a):
        return np.stack([np.zeros_like(a), wall_top * (1.0 - a)], axis=-1)

    def surface(a):
        x = x_hole + a * (half - x_hole)
        return np.stack([x, profile.eta(x)], axis=-1)

    e00 = inner(np.array(0.0))
    e01 = inner(np.array(1.0))

    def mapping(a, t):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        A, T = a[..., None], t[..., None]
        blend = (1.0 - A) * inner(t) + A * far(t) + (1.0 - T) * wall(a) + T * surface(a)
        corners = ((1.0 - A) * (1.0 - T) * e00 + A * (1.0 - T) * bottom_left
                   + (1.0 - A) * T * e01 + A * T * trough)
        return blend - corners

    return mapping


# --------------------------------------------------------------------------
# 3. Generation
# --------------------------------------------------------------------------

def _circle_length(mapping, a: float) -> float:
    t = np.linspace(0.0, 1.0, _ARC_SAMPLES)
    points = mapping(np.full_like(t, a), t)
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def _radial_breaks(h_max: float, grading: float, n_layers: int, scale: float, hole: bool) -> np.ndarray:
    """Logical radii a_j, geometric toward a = 0 and uniform beyond h_max."""
    a_h = min(h_max / scale, 0.5)
    n_uniform = max(int(math.ceil((1.0 - a_h) * scale / h_max)), 1)
    uniform = np.linspace(a_h, 1.0, n_uniform + 1)
    if not hole:
        geometric = a_h * grading ** np.arange(n_layers, 0, -1)
        return np.concatenate([[0.0], geometric, uniform])
    # graded away from the arc
    positions = [0.0]
    width = a_h * grading ** n_layers
    while positions[-1] + width < a_h:
        positions.append(positions[-1] + width)
        width /= grading
    if len(positions) > 2 and a_h - positions[-1] < 0.5 * (positions[-1] - positions[-2]):
        positions.pop()
    return np.concatenate([positions, uniform])


def _check_parameters(profile: SurfaceProfile, h_max: float, grading: float, n_layers: int,
                      n_angular: int, hole_radius: float) -> None:
    size = min(profile.half_period, profile.eta0)
    if not 0.0 < h_max < size:
        raise InvalidParameterError(f"h_max must lie in (0, {size!r}), got {h_max!r}")
    if not 0.0 < grading < 1.0:
        raise InvalidParameterError(f"grading must lie in (0, 1), got {grading!r}")
    if n_layers < 0:
        raise InvalidParameterError(f"n_layers must be non-negative, got {n_layers!r}")
    if n_angular < 2 or n_angular % 2:
        raise InvalidParameterError(f"n_angular must be an even number >= 2, got {n_angular!r}")
    if hole_radius < 0.0 or hole_radius >= 0.5 * size:
        raise InvalidParameterError(f"hole_radius must lie in [0, {0.5 * size!r}), got {hole_radius!r}")


def generate_mesh(profile: SurfaceProfile, h_max: float, grading: float, n_layers: int,
                  n_angular: int = 6, hole_radius: float = 0.0) -> Mesh:
    """
    Corner-graded conforming triangulation of the half-period domain.

    Args:
        profile: Surface profile
        h_max: Mesh size away from the crest; the graded zone starts at radius h_max
        grading: Ratio of consecutive layer radii toward the crest
        n_layers: Number of geometric layers; the innermost radius is about
            h_max·grading^n_layers
        n_angular: Angular segments next to the crest (even)
        hole_radius: Radius of a removed disc around the crest (outer meshes)

    Returns:
        Mesh

    Raises:
        InvalidParameterError: If the parameters are inconsistent
        MeshError: If an element comes out degenerate or inverted
    """
    _check_parameters(profile, h_max, grading, n_layers, n_angular, hole_radius)
    hole = hole_radius > 0.0
    mapping = transfinite_map(profile, hole_radius)
    crest = np.array([0.0, profile.eta0])

    t_inner = np.linspace(0.0, 1.0, n_angular + 1)
    if hole:
        scale = float(np.mean(np.linalg.norm(mapping(np.ones_like(t_inner), t_inner)
                                             - mapping(np.zeros_like(t_inner), t_inner), axis=1)))
    else:
        eps = 1e-8
        scale = float(np.mean(np.linalg.norm(mapping(np.full_like(t_inner, eps), t_inner) - crest, axis=1)) / eps)
    breaks = _radial_breaks(h_max, grading, n_layers, scale, hole)

    # angular segment counts per node circle
    counts = [n_angular]
    arc_target = _circle_length(mapping, 0.0) / n_angular if hole else 0.0
    first = 0 if hole else 1
    for j in range(first, breaks.size - 1):
        spacing = (breaks[j + 1] - breaks[j]) * scale
        target = max(spacing, arc_target)
        if _circle_length(mapping, breaks[j + 1]) / counts[-1] > _DOUBLING_FACTOR * target:
            counts.append(2 * counts[-1])
        else:
            counts.append(counts[-1])
    if not hole:
        counts = [0] + counts

    nodes: List[np.ndarray] = []
    logical: List[np.ndarray] = []
    circles: List[np.ndarray] = []
    offset = 0
    corner_vertex = None
    for j, a in enumerate(breaks):
        if j == 0 and not hole:
            nodes.append(crest[None, :])
            logical.append(np.array([[0.0, np.nan]]))
            circles.append(np.array([0]))
            corner_vertex = 0
            offset = 1
            continue
        t = np.linspace(0.0, 1.0, counts[j] + 1)
        nodes.append(mapping(np.full_like(t, a), t))
        logical.append(np.column_stack([np.full_like(t, a), t]))
        circles.append(offset + np.arange(t.size))
        offset += t.size
    coords = np.vstack(nodes)
    logical_coords = np.vstack(logical)

    elements: List[Tuple[int, int, int]] = []
    for j in range(breaks.size - 1):
        inner, outer = circles[j], circles[j + 1]
        if j == 0 and not hole:
            apex = inner[0]
            elements.extend((apex, outer[i], outer[i + 1]) for i in range(outer.size - 1))
        elif outer.size == inner.size:
            for i in range(inner.size - 1):
                p00, p01 = inner[i], inner[i + 1]
                p10, p11 = outer[i], outer[i + 1]
                if np.linalg.norm(coords[p10] - coords[p01]) < np.linalg.norm(coords[p00] - coords[p11]):
                    elements.extend([(p00, p10, p01), (p10, p11, p01)])
                else:
                    elements.extend([(p00, p10, p11), (p00, p11, p01)])
        else:
            for i in range(inner.size - 1):
                a0, a1 = inner[i], inner[i + 1]
                b0, b1, b2 = outer[2 * i], outer[2 * i + 1], outer[2 * i + 2]
                elements.extend([(a0, b0, b1), (a0, b1, a1), (a1, b1, b2)])
    elements_arr = np.asarray(elements, dtype=np.int64)

    edges: List[Tuple[int, int]] = []
    tags: List[BoundaryTag] = []
    for j in range(breaks.size - 1):
        inner, outer = circles[j], circles[j + 1]
        edges.append((inner[0], outer[0]))
        tags.append(BoundaryTag.LEFT)
        edges.append((inner[-1], outer[-1]))
        tags.append(BoundaryTag.SURFACE)
    last = circles[-1]
    t_last = logical_coords[last, 1]
    for i in range(last.size - 1):
        edges.append((last[i], last[i + 1]))
        tags.append(BoundaryTag.BOTTOM if t_last[i + 1] <= 0.5 else BoundaryTag.RIGHT)
    if hole:
        for i in range(circles[0].size - 1):
            edges.append((circles[0][i], circles[0][i + 1]))
            tags.append(BoundaryTag.ARC)

    areas = signed_areas(coords, elements_arr)
    if np.any(areas <= 0.0):
        raise MeshError(f"{int(np.sum(areas <= 0.0))} degenerate or inverted elements")

    radii = np.array([float(np.mean(np.linalg.norm(coords[c] - crest, axis=1))) for c in circles])
    r_inner = hole_radius if hole else float(radii[1])
    mesh = Mesh(
        nodes=coords,
        logical=logical_coords,
        elements=elements_arr,
        boundary_edges=np.asarray(edges, dtype=np.int64),
        boundary_tags=tuple(tags),
        grading=grading,
        r_inner=r_inner,
        layer_radii=radii,
        corner_point=(0.0, profile.eta0),
        corner_vertex=corner_vertex,
        hole_radius=hole_radius,
        mapping=mapping,
    )
    logger.info(f"Mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements, "
                f"{breaks.size} circles, r_inner={r_inner:.3e}, outer segments={counts[-1]}")
    return mesh


# --------------------------------------------------------------------------
# 4. Quality
# --------------------------------------------------------------------------

def signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = nodes[elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def element_quality(mesh: Mesh) -> np.ndarray:
    """2·inradius/circumradius per element (1 for an equilateral triangle)."""
    p = mesh.nodes[mesh.elements]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area = np.abs(signed_areas(mesh.nodes, mesh.elements))
    semi = 0.5 * (a + b + c)
    inradius = area / semi
    circumradius = a * b * c / (4.0 * area)
    return 2.0 * inradius / circumradius
