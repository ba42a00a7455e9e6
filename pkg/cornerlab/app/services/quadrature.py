"""
Quadrature rules shared by the numerical services.

Everything here returns plain numpy arrays of nodes and weights; callers
contract them with sampled integrands.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=64)
def _reference_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(order: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes and weights mapped to [a, b].

    Args:
        order: Number of nodes
        a: Left end point
        b: Right end point

    Returns:
        Tuple (nodes, weights)
    """
    x, w = _reference_rule(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(breaks: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss rule of the given order on every panel [breaks[i], breaks[i+1]]."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _reference_rule(order)
    left = breaks[:-1, None]
    half = 0.5 * np.diff(breaks)[:, None]
    nodes = left + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def log_radius_rule(r_min: float, r_max: float, panels_per_decade: int = 6,
                    order: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rule for ∫ f(r) dr on [r_min, r_max] with panels uniform in log r.

    Log-oscillating integrands such as sin(κ log r) are resolved uniformly
    across decades by this layout.
    """
    decades = max(np.log10(r_max / r_min), 1e-12)
    n_panels = max(int(np.ceil(decades * panels_per_decade)), 1)
    t_nodes, t_weights = composite_gauss(
        np.linspace(np.log(r_min), np.log(r_max), n_panels + 1), order
    )
    r = np.exp(t_nodes)
    return r, t_weights * r


@lru_cache(maxsize=16)
def triangle_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Collapsed (Duffy) Gauss rule on the reference triangle {x, y >= 0, x + y <= 1}.

    Exact for polynomials of total degree 2*order - 2. Nodes lie strictly
    inside the triangle.

    Returns:
        Tuple (points of shape (n, 2), weights of shape (n,)) with weights
        summing to 1/2
    """
    x, w = _reference_rule(order)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu)
    px = uu
    py = vv * (1.0 - uu)
    weights = (ww * (1.0 - uu)).ravel()
    points = np.column_stack([px.ravel(), py.ravel()])
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


@lru_cache(maxsize=16)
def apex_triangle_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """triangle_rule with the collapsed edge moved to the reference vertex (0, 0)."""
    points, weights = triangle_rule(order)
    # barycentric permutation (λ0, λ1, λ2) -> (λ1, λ2, λ0)
    moved = np.column_stack([points[:, 1], 1.0 - points[:, 0] - points[:, 1]])
    moved.setflags(write=False)
    return moved, weights


@lru_cache(maxsize=16)
def subdivided_triangle_rule(order: int, level: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    triangle_rule applied on each of the 4**level congruent sub-triangles of
    the reference triangle.
    """
    triangles = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    for _ in range(level):
        refined = []
        for v in triangles:
            m01, m12, m20 = 0.5 * (v[0] + v[1]), 0.5 * (v[1] + v[2]), 0.5 * (v[2] + v[0])
            refined += [np.array([v[0], m01, m20]), np.array([m01, v[1], m12]),
                        np.array([m20, m12, v[2]]), np.array([m12, m20, m01])]
        triangles = refined
    base_points, base_weights = triangle_rule(order)
    scale = 0.25 ** level
    chunks = []
    for v in triangles:
        chunks.append(v[0] + base_points[:, :1] * (v[1] - v[0]) + base_points[:, 1:] * (v[2] - v[0]))
    points = np.vstack(chunks)
    weights = np.tile(base_weights * scale, len(triangles))
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights
