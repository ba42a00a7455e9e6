"""
Enriched Finite-Element Space Service

Isoparametric P1/P2 Lagrange spaces on a corner-graded mesh, optionally
augmented by one singular function

    e(x, y) = ζ(r)·sin(κ log(r/2) + γ)·cosh(κθ)

that realizes the self-adjoint extension with phase γ at the crest. Assembles
the pair (A, M) of

    −Δu + σu = λu in Ω,   ∂_ν u − (ρ/r)u = 0 on the surface,
    u = 0 on the bottom,  ∂_ν u = 0 on the lateral walls,

with the Robin term entering A as −∫_S (ρ/r) u v ds. Couplings of the
singular function use the Green form a(e, v) = ∫(−Δe + σe)v + ∫_S(∂_ν e − ρe/r)v,
which equals the weak form for every v vanishing at the crest.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import norm as sparse_norm

from ...errors import AssemblyError, ConvergenceError, DomainError, InvalidParameterError
from ..quadrature import (
    apex_triangle_rule,
    composite_gauss,
    gauss_legendre,
    log_radius_rule,
    subdivided_triangle_rule,
    triangle_rule,
)
from ..specfun import CornerData
from .mesh import BoundaryTag, Mesh
from .profile import SurfaceProfile, crest_drop, smoothstep, smoothstep_deriv, smoothstep_second

logger = logging.getLogger(__name__)

SigmaFn = Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]]
RhoFn = Optional[Callable[[np.ndarray], np.ndarray]]

SYMMETRY_TOL = 1e-12
COUPLING_TOL = 1e-8
DEFAULT_DELTA = 0.2

# Volume and edge rules of the polynomial block.
_STIFFNESS_ORDER = 4
_EDGE_ORDER = 6
# Rules touching the singular function.
_ENRICH_ORDER = 8
_ANNULUS_LEVEL = 2
# Self-coupling polar rule (radial order, angular order) and its check.
_SELF_RULE = (12, 16)
_SELF_RULE_CHECK = (20, 24)
_INNER_FRACTION = 1e-10
_CHUNK = 2048
_POINT_CHUNK = 256


# --------------------------------------------------------------------------
# 1. Singular function
# --------------------------------------------------------------------------

class SingularFunction(BaseModel):
    """Cutoff singular function ζ(r)·sin(κ log(r/2) + γ)·cosh(κθ) about the crest"""
    model_config = ConfigDict(frozen=True)

    kappa: float
    gamma: float
    crest: Tuple[float, float]
    cutoff: Tuple[float, float]

    def polar(self, x: np.ndarray, y: np.ndarray, depth: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(r, θ) about the crest; ``depth`` replaces crest_y − y when given."""
        depth = self.crest[1] - np.asarray(y, dtype=float) if depth is None else np.asarray(depth, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.hypot(x, depth), np.arctan2(x, depth)

    def _zeta(self, r: np.ndarray):
        d1, d2 = self.cutoff
        width = d2 - d1
        t = (r - d1) / width
        return (1.0 - smoothstep(t), -smoothstep_deriv(t) / width, -smoothstep_second(t) / width ** 2)

    def _parts(self, x, y, depth=None):
        r, theta = self.polar(x, y, depth)
        safe = np.where(r > 0.0, r, 1.0)
        phase = self.kappa * np.log(safe / 2.0) + self.gamma
        ch, sh = np.cosh(self.kappa * theta), np.sinh(self.kappa * theta)
        w = np.sin(phase) * ch
        w_r = self.kappa * np.cos(phase) * ch / safe
        w_theta = self.kappa * np.sin(phase) * sh
        return r, safe, w, w_r, w_theta

    def value(self, x: np.ndarray, y: np.ndarray, depth: Optional[np.ndarray] = None) -> np.ndarray:
        r, _, w, _, _ = self._parts(x, y, depth)
        zeta, _, _ = self._zeta(r)
        return zeta * w

    def gradient(self, x: np.ndarray, y: np.ndarray,
                 depth: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        depth = self.crest[1] - np.asarray(y, dtype=float) if depth is None else np.asarray(depth, dtype=float)
        r, safe, w, w_r, w_theta = self._parts(x, y, depth)
        zeta, dzeta, _ = self._zeta(r)
        r_x, r_y = x / safe, -depth / safe
        theta_x, theta_y = depth / safe ** 2, x / safe ** 2
        gx = zeta * (w_r * r_x + w_theta * theta_x) + dzeta * w * r_x
        gy = zeta * (w_r * r_y + w_theta * theta_y) + dzeta * w * r_y
        return gx, gy

    def operator(self, x: np.ndarray, y: np.ndarray, sigma: SigmaFn = None) -> np.ndarray:
        """(−Δ + σ)e; the singular part w is harmonic, so only cutoff terms remain."""
        r, safe, w, w_r, _ = self._parts(x, y)
        zeta, dzeta, ddzeta = self._zeta(r)
        out = -(2.0 * dzeta * w_r + w * (ddzeta + dzeta / safe))
        if sigma is not None:
            out = out + np.asarray(sigma(x, y), dtype=float) * zeta * w
        return out


# --------------------------------------------------------------------------
# 2. Pydantic Models
# --------------------------------------------------------------------------

class EnrichedSpace(BaseModel):
    """Lagrange space on a mesh with an optional singular degree of freedom"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mesh: Mesh
    profile: SurfaceProfile
    corner: CornerData
    poly_degree: int
    delta: float
    singular: Optional[SingularFunction]
    element_dofs: np.ndarray
    dof_coords: np.ndarray
    edge_dofs: np.ndarray
    dirichlet_dofs: np.ndarray
    arc_dofs: np.ndarray
    free_dofs: np.ndarray

    @property
    def gamma(self) -> float:
        return self.corner.gamma

    @property
    def cutoff(self) -> Optional[Tuple[float, float]]:
        return None if self.singular is None else self.singular.cutoff

    @property
    def singular_dofs(self) -> int:
        return 0 if self.singular is None else 1

    @property
    def n_poly(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def n_free(self) -> int:
        """Size of the reduced system (free polynomial dofs plus the singular dof)."""
        return self.free_dofs.size + self.singular_dofs

    def edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        mask = np.array([t == tag for t in self.mesh.boundary_tags], dtype=bool)
        return self.edge_dofs[mask]

    def expand(self, vector: np.ndarray) -> Tuple[np.ndarray, float]:
        """Polynomial coefficients on all dofs (zero on Dirichlet dofs) and the singular coefficient."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape[0] != self.n_free:
            raise InvalidParameterError(f"Vector of length {vector.shape[0]} does not match {self.n_free} free dofs")
        coeffs = np.zeros(self.n_poly)
        coeffs[self.free_dofs] = vector[: self.free_dofs.size]
        return coeffs, float(vector[-1]) if self.singular is not None else 0.0


# --------------------------------------------------------------------------
# 3. Shape functions and element geometry
# --------------------------------------------------------------------------

def shape_functions(degree: int, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lagrange shape functions on the reference triangle.

    P2 ordering: vertices 0, 1, 2, then mid-edges 01, 12, 20.

    Returns:
        Tuple (N of shape (q, nb), dN of shape (q, nb, 2))
    """
    xi, eta = points[:, 0], points[:, 1]
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    zero, one = np.zeros_like(xi), np.ones_like(xi)
    if degree == 1:
        N = np.column_stack([l0, l1, l2])
        dN = np.stack([np.column_stack([-one, -one]), np.column_stack([one, zero]),
                       np.column_stack([zero, one])], axis=1)
        return N, dN
    N = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                         4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])
    dN = np.stack([
        np.column_stack([-(4 * l0 - 1), -(4 * l0 - 1)]),
        np.column_stack([4 * l1 - 1, zero]),
        np.column_stack([zero, 4 * l2 - 1]),
        np.column_stack([4 * (l0 - l1), -4 * l1]),
        np.column_stack([4 * l2, 4 * l1]),
        np.column_stack([-4 * l2, 4 * (l0 - l2)]),
    ], axis=1)
    return N, dN


def edge_functions(degree: int, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Traces on an edge parametrized by s ∈ [0, 1]: (start, end[, mid]) and their derivatives."""
    if degree == 1:
        return np.column_stack([1.0 - s, s]), np.column_stack([-np.ones_like(s), np.ones_like(s)])
    L = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
    dL = np.column_stack([4 * s - 3, 4 * s - 1, 4 - 8 * s])
    return L, dL


def element_geometry(coords: np.ndarray, dN: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Jacobian determinants and physical gradients at quadrature points.

    Args:
        coords: Element node coordinates, shape (m, nb, 2)
        dN: Reference gradients, shape (q, nb, 2)

    Returns:
        Tuple (det of shape (m, q), gradients of shape (m, q, nb, 2))

    Raises:
        AssemblyError: If a mapped element is inverted
    """
    J = np.einsum("mia,qib->mqab", coords, dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(~(det > 0.0)):
        raise AssemblyError(f"{int(np.sum(~(det > 0.0)))} quadrature points with non-positive Jacobian")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    grads = np.einsum("qib,mqba->mqia", dN, inv)
    return det, grads


# --------------------------------------------------------------------------
# 4. Space construction
# --------------------------------------------------------------------------

def _edge_midpoints(mesh: Mesh, pairs: np.ndarray) -> np.ndarray:
    la, lb = mesh.logical[pairs[:, 0]], mesh.logical[pairs[:, 1]]
    a = 0.5 * (la[:, 0] + lb[:, 0])
    t = np.where(np.isnan(la[:, 1]), lb[:, 1], np.where(np.isnan(lb[:, 1]), la[:, 1], 0.5 * (la[:, 1] + lb[:, 1])))
    return mesh.mapping(a, t)


def _check_cutoff(profile: SurfaceProfile, delta: float, cutoff: Tuple[float, float]) -> None:
    d1, d2 = cutoff
    if not 0.0 < d1 < d2:
        raise InvalidParameterError(f"Cutoff radii must satisfy 0 < d1 < d2, got {cutoff!r}")
    if d2 >= 3.0 * delta:
        raise InvalidParameterError(f"Cutoff radius {d2!r} leaves the straight region r < 3*delta = {3 * delta!r}")
    if d2 >= profile.eta0 or d2 >= profile.half_period:
        raise InvalidParameterError(f"Cutoff radius {d2!r} reaches the bottom or the trough wall")


def build_space(mesh: Mesh, profile: SurfaceProfile, corner: CornerData, degree: int = 2,
                delta: float = DEFAULT_DELTA, cutoff: Optional[Tuple[float, float]] = None,
                enrich: Optional[bool] = None) -> EnrichedSpace:
    """
    Build the (enriched) Lagrange space of a mesh.

    Args:
        mesh: Corner-graded mesh (or an outer mesh with a hole)
        profile: The profile the mesh was generated from
        corner: Corner data; κ and the extension phase γ come from here
        degree: Polynomial degree, 1 or 2
        delta: Matching radius of the straightened profile
        cutoff: Radii (δ₁, δ₂) of ζ; (δ/2, δ) by default
        enrich: Add the singular function; defaults to True on corner meshes

    Returns:
        EnrichedSpace

    Raises:
        InvalidParameterError: If the degree or the cutoff radii are inadmissible
    """
    if degree not in (1, 2):
        raise InvalidParameterError(f"Polynomial degree must be 1 or 2, got {degree!r}")
    if enrich is None:
        enrich = mesh.corner_vertex is not None
    if enrich and mesh.corner_vertex is None:
        raise InvalidParameterError("Enrichment needs a mesh with a corner vertex")
    n_vertices = mesh.n_nodes
    elements = mesh.elements

    if degree == 1:
        element_dofs = elements.copy()
        dof_coords = mesh.nodes.copy()
        edge_dofs = mesh.boundary_edges.copy()
    else:
        local = elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
        keys = np.sort(local, axis=2).reshape(-1, 2)
        unique, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        element_dofs = np.hstack([elements, n_vertices + inverse.reshape(-1, 3)])
        dof_coords = np.vstack([mesh.nodes, _edge_midpoints(mesh, unique)])
        lookup = {(int(p), int(q)): n_vertices + i for i, (p, q) in enumerate(unique)}
        mids = [lookup[(min(int(p), int(q)), max(int(p), int(q)))] for p, q in mesh.boundary_edges]
        edge_dofs = np.column_stack([mesh.boundary_edges, np.asarray(mids, dtype=np.int64)])

    tags = mesh.boundary_tags
    bottom = [edge_dofs[i] for i, t in enumerate(tags) if t == BoundaryTag.BOTTOM]
    arc = [edge_dofs[i] for i, t in enumerate(tags) if t == BoundaryTag.ARC]
    dirichlet = set(np.concatenate(bottom).tolist()) if bottom else set()
    if mesh.corner_vertex is not None:
        dirichlet.add(int(mesh.corner_vertex))
    arc_set = set(np.concatenate(arc).tolist()) if arc else set()
    dirichlet_dofs = np.array(sorted(dirichlet), dtype=np.int64)
    arc_dofs = np.array(sorted(arc_set - dirichlet), dtype=np.int64)
    fixed = np.zeros(dof_coords.shape[0], dtype=bool)
    fixed[dirichlet_dofs] = True
    fixed[arc_dofs] = True
    free_dofs = np.flatnonzero(~fixed)

    singular = None
    if enrich:
        cutoff = (0.5 * delta, delta) if cutoff is None else tuple(cutoff)
        _check_cutoff(profile, delta, cutoff)
        singular = SingularFunction(kappa=corner.kappa, gamma=corner.gamma,
                                    crest=mesh.corner_point, cutoff=cutoff)
    space = EnrichedSpace(
        mesh=mesh,
        profile=profile,
        corner=corner,
        poly_degree=degree,
        delta=delta,
        singular=singular,
        element_dofs=element_dofs,
        dof_coords=dof_coords,
        edge_dofs=edge_dofs,
        dirichlet_dofs=dirichlet_dofs,
        arc_dofs=arc_dofs,
        free_dofs=free_dofs,
    )
    logger.info(f"P{degree} space: {space.n_poly} polynomial dofs, {free_dofs.size} free, "
                f"singular dofs {space.singular_dofs}")
    return space


# --------------------------------------------------------------------------
# 5. Polynomial block
# --------------------------------------------------------------------------

def _element_chunk(space: EnrichedSpace, idx: np.ndarray, sigma: SigmaFn):
    points, weights = triangle_rule(_STIFFNESS_ORDER)
    N, dN = shape_functions(space.poly_degree, points)
    dofs = space.element_dofs[idx]
    coords = space.dof_coords[dofs]
    det, grads = element_geometry(coords, dN)
    wdet = weights[None, :] * det
    stiff = np.einsum("mq,mqia,mqja->mij", wdet, grads, grads)
    mass = np.einsum("mq,qi,qj->mij", wdet, N, N)
    if sigma is not None:
        xq = np.einsum("qi,mia->mqa", N, coords)
        s = np.asarray(sigma(xq[..., 0], xq[..., 1]), dtype=float)
        stiff = stiff + np.einsum("mq,qi,qj->mij", wdet * s, N, N)
    nb = dofs.shape[1]
    rows = np.repeat(dofs[:, :, None], nb, axis=2).ravel()
    cols = np.repeat(dofs[:, None, :], nb, axis=1).ravel()
    return rows, cols, stiff.ravel(), mass.ravel()


def edge_points(space: EnrichedSpace, edges: np.ndarray, order: int, graded: np.ndarray):
    """
    Gauss points on isoparametric boundary edges.

    Edges flagged in ``graded`` start at the crest and use s = u² so the
    1/r weight is integrated with a bounded integrand.
    """
    u, wu = gauss_legendre(order, 0.0, 1.0)
    s = np.where(graded[:, None], u[None, :] ** 2, u[None, :])
    ws = np.where(graded[:, None], 2.0 * u[None, :] * wu[None, :], wu[None, :])
    coords = space.dof_coords[edges]
    L = np.empty(s.shape + (edges.shape[1],))
    dL = np.empty_like(L)
    for i in range(s.shape[0]):
        L[i], dL[i] = edge_functions(space.poly_degree, s[i])
    X = np.einsum("eqi,eia->eqa", L, coords)
    T = np.einsum("eqi,eia->eqa", dL, coords)
    jac = np.linalg.norm(T, axis=2)
    normal = np.stack([-T[..., 1], T[..., 0]], axis=-1) / jac[..., None]
    normal = np.where((normal[..., 1:] < 0.0), -normal, normal)
    return X, normal, ws * jac, L


def surface_edges(space: EnrichedSpace) -> Tuple[np.ndarray, np.ndarray]:
    edges = space.edges_with_tag(BoundaryTag.SURFACE)
    corner = space.mesh.corner_vertex
    graded = np.zeros(edges.shape[0], dtype=bool) if corner is None else edges[:, 0] == corner
    return edges, graded


def _robin_chunk(space: EnrichedSpace, rho: RhoFn):
    edges, graded = surface_edges(space)
    if rho is None or edges.size == 0:
        return (np.zeros(0, dtype=np.int64),) * 2 + (np.zeros(0),)
    X, _, w, L = edge_points(space, edges, _EDGE_ORDER, graded)
    cx, cy = space.mesh.corner_point
    r = np.hypot(X[..., 0] - cx, X[..., 1] - cy)
    coef = np.asarray(rho(X[..., 0]), dtype=float) / r
    local = -np.einsum("eq,eqi,eqj->eij", w * coef, L, L)
    nb = edges.shape[1]
    rows = np.repeat(edges[:, :, None], nb, axis=2).ravel()
    cols = np.repeat(edges[:, None, :], nb, axis=1).ravel()
    return rows, cols, local.ravel()


def _assemble_polynomial(space: EnrichedSpace, sigma: SigmaFn, rho: RhoFn, threads: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    n = space.n_poly
    m = space.mesh.n_elements
    chunks = np.array_split(np.arange(m), max(1, int(math.ceil(m / _CHUNK))))

    def work(idx):
        return _element_chunk(space, idx, sigma)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(idx) for idx in chunks]
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    a_vals = np.concatenate([p[2] for p in parts])
    m_vals = np.concatenate([p[3] for p in parts])
    r_rows, r_cols, r_vals = _robin_chunk(space, rho)
    A = sp.coo_matrix((np.concatenate([a_vals, r_vals]),
                       (np.concatenate([rows, r_rows]), np.concatenate([cols, r_cols]))), shape=(n, n)).tocsr()
    M = sp.coo_matrix((m_vals, (rows, cols)), shape=(n, n)).tocsr()
    return A, M


# --------------------------------------------------------------------------
# 6. Singular couplings
# --------------------------------------------------------------------------

def _vertex_distances(space: EnrichedSpace) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mesh = space.mesh
    p = mesh.nodes[mesh.elements]
    crest = np.asarray(mesh.corner_point)
    dist = np.linalg.norm(p - crest, axis=2)
    diam = np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)
    return dist.min(axis=1), dist.max(axis=1), diam


def _element_groups(space: EnrichedSpace) -> List[Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]]:
    """Elements meeting the support of e, grouped by the rule they need."""
    d1, d2 = space.singular.cutoff
    near, far, diam = _vertex_distances(space)
    corner = space.mesh.corner_vertex
    fan = np.any(space.mesh.elements == corner, axis=1)
    support = near < d2 + diam
    annulus = support & ~fan & (far > d1 - diam)
    inner = support & ~fan & ~annulus
    return [
        (np.flatnonzero(fan), apex_triangle_rule(_ENRICH_ORDER)),
        (np.flatnonzero(inner), triangle_rule(_ENRICH_ORDER)),
        (np.flatnonzero(annulus), subdivided_triangle_rule(_ENRICH_ORDER, _ANNULUS_LEVEL)),
    ]


def _coupling_vectors(space: EnrichedSpace, sigma: SigmaFn, rho: RhoFn) -> Tuple[np.ndarray, np.ndarray]:
    """a(e, N_i) and (e, N_i) for every polynomial dof."""
    singular = space.singular
    n = space.n_poly
    a_ev = np.zeros(n)
    m_ev = np.zeros(n)
    for idx, (points, weights) in _element_groups(space):
        if idx.size == 0:
            continue
        N, dN = shape_functions(space.poly_degree, points)
        for part in np.array_split(idx, max(1, int(math.ceil(idx.size * points.shape[0] / (64 * _CHUNK))))):
            dofs = space.element_dofs[part]
            coords = space.dof_coords[dofs]
            det, _ = element_geometry(coords, dN)
            wdet = weights[None, :] * det
            xq = np.einsum("qi,mia->mqa", N, coords)
            e = singular.value(xq[..., 0], xq[..., 1])
            Le = singular.operator(xq[..., 0], xq[..., 1], sigma)
            a_ev += np.bincount(dofs.ravel(), weights=np.einsum("mq,mq,qi->mi", wdet, Le, N).ravel(), minlength=n)
            m_ev += np.bincount(dofs.ravel(), weights=np.einsum("mq,mq,qi->mi", wdet, e, N).ravel(), minlength=n)

    edges, graded = surface_edges(space)
    if edges.size:
        _, d2 = singular.cutoff
        cx, cy = space.mesh.corner_point
        ends = space.dof_coords[edges[:, :2]]
        near = np.min(np.hypot(ends[..., 0] - cx, ends[..., 1] - cy), axis=1)
        length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
        pick = near < d2 + length
        edges, graded = edges[pick], graded[pick]
        X, normal, w, L = edge_points(space, edges, _ENRICH_ORDER, graded)
        flux = _surface_flux(singular, X, normal, rho)
        a_ev += np.bincount(edges.ravel(), weights=np.einsum("eq,eq,eqi->ei", w, flux, L).ravel(), minlength=n)
    return a_ev, m_ev


def _surface_flux(singular: SingularFunction, X: np.ndarray, normal: np.ndarray, rho: RhoFn,
                  depth: Optional[np.ndarray] = None) -> np.ndarray:
    gx, gy = singular.gradient(X[..., 0], X[..., 1], depth)
    flux = gx * normal[..., 0] + gy * normal[..., 1]
    if rho is not None:
        r, _ = singular.polar(X[..., 0], X[..., 1], depth)
        flux = flux - np.asarray(rho(X[..., 0]), dtype=float) * singular.value(X[..., 0], X[..., 1], depth) / r
    return flux


def surface_angle(profile: SurfaceProfile, r: np.ndarray, tol: float = 1e-14, max_iter: int = 60) -> np.ndarray:
    """
    Polar angle of the surface point at distance r from the crest.

    Raises:
        ConvergenceError: If the Newton iteration stalls
    """
    r = np.asarray(r, dtype=float)
    x = r * math.sin(profile.alpha_star)
    for _ in range(max_iter):
        depth = crest_drop(profile, x)
        g = x * x + depth * depth - r * r
        dg = 2.0 * x + 2.0 * depth * profile.eta_prime(x)
        step = g / dg
        x = np.clip(x - step, 0.0, profile.half_period)
        if np.all(np.abs(step) <= tol * np.maximum(r, 1e-300)):
            break
    else:
        raise ConvergenceError("Surface angle iteration did not converge")
    return np.arctan2(x, crest_drop(profile, x))


def _polar_rule(space: EnrichedSpace, radial_order: int, angular_order: int):
    """Tensor rule in (r, θ) on the part r < δ₂ of the exact domain."""
    d1, d2 = space.singular.cutoff
    r_in, w_in = log_radius_rule(_INNER_FRACTION * d1, d1, panels_per_decade=3, order=radial_order)
    r_out, w_out = composite_gauss(np.linspace(d1, d2, 5), radial_order)
    r = np.concatenate([r_in, r_out])
    wr = np.concatenate([w_in, w_out])
    theta_s = surface_angle(space.profile, r)
    u, wu = gauss_legendre(angular_order, 0.0, 1.0)
    theta = theta_s[:, None] * u[None, :]
    weights = (wr * r * theta_s)[:, None] * wu[None, :]
    cx, cy = space.mesh.corner_point
    return cx + r[:, None] * np.sin(theta), cy - r[:, None] * np.cos(theta), weights


def _surface_rule(space: EnrichedSpace, order: int):
    """Rule in x along the exact surface up to distance δ₂ from the crest, graded at the crest."""
    _, d2 = space.singular.cutoff
    profile = space.profile
    x_end = float(d2 * math.sin(surface_angle(profile, np.array([d2]))[0]))
    x, wx = log_radius_rule(_INNER_FRACTION * x_end, x_end, panels_per_decade=3, order=order)
    slope = profile.eta_prime(x)
    arc = np.sqrt(1.0 + slope ** 2)
    X = np.stack([x, profile.eta(x)], axis=-1)
    normal = np.stack([-slope, np.ones_like(slope)], axis=-1) / arc[:, None]
    return X, normal, wx * arc, crest_drop(profile, x)


def enrichment_self_coupling(space: EnrichedSpace, sigma: SigmaFn = None, rho: RhoFn = None,
                             rule: Tuple[int, int] = _SELF_RULE) -> Tuple[float, float, float]:
    """
    Green-form self coupling ⟨(−Δ+σ)e, e⟩ + ∫_S(∂_ν e − ρe/r)e and ∫e².

    Args:
        space: Enriched space
        sigma: Potential σ(x, y); zero when None
        rho: Robin coefficient ρ(x); zero when None
        rule: (radial order, angular order) of the polar rule

    Returns:
        Tuple (a_ee, m_ee, scale) with scale the integral of |(−Δ+σ)e·e| plus |surface term|
    """
    singular = space.singular
    if singular is None:
        raise InvalidParameterError("Space has no singular function")
    x, y, w = _polar_rule(space, *rule)
    e = singular.value(x, y)
    Le = singular.operator(x, y, sigma)
    volume = float(np.sum(w * Le * e))
    scale = float(np.sum(w * np.abs(Le * e)))
    X, normal, ws, depth = _surface_rule(space, rule[0])
    flux = _surface_flux(singular, X, normal, rho, depth)
    boundary = float(np.sum(ws * flux * singular.value(X[:, 0], X[:, 1], depth)))
    scale += abs(boundary)
    m_ee = float(np.sum(w * e * e))
    return volume + boundary, m_ee, scale


def _checked_self_coupling(space: EnrichedSpace, sigma: SigmaFn, rho: RhoFn) -> Tuple[float, float]:
    a1, m1, scale = enrichment_self_coupling(space, sigma, rho, _SELF_RULE)
    a2, m2, _ = enrichment_self_coupling(space, sigma, rho, _SELF_RULE_CHECK)
    a_err = abs(a1 - a2) / max(scale, abs(a2), 1e-300)
    m_err = abs(m1 - m2) / max(abs(m2), 1e-300)
    logger.debug(f"Singular self coupling a_ee={a2!r} (rel change {a_err:.2e}), "
                 f"m_ee={m2!r} (rel change {m_err:.2e})")
    if a_err > COUPLING_TOL or m_err > COUPLING_TOL:
        raise AssemblyError(f"Singular self coupling not converged: relative changes {a_err:.3e}, {m_err:.3e}")
    return a2, m2


# --------------------------------------------------------------------------
# 7. Assembly
# --------------------------------------------------------------------------

def check_symmetry(A: sp.spmatrix, tol: float = SYMMETRY_TOL) -> float:
    """
    Relative asymmetry ‖A − Aᵀ‖_F/‖A‖_F.

    Raises:
        AssemblyError: If it exceeds tol
    """
    size = sparse_norm(A)
    defect = sparse_norm(A - A.T) / size if size > 0.0 else 0.0
    if defect > tol:
        raise AssemblyError(f"Assembled matrix not symmetric: relative defect {defect:.3e}")
    return float(defect)


def assemble_full(space: EnrichedSpace, sigma: SigmaFn = None, rho: RhoFn = None,
                  threads: int = 1) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Polynomial (A, M) on every dof, boundary conditions not applied."""
    A, M = _assemble_polynomial(space, sigma, rho, threads)
    check_symmetry(A)
    check_symmetry(M)
    return A, M


def assemble(space: EnrichedSpace, sigma: SigmaFn = None, rho: RhoFn = None,
             threads: int = 1) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Reduced system matrices on the free dofs, singular dof appended last.

    Args:
        space: Enriched space
        sigma: Potential σ(x, y); zero when None
        rho: Robin coefficient ρ(x) (or χ for the straightened surface); no
            Robin term when None
        threads: Worker threads over element chunks

    Returns:
        Tuple (A, M) of symmetric CSR matrices of size space.n_free

    Raises:
        AssemblyError: On inverted elements, an unconverged singular self
            coupling, or a symmetry defect above 1e-12
    """
    A, M = _assemble_polynomial(space, sigma, rho, threads)
    free = space.free_dofs
    A = A[free][:, free]
    M = M[free][:, free]
    if space.singular is not None:
        a_ev, m_ev = _coupling_vectors(space, sigma, rho)
        a_ee, m_ee = _checked_self_coupling(space, sigma, rho)
        a_col = sp.csr_matrix(a_ev[free][:, None])
        m_col = sp.csr_matrix(m_ev[free][:, None])
        A = sp.bmat([[A, a_col], [a_col.T, sp.csr_matrix([[a_ee]])]], format="csr")
        M = sp.bmat([[M, m_col], [m_col.T, sp.csr_matrix([[m_ee]])]], format="csr")
    check_symmetry(A)
    check_symmetry(M)
    logger.info(f"Assembled {A.shape[0]} dofs, {A.nnz} nonzeros")
    return A, M


def enrichment_wall_flux(space: EnrichedSpace, n_samples: int = 200) -> float:
    """max |∂_ν e| on the lateral wall x = 0 inside the support of e."""
    singular = space.singular
    if singular is None:
        raise InvalidParameterError("Space has no singular function")
    _, d2 = singular.cutoff
    y = space.mesh.corner_point[1] - np.geomspace(1e-8 * d2, d2, n_samples)
    gx, _ = singular.gradient(np.zeros_like(y), y)
    return float(np.max(np.abs(gx)))


# --------------------------------------------------------------------------
# 8. Point evaluation
# --------------------------------------------------------------------------

def _barycentric(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of P points in m straight triangles, shape (P, m, 3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1 = b - a, c - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    d = points[:, None, :] - a[None, :, :]
    l1 = (d[..., 0] * v1[None, :, 1] - d[..., 1] * v1[None, :, 0]) / det
    l2 = (v0[None, :, 0] * d[..., 1] - v0[None, :, 1] * d[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _newton_reference(space: EnrichedSpace, elements: np.ndarray, points: np.ndarray,
                      start: np.ndarray, n_iter: int = 20) -> np.ndarray:
    coords = space.dof_coords[space.element_dofs[elements]]
    ref = start.copy()
    for _ in range(n_iter):
        N, dN = shape_functions(space.poly_degree, ref)
        X = np.einsum("pi,pia->pa", N, coords)
        J = np.einsum("pia,pib->pab", coords, dN)
        step = np.linalg.solve(J, (points - X)[..., None])[..., 0]
        ref = ref + step
        if np.max(np.abs(step)) < 1e-14:
            break
    return ref


def locate_points(space: EnrichedSpace, points: np.ndarray, tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray]:
    """
    Element index and reference coordinates of each point.

    Raises:
        DomainError: If a point lies outside the meshed domain
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = space.mesh
    tri = mesh.nodes[mesh.elements]
    owner = np.empty(points.shape[0], dtype=np.int64)
    ref = np.empty((points.shape[0], 2))
    for start in range(0, points.shape[0], _POINT_CHUNK):
        chunk = points[start:start + _POINT_CHUNK]
        bary = _barycentric(chunk, tri)
        score = bary.min(axis=2)
        order = np.argsort(-score, axis=1)[:, :4]
        found = np.zeros(chunk.shape[0], dtype=bool)
        for rank in range(order.shape[1]):
            pending = np.flatnonzero(~found)
            if pending.size == 0:
                break
            elems = order[pending, rank]
            guess = bary[pending, elems][:, 1:]
            cand = _newton_reference(space, elems, chunk[pending], guess)
            inside = (cand.min(axis=1) >= -tol) & (cand.sum(axis=1) <= 1.0 + tol)
            hit = pending[inside]
            owner[start + hit] = elems[inside]
            ref[start + hit] = cand[inside]
            found[hit] = True
        if not np.all(found):
            bad = chunk[np.flatnonzero(~found)[0]]
            raise DomainError(f"Point ({bad[0]!r}, {bad[1]!r}) lies outside the mesh")
    return owner, np.clip(ref, 0.0, 1.0)


def evaluate(space: EnrichedSpace, vector: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Values of the discrete function with reduced coefficient vector ``vector`` at (x, y)."""
    coeffs, c = space.expand(vector)
    return evaluate_coefficients(space, coeffs, c, x, y)


def evaluate_coefficients(space: EnrichedSpace, coeffs: np.ndarray, c: float, x: np.ndarray,
                          y: np.ndarray) -> np.ndarray:
    """Values at (x, y) from coefficients on all polynomial dofs and the singular coefficient c."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    points = np.column_stack([x.ravel(), y.ravel()])
    owner, ref = locate_points(space, points)
    N, _ = shape_functions(space.poly_degree, ref)
    values = np.einsum("pi,pi->p", N, coeffs[space.element_dofs[owner]])
    if space.singular is not None and c != 0.0:
        values = values + c * space.singular.value(points[:, 0], points[:, 1])
    return values.reshape(x.shape)


def quadrature_fields(space: EnrichedSpace, vector: np.ndarray, order: int = _ENRICH_ORDER):
    """
    Points, weights, values and gradients of a discrete function at element
    quadrature points (collapsed rules on the crest fan).

    Returns:
        Tuple (x, y, w, u, ux, uy), flat arrays
    """
    coeffs, c = space.expand(vector)
    mesh = space.mesh
    fan = np.zeros(mesh.n_elements, dtype=bool)
    if mesh.corner_vertex is not None:
        fan = np.any(mesh.elements == mesh.corner_vertex, axis=1)
    out = []
    for mask, (points, weights) in ((fan, apex_triangle_rule(order)), (~fan, triangle_rule(order))):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        N, dN = shape_functions(space.poly_degree, points)
        dofs = space.element_dofs[idx]
        coords = space.dof_coords[dofs]
        det, grads = element_geometry(coords, dN)
        local = coeffs[dofs]
        xq = np.einsum("qi,mia->mqa", N, coords)
        u = np.einsum("qi,mi->mq", N, local)
        gu = np.einsum("mqia,mi->mqa", grads, local)
        if space.singular is not None and c != 0.0:
            u = u + c * space.singular.value(xq[..., 0], xq[..., 1])
            gx, gy = space.singular.gradient(xq[..., 0], xq[..., 1])
            gu = gu + c * np.stack([gx, gy], axis=-1)
        out.append((xq[..., 0].ravel(), xq[..., 1].ravel(), (weights[None, :] * det).ravel(),
                    u.ravel(), gu[..., 0].ravel(), gu[..., 1].ravel()))
    return tuple(np.concatenate([o[i] for o in out]) for i in range(6))
