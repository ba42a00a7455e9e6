"""
Eigen Service

Negative eigenpairs of the assembled pencil A u = λ M u, their labelling by
ladder rung, the asymptotic fit κ log s_k ≈ γ + γ_κ + kπ (s_k = √(−λ_k)),
and the structure of the computed eigenfunctions near the crest.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.integrate import simpson
from scipy.sparse.linalg import eigsh

from ...errors import DomainError, FitError, InvalidParameterError, ResolutionWarning, SolverError
from ..angle_modes import AngularBasis, project_h
from ..model1d import KRange, k_values, radial_correlation
from ..specfun import CornerData, besselK_imag, ladder_prediction
from .space import (
    EnrichedSpace,
    RhoFn,
    edge_points,
    evaluate,
    locate_points,
    quadrature_fields,
    shape_functions,
    surface_angle,
    surface_edges,
)

logger = logging.getLogger(__name__)

DENSE_LIMIT = 1500
RESIDUAL_TOL = 1e-8


# --------------------------------------------------------------------------
# 1. Pydantic Models
# --------------------------------------------------------------------------

class LadderFit(BaseModel):
    """Linear fit of κ log s_k against k"""
    model_config = ConfigDict(frozen=True)

    k: Tuple[int, ...]
    slope: float
    slope_over_pi: float
    intercept: float
    intercept_target: float
    intercept_error: float
    kappa_fit: float
    phase_fit: float
    ratio_fit: float
    deviations: Tuple[float, ...]
    monotone: bool


class EigenReport(BaseModel):
    """Negative eigenpairs in ascending order with their singular coefficients"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvalues: Tuple[float, ...]
    sing_coeffs: Tuple[float, ...]
    residuals: Tuple[float, ...]
    vectors: np.ndarray
    k: Optional[Tuple[int, ...]] = None
    fit: Optional[LadderFit] = None

    @property
    def s(self) -> np.ndarray:
        return np.sqrt(-np.asarray(self.eigenvalues))

    def index_of(self, k: int) -> int:
        """Column of rung k (or the k-th column when the report carries no rung labels)."""
        if self.k is None:
            if not 0 <= k < len(self.eigenvalues):
                raise InvalidParameterError(f"Mode index {k} outside 0..{len(self.eigenvalues) - 1}")
            return k
        if k not in self.k:
            raise InvalidParameterError(f"Rung k={k} not in report {list(self.k)}")
        return self.k.index(k)

    def select(self, ks) -> "EigenReport":
        """Sub-report with the given rungs, in ascending eigenvalue order."""
        cols = sorted((self.index_of(k) for k in ks), key=lambda j: self.eigenvalues[j])
        return EigenReport(
            eigenvalues=tuple(self.eigenvalues[j] for j in cols),
            sing_coeffs=tuple(self.sing_coeffs[j] for j in cols),
            residuals=tuple(self.residuals[j] for j in cols),
            vectors=self.vectors[:, cols],
            k=None if self.k is None else tuple(self.k[j] for j in cols),
        )


class ProfileSamples(BaseModel):
    """h-component of one eigenfunction along arcs r = const"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    k: int
    s: float
    radii: np.ndarray
    h: np.ndarray
    bessel: np.ndarray
    correlation: float
    w_fraction: float


class WeightedNorms(BaseModel):
    """Scaled weighted norms of one normalized eigenfunction"""
    model_config = ConfigDict(frozen=True)

    k: int
    s: float
    beta: float
    l2: float
    grad: float
    l2_scaled: float
    grad_scaled: float


# --------------------------------------------------------------------------
# 2. Solves
# --------------------------------------------------------------------------

def _dense_pairs(A: sp.spmatrix, M: sp.spmatrix) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return sla.eigh(A.toarray(), M.toarray())
    except (sla.LinAlgError, ValueError) as e:
        raise SolverError(f"Dense generalized eigensolve failed: {e}") from e


def _shift_pairs(A: sp.spmatrix, M: sp.spmatrix, shift: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    try:
        return eigsh(A.tocsc(), k=min(count, n - 2), M=M.tocsc(), sigma=shift, which="LM")
    except Exception as e:
        raise SolverError(f"Shift-invert solve at sigma={shift!r} failed on {n} dofs: {e}") from e


def _nearest(values: np.ndarray, vectors: np.ndarray, shift: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    pick = np.argsort(np.abs(values - shift))[:count]
    return values[pick], vectors[:, pick]


def _resolve_method(method: str, n: int) -> str:
    if method not in ("auto", "dense", "iterative"):
        raise InvalidParameterError(f"Unknown eigensolver method {method!r}")
    if method == "auto":
        return "dense" if n <= DENSE_LIMIT else "iterative"
    return method


def _finish(A: sp.spmatrix, M: sp.spmatrix, values: Sequence[float], vectors: Sequence[np.ndarray],
            singular: bool, tol: float, k: Optional[Sequence[int]] = None) -> EigenReport:
    """Normalize, fix signs and compute residuals of the selected pairs."""
    n = A.shape[0]
    out_vectors = np.zeros((n, len(values)))
    residuals = []
    coeffs = []
    for j, (lam, vec) in enumerate(zip(values, vectors)):
        vec = np.asarray(vec, dtype=float)
        vec = vec / math.sqrt(float(vec @ (M @ vec)))
        pivot = vec[-1] if singular else vec[np.argmax(np.abs(vec))]
        if pivot < 0.0:
            vec = -vec
        Au, Mu = A @ vec, M @ vec
        res = float(np.linalg.norm(Au - lam * Mu) / (np.linalg.norm(Au) + abs(lam) * np.linalg.norm(Mu)))
        if res > tol:
            raise SolverError(f"Eigenpair lambda={lam!r} has residual {res:.3e} above {tol:.1e}")
        out_vectors[:, j] = vec
        residuals.append(res)
        coeffs.append(float(vec[-1]) if singular else 0.0)
    return EigenReport(
        eigenvalues=tuple(float(v) for v in values),
        sing_coeffs=tuple(coeffs),
        residuals=tuple(residuals),
        vectors=out_vectors,
        k=None if k is None else tuple(int(i) for i in k),
    )


def solve_negative_spectrum(A: sp.spmatrix, M: sp.spmatrix, n_eigs: int,
                            shift: Union[float, Sequence[float], None] = None, method: str = "auto",
                            singular: bool = True, tol: float = RESIDUAL_TOL) -> EigenReport:
    """
    Negative eigenpairs of A u = λ M u.

    With a scalar shift, the n_eigs eigenpairs nearest to it; with a sequence
    of shifts, the n_eigs nearest to each shift, merged. Without a shift, the
    n_eigs most negative eigenvalues (dense path only). Positive eigenvalues
    are dropped.

    Args:
        A: Symmetric stiffness-type matrix
        M: Symmetric positive definite mass matrix
        n_eigs: Pairs per shift
        shift: Shift, sequence of shifts, or None
        method: "dense", "iterative" (shift-invert Lanczos) or "auto"
            (dense up to DENSE_LIMIT dofs)
        singular: Whether the last unknown is the singular coefficient; its
            sign is made non-negative
        tol: Bound on the relative residual of every returned pair

    Returns:
        EigenReport with eigenvalues ascending and M-normalized vectors

    Raises:
        SolverError: On factorization failure, non-convergence or a residual above tol
    """
    if n_eigs < 1:
        raise InvalidParameterError(f"n_eigs must be positive, got {n_eigs!r}")
    n = A.shape[0]
    method = _resolve_method(method, n)
    shifts = None if shift is None else ([float(shift)] if np.isscalar(shift) else [float(s) for s in shift])
    if shifts is None and method == "iterative":
        raise InvalidParameterError("The iterative path needs a shift")

    found: Dict[float, np.ndarray] = {}
    if method == "dense":
        values, vectors = _dense_pairs(A, M)
        if shifts is None:
            neg = np.flatnonzero(values < 0.0)[:n_eigs]
            for j in neg:
                found[float(values[j])] = vectors[:, j]
        else:
            for s in shifts:
                vals, vecs = _nearest(values, vectors, s, n_eigs)
                for lam, vec in zip(vals, vecs.T):
                    found.setdefault(float(lam), vec)
    else:
        for s in shifts:
            vals, vecs = _shift_pairs(A, M, s, n_eigs)
            for lam, vec in zip(vals, vecs.T):
                if not any(abs(lam - old) <= 1e-10 * abs(lam) for old in found):
                    found[float(lam)] = vec
    order = sorted(v for v in found if v < 0.0)
    logger.info(f"{method} eigensolve on {n} dofs: {len(order)} negative eigenvalues")
    return _finish(A, M, order, [found[v] for v in order], singular, tol)


def solve_ladder(space: EnrichedSpace, A: sp.spmatrix, M: sp.spmatrix, k_range: KRange,
                 n_near: int = 3, method: str = "auto", threads: int = 1,
                 tol: float = RESIDUAL_TOL) -> EigenReport:
    """
    One eigenpair per ladder rung: shift-invert around −τ_k² and keep the
    negative eigenvalue closest to the prediction in log |λ|.

    Returns:
        EigenReport labelled by rung, eigenvalues ascending

    Raises:
        SolverError: If no negative eigenvalue is found near a rung
    """
    corner = space.corner
    ks = k_values(k_range)
    method = _resolve_method(method, A.shape[0])
    targets = {k: ladder_prediction(corner, k) ** 2 for k in ks}
    dense = _dense_pairs(A, M) if method == "dense" and ks else None

    def pairs(k: int) -> Tuple[np.ndarray, np.ndarray]:
        if dense is not None:
            return _nearest(dense[0], dense[1], -targets[k], n_near)
        return _shift_pairs(A, M, -targets[k], n_near)

    if threads > 1 and len(ks) > 1 and dense is None:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(pairs, ks))
    else:
        results = [pairs(k) for k in ks]

    chosen: List[Tuple[int, float, np.ndarray]] = []
    for k, (vals, vecs) in zip(ks, results):
        negative = np.flatnonzero(vals < 0.0)
        if negative.size == 0:
            raise SolverError(f"No negative eigenvalue near the rung k={k} (shift {-targets[k]!r})")
        best = negative[np.argmin(np.abs(np.log(-vals[negative]) - math.log(targets[k])))]
        if any(abs(vals[best] - lam) <= 1e-10 * abs(lam) for _, lam, _ in chosen):
            msg = f"Rung k={k} selected an eigenvalue already assigned to another rung"
            logger.warning(msg)
            warnings.warn(msg, ResolutionWarning)
            continue
        logger.debug(f"Rung k={k}: lambda={vals[best]!r}, predicted {-targets[k]!r}")
        chosen.append((k, float(vals[best]), vecs[:, best]))
    chosen.sort(key=lambda item: item[1])
    report = _finish(A, M, [c[1] for c in chosen], [c[2] for c in chosen], space.singular is not None,
                     tol, k=[c[0] for c in chosen])
    check_simplicity(report, corner)
    return report


def check_simplicity(report: EigenReport, corner: CornerData) -> bool:
    """Gaps between consecutive negative eigenvalues exceed half the predicted gap."""
    if len(report.eigenvalues) < 2:
        return True
    s = np.sort(report.s)
    gaps = np.diff(s ** 2)
    predicted = s[:-1] ** 2 * (corner.ratio ** 2 - 1.0)
    simple = bool(np.all(gaps > 0.5 * predicted))
    if not simple:
        msg = "Consecutive negative eigenvalues closer than half the predicted ladder gap"
        logger.warning(msg)
        warnings.warn(msg, ResolutionWarning)
    return simple


# --------------------------------------------------------------------------
# 3. Asymptotic fit
# --------------------------------------------------------------------------

def _wrap(angle: float) -> float:
    """Representative of angle mod π in (−π/2, π/2]."""
    wrapped = math.remainder(angle, math.pi)
    return wrapped if wrapped != -0.5 * math.pi else 0.5 * math.pi


def fit_asymptotics(report: EigenReport, corner: CornerData) -> LadderFit:
    """
    Fit κ log s_k = intercept + slope·k over the reported eigenvalues.

    Without rung labels the eigenvalues are numbered 0, 1, … from the least
    negative; the intercept is then only meaningful mod π, which is how it is
    compared with γ + γ_κ.

    Raises:
        FitError: With fewer than three eigenvalues
    """
    if len(report.eigenvalues) < 3:
        raise FitError(f"Ladder fit needs at least 3 eigenvalues, got {len(report.eigenvalues)}")
    s = report.s
    if report.k is None:
        order = np.argsort(s)
        k = np.arange(s.size)
        s = s[order]
    else:
        k = np.asarray(report.k)
        order = np.argsort(k)
        k, s = k[order], s[order]
    kappa = corner.kappa
    target = corner.gamma + corner.gamma_kappa
    slope, intercept = np.polyfit(k, kappa * np.log(s), 1)
    slope_log, intercept_log = np.polyfit(k, np.log(s), 1)
    kappa_fit = math.pi / slope_log
    deviations = tuple(_wrap(kappa * math.log(si) - target - ki * math.pi) for ki, si in zip(k, s))
    monotone = bool(np.all(np.diff(s) > 0.0))
    if not monotone:
        logger.warning("Ladder fit over a non-monotone sequence of s_k")
    fit = LadderFit(
        k=tuple(int(v) for v in k),
        slope=float(slope),
        slope_over_pi=float(slope / math.pi),
        intercept=float(intercept),
        intercept_target=target,
        intercept_error=_wrap(float(intercept) - target),
        kappa_fit=kappa_fit,
        phase_fit=_wrap(kappa * float(intercept_log) - corner.gamma_kappa) % math.pi,
        ratio_fit=math.exp(slope_log),
        deviations=deviations,
        monotone=monotone,
    )
    logger.info(f"Ladder fit: slope/pi={fit.slope_over_pi:.5f}, intercept error={fit.intercept_error:.4f}, "
                f"kappa_fit={kappa_fit:.5f}")
    return fit


def with_fit(report: EigenReport, corner: CornerData) -> EigenReport:
    return report.model_copy(update={"fit": fit_asymptotics(report, corner)})


# --------------------------------------------------------------------------
# 4. Eigenfunction structure
# --------------------------------------------------------------------------

def _check_sector(space: EnrichedSpace, radii: np.ndarray) -> None:
    alpha_star = space.profile.alpha_star
    angles = surface_angle(space.profile, radii)
    if np.any(np.abs(angles - alpha_star) > 1e-9):
        bad = float(radii[np.argmax(np.abs(angles - alpha_star))])
        raise DomainError(f"Arc r={bad!r} leaves the straight sector around the crest")


def arc_h_component(U: Callable[[np.ndarray, np.ndarray], np.ndarray], basis: AngularBasis,
                    crest: Tuple[float, float], radii: np.ndarray) -> np.ndarray:
    """h(r) = ∫ U φ₀ dθ for a field U(x, y) on arcs around the crest."""
    radii = np.asarray(radii, dtype=float)
    theta = basis.theta
    x = crest[0] + radii[:, None] * np.sin(theta)[None, :]
    y = crest[1] - radii[:, None] * np.cos(theta)[None, :]
    return np.asarray(project_h(np.asarray(U(x, y), dtype=float), basis))


def eigenfunction_profile(report: EigenReport, k: int, space: EnrichedSpace, basis: AngularBasis,
                          radii: np.ndarray) -> ProfileSamples:
    """
    h-component of mode k on arcs and its correlation with K_{iκ}(s_k r).

    Args:
        report: Eigen report
        k: Rung label (or column index for an unlabelled report)
        space: Space the report was computed in
        basis: Angular basis of the corner
        radii: Increasing arc radii inside the straight sector

    Returns:
        ProfileSamples with the W-component mass fraction over the radii range

    Raises:
        DomainError: If an arc leaves the straight sector
    """
    radii = np.asarray(radii, dtype=float)
    _check_sector(space, radii)
    j = report.index_of(k)
    vector = report.vectors[:, j]
    s = float(report.s[j])
    theta = basis.theta
    crest = space.mesh.corner_point
    x = crest[0] + radii[:, None] * np.sin(theta)[None, :]
    y = crest[1] - radii[:, None] * np.cos(theta)[None, :]
    U = evaluate(space, vector, x, y)
    h = np.asarray(project_h(U, basis))
    g = besselK_imag(basis.corner.kappa, s * radii)
    weights = radii * np.gradient(radii)
    correlation = radial_correlation(radii, weights, h, g)
    total = U ** 2 @ basis.weights
    w_mass = np.maximum(total - h ** 2, 0.0)
    fraction = float(simpson(w_mass * radii, x=radii) / simpson(total * radii, x=radii))
    logger.info(f"Mode k={k}: h-correlation {correlation:.6f}, W fraction {fraction:.3e}")
    return ProfileSamples(k=k, s=s, radii=radii, h=h, bessel=g, correlation=correlation, w_fraction=fraction)


def mode_weighted_norms(report: EigenReport, space: EnrichedSpace, k: int, beta: float) -> WeightedNorms:
    """
    ∫ r^{2β}U² and ∫ r^{2β}|∇U|² of the M-normalized mode k, with the
    scalings s^{2β} and s^{2β−2} that make both O(1) along the ladder.

    Raises:
        InvalidParameterError: If β <= 0 (the gradient weight is not integrable)
    """
    if not beta > 0.0:
        raise InvalidParameterError(f"beta must be positive, got {beta!r}")
    j = report.index_of(k)
    s = float(report.s[j])
    x, y, w, u, ux, uy = quadrature_fields(space, report.vectors[:, j])
    cx, cy = space.mesh.corner_point
    weight = np.hypot(x - cx, y - cy) ** (2.0 * beta)
    l2 = float(np.sum(w * weight * u * u))
    grad = float(np.sum(w * weight * (ux * ux + uy * uy)))
    return WeightedNorms(k=k, s=s, beta=beta, l2=l2, grad=grad,
                         l2_scaled=l2 * s ** (2.0 * beta), grad_scaled=grad * s ** (2.0 * beta - 2.0))


def surface_bc_residual(report: EigenReport, space: EnrichedSpace, k: int, rho: RhoFn,
                        r_min: Optional[float] = None) -> float:
    """
    Relative L² residual of ∂_ν U − (ρ/r)U on the surface beyond r_min,
    with the normal derivative taken from the owning elements.

    r_min defaults to the outer cutoff radius of the singular function.
    """
    j = report.index_of(k)
    coeffs, c = space.expand(report.vectors[:, j])
    edges, graded = surface_edges(space)
    edges = edges[~graded]
    X, normal, w, _ = edge_points(space, edges, 6, np.zeros(edges.shape[0], dtype=bool))
    cx, cy = space.mesh.corner_point
    r = np.hypot(X[..., 0] - cx, X[..., 1] - cy)
    if r_min is None:
        r_min = space.cutoff[1] if space.cutoff else 0.0
    keep = r > r_min
    # gradients evaluated just inside the domain
    inner = X - 1e-9 * normal
    flat = inner.reshape(-1, 2)
    values = evaluate(space, report.vectors[:, j], flat[:, 0], flat[:, 1]).reshape(r.shape)
    grad = _gradient_at(space, coeffs, c, flat).reshape(r.shape + (2,))
    flux = np.einsum("eqa,eqa->eq", grad, normal)
    robin = (0.0 if rho is None else np.asarray(rho(X[..., 0]), dtype=float)) * values / r
    num = np.sum((w * (flux - robin) ** 2)[keep])
    den = np.sum((w * (flux ** 2 + robin ** 2))[keep])
    return float(math.sqrt(num / den)) if den > 0.0 else 0.0


def _gradient_at(space: EnrichedSpace, coeffs: np.ndarray, c: float, points: np.ndarray) -> np.ndarray:
    owner, ref = locate_points(space, points)
    grads = np.empty((points.shape[0], 2))
    for e in np.unique(owner):
        sel = np.flatnonzero(owner == e)
        N, dN = shape_functions(space.poly_degree, ref[sel])
        dofs = space.element_dofs[e]
        coords = space.dof_coords[dofs]
        J = np.einsum("ia,qib->qab", coords, dN)
        inv = np.linalg.inv(J)
        g = np.einsum("qib,qba->qia", dN, inv)
        grads[sel] = np.einsum("qia,i->qa", g, coeffs[dofs])
    if space.singular is not None and c != 0.0:
        gx, gy = space.singular.gradient(points[:, 0], points[:, 1])
        grads += c * np.column_stack([gx, gy])
    return grads
