"""Linear response-space geometry.

Benchmark probes ``k_1..k_m`` span a subspace ``B``; the deployment probe
``k_star`` splits into a visible part ``P_B k_star`` and a benchmark-null
residual ``r_star`` whose norm ``g`` limits what any benchmark-based predictor
can know about the deployment response.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NoWitnessError, NumericalError, ValidationError
from .fibers import Decision

DEFAULT_RANK_TOL = 1e-10
RADIUS_FACTORS = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def orthonormal_basis(vectors: Iterable[np.ndarray], n: int, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalisation pass.

    Directions whose residual is at most ``rank_tol * ||v||`` are dropped, so
    the returned ``(n, r)`` matrix may have fewer columns than inputs.
    """
    cols: list[np.ndarray] = []
    for v in vectors:
        v = np.asarray(v, dtype=float)
        scale = np.linalg.norm(v)
        if scale == 0.0:
            continue
        w = v.copy()
        for _ in range(2):
            for q in cols:
                w -= (q @ w) * q
        norm = np.linalg.norm(w)
        if norm > rank_tol * scale:
            cols.append(w / norm)
    if not cols:
        return np.zeros((n, 0))
    return np.column_stack(cols)


def _null_part(basis: np.ndarray, x: np.ndarray) -> np.ndarray:
    w = np.array(x, dtype=float, copy=True)
    for _ in range(2):
        w -= basis @ (basis.T @ w)
    return w


@dataclass(frozen=True, eq=False)
class ResponseGeometry:
    probes: np.ndarray
    deployment_probe: np.ndarray
    basis: np.ndarray
    residual: np.ndarray
    residual_norm: float
    rank_tolerance: float = DEFAULT_RANK_TOL

    @property
    def ambient_dim(self) -> int:
        return self.deployment_probe.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def g(self) -> float:
        return self.residual_norm

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the benchmark span."""
        x = np.asarray(x, dtype=float)
        return x - _null_part(self.basis, x)

    def null_component(self, x: np.ndarray) -> np.ndarray:
        return _null_part(self.basis, np.asarray(x, dtype=float))

    def visible_probe(self) -> np.ndarray:
        return self.deployment_probe - self.residual

    def is_complete(self) -> bool:
        return bool(self.residual_norm <= self.rank_tolerance * np.linalg.norm(self.deployment_probe))

    def with_probe(self, q: np.ndarray) -> ResponseGeometry:
        """Geometry rebuilt from scratch with ``q`` appended to the benchmark probes."""
        q = np.asarray(q, dtype=float).reshape(1, -1)
        return build_geometry(np.vstack([self.probes, q]), self.deployment_probe, self.rank_tolerance)


def build_geometry(
    probes: Sequence[Sequence[float]] | np.ndarray,
    deployment_probe: Sequence[float] | np.ndarray,
    rank_tolerance: float = DEFAULT_RANK_TOL,
) -> ResponseGeometry:
    k_star = np.asarray(deployment_probe, dtype=float).ravel()
    n = k_star.shape[0]
    probes_arr = np.asarray(probes, dtype=float)
    if probes_arr.size == 0:
        probes_arr = np.zeros((0, n))
    if probes_arr.ndim != 2 or probes_arr.shape[1] != n:
        raise ValidationError(
            f"probe dimension {probes_arr.shape[-1] if probes_arr.ndim else '?'} "
            f"does not match deployment probe dimension {n}"
        )
    if not (np.all(np.isfinite(probes_arr)) and np.all(np.isfinite(k_star))):
        raise ValidationError("probe vectors must be finite")
    if np.linalg.norm(k_star) == 0.0:
        raise ValidationError("deployment probe must be nonzero")
    if rank_tolerance <= 0:
        raise ValidationError("rank tolerance must be positive")
    basis = orthonormal_basis(probes_arr, n, rank_tolerance)
    residual = _null_part(basis, k_star)
    g = float(np.linalg.norm(residual))
    if not (np.isfinite(g) and np.all(np.isfinite(basis))):
        raise NumericalError("probe geometry overflowed; rescale the probe vectors")
    return ResponseGeometry(
        probes=_frozen(probes_arr),
        deployment_probe=_frozen(k_star),
        basis=_frozen(basis),
        residual=_frozen(residual),
        residual_norm=g,
        rank_tolerance=rank_tolerance,
    )


def witness_pair(geometry: ResponseGeometry, t: float = 1.0) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Two latent states with equal benchmark evidence and different deployment response.

    Returns ``(s0, s1, benchmark_gap, deployment_gap)``; the deployment gap is
    ``t * g**2``.
    """
    if t == 0:
        raise ValidationError("t must be nonzero")
    if geometry.is_complete():
        raise NoWitnessError("deployment probe lies in the benchmark span; the claim is complete")
    s0 = np.zeros(geometry.ambient_dim)
    s1 = t * np.asarray(geometry.residual)
    if geometry.probes.shape[0]:
        benchmark_gap = float(np.max(np.abs(geometry.probes @ (s1 - s0))))
    else:
        benchmark_gap = 0.0
    deployment_gap = t * geometry.residual_norm ** 2
    return s0, s1, benchmark_gap, deployment_gap


# ---------------------------------------------------------------------------
# Interval certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateBound:
    center: float
    delta: float
    radius: float

    def __post_init__(self) -> None:
        if self.delta < 0 or self.radius < 0:
            raise ValidationError("delta and radius must be nonnegative")


@dataclass(frozen=True)
class IntervalCertificate:
    lo: float
    hi: float
    decision: Decision
    tau: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


def classify_interval(lo: float, hi: float, tau: float) -> Decision:
    if lo > tau:
        return Decision.POSITIVE
    if hi <= tau:
        return Decision.NEGATIVE
    return Decision.AMBIGUOUS


def certify_interval(bound: CandidateBound, g: float, tau: float) -> IntervalCertificate:
    if g < 0:
        raise ValidationError("g must be nonnegative")
    w = bound.delta + bound.radius * g
    lo, hi = bound.center - w, bound.center + w
    return IntervalCertificate(lo, hi, classify_interval(lo, hi, tau), tau)


def certify_arrays(
    centers: np.ndarray, deltas: np.ndarray | float, radii: np.ndarray | float, g: float, tau: float
) -> np.ndarray:
    """Vectorised :func:`certify_interval`; returns +1, -1 or 0 per candidate."""
    centers = np.asarray(centers, dtype=float)
    w = np.asarray(deltas, dtype=float) + np.asarray(radii, dtype=float) * g
    out = np.zeros(centers.shape, dtype=int)
    out[centers - w > tau] = 1
    out[centers + w <= tau] = -1
    return out


def certified_fraction(
    centers: np.ndarray, deltas: np.ndarray | float, radii: np.ndarray | float, g: float, tau: float
) -> float:
    classes = certify_arrays(centers, deltas, radii, g, tau)
    return float(np.count_nonzero(classes)) / classes.size if classes.size else 0.0


def radius_sensitivity(
    centers: np.ndarray,
    deltas: np.ndarray | float,
    radii: np.ndarray | float,
    g: float,
    tau: float,
    factors: Sequence[float] = RADIUS_FACTORS,
) -> list[dict[str, float]]:
    """Certified/ambiguous fractions with every radius multiplied by each factor."""
    rows = []
    for f in factors:
        classes = certify_arrays(centers, deltas, np.asarray(radii, dtype=float) * f, g, tau)
        n = max(classes.size, 1)
        rows.append({
            "factor": float(f),
            "certified_positive": np.count_nonzero(classes == 1) / n,
            "certified_negative": np.count_nonzero(classes == -1) / n,
            "ambiguous": np.count_nonzero(classes == 0) / n,
        })
    return rows


def fiber_variation_bound(g: float, step_norm: float) -> float:
    """Bound on ``|<k_star, s' - s>|`` for a benchmark-null step of the given norm."""
    if g < 0 or step_norm < 0:
        raise ValidationError("g and step_norm must be nonnegative")
    return g * step_norm


def linearized_residual(
    benchmark_gradients: Sequence[Sequence[float]] | np.ndarray,
    deployment_gradient: Sequence[float] | np.ndarray,
    radius: float,
    hessian_bound: float,
    rank_tolerance: float = DEFAULT_RANK_TOL,
) -> tuple[float, float]:
    """Local nonlinear bound from supplied gradients.

    ``g_J`` is the norm of the deployment gradient outside the row span of the
    benchmark Jacobian; the returned bound is ``R g_J + L R^2 / 2``.
    """
    if radius < 0 or hessian_bound < 0:
        raise ValidationError("radius and Hessian bound must be nonnegative")
    geom = build_geometry(benchmark_gradients, deployment_gradient, rank_tolerance)
    g_j = geom.residual_norm
    return g_j, radius * g_j + 0.5 * hessian_bound * radius ** 2
