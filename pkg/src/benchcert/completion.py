"""Probe completion: residual reduction, greedy selection and completion curves.

Also holds the loss-aware side of completion (empirical Bayes risk and the
expected value of added evidence) since both are measured on fiber partitions.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Sequence, Union

import numpy as np

from .errors import ValidationError
from .fibers import FiberPartition, partition_from_keys
from .geometry import ResponseGeometry

SCORE_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Probe:
    id: str
    vector: np.ndarray
    cost: float = 1.0


@dataclass(frozen=True)
class ProbePool:
    probes: tuple[Probe, ...]

    def __post_init__(self) -> None:
        dims = {np.asarray(p.vector).shape for p in self.probes}
        if len(dims) > 1:
            raise ValidationError("pool probes have different dimensions")
        ids = [p.id for p in self.probes]
        if len(set(ids)) != len(ids):
            raise ValidationError("pool probe ids must be unique")
        for p in self.probes:
            if not (p.cost > 0 and math.isfinite(p.cost)):
                raise ValidationError(f"probe {p.id!r} needs a positive finite cost")

    @classmethod
    def from_vectors(cls, vectors: Mapping[str, Sequence[float]], costs: Mapping[str, float] | None = None) -> ProbePool:
        costs = costs or {}
        return cls(tuple(Probe(k, np.asarray(v, dtype=float), float(costs.get(k, 1.0))) for k, v in vectors.items()))

    def __len__(self) -> int:
        return len(self.probes)

    def without(self, ids: set[str]) -> ProbePool:
        return ProbePool(tuple(p for p in self.probes if p.id not in ids))

    def by_id(self, probe_id: str) -> Probe:
        for p in self.probes:
            if p.id == probe_id:
                return p
        raise KeyError(probe_id)


# ---------------------------------------------------------------------------
# One-step residual reduction
# ---------------------------------------------------------------------------


def delta_q(geometry: ResponseGeometry, q: Sequence[float] | np.ndarray) -> float:
    """Squared residual reduction from adding probe ``q`` to the benchmark set."""
    q = np.asarray(q, dtype=float).ravel()
    if q.shape[0] != geometry.ambient_dim:
        raise ValidationError("probe dimension does not match the geometry")
    q_norm = np.linalg.norm(q)
    if q_norm == 0.0:
        raise ValidationError("probe must be nonzero")
    q_perp = geometry.null_component(q)
    perp_norm = np.linalg.norm(q_perp)
    if perp_norm <= geometry.rank_tolerance * q_norm:
        return 0.0
    inner = float(geometry.residual @ q_perp)
    return min(inner * inner / (perp_norm * perp_norm), geometry.residual_norm ** 2)


def updated_residual(geometry: ResponseGeometry, q: Sequence[float] | np.ndarray) -> float:
    """Residual norm ``g(q)`` after adding ``q``."""
    g2 = geometry.residual_norm ** 2 - delta_q(geometry, q)
    if g2 <= 1e-12:
        g2 = 0.0
    return math.sqrt(g2)


def benchmark_alignment(geometry: ResponseGeometry, q: Sequence[float] | np.ndarray) -> float:
    q = np.asarray(q, dtype=float)
    return float(np.linalg.norm(geometry.project(q)) / np.linalg.norm(q))


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualGreedy:
    name = "residual-greedy"
    upper_bound_only = False


@dataclass(frozen=True)
class RandomPolicy:
    seed: int
    name = "random"
    upper_bound_only = False


@dataclass(frozen=True)
class BenchmarkAligned:
    name = "benchmark-aligned"
    upper_bound_only = False


@dataclass(frozen=True)
class Uncertainty:
    """Picks the probe whose measured calibration values vary the most.

    This and :class:`Diversity` are declared stand-ins for baselines that are
    only named, not defined, in the source method.
    """

    name = "uncertainty"
    upper_bound_only = False


@dataclass(frozen=True)
class Diversity:
    name = "diversity"
    upper_bound_only = False


@dataclass(frozen=True)
class OracleUpperBound:
    name = "oracle"
    upper_bound_only = True


CompletionPolicy = Union[ResidualGreedy, RandomPolicy, BenchmarkAligned, Uncertainty, Diversity, OracleUpperBound]

POLICY_NAMES = ("residual-greedy", "random", "benchmark-aligned", "uncertainty", "diversity", "oracle")


def policy_from_name(name: str, seed: int = 0) -> CompletionPolicy:
    table = {
        "residual-greedy": ResidualGreedy(),
        "random": RandomPolicy(seed),
        "benchmark-aligned": BenchmarkAligned(),
        "uncertainty": Uncertainty(),
        "diversity": Diversity(),
        "oracle": OracleUpperBound(),
    }
    try:
        return table[name]
    except KeyError:
        raise ValidationError(f"unknown policy {name!r}; choose from {POLICY_NAMES}") from None


@dataclass
class SelectionContext:
    """Mutable per-curve state handed to :func:`select_probe`.

    ``values`` maps probe id to measured calibration values (uncertainty);
    ``gain`` scores a probe by realised certified gain (oracle).
    """

    selected: list[np.ndarray] = field(default_factory=list)
    values: Mapping[str, Sequence[float]] | None = None
    gain: Callable[[Probe], float] | None = None
    rng: np.random.Generator | None = None


def _argmax_lowest_id(scores: Mapping[str, float]) -> str:
    best = max(scores.values())
    tol = SCORE_TIE_RTOL * max(abs(best), 1e-300)
    return min(pid for pid, s in scores.items() if s >= best - tol)


def _line_angle(a: np.ndarray, b: np.ndarray) -> float:
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(c, 1.0))


def select_probe(
    geometry: ResponseGeometry,
    pool: ProbePool,
    policy: CompletionPolicy,
    context: SelectionContext | None = None,
) -> str:
    if len(pool) == 0:
        raise ValidationError("cannot select from an empty probe pool")
    context = context or SelectionContext()

    if isinstance(policy, ResidualGreedy):
        scores = {p.id: delta_q(geometry, p.vector) / p.cost for p in pool.probes}
    elif isinstance(policy, BenchmarkAligned):
        scores = {p.id: benchmark_alignment(geometry, p.vector) for p in pool.probes}
    elif isinstance(policy, Uncertainty):
        if context.values is None:
            raise ValidationError("uncertainty policy needs measured probe values")
        missing = [p.id for p in pool.probes if p.id not in context.values]
        if missing:
            raise ValidationError(f"no measured values for probes {missing}")
        scores = {p.id: float(np.var(np.asarray(context.values[p.id], dtype=float))) for p in pool.probes}
    elif isinstance(policy, Diversity):
        reference = list(geometry.probes)
        scores = {}
        for p in pool.probes:
            if not reference:
                scores[p.id] = math.pi / 2
                continue
            scores[p.id] = min(
                _line_angle(p.vector, r) for r in reference if np.linalg.norm(r) > 0
            )
    elif isinstance(policy, RandomPolicy):
        rng = context.rng if context.rng is not None else np.random.default_rng(policy.seed)
        ordered = sorted(p.id for p in pool.probes)
        return ordered[int(rng.integers(len(ordered)))]
    elif isinstance(policy, OracleUpperBound):
        if context.gain is None:
            raise ValidationError("oracle policy needs a realised-gain callback")
        scores = {p.id: float(context.gain(p)) for p in pool.probes}
    else:
        raise ValidationError(f"unknown policy {policy!r}")
    return _argmax_lowest_id(scores)


# ---------------------------------------------------------------------------
# Completion curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    budget: float
    certified_fraction: float
    spent: float
    residual_norm: float
    n_probes: int


@dataclass(frozen=True)
class CompletionCurve:
    policy: str
    points: tuple[CurvePoint, ...]
    order: tuple[str, ...]
    upper_bound_only: bool = False

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for step, pt in enumerate(self.points):
            out.append({
                "policy": self.policy,
                "step": step,
                "probe_id": ";".join(self.order[: pt.n_probes]),
                "budget": pt.budget,
                "spent": pt.spent,
                "residual_norm": pt.residual_norm,
                "certified_fraction": pt.certified_fraction,
            })
        return out


def completion_curve(
    geometry: ResponseGeometry,
    pool: ProbePool,
    policy: CompletionPolicy,
    certifier: Callable[[ResponseGeometry], float],
    budgets: Sequence[float],
    context: SelectionContext | None = None,
) -> CompletionCurve:
    """Certified fraction along a budget grid under one acquisition policy.

    At each grid budget the policy keeps choosing among the remaining probes
    that still fit in the budget; choices are never revisited.
    """
    budgets = [float(b) for b in budgets]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValidationError("budget grid must be strictly increasing")
    context = context or SelectionContext()
    if isinstance(policy, RandomPolicy) and context.rng is None:
        context.rng = np.random.default_rng(policy.seed)

    current = geometry
    current_fraction = float(certifier(current))
    if isinstance(policy, OracleUpperBound) and context.gain is None:
        context.gain = lambda p: float(certifier(current.with_probe(p.vector))) - current_fraction

    remaining = pool
    order: list[str] = []
    spent = 0.0
    points = []
    for b in budgets:
        while True:
            affordable = ProbePool(tuple(p for p in remaining.probes if spent + p.cost <= b + 1e-12))
            if len(affordable) == 0:
                break
            pid = select_probe(current, affordable, policy, context)
            probe = remaining.by_id(pid)
            current = current.with_probe(probe.vector)
            current_fraction = float(certifier(current))
            context.selected.append(probe.vector)
            spent += probe.cost
            order.append(pid)
            remaining = remaining.without({pid})
        points.append(CurvePoint(b, current_fraction, spent, current.residual_norm, len(order)))
    return CompletionCurve(policy.name, tuple(points), tuple(order), policy.upper_bound_only)


def kappa_epsilon(curve: CompletionCurve, epsilon: float) -> float | None:
    """Smallest grid budget whose certified fraction reaches ``1 - epsilon``."""
    if not 0 <= epsilon <= 1:
        raise ValidationError("epsilon must lie in [0, 1]")
    for pt in curve.points:
        if pt.certified_fraction >= 1 - epsilon:
            return pt.budget
    return None


# ---------------------------------------------------------------------------
# Loss-aware completion
# ---------------------------------------------------------------------------


def zero_one_loss(alphabet: Sequence[Any]) -> dict[tuple[Any, Any], float]:
    return {(a, b): float(a != b) for a in alphabet for b in alphabet}


def _loss_lookup(loss: Mapping[tuple[Any, Any], float], chosen: Any, true: Any) -> float:
    if chosen == true:
        value = loss.get((chosen, true), 0.0)
        if value != 0:
            raise ValidationError("loss must vanish on the diagonal")
        return 0.0
    try:
        value = loss[(chosen, true)]
    except KeyError:
        raise ValidationError(f"loss matrix has no entry for ({chosen!r}, {true!r})") from None
    if value < 0:
        raise ValidationError("loss entries must be nonnegative")
    return float(value)


def empirical_bayes_risk(
    partition: FiberPartition,
    labels: Sequence[Any],
    loss: Mapping[tuple[Any, Any], float],
    actions: Sequence[Any] | None = None,
) -> float:
    """Risk of the best fiber-wise action under the empirical distribution."""
    partition.require_partition("empirical_bayes_risk")
    if len(labels) != partition.n:
        raise ValidationError(f"expected {partition.n} labels, got {len(labels)}")
    if actions is None:
        actions = sorted({a for pair in loss for a in pair} | set(labels), key=repr)
    total = 0.0
    for members in partition.groups.values():
        counts = Counter(labels[i] for i in members)
        total += min(
            sum(c * _loss_lookup(loss, a, y) for y, c in counts.items()) for a in actions
        )
    return total / partition.n


def is_refinement(before: FiberPartition, after: FiberPartition) -> bool:
    if before.n != after.n:
        return False
    for members in after.groups.values():
        if len({before.keys[i] for i in members}) > 1:
            return False
    return True


def expected_value_of_information(
    before: FiberPartition,
    after: FiberPartition,
    labels: Sequence[Any],
    loss: Mapping[tuple[Any, Any], float],
) -> float:
    before.require_partition("expected_value_of_information")
    after.require_partition("expected_value_of_information")
    if not is_refinement(before, after):
        raise ValidationError("the augmented partition does not refine the original one")
    return empirical_bayes_risk(before, labels, loss) - empirical_bayes_risk(after, labels, loss)


def completion_objective(
    partition_after: FiberPartition,
    labels: Sequence[Any],
    loss: Mapping[tuple[Any, Any], float],
    cost: float,
) -> dict[str, float]:
    """Risk and acquisition cost reported separately alongside their sum."""
    risk = empirical_bayes_risk(partition_after, labels, loss)
    return {"risk": risk, "cost": float(cost), "objective": risk + float(cost)}


def refine(partition: FiberPartition, extra: Sequence[Hashable]) -> FiberPartition:
    """Partition for the augmented evidence ``(E, U)``."""
    partition.require_partition("refine")
    if len(extra) != partition.n:
        raise ValidationError("augmentation must cover every candidate")
    return partition_from_keys([(k, u) for k, u in zip(partition.keys, extra)], partition.rule)
