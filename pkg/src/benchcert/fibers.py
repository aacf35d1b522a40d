"""Evidence fibers and finite completeness diagnostics.

A fiber is the set of candidates that share (declared-equivalent) benchmark
evidence. The deployment action is determined by the evidence exactly when it
is constant on every fiber; the functions here measure how far a candidate
table is from that condition.

All fractions are accumulated as integer counts and converted once, so
``cert_fraction + amb_fraction == 1`` holds exactly.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from statistics import median
from typing import Any, Callable, Hashable, Mapping, Sequence, Union

import numpy as np

from .errors import UnsupportedRuleError, ValidationError

DISCRETE = "discrete"
CONTINUOUS = "continuous"

PARTITION = "partition"
NEIGHBOURHOOD = "neighbourhood"


class Decision(str, Enum):
    POSITIVE = "certified-positive"
    NEGATIVE = "certified-negative"
    AMBIGUOUS = "ambiguous"


# ---------------------------------------------------------------------------
# Candidate table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateTable:
    """Rows of candidates with evidence and optional deployment information.

    ``evidence`` is a tuple of rows; coordinate ``j`` of every row has kind
    ``kinds[j]`` (``"discrete"`` tokens or ``"continuous"`` floats).
    """

    ids: tuple[str, ...]
    evidence: tuple[tuple[Any, ...], ...]
    kinds: tuple[str, ...]
    evidence_names: tuple[str, ...] = ()
    labels: tuple[Any, ...] | None = None
    alphabet: tuple[Any, ...] | None = None
    responses: tuple[float, ...] | None = None
    losses: tuple[Mapping[Any, float], ...] | None = None

    def __post_init__(self) -> None:
        n = len(self.ids)
        if len(set(self.ids)) != n:
            dup = next(i for i, c in Counter(self.ids).items() if c > 1)
            raise ValidationError(f"duplicate candidate id {dup!r}")
        if len(self.evidence) != n:
            raise ValidationError("evidence rows do not match the number of ids")
        arity = len(self.kinds)
        for kind in self.kinds:
            if kind not in (DISCRETE, CONTINUOUS):
                raise ValidationError(f"unknown evidence kind {kind!r}")
        for i, row in enumerate(self.evidence):
            if len(row) != arity:
                raise ValidationError(
                    f"row {self.ids[i]!r} has {len(row)} evidence values, expected {arity}"
                )
            for j, kind in enumerate(self.kinds):
                if kind == CONTINUOUS and not isinstance(row[j], (int, float, np.floating)):
                    raise ValidationError(
                        f"row {self.ids[i]!r} coordinate {j} is not numeric"
                    )
        if not self.evidence_names:
            object.__setattr__(self, "evidence_names", tuple(f"e{j}" for j in range(arity)))
        elif len(self.evidence_names) != arity:
            raise ValidationError("evidence_names length does not match evidence arity")

        if self.labels is not None:
            if len(self.labels) != n:
                raise ValidationError("labels do not match the number of ids")
            if self.alphabet is None:
                object.__setattr__(self, "alphabet", tuple(sorted(set(self.labels), key=repr)))
            allowed = set(self.alphabet)
            for i, lab in enumerate(self.labels):
                if lab not in allowed:
                    raise ValidationError(
                        f"row {self.ids[i]!r} label {lab!r} is outside the alphabet {self.alphabet}"
                    )
        if self.responses is not None and len(self.responses) != n:
            raise ValidationError("responses do not match the number of ids")
        if self.losses is not None:
            if len(self.losses) != n:
                raise ValidationError("losses do not match the number of ids")
            actions = self.alphabet
            if actions is None:
                raise ValidationError("losses require a declared action alphabet")
            for i, row_loss in enumerate(self.losses):
                missing = [a for a in actions if a not in row_loss]
                if missing:
                    raise ValidationError(
                        f"row {self.ids[i]!r} has no loss for actions {missing}"
                    )

    def __len__(self) -> int:
        return len(self.ids)

    def continuous_matrix(self) -> np.ndarray:
        if any(k != CONTINUOUS for k in self.kinds):
            raise ValidationError("evidence is not all-continuous")
        return np.asarray(self.evidence, dtype=float).reshape(len(self.ids), len(self.kinds))

    def subset(self, indices: Sequence[int]) -> CandidateTable:
        def pick(values):
            return None if values is None else tuple(values[i] for i in indices)

        return CandidateTable(
            ids=tuple(self.ids[i] for i in indices),
            evidence=tuple(self.evidence[i] for i in indices),
            kinds=self.kinds,
            evidence_names=self.evidence_names,
            labels=pick(self.labels),
            alphabet=self.alphabet,
            responses=pick(self.responses),
            losses=pick(self.losses),
        )

    def require_labels(self) -> tuple[Any, ...]:
        if self.labels is None:
            raise ValidationError("this operation needs deployment labels (d_label)")
        return self.labels

    def require_responses(self) -> tuple[float, ...]:
        if self.responses is None:
            raise ValidationError("this operation needs deployment responses (y_star)")
        return self.responses


# ---------------------------------------------------------------------------
# Fiber rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactPattern:
    is_partition = True
    name = "exact"

    def describe(self) -> dict[str, Any]:
        return {"rule": self.name}


@dataclass(frozen=True)
class Quantile:
    bins_per_dim: int
    is_partition = True
    name = "quantile"

    def __post_init__(self) -> None:
        if int(self.bins_per_dim) != self.bins_per_dim or self.bins_per_dim < 1:
            raise ValidationError("quantile bins must be a positive integer")

    def describe(self) -> dict[str, Any]:
        return {"rule": self.name, "bins": self.bins_per_dim}


@dataclass(frozen=True)
class NearestNeighbour:
    k: int
    is_partition = False
    name = "knn"

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError("k must be a positive integer")

    def describe(self) -> dict[str, Any]:
        return {"rule": self.name, "k": self.k}


@dataclass(frozen=True)
class ErrorWindow:
    tolerance: float
    is_partition = False
    name = "window"

    def __post_init__(self) -> None:
        if not (self.tolerance >= 0 and math.isfinite(self.tolerance)):
            raise ValidationError("window tolerance must be a finite nonnegative number")

    def describe(self) -> dict[str, Any]:
        return {"rule": self.name, "tolerance": self.tolerance}


FiberRule = Union[ExactPattern, Quantile, NearestNeighbour, ErrorWindow]


@dataclass(frozen=True)
class FiberPartition:
    """Result of applying a fiber rule.

    In partition mode ``groups`` maps fiber key -> member indices and ``keys``
    holds each candidate's key. In neighbourhood mode ``groups`` maps each
    candidate index to its neighbour list (which contains the index itself).
    """

    mode: str
    groups: dict[Hashable, tuple[int, ...]]
    rule: FiberRule
    n: int
    keys: tuple[Hashable, ...] | None = None

    @property
    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups.values()]

    def require_partition(self, op: str) -> None:
        if self.mode != PARTITION:
            raise UnsupportedRuleError(
                f"{op} needs a partition; {self.rule.name} fibers overlap "
                "(use neighbourhood_decision_risk)"
            )


def quantile_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Upper bin edges for equal-frequency bins over ``values``.

    Bin ``k`` is the right-closed interval ``(edges[k-1], edges[k]]``; values
    tied with an edge fall in the lower bin.
    """
    ordered = np.sort(np.asarray(values, dtype=float), kind="stable")
    n = ordered.size
    cuts = [math.ceil(k * n / bins) - 1 for k in range(1, bins)]
    return ordered[cuts] if cuts else np.empty(0)


def quantile_bin(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, np.asarray(values, dtype=float), side="left")


def build_fibers(table: CandidateTable, rule: FiberRule) -> FiberPartition:
    n = len(table)
    if n == 0:
        raise ValidationError("cannot build fibers on an empty table")

    if isinstance(rule, ExactPattern):
        if len(set(table.kinds)) > 1:
            raise ValidationError("exact-pattern fibers need evidence of a single kind")
        keys = tuple(tuple(row) for row in table.evidence)
        return partition_from_keys(keys, rule)

    if not all(k == CONTINUOUS for k in table.kinds):
        raise ValidationError(f"{rule.name} fibers need all-continuous evidence")
    x = table.continuous_matrix()

    if isinstance(rule, Quantile):
        bins = np.column_stack(
            [quantile_bin(x[:, j], quantile_edges(x[:, j], rule.bins_per_dim)) for j in range(x.shape[1])]
        )
        keys = tuple(tuple(int(b) for b in row) for row in bins)
        return partition_from_keys(keys, rule)

    if isinstance(rule, NearestNeighbour):
        if rule.k >= n:
            raise ValidationError(f"k={rule.k} must be smaller than the table size {n}")
        groups: dict[Hashable, tuple[int, ...]] = {}
        idx = np.arange(n)
        for i in range(n):
            d = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
            d[i] = -1.0  # self first
            order = np.lexsort((idx, d))
            groups[i] = tuple(sorted(int(j) for j in order[: rule.k]))
        return FiberPartition(NEIGHBOURHOOD, groups, rule, n)

    if isinstance(rule, ErrorWindow):
        if x.shape[1] != 1:
            raise ValidationError("error-window fibers need one-dimensional evidence")
        v = x[:, 0]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        groups = {}
        for i in range(n):
            lo = np.searchsorted(sv, v[i] - rule.tolerance, side="left")
            hi = np.searchsorted(sv, v[i] + rule.tolerance, side="right")
            members = {int(j) for j in order[lo:hi] if abs(v[j] - v[i]) <= rule.tolerance}
            members.add(i)
            groups[i] = tuple(sorted(members))
        return FiberPartition(NEIGHBOURHOOD, groups, rule, n)

    raise ValidationError(f"unknown fiber rule {rule!r}")


def partition_from_keys(keys: Sequence[Hashable], rule: FiberRule) -> FiberPartition:
    members: dict[Hashable, list[int]] = defaultdict(list)
    for i, key in enumerate(keys):
        members[key].append(i)
    groups = {k: tuple(v) for k, v in members.items()}
    return FiberPartition(PARTITION, groups, rule, len(keys), keys=tuple(keys))


def coarsen(partition: FiberPartition, merge: Callable[[Hashable], Hashable]) -> FiberPartition:
    """Partition induced by the evidence map ``merge(E)``."""
    partition.require_partition("coarsen")
    return partition_from_keys([merge(k) for k in partition.keys], partition.rule)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def _check_labels(partition: FiberPartition, labels: Sequence[Any]) -> None:
    if len(labels) != partition.n:
        raise ValidationError(f"expected {partition.n} labels, got {len(labels)}")
    if any(lab is None for lab in labels):
        raise ValidationError("every candidate needs a label")


def _binary_counts(labels: Sequence[Any]) -> tuple[Any, ...]:
    alphabet = tuple(sorted(set(labels), key=repr))
    if len(alphabet) > 2:
        raise ValidationError(f"binary labels required, got alphabet {alphabet}")
    return alphabet


def pure_count(partition: FiberPartition, labels: Sequence[Any]) -> int:
    return sum(
        len(members) for members in partition.groups.values()
        if len({labels[i] for i in members}) == 1
    )


def certifiable_fraction(partition: FiberPartition, labels: Sequence[Any]) -> tuple[float, float]:
    partition.require_partition("certifiable_fraction")
    _check_labels(partition, labels)
    cert = Fraction(pure_count(partition, labels), partition.n)
    return float(cert), float(1 - cert)


def bayes_error_exact(partition: FiberPartition, labels: Sequence[Any]) -> Fraction:
    partition.require_partition("bayes_error")
    _check_labels(partition, labels)
    _binary_counts(labels)
    total = 0
    for members in partition.groups.values():
        counts = Counter(labels[i] for i in members)
        if len(counts) == 2:
            total += min(counts.values())
    return Fraction(total, partition.n)


def bayes_error(partition: FiberPartition, labels: Sequence[Any]) -> float:
    """Error of the best fiber-wise action, ``(1/N) sum_z min(n1_z, n0_z)``."""
    return float(bayes_error_exact(partition, labels))


def _minority_prevalence(labels: Sequence[Any]) -> Fraction:
    counts = Counter(labels)
    if len(counts) < 2:
        return Fraction(0)
    return Fraction(min(counts.values()), len(labels))


def residual_ambiguity(partition: FiberPartition, labels: Sequence[Any]) -> float | None:
    """Bayes error divided by minority prevalence; ``None`` when one label is absent."""
    err = bayes_error_exact(partition, labels)
    minority = _minority_prevalence(labels)
    if minority == 0:
        return None
    return float(err / minority)


def neighbourhood_decision_risk(
    partition: FiberPartition, labels: Sequence[Any]
) -> tuple[float, float | None]:
    """Local-neighbourhood majority error and its prevalence-normalised value.

    Ties inside a neighbourhood cost 1/2. Because neighbourhoods overlap, the
    normalised value is not bounded by one.
    """
    if partition.mode != NEIGHBOURHOOD:
        raise UnsupportedRuleError("neighbourhood_decision_risk needs an overlapping rule")
    _check_labels(partition, labels)
    alphabet = _binary_counts(labels)
    half_errors = 0
    for i, nbrs in partition.groups.items():
        if not nbrs:
            raise AssertionError(f"empty neighbourhood for candidate {i}")
        counts = Counter(labels[j] for j in nbrs)
        own = counts[labels[i]]
        other = sum(counts.values()) - own
        if own < other:
            half_errors += 2
        elif own == other:
            half_errors += 1
    risk = Fraction(half_errors, 2 * partition.n)
    minority = _minority_prevalence(labels) if len(alphabet) == 2 else Fraction(0)
    rho = None if minority == 0 else float(risk / minority)
    return float(risk), rho


def neighbourhood_pure_fraction(partition: FiberPartition, labels: Sequence[Any]) -> float:
    """Fraction of candidates whose neighbourhood carries a single label."""
    _check_labels(partition, labels)
    pure = sum(1 for nbrs in partition.groups.values() if len({labels[j] for j in nbrs}) == 1)
    return float(Fraction(pure, partition.n))


def classify_threshold_fibers(
    partition: FiberPartition, responses: Sequence[float], tau: float
) -> dict[Hashable, Decision]:
    partition.require_partition("classify_threshold_fibers")
    if len(responses) != partition.n or any(r is None for r in responses):
        raise ValidationError("every candidate needs a deployment response")
    out: dict[Hashable, Decision] = {}
    for key, members in partition.groups.items():
        ys = [float(responses[i]) for i in members]
        if min(ys) > tau:
            out[key] = Decision.POSITIVE
        elif max(ys) <= tau:
            out[key] = Decision.NEGATIVE
        else:
            out[key] = Decision.AMBIGUOUS
    return out


def epsilon_robust_fibers(
    partition: FiberPartition,
    losses: Sequence[Mapping[Any, float]],
    epsilon: float,
) -> dict[Hashable, bool]:
    """Flag fibers on which a single action has worst-case regret at most ``epsilon``."""
    partition.require_partition("epsilon_robust_fibers")
    if epsilon < 0:
        raise ValidationError("epsilon must be nonnegative")
    out = {}
    for key, members in partition.groups.items():
        actions = list(losses[members[0]].keys())
        worst = []
        for a in actions:
            worst.append(max(losses[s][a] - min(losses[s].values()) for s in members))
        out[key] = min(worst) <= epsilon
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def format_key(key: Hashable) -> str:
    if isinstance(key, tuple):
        return "|".join(str(k) for k in key)
    return str(key)


@dataclass(frozen=True)
class FiberRow:
    key: str
    size: int
    histogram: dict[str, int]
    pure: bool


@dataclass(frozen=True)
class AuditReport:
    cert_fraction: float
    amb_fraction: float
    bayes_error: float
    rho: float | None
    fiber_count: int
    median_fiber_size: float
    mode: str = PARTITION
    rule: dict[str, Any] = field(default_factory=dict)
    per_fiber: tuple[FiberRow, ...] = ()
    threshold_classes: dict[str, str] | None = None

    def summary(self) -> dict[str, Any]:
        out = {
            **self.rule,
            "mode": self.mode,
            "cert_fraction": self.cert_fraction,
            "amb_fraction": self.amb_fraction,
            "decision_risk": self.bayes_error,
            "rho": self.rho,
            "fiber_count": self.fiber_count,
            "median_fiber_size": self.median_fiber_size,
        }
        if self.threshold_classes is not None:
            counts = Counter(self.threshold_classes.values())
            out["threshold_fibers"] = {d.value: counts.get(d.value, 0) for d in Decision}
        return out


def audit(
    partition: FiberPartition,
    labels: Sequence[Any],
    responses: Sequence[float] | None = None,
    tau: float | None = None,
) -> AuditReport:
    """Run every diagnostic that applies to ``partition``'s mode."""
    _check_labels(partition, labels)
    sizes = partition.sizes
    if partition.mode == PARTITION:
        cert, amb = certifiable_fraction(partition, labels)
        err = bayes_error(partition, labels)
        rho = residual_ambiguity(partition, labels)
        rows = []
        for key, members in partition.groups.items():
            hist = Counter(str(labels[i]) for i in members)
            rows.append(FiberRow(format_key(key), len(members), dict(sorted(hist.items())), len(hist) == 1))
        rows.sort(key=lambda r: r.key)
        classes = None
        if tau is not None and responses is not None:
            classes = {
                format_key(k): v.value
                for k, v in classify_threshold_fibers(partition, responses, tau).items()
            }
        return AuditReport(
            cert, amb, err, rho, len(sizes), float(median(sizes)),
            PARTITION, partition.rule.describe(), tuple(rows), classes,
        )

    pure = sum(1 for nbrs in partition.groups.values() if len({labels[j] for j in nbrs}) == 1)
    risk, rho = neighbourhood_decision_risk(partition, labels)
    return AuditReport(
        float(Fraction(pure, partition.n)), float(Fraction(partition.n - pure, partition.n)), risk, rho, len(sizes), float(median(sizes)),
        NEIGHBOURHOOD, partition.rule.describe(),
    )
