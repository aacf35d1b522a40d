"""Held-out replay of certify-then-acquire policies.

Calibration rows define fibers and certify an action for a fiber only when it
has enough support and its labels pass the purity rule. Held-out candidates in
certified fibers are decided at once; the rest are sent to acquisition. The
comparison policy decides everyone by calibration-fiber majority.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np
from scipy.stats import beta

from .errors import ValidationError
from .fibers import (
    CONTINUOUS,
    CandidateTable,
    ErrorWindow,
    ExactPattern,
    FiberRule,
    Quantile,
    quantile_bin,
    quantile_edges,
)

UNANIMITY = "unanimity"
CLOPPER_PEARSON = "clopper-pearson"
DEFER = "defer"


def clopper_pearson_zero(n: int, delta: float) -> float:
    """Upper confidence bound on a rate after ``n`` trials with no events."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    return 1.0 - delta ** (1.0 / n)


def clopper_pearson_upper(k: int, n: int, delta: float) -> float:
    """One-sided exact upper bound on a binomial rate with ``k`` events in ``n``."""
    if k == 0:
        return clopper_pearson_zero(n, delta)
    if k >= n:
        return 1.0
    return float(beta.ppf(1.0 - delta, k + 1, n - k))


@dataclass(frozen=True)
class CalibrationRule:
    min_support: int = 50
    mode: str = UNANIMITY
    tau_bound: float = 0.05
    delta: float = 0.05
    multiplicity: int = 1

    def __post_init__(self) -> None:
        if int(self.min_support) != self.min_support or self.min_support < 1:
            raise ValidationError("min_support must be a positive integer")
        if self.mode not in (UNANIMITY, CLOPPER_PEARSON):
            raise ValidationError(f"unknown calibration mode {self.mode!r}")
        if self.mode == CLOPPER_PEARSON:
            if not 0 < self.tau_bound < 1 or not 0 < self.delta < 1:
                raise ValidationError("Clopper-Pearson tau and delta must lie in (0, 1)")
            if int(self.multiplicity) != self.multiplicity or self.multiplicity < 1:
                raise ValidationError("multiplicity must be a positive integer")

    def admits(self, support: int, disagreements: int) -> bool:
        if support < self.min_support:
            return False
        if self.mode == UNANIMITY:
            return disagreements == 0
        bound = clopper_pearson_upper(disagreements, support, self.delta / self.multiplicity)
        return bound <= self.tau_bound


@dataclass(frozen=True)
class FiberCertificate:
    action: Any  # certified action, or None to defer
    majority: Any
    support: int
    disagreements: int


def _majority(counts: Counter, fallback: Any) -> Any:
    """Most frequent label; ties go to ``fallback`` if tied, then to 0, then to the smallest."""
    if not counts:
        return fallback
    top = max(counts.values())
    tied = [a for a, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    if fallback in tied:
        return fallback
    if 0 in tied:
        return 0
    return sorted(tied, key=repr)[0]


def _global_majority(labels: Sequence[Any]) -> Any:
    counts = Counter(labels)
    top = max(counts.values())
    tied = [a for a, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    return 0 if 0 in tied else sorted(tied, key=repr)[0]


def _certificate(labels: Sequence[Any], rule: CalibrationRule, fallback: Any) -> FiberCertificate:
    counts = Counter(labels)
    majority = _majority(counts, fallback)
    support = len(labels)
    disagreements = support - counts.get(majority, 0)
    action = majority if (support and rule.admits(support, disagreements)) else None
    return FiberCertificate(action, majority, support, disagreements)


class _Keyer:
    """Maps evidence rows to fiber keys using edges fitted on calibration data."""

    def __init__(self, table: CandidateTable, rule: FiberRule):
        self.rule = rule
        if isinstance(rule, ExactPattern):
            self.edges = None
        elif isinstance(rule, Quantile):
            x = table.continuous_matrix()
            self.edges = [quantile_edges(x[:, j], rule.bins_per_dim) for j in range(x.shape[1])]
        else:
            raise ValidationError(f"{rule.name} is not a partition rule")

    def keys(self, table: CandidateTable) -> list[Hashable]:
        if self.edges is None:
            return [tuple(row) for row in table.evidence]
        x = table.continuous_matrix()
        bins = np.column_stack([quantile_bin(x[:, j], e) for j, e in enumerate(self.edges)])
        return [tuple(int(b) for b in row) for row in bins]


@dataclass
class CertificateMap:
    """Per-fiber certificates learned from calibration rows."""

    rule: FiberRule
    cal_rule: CalibrationRule
    fibers: dict[Hashable, FiberCertificate]
    global_majority: Any
    keyer: Any = field(repr=False, default=None)

    @property
    def certified_count(self) -> int:
        return sum(1 for c in self.fibers.values() if c.action is not None)

    def lookup(self, heldout: CandidateTable) -> list[FiberCertificate | None]:
        return [self.fibers.get(k) for k in self.keyer.keys(heldout)]


@dataclass
class WindowCertificateMap:
    """Prediction-window certificates: each held-out value gets its own window.

    Windows are centred on the held-out prediction with the declared
    half-width; every calibration row inside the window counts as support.
    """

    rule: ErrorWindow
    cal_rule: CalibrationRule
    values: np.ndarray
    labels: tuple[Any, ...]
    global_majority: Any

    def lookup(self, heldout: CandidateTable) -> list[FiberCertificate | None]:
        x = heldout.continuous_matrix()
        if x.shape[1] != 1:
            raise ValidationError("window certificates need one-dimensional evidence")
        order = np.argsort(self.values, kind="stable")
        sv = self.values[order]
        tol = self.rule.tolerance
        out: list[FiberCertificate | None] = []
        for v in x[:, 0]:
            lo = np.searchsorted(sv, v - tol, side="left")
            hi = np.searchsorted(sv, v + tol, side="right")
            idx = [int(j) for j in order[lo:hi] if abs(self.values[j] - v) <= tol]
            if not idx:
                out.append(None)
                continue
            out.append(_certificate([self.labels[j] for j in idx], self.cal_rule, self.global_majority))
        return out


def calibrate(
    calibration: CandidateTable,
    rule: FiberRule,
    cal_rule: CalibrationRule,
) -> CertificateMap | WindowCertificateMap:
    labels = calibration.labels
    if labels is None or len(labels) == 0:
        raise ValidationError("calibration needs labelled rows")
    glob = _global_majority(labels)
    if isinstance(rule, ErrorWindow):
        if any(k != CONTINUOUS for k in calibration.kinds) or len(calibration.kinds) != 1:
            raise ValidationError("window certificates need one continuous evidence column")
        return WindowCertificateMap(rule, cal_rule, calibration.continuous_matrix()[:, 0], tuple(labels), glob)
    keyer = _Keyer(calibration, rule)
    grouped: dict[Hashable, list[Any]] = {}
    for key, lab in zip(keyer.keys(calibration), labels):
        grouped.setdefault(key, []).append(lab)
    fibers = {k: _certificate(v, cal_rule, glob) for k, v in grouped.items()}
    return CertificateMap(rule, cal_rule, fibers, glob, keyer)


# ---------------------------------------------------------------------------
# Acquisition
# ---------------------------------------------------------------------------


class ExactOracle:
    flip_rate = 0.0

    def acquire(self, truth: Any) -> Any:
        return truth


class NoisyOracle:
    """Returns the flipped binary label with the declared probability."""

    def __init__(self, flip_rate: float, seed: int):
        if not 0 <= flip_rate <= 1:
            raise ValidationError("flip rate must lie in [0, 1]")
        self.flip_rate = flip_rate
        self.rng = np.random.default_rng(seed)

    def acquire(self, truth: Any) -> Any:
        if self.rng.random() < self.flip_rate:
            return 1 - int(truth)
        return truth


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeldoutPlan:
    """Decisions fixed before any held-out label is looked at."""

    ids: tuple[str, ...]
    certified: tuple[Any, ...]  # action or DEFER
    benchmark: tuple[Any, ...]

    def decisions(self) -> dict[str, Any]:
        return {i: (DEFER if a is None else a) for i, a in zip(self.ids, self.certified)}


def plan_decisions(cert_map: CertificateMap | WindowCertificateMap, heldout: CandidateTable) -> HeldoutPlan:
    certs = cert_map.lookup(heldout)
    certified = tuple(None if c is None else c.action for c in certs)
    benchmark = tuple(cert_map.global_majority if c is None else c.majority for c in certs)
    return HeldoutPlan(tuple(heldout.ids), certified, benchmark)


@dataclass(frozen=True)
class ReplayOutcome:
    split: int
    n: int
    decided_immediately: int
    deferred: int
    acquired: int
    false_before: int
    false_after: int
    fp_before: int
    fn_before: int
    fp_after: int
    fn_after: int
    false_after_immediate: int = 0

    @property
    def false_rate_before(self) -> float:
        return self.false_before / self.n

    @property
    def false_rate_after(self) -> float:
        return self.false_after / self.n

    @property
    def decided_rate(self) -> float:
        return self.decided_immediately / self.n

    def row(self) -> dict[str, Any]:
        out = asdict(self)
        out["false_rate_before"] = self.false_rate_before
        out["false_rate_after"] = self.false_rate_after
        out["decided_rate"] = self.decided_rate
        out["break_even"] = break_even(self.false_before, self.false_after, self.acquired)
        return out


def _fp_fn(decision: Any, truth: Any) -> tuple[int, int]:
    if decision == truth:
        return 0, 0
    return (1, 0) if decision == 1 else (0, 1)


def replay_split(
    heldout: CandidateTable,
    cert_map: CertificateMap | WindowCertificateMap,
    oracle: ExactOracle | NoisyOracle | None = None,
    split: int = 0,
    plan: HeldoutPlan | None = None,
) -> ReplayOutcome:
    truths = heldout.require_labels()
    oracle = oracle or ExactOracle()
    plan = plan or plan_decisions(cert_map, heldout)
    decided = deferred = 0
    fp_b = fn_b = fp_a = fn_a = immediate_false = 0
    for cert_action, bench_action, truth in zip(plan.certified, plan.benchmark, truths):
        fp, fn = _fp_fn(bench_action, truth)
        fp_b += fp
        fn_b += fn
        if cert_action is None:
            deferred += 1
            decision = oracle.acquire(truth)
        else:
            decided += 1
            decision = cert_action
        fp, fn = _fp_fn(decision, truth)
        fp_a += fp
        fn_a += fn
        if cert_action is not None:
            immediate_false += fp + fn
    return ReplayOutcome(
        split=split, n=len(truths),
        decided_immediately=decided, deferred=deferred, acquired=deferred,
        false_before=fp_b + fn_b, false_after=fp_a + fn_a,
        fp_before=fp_b, fn_before=fn_b, fp_after=fp_a, fn_after=fn_a,
        false_after_immediate=immediate_false,
    )


def random_splits(n: int, n_splits: int, frac: float, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Calibration/held-out index pairs; split ``i`` uses seed ``seed + i``."""
    if not 0 < frac < 1:
        raise ValidationError("calibration fraction must lie in (0, 1)")
    if n_splits < 1:
        raise ValidationError("need at least one split")
    n_cal = int(round(frac * n))
    if n_cal < 1 or n_cal >= n:
        raise ValidationError("split leaves an empty calibration or held-out set")
    out = []
    for i in range(n_splits):
        perm = np.random.default_rng(seed + i).permutation(n)
        out.append((np.sort(perm[:n_cal]), np.sort(perm[n_cal:])))
    return out


def run_replay(
    table: CandidateTable,
    rule: FiberRule,
    cal_rule: CalibrationRule,
    n_splits: int,
    frac: float,
    seed: int,
    flip_rate: float = 0.0,
) -> list[ReplayOutcome]:
    outcomes = []
    for i, (cal_idx, ho_idx) in enumerate(random_splits(len(table), n_splits, frac, seed)):
        cal = table.subset(cal_idx)
        ho = table.subset(ho_idx)
        cert_map = calibrate(cal, rule, cal_rule)
        oracle = ExactOracle() if flip_rate == 0 else NoisyOracle(flip_rate, seed + i)
        outcomes.append(replay_split(ho, cert_map, oracle, split=i))
    return outcomes


def summarize(outcomes: Sequence[ReplayOutcome]) -> dict[str, Any]:
    """Means with 10th-90th percentile ranges across splits."""
    outcomes = sorted(outcomes, key=lambda o: o.split)
    cols = {
        "false_rate_before": [o.false_rate_before for o in outcomes],
        "false_rate_after": [o.false_rate_after for o in outcomes],
        "decided_rate": [o.decided_rate for o in outcomes],
        "avoided_false": [o.false_before - o.false_after for o in outcomes],
    }
    be = [break_even(o.false_before, o.false_after, o.acquired) for o in outcomes]
    be = [b for b in be if b is not None]
    if be:
        cols["break_even"] = be
    out: dict[str, Any] = {"splits": len(outcomes)}
    for name, vals in cols.items():
        arr = np.asarray(vals, dtype=float)
        out[name] = {
            "mean": float(arr.mean()),
            "p10": float(np.percentile(arr, 10)),
            "p90": float(np.percentile(arr, 90)),
        }
    out["after_below_before"] = sum(1 for o in outcomes if o.false_after < o.false_before)
    return out


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    c_fp: float = 1.0
    c_fn: float = 1.0
    c_acq: float = 0.0

    def __post_init__(self) -> None:
        if min(self.c_fp, self.c_fn, self.c_acq) < 0:
            raise ValidationError("costs must be nonnegative")

    def bench_cost(self, o: ReplayOutcome) -> float:
        return self.c_fp * o.fp_before + self.c_fn * o.fn_before

    def completion_cost(self, o: ReplayOutcome) -> float:
        return self.c_fp * o.fp_after + self.c_fn * o.fn_after + self.c_acq * o.acquired


def break_even(false_bench: int, false_comp: int, acquired: int) -> float | None:
    """Acquisition price per deferred candidate at which both policies cost the same."""
    if acquired == 0:
        return None
    return (false_bench - false_comp) / acquired


DEFAULT_RATIO_GRID = tuple(float(r) for r in np.logspace(-1, 1, 9))


def asymmetric_sweep(
    fp_bench: float,
    fn_bench: float,
    fp_comp: float,
    fn_comp: float,
    n_defer: float,
    ratios: Sequence[float] = DEFAULT_RATIO_GRID,
) -> list[dict[str, Any]]:
    """Break-even acquisition cost for each ``C_FP / C_FN`` ratio, with ``C_FN = 1``."""
    if n_defer <= 0:
        raise ValidationError("n_defer must be positive")
    rows = []
    for r in ratios:
        c = (r * (fp_bench - fp_comp) + (fn_bench - fn_comp)) / n_defer
        rows.append({
            "c_fp_over_c_fn": float(r),
            "break_even_c_acq": c,
            "cost_effective": c > 0,
        })
    return rows


def aggregate_counts(outcomes: Sequence[ReplayOutcome]) -> dict[str, float]:
    """Per-split mean FP/FN counts for both policies and mean deferrals."""
    k = len(outcomes)
    return {
        "fp_bench": sum(o.fp_before for o in outcomes) / k,
        "fn_bench": sum(o.fn_before for o in outcomes) / k,
        "fp_comp": sum(o.fp_after for o in outcomes) / k,
        "fn_comp": sum(o.fn_after for o in outcomes) / k,
        "n_defer": sum(o.deferred for o in outcomes) / k,
    }


