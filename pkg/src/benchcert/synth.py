"""Synthetic response spaces and the controlled experiment drivers.

Every driver takes a config, runs one independent generator per seed, and
returns an :class:`ExperimentResult` whose rows are sorted by seed, so the
serialised result does not depend on how seeds were scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .completion import (
    POLICY_NAMES,
    Probe,
    ProbePool,
    SelectionContext,
    benchmark_alignment,
    completion_curve,
    delta_q,
    policy_from_name,
)
from .errors import ValidationError
from .fibers import DISCRETE, CandidateTable
from .geometry import ResponseGeometry, build_geometry, certify_arrays
from .manifest import canonical_json


def worker_count() -> int:
    """Thread cap from ``BENCHCERT_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("BENCHCERT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"BENCHCERT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("BENCHCERT_THREADS must be nonnegative")
    return n or (os.cpu_count() or 1)


def _map_seeds(fn: Callable[[int], Any], seeds: Iterable[int]) -> list[Any]:
    seeds = list(seeds)
    workers = min(worker_count(), len(seeds)) or 1
    if workers == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, seeds))


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation, or ``None`` when either side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = x.std(), y.std()
    scale_x = max(np.abs(x).max(), 1e-300)
    scale_y = max(np.abs(y).max(), 1e-300)
    if sx <= 1e-12 * scale_x or sy <= 1e-12 * scale_y:
        return None
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    ambient_dim: int = 8
    n_probes: int = 4
    rank: int = 3
    label_noise: float = 0.05
    alpha: float = 0.05
    g_grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 0.95)
    n_candidates: int = 3000
    n_seeds: int = 50
    seed: int = 0
    tau: float = 0.0
    radius: float | None = None
    radius_policy: str = "quadrature"
    residual_mode: str = "unit"

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.label_noise < 0:
            raise ValidationError("label noise must be nonnegative")
        if not 1 <= self.rank <= self.n_probes:
            raise ValidationError("need 1 <= rank <= n_probes")
        if self.rank >= self.ambient_dim:
            raise ValidationError("rank must be below the ambient dimension")
        if self.n_candidates < 1 or self.n_seeds < 1:
            raise ValidationError("n_candidates and n_seeds must be positive")
        if self.radius_policy not in ("quadrature", "gaussian", "fixed"):
            raise ValidationError(f"unknown radius policy {self.radius_policy!r}")
        if self.radius_policy == "fixed" and (self.radius is None or self.radius < 0):
            raise ValidationError("fixed radius policy needs a nonnegative radius")
        if self.residual_mode not in ("unit", "additive"):
            raise ValidationError(f"unknown residual mode {self.residual_mode!r}")
        object.__setattr__(self, "g_grid", tuple(float(g) for g in self.g_grid))
        if any(g < 0 for g in self.g_grid):
            raise ValidationError("g grid values must be nonnegative")

    def seeds(self) -> range:
        return range(self.seed, self.seed + self.n_seeds)


def _aggregate(rows: Sequence[dict[str, Any]], skip: Sequence[str] = ("seed",)) -> dict[str, dict[str, float]]:
    """Mean and 2.5-97.5 percentile range (linear interpolation) per numeric metric."""
    out: dict[str, dict[str, float]] = {}
    if not rows:
        return out
    for name in rows[0]:
        if name in skip:
            continue
        vals = [r[name] for r in rows if isinstance(r.get(name), (int, float)) and not isinstance(r.get(name), bool)
                and r.get(name) is not None]
        if not vals:
            bools = [r[name] for r in rows if isinstance(r.get(name), bool)]
            if bools:
                vals = [float(b) for b in bools]
            else:
                continue
        arr = np.asarray(vals, dtype=float)
        out[name] = {
            "mean": float(arr.mean()),
            "p2_5": float(np.percentile(arr, 2.5)),
            "p97_5": float(np.percentile(arr, 97.5)),
            "n": int(arr.size),
        }
    return out


@dataclass(frozen=True)
class ExperimentResult:
    name: str
    parameters: dict[str, Any]
    per_seed: tuple[dict[str, Any], ...]
    aggregate: dict[str, dict[str, float]]
    tables: dict[str, tuple[dict[str, Any], ...]] = field(default_factory=dict)

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.name,
            "parameters": self.parameters,
            "per_seed": list(self.per_seed),
            "aggregate": self.aggregate,
            "tables": {k: list(v) for k, v in self.tables.items()},
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


# ---------------------------------------------------------------------------
# Population generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Population:
    geometry: ResponseGeometry
    latent: np.ndarray
    evidence: np.ndarray          # noisy benchmark probe readings, (N, m)
    benchmark_labels: np.ndarray  # measured benchmark channel <P_B k_star, s> + noise
    deployment: np.ndarray        # <k_star, s> + noise
    null_direction: np.ndarray


def _frame(config: SyntheticConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, m, r = config.ambient_dim, config.n_probes, config.rank
    rotation, _ = np.linalg.qr(rng.standard_normal((n, n)))
    frame = np.zeros((m, n))
    frame[:r, :r] = np.eye(r)
    frame[r:, :r] = rng.standard_normal((m - r, r))
    return frame @ rotation.T, rotation


def gen_population(config: SyntheticConfig, seed: int, g: float, n_candidates: int | None = None) -> Population:
    """Rank-deficient probes, a deployment probe with residual norm ``g`` and latent states.

    In ``unit`` mode the deployment probe has unit norm (so ``g <= 1``); in
    ``additive`` mode it is a unit in-span direction plus ``g`` times a unit
    null direction. The same seed gives the same frame for every ``g``.
    """
    if g < 0:
        raise ValidationError("g must be nonnegative")
    if config.residual_mode == "unit" and g > 1:
        raise ValidationError(f"g={g} is infeasible for a unit-norm deployment probe")
    n_cand = n_candidates or config.n_candidates
    rng = _rng(config.seed, seed)
    probes, rotation = _frame(config, rng)
    r = config.rank
    visible = rotation[:, :r] @ _unit(rng.standard_normal(r))
    null = rotation[:, r:] @ _unit(rng.standard_normal(config.ambient_dim - r))
    if config.residual_mode == "unit":
        k_star = math.sqrt(1.0 - g * g) * visible + g * null
    else:
        k_star = visible + g * null
    geometry = build_geometry(probes, k_star)
    latent = rng.standard_normal((n_cand, config.ambient_dim))
    noise = config.label_noise
    evidence = latent @ probes.T + noise * rng.standard_normal((n_cand, probes.shape[0]))
    bench = latent @ geometry.visible_probe() + noise * rng.standard_normal(n_cand)
    deploy = latent @ k_star + noise * rng.standard_normal(n_cand)
    return Population(geometry, latent, evidence, bench, deploy, null)


# ---------------------------------------------------------------------------
# Split conformal
# ---------------------------------------------------------------------------


# Roundoff allowance when checking whether a response lies inside an interval.
COVERAGE_ATOL = 1e-12


def _covered(err: np.ndarray, half_width: np.ndarray | float) -> np.ndarray:
    return err <= np.asarray(half_width) + COVERAGE_ATOL


def conformal_quantile(scores: Sequence[float], alpha: float) -> float:
    """The ``ceil((n+1)(1-alpha))``-th smallest calibration score."""
    scores = np.sort(np.asarray(scores, dtype=float))
    n = scores.size
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    k = math.ceil((n + 1) * (1 - alpha) - 1e-9)
    if n == 0 or k > n:
        raise ValidationError(
            f"calibration set of {n} is too small for alpha={alpha} (need at least {math.ceil(1 / alpha - 1)})"
        )
    return float(scores[max(k, 1) - 1])


def split_conformal(
    cal_predictions: Sequence[float],
    cal_labels: Sequence[float],
    test_predictions: Sequence[float],
    alpha: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric absolute-residual intervals around the test predictions."""
    cal_predictions = np.asarray(cal_predictions, dtype=float)
    cal_labels = np.asarray(cal_labels, dtype=float)
    if cal_predictions.shape != cal_labels.shape:
        raise ValidationError("calibration predictions and labels differ in length")
    q = conformal_quantile(np.abs(cal_labels - cal_predictions), alpha)
    t = np.asarray(test_predictions, dtype=float)
    return t - q, t + q


def declared_radius(config: SyntheticConfig, delta: float, g: float) -> float:
    """Benchmark-null radius declared from the latent prior, never from deployment labels.

    ``gaussian``: the two-sided ``1 - alpha`` quantile of a standard normal
    null coordinate. ``quadrature``: the radius that makes ``delta + R g``
    equal ``sqrt(delta^2 + (z g)^2)``, i.e. combines the two error sources
    as independent Gaussians.
    """
    if config.radius_policy == "fixed":
        return float(config.radius)
    z = float(norm.ppf(1 - config.alpha / 2))
    if config.radius_policy == "gaussian" or delta == 0:
        return z
    # (sqrt(delta^2 + (z g)^2) - delta) / g without the cancellation at small g
    return z * z * g / (math.sqrt(delta * delta + (z * g) ** 2) + delta)


# ---------------------------------------------------------------------------
# Transfer experiment
# ---------------------------------------------------------------------------


def _transfer_one(config: SyntheticConfig, seed: int, g: float) -> dict[str, float]:
    pop = gen_population(config, seed, g)
    n = pop.latent.shape[0]
    train, cal, test = np.array_split(np.arange(n), 3)
    design = np.column_stack([pop.evidence, np.ones(n)])
    weights, *_ = np.linalg.lstsq(design[train], pop.benchmark_labels[train], rcond=None)
    pred = design @ weights
    lo, hi = split_conformal(pred[cal], pop.benchmark_labels[cal], pred[test], config.alpha)
    delta = 0.5 * float(hi[0] - lo[0]) if test.size else 0.0
    d_lo, d_hi = split_conformal(pred[cal], pop.deployment[cal], pred[test], config.alpha)
    g_meas = pop.geometry.residual_norm
    radius = declared_radius(config, delta, g_meas)
    err_b = np.abs(pop.benchmark_labels[test] - pred[test])
    err_d = np.abs(pop.deployment[test] - pred[test])
    return {
        "g": g,
        "g_measured": g_meas,
        "benchmark_coverage": float(np.mean(_covered(err_b, delta))),
        "transfer_coverage": float(np.mean(_covered(err_d, delta))),
        "oracle_coverage": float(np.mean(_covered(np.abs(pop.deployment[test] - pred[test]), 0.5 * (d_hi[0] - d_lo[0])))),
        "response_rank_coverage": float(np.mean(_covered(err_d, delta + radius * g_meas))),
        "delta": delta,
        "radius": radius,
    }


def run_transfer_experiment(config: SyntheticConfig | None = None) -> ExperimentResult:
    """Benchmark-calibrated conformal intervals applied to the deployment channel."""
    config = config or SyntheticConfig()
    metrics = ("benchmark_coverage", "transfer_coverage", "oracle_coverage", "response_rank_coverage")

    def per_seed(seed: int) -> list[dict[str, float]]:
        return [_transfer_one(config, seed, g) for g in config.g_grid]

    results = _map_seeds(per_seed, config.seeds())
    seed_rows = []
    sweep_rows = []
    for seed, rows in zip(config.seeds(), results):
        seed_rows.append({"seed": seed, **{m: float(np.mean([r[m] for r in rows])) for m in metrics}})
        sweep_rows.extend({"seed": seed, **r} for r in rows)
    g_table = []
    for g in config.g_grid:
        sel = [r for r in sweep_rows if r["g"] == g]
        g_table.append({"g": g, **{m: float(np.mean([r[m] for r in sel])) for m in metrics},
                        "mean_radius": float(np.mean([r["radius"] for r in sel]))})
    return ExperimentResult(
        "transfer",
        _params(config),
        tuple(seed_rows),
        _aggregate(seed_rows),
        {"transfer_coverage": tuple(g_table), "per_seed_g": tuple(sweep_rows)},
    )


# ---------------------------------------------------------------------------
# Zero benchmark-error control
# ---------------------------------------------------------------------------

ZERO_ERROR_RADIUS = 0.75


def zero_error_config() -> SyntheticConfig:
    return SyntheticConfig(
        g_grid=(0.0, 0.5, 1.0), n_candidates=1000, residual_mode="additive",
        radius=ZERO_ERROR_RADIUS, radius_policy="fixed",
    )


def run_zero_error_control(config: SyntheticConfig | None = None) -> ExperimentResult:
    """Certification with exact benchmark centres (delta = 0) across residual sizes.

    The deployment probe is a unit in-span direction plus ``g`` times a unit
    null direction; latent null coordinates are drawn inside the declared
    radius so every certificate is checkable against the truth.
    """
    config = config or zero_error_config()
    radius = config.radius if config.radius is not None else ZERO_ERROR_RADIUS

    def per_seed(seed: int) -> list[dict[str, Any]]:
        rows = []
        for g in config.g_grid:
            pop = gen_population(replace(config, residual_mode="additive"), seed, g)
            geo = pop.geometry
            latent = pop.latent.copy()
            # replace the null-direction coordinate with an admissible one
            t = _rng(config.seed, seed, 7).uniform(-radius, radius, latent.shape[0])
            latent += np.outer(t - latent @ pop.null_direction, pop.null_direction)
            truth = latent @ geo.deployment_probe
            centers = latent @ geo.visible_probe()
            classes = certify_arrays(centers, 0.0, radius, geo.residual_norm, config.tau)
            wrong = np.count_nonzero(((classes == 1) & (truth <= config.tau)) | ((classes == -1) & (truth > config.tau)))
            done = geo.with_probe(geo.deployment_probe)
            c_classes = certify_arrays(latent @ done.visible_probe(), 0.0, radius, done.residual_norm, config.tau)
            c_wrong = np.count_nonzero(((c_classes == 1) & (truth <= config.tau)) | ((c_classes == -1) & (truth > config.tau)))
            rows.append({
                "seed": seed,
                "g": g,
                "g_measured": geo.residual_norm,
                "certified_fraction": float(np.count_nonzero(classes)) / classes.size,
                "false_certificates": int(wrong),
                "completed_certified_fraction": float(np.count_nonzero(c_classes)) / c_classes.size,
                "completed_false_certificates": int(c_wrong),
            })
        return rows

    rows = [r for chunk in _map_seeds(per_seed, config.seeds()) for r in chunk]
    table = []
    for g in config.g_grid:
        sel = [r for r in rows if r["g"] == g]
        table.append({"g": g, **_flat(_aggregate(sel, skip=("seed", "g")))})
    seed_rows = []
    for seed in config.seeds():
        entry: dict[str, Any] = {"seed": seed}
        for r in rows:
            if r["seed"] == seed:
                entry[f"certified_g{r['g']:g}"] = r["certified_fraction"]
                entry[f"completed_g{r['g']:g}"] = r["completed_certified_fraction"]
        seed_rows.append(entry)
    params = _params(config)
    params["radius"] = radius
    params["delta"] = 0.0
    return ExperimentResult("zero-error", params, tuple(seed_rows), _aggregate(seed_rows),
                            {"zero_error_control": tuple(table), "per_seed_g": tuple(rows)})


def _flat(agg: dict[str, dict[str, float]]) -> dict[str, float]:
    return {f"{k}_{stat}": v for k, d in agg.items() for stat, v in d.items() if stat != "n"}


def _params(config: Any) -> dict[str, Any]:
    out = asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


# ---------------------------------------------------------------------------
# Leaderboard inversion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeaderboardConfig:
    ambient_dim: int = 10
    deploy_support: int = 8
    ranks: tuple[int, ...] = (3, 4, 6, 7, 8)
    structured_noise: tuple[float, ...] = (0.02, 0.04, 0.06, 0.08, 0.10)
    equal_noise: float = 0.06
    label_noise: float = 0.05
    n_candidates: int = 1000
    top: int = 100
    tau: float = 0.5
    radius: float = 1.5
    delta_quantile: float = 0.95
    n_seeds: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.ranks) != len(self.structured_noise):
            raise ValidationError("one structured noise level per model rank")
        if max(self.ranks) > self.ambient_dim or min(self.ranks) < 1:
            raise ValidationError("model ranks must lie in [1, ambient_dim]")
        if self.top > self.n_candidates:
            raise ValidationError("top-k exceeds the number of candidates")
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "structured_noise", tuple(float(s) for s in self.structured_noise))

    def seeds(self) -> range:
        return range(self.seed, self.seed + self.n_seeds)


MODEL_NAMES = "ABCDEFGHIJ"


def _leaderboard_one(config: LeaderboardConfig, seed: int, noise: Sequence[float], variant: str) -> dict[str, Any]:
    n = config.ambient_dim
    rng = _rng(config.seed, seed, 0 if variant == "structured" else 1)
    k_star = np.zeros(n)
    k_star[: config.deploy_support] = 1.0 / math.sqrt(config.deploy_support)
    k_bench = np.zeros(n)
    base = min(config.ranks)
    k_bench[:base] = 1.0 / math.sqrt(base)
    latent = rng.standard_normal((config.n_candidates, n))
    bench_labels = latent @ k_bench + config.label_noise * rng.standard_normal(config.n_candidates)
    row: dict[str, Any] = {"seed": seed, "variant": variant}
    maes, certs = [], []
    for name, rank, sigma in zip(MODEL_NAMES, config.ranks, noise):
        geo = build_geometry(np.eye(n)[:rank], k_star)
        bench_pred = latent @ geo.project(k_bench) + sigma * rng.standard_normal(config.n_candidates)
        errors = np.abs(bench_pred - bench_labels)
        mae = float(errors.mean())
        delta = float(np.quantile(errors, config.delta_quantile))
        deploy_pred = latent @ geo.visible_probe() + sigma * rng.standard_normal(config.n_candidates)
        top = np.argsort(-deploy_pred, kind="stable")[: config.top]
        classes = certify_arrays(deploy_pred[top], delta, config.radius, geo.residual_norm, config.tau)
        cert = float(np.count_nonzero(classes == 1)) / config.top
        row[f"mae_{name}"] = mae
        row[f"cert_{name}"] = cert
        row[f"g_{name}"] = geo.residual_norm
        maes.append(mae)
        certs.append(cert)
    best_mae = int(np.argmin(maes))
    best_cert = int(np.argmax(certs))
    row["best_mae_model"] = MODEL_NAMES[best_mae]
    row["best_cert_model"] = MODEL_NAMES[best_cert]
    row["inversion"] = bool(certs[best_mae] < max(certs))
    return row


def run_leaderboard_experiment(config: LeaderboardConfig | None = None) -> ExperimentResult:
    """Best benchmark-MAE model versus best certifier of top deployment candidates."""
    config = config or LeaderboardConfig()
    k = len(config.ranks)

    def per_seed(seed: int) -> list[dict[str, Any]]:
        return [
            _leaderboard_one(config, seed, config.structured_noise, "structured"),
            _leaderboard_one(config, seed, (config.equal_noise,) * k, "equal-noise"),
        ]

    rows = [r for chunk in _map_seeds(per_seed, config.seeds()) for r in chunk]
    seed_rows = []
    for seed in config.seeds():
        s = next(r for r in rows if r["seed"] == seed and r["variant"] == "structured")
        e = next(r for r in rows if r["seed"] == seed and r["variant"] == "equal-noise")
        seed_rows.append({"seed": seed, "structured_inversion": s["inversion"], "equal_noise_inversion": e["inversion"]})
    summary = []
    for variant in ("structured", "equal-noise"):
        sel = [r for r in rows if r["variant"] == variant]
        for name, rank in zip(MODEL_NAMES, config.ranks):
            summary.append({
                "variant": variant,
                "model": name,
                "rank": rank,
                "g": sel[0][f"g_{name}"],
                "mean_mae": float(np.mean([r[f"mae_{name}"] for r in sel])),
                "mean_top_certified": float(np.mean([r[f"cert_{name}"] for r in sel])),
                "best_mae_share": sum(r["best_mae_model"] == name for r in sel) / len(sel),
            })
    return ExperimentResult("leaderboard", _params(config), tuple(seed_rows), _aggregate(seed_rows),
                            {"leaderboard_summary": tuple(summary), "per_seed_variant": tuple(rows)})


# ---------------------------------------------------------------------------
# Residual reduction versus realised completion gain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationConfig:
    base: SyntheticConfig = field(default_factory=lambda: SyntheticConfig(n_candidates=2000, n_seeds=10))
    g: float = 0.8
    radius: float = 0.55
    pool_size: int = 40

    def __post_init__(self) -> None:
        if self.pool_size < 2:
            raise ValidationError("pool needs at least two probes")


def _certifier(latent: np.ndarray, radius: float, tau: float) -> Callable[[ResponseGeometry], float]:
    def certify(geo: ResponseGeometry) -> float:
        classes = certify_arrays(latent @ geo.visible_probe(), 0.0, radius, geo.residual_norm, tau)
        return float(np.count_nonzero(classes)) / classes.size
    return certify


def run_residual_correlation(
    config: CorrelationConfig | None = None,
    pool: Sequence[np.ndarray] | None = None,
) -> ExperimentResult:
    """Per-probe predicted reduction ``Delta(q)`` against realised certified gain.

    Without an explicit pool each seed draws isotropic Gaussian probes.
    """
    config = config or CorrelationConfig()
    base = config.base

    def per_seed(seed: int) -> tuple[dict[str, Any], list[dict[str, Any]]]:
        pop = gen_population(base, seed, config.g)
        certify = _certifier(pop.latent, config.radius, base.tau)
        start = certify(pop.geometry)
        probes = pool if pool is not None else list(_rng(base.seed, seed, 11).standard_normal((config.pool_size, base.ambient_dim)))
        rows = []
        for j, q in enumerate(probes):
            q = np.asarray(q, dtype=float)
            rows.append({
                "seed": seed,
                "probe": j,
                "delta_q": delta_q(pop.geometry, q),
                "alignment": benchmark_alignment(pop.geometry, q),
                "realized_gain": certify(pop.geometry.with_probe(q)) - start,
            })
        r_delta = pearson([r["delta_q"] for r in rows], [r["realized_gain"] for r in rows])
        r_align = pearson([r["alignment"] for r in rows], [r["realized_gain"] for r in rows])
        return {"seed": seed, "start_certified": start, "pearson_delta": r_delta, "pearson_alignment": r_align}, rows

    results = _map_seeds(per_seed, base.seeds())
    seed_rows = [s for s, _ in results]
    probe_rows = [r for _, rows in results for r in rows]
    params = {"base": _params(base), "g": config.g, "radius": config.radius,
              "pool_size": config.pool_size if pool is None else len(pool), "pool": "isotropic" if pool is None else "supplied"}
    return ExperimentResult("correlation", params, tuple(seed_rows), _aggregate(seed_rows),
                            {"residual_correlation": tuple(probe_rows)})


# ---------------------------------------------------------------------------
# Policy comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyConfig:
    base: SyntheticConfig = field(default_factory=lambda: SyntheticConfig(n_candidates=2000, n_seeds=20))
    g: float = 0.8
    radius: float = 0.55
    pool_size: int = 12
    steps: int = 3
    policies: tuple[str, ...] = POLICY_NAMES


def run_policy_comparison(config: PolicyConfig | None = None) -> ExperimentResult:
    """Certified fraction after a fixed number of unit-cost probes under each policy."""
    config = config or PolicyConfig()
    base = config.base

    def per_seed(seed: int) -> dict[str, Any]:
        pop = gen_population(base, seed, config.g)
        certify = _certifier(pop.latent, config.radius, base.tau)
        rng = _rng(base.seed, seed, 13)
        vecs = rng.standard_normal((config.pool_size, base.ambient_dim))
        pool = ProbePool(tuple(Probe(f"q{j:02d}", v, 1.0) for j, v in enumerate(vecs)))
        n_cal = min(200, pop.latent.shape[0])
        values = {p.id: pop.latent[:n_cal] @ p.vector + base.label_noise * rng.standard_normal(n_cal) for p in pool.probes}
        row: dict[str, Any] = {"seed": seed, "start_certified": certify(pop.geometry)}
        for name in config.policies:
            policy = policy_from_name(name, seed=int(rng.integers(2**31)))
            curve = completion_curve(pop.geometry, pool, policy, certify, list(range(config.steps + 1)),
                                     SelectionContext(values=values))
            row[name] = curve.points[-1].certified_fraction
        return row

    seed_rows = _map_seeds(per_seed, base.seeds())
    params = {"base": _params(base), "g": config.g, "radius": config.radius, "pool_size": config.pool_size,
              "steps": config.steps, "policies": list(config.policies),
              "declared_substitutes": ["uncertainty", "diversity"], "upper_bound_only": ["oracle"]}
    return ExperimentResult("policies", params, tuple(seed_rows), _aggregate(seed_rows))


# ---------------------------------------------------------------------------
# Constrained fiber scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstrainedConfig:
    n_seeds: int = 100
    n_candidates: int = 1000
    tau: float = 0.4
    coupling: float = 0.9
    band: float = 0.12
    ambient_h: float = 1.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.band < 0 or self.ambient_h < 0:
            raise ValidationError("band and ambient range must be nonnegative")

    def seeds(self) -> range:
        return range(self.seed, self.seed + self.n_seeds)


def _interval_scores(lo: np.ndarray, hi: np.ndarray, tau: float, truth: np.ndarray) -> tuple[float, int]:
    pos = lo > tau
    neg = hi <= tau
    false = np.count_nonzero((pos & ~truth) | (neg & truth))
    return float(np.count_nonzero(pos | neg)) / lo.size, int(false)


def run_constrained_fiber_experiment(config: ConstrainedConfig | None = None) -> ExperimentResult:
    """Scalar evidence ``b``, hidden ``h = sin(pi b) + u`` and ``y = b + c h``.

    Compares the benchmark-only threshold decision with the ambient
    certificate (``h`` only known to lie in a box) and the certificate refined
    by the valid constraint band on ``u``.
    """
    config = config or ConstrainedConfig()
    c = config.coupling

    def per_seed(seed: int) -> dict[str, Any]:
        rng = _rng(config.seed, seed)
        b = rng.uniform(-1.0, 1.0, config.n_candidates)
        u = rng.uniform(-config.band, config.band, config.n_candidates)
        h = np.sin(np.pi * b) + u
        y = b + c * h
        truth = y > config.tau
        bench_false = float(np.count_nonzero((b > config.tau) != truth)) / b.size
        amb_cert, amb_false = _interval_scores(b - c * config.ambient_h, b + c * config.ambient_h, config.tau, truth)
        centre = b + c * np.sin(np.pi * b)
        con_cert, con_false = _interval_scores(centre - c * config.band, centre + c * config.band, config.tau, truth)
        return {
            "seed": seed,
            "benchmark_false_rate": bench_false,
            "ambient_certified": amb_cert,
            "ambient_false_certificates": amb_false,
            "constrained_certified": con_cert,
            "constrained_false_certificates": con_false,
        }

    seed_rows = _map_seeds(per_seed, config.seeds())
    return ExperimentResult("constrained", _params(config), tuple(seed_rows), _aggregate(seed_rows),
                            {"constrained_fiber_summary": (_flat(_aggregate(seed_rows)),)})


# ---------------------------------------------------------------------------
# Planted finite-fiber populations
# ---------------------------------------------------------------------------


def planted_fiber_table(
    n_candidates: int = 2000,
    n_fibers: int = 20,
    mixed_share: float = 0.3,
    minority_rate: float = 0.3,
    seed: int = 0,
) -> CandidateTable:
    """Discrete-evidence table where a declared share of fibers carries both labels.

    Pure fibers alternate between all-1 and all-0; in mixed fibers each
    member takes the fiber's minority label with probability ``minority_rate``.
    """
    if n_candidates < 1 or n_fibers < 1:
        raise ValidationError("need at least one candidate and one fiber")
    if not 0 <= mixed_share <= 1 or not 0 <= minority_rate <= 0.5:
        raise ValidationError("mixed_share must lie in [0, 1] and minority_rate in [0, 0.5]")
    rng = _rng(seed)
    fiber = rng.integers(n_fibers, size=n_candidates)
    n_mixed = round(mixed_share * n_fibers)
    flips = rng.random(n_candidates) < minority_rate
    labels = []
    for f, flip in zip(fiber, flips):
        base = int(f) % 2
        labels.append(1 - base if (f < n_mixed and flip) else base)
    width = len(str(n_candidates - 1))
    return CandidateTable(
        ids=tuple(f"c{i:0{width}d}" for i in range(n_candidates)),
        evidence=tuple((f"f{int(f):02d}",) for f in fiber),
        kinds=(DISCRETE,),
        evidence_names=("e_fiber",),
        labels=tuple(labels),
    )


EXPERIMENTS = {
    "transfer": run_transfer_experiment,
    "zero-error": run_zero_error_control,
    "leaderboard": run_leaderboard_experiment,
    "correlation": run_residual_correlation,
    "constrained": run_constrained_fiber_experiment,
    "policies": run_policy_comparison,
}

DEFAULT_CONFIGS: dict[str, Callable[[], Any]] = {
    "transfer": SyntheticConfig,
    "zero-error": zero_error_config,
    "leaderboard": LeaderboardConfig,
    "correlation": CorrelationConfig,
    "constrained": ConstrainedConfig,
    "policies": PolicyConfig,
}


def configure(name: str, seed: int | None = None, n_seeds: int | None = None,
              n_candidates: int | None = None) -> Any:
    """Default config for an experiment with the common overrides applied."""
    if name not in DEFAULT_CONFIGS:
        raise ValidationError(f"unknown experiment {name!r}; choose from {sorted(DEFAULT_CONFIGS)}")
    config = DEFAULT_CONFIGS[name]()
    changes = {k: v for k, v in (("seed", seed), ("n_seeds", n_seeds), ("n_candidates", n_candidates)) if v is not None}
    if hasattr(config, "base"):
        return replace(config, base=replace(config.base, **changes))
    return replace(config, **changes)
