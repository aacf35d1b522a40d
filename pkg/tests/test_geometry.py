import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchcert.errors import NoWitnessError, NumericalError, ValidationError
from benchcert.fibers import Decision
from benchcert.geometry import (
    RADIUS_FACTORS,
    CandidateBound,
    build_geometry,
    certify_arrays,
    certify_interval,
    fiber_variation_bound,
    linearized_residual,
    radius_sensitivity,
    witness_pair,
    orthonormal_basis,
)

import oracles

E = np.eye(3)


def test_orthogonal_deployment_probe():
    assert build_geometry([E[0], E[1]], E[2]).residual_norm == 1.0


def test_half_in_span():
    geo = build_geometry([E[0], E[1]], (E[0] + E[2]) / math.sqrt(2))
    assert geo.residual_norm == pytest.approx(0.7071067811865476, abs=1e-15)


def test_random_geometry_matches_normal_equations():
    rng = np.random.default_rng(7)
    probes = rng.standard_normal((6, 8))
    k = rng.standard_normal(8)
    geo = build_geometry(probes, k)
    ref = oracles.normal_equation_residual(probes, k)
    assert geo.residual_norm == pytest.approx(np.linalg.norm(ref), abs=1e-8)
    assert np.allclose(geo.residual, ref, atol=1e-8)


def test_rank_deficient_probes_are_dropped():
    geo = build_geometry([E[0], 2 * E[0], E[0] + E[1]], E[2])
    assert geo.rank == 2
    assert geo.is_complete() is False


def test_in_span_probe_is_complete():
    geo = build_geometry([E[0], E[1]], E[0] - 3 * E[1])
    assert geo.residual_norm <= 1e-10
    assert geo.is_complete()


def test_no_probes_leaves_everything_null():
    geo = build_geometry(np.zeros((0, 3)), E[1])
    assert geo.rank == 0
    assert geo.residual_norm == 1.0


@pytest.mark.parametrize(
    "probes, k, err",
    [
        ([E[0]], np.zeros(3), "nonzero"),
        ([[1.0, 0.0]], E[0], "dimension"),
        ([[np.nan, 0, 0]], E[0], "finite"),
    ],
)
def test_build_geometry_errors(probes, k, err):
    with pytest.raises(ValidationError, match=err):
        build_geometry(probes, k)


def test_overflow_is_a_numerical_error():
    with pytest.raises(NumericalError):
        build_geometry([[1e200, 1e200, 0.0]], [0.0, 1e200, 1e200])


def test_geometry_is_immutable():
    geo = build_geometry([E[0]], E[1])
    with pytest.raises(ValueError):
        geo.residual[0] = 1.0


def test_witness_pair_examples():
    geo = build_geometry([E[0]], E[1])
    s0, s1, bench_gap, deploy_gap = witness_pair(geo, 1.0)
    assert deploy_gap == 1.0 and bench_gap <= 1e-12
    assert not s0.any()
    half = build_geometry([E[0]], (math.sqrt(3) * E[0] + E[1]) / 2)
    assert witness_pair(half, 2.0)[3] == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(NoWitnessError):
        witness_pair(build_geometry([E[0], E[1]], E[0]), 1.0)


@pytest.mark.parametrize(
    "bound, g, tau, lo, hi, decision",
    [
        (CandidateBound(1.0, 0.0, 0.0), 0.7, 0.5, 1.0, 1.0, Decision.POSITIVE),
        (CandidateBound(0.5, 0.1, 0.2), 0.5, 0.3, 0.3, 0.7, Decision.AMBIGUOUS),
        (CandidateBound(0.0, 0.0, 1.0), 0.3, 0.5, -0.3, 0.3, Decision.NEGATIVE),
    ],
)
def test_certify_interval_examples(bound, g, tau, lo, hi, decision):
    cert = certify_interval(bound, g, tau)
    assert cert.lo == pytest.approx(lo, abs=1e-15)
    assert cert.hi == pytest.approx(hi, abs=1e-15)
    assert cert.decision is decision


def test_boundary_conventions():
    # hi == tau is negative, lo == tau is not positive
    assert certify_interval(CandidateBound(0.25, 0.25, 0.0), 0.0, 0.5).decision is Decision.NEGATIVE
    assert certify_interval(CandidateBound(0.75, 0.25, 0.0), 0.0, 0.5).decision is Decision.AMBIGUOUS


def test_negative_bound_parameters_rejected():
    with pytest.raises(ValidationError):
        CandidateBound(0.0, -0.1, 0.0)
    with pytest.raises(ValidationError):
        CandidateBound(0.0, 0.0, -1.0)


def test_vectorised_certificates_agree_with_scalar():
    rng = np.random.default_rng(3)
    c, d, r = rng.normal(size=50), rng.uniform(0, 0.3, 50), rng.uniform(0, 2, 50)
    classes = certify_arrays(c, d, r, 0.4, 0.1)
    code = {Decision.POSITIVE: 1, Decision.NEGATIVE: -1, Decision.AMBIGUOUS: 0}
    expected = [code[certify_interval(CandidateBound(*x), 0.4, 0.1).decision] for x in zip(c, d, r)]
    assert classes.tolist() == expected


def test_radius_sensitivity_factors():
    rows = radius_sensitivity(np.array([1.0, 0.0]), 0.0, 1.0, 0.5, 0.4)
    assert [r["factor"] for r in rows] == list(RADIUS_FACTORS)
    assert rows[0]["certified_positive"] == 0.5  # R=0.5: 1 - 0.25 > 0.4
    assert rows[-1]["ambiguous"] == 1.0  # R=2: both intervals straddle


def test_fiber_variation_bound():
    assert fiber_variation_bound(0.0, 5.0) == 0.0
    assert fiber_variation_bound(0.5, 2.0) == 1.0
    with pytest.raises(ValidationError):
        fiber_variation_bound(-1.0, 1.0)


def test_fiber_variation_bound_by_sampling():
    rng = np.random.default_rng(11)
    probes = rng.standard_normal((3, 6))
    k = rng.standard_normal(6)
    geo = build_geometry(probes, k)
    R = 1.7
    for _ in range(200):
        u = geo.null_component(rng.standard_normal(6))
        u *= R / np.linalg.norm(u)
        assert abs(k @ u) <= fiber_variation_bound(geo.g, R) + 1e-12
    tight = R * geo.residual / geo.g
    assert abs(k @ tight) == pytest.approx(R * geo.g, rel=1e-12)


def test_linearized_residual_examples():
    g, bound = linearized_residual([E[0], E[1]], E[0] + E[1], 2.0, 0.3)
    assert g <= 1e-12 and bound == pytest.approx(0.5 * 0.3 * 4)
    assert linearized_residual([E[0]], E[1], 1.0, 0.0) == (1.0, 1.0)
    rng = np.random.default_rng(5)
    jac, grad = rng.standard_normal((4, 7)), rng.standard_normal(7)
    g, _ = linearized_residual(jac, grad, 1.0, 0.0)
    assert g == pytest.approx(np.linalg.norm(oracles.normal_equation_residual(jac, grad)), abs=1e-8)
    with pytest.raises(ValidationError):
        linearized_residual([E[0]], E[1], -1.0, 0.0)


def test_certification_shape_with_zero_delta():
    rng = np.random.default_rng(2)
    centers = rng.normal(size=500)
    fractions = [np.count_nonzero(certify_arrays(centers, 0.0, 1.0, g, 0.0)) / 500 for g in np.linspace(0, 2, 9)]
    assert fractions[0] == 1.0
    assert all(a >= b for a, b in zip(fractions, fractions[1:]))


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------


@st.composite
def geometries(draw):
    n = draw(st.integers(2, 16))
    m = draw(st.integers(0, n + 2))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    probes = rng.standard_normal((m, n))
    if m >= 2 and draw(st.booleans()):
        probes[-1] = probes[0] * 2.0 - probes[1]  # force a dependency
    k = rng.standard_normal(n)
    return probes, k, rng


@settings(max_examples=150, deadline=None)
@given(geometries())
def test_projection_properties(data):
    probes, k, rng = data
    geo = build_geometry(probes, k)
    q = geo.basis
    assert np.allclose(q.T @ q, np.eye(geo.rank), atol=1e-10)
    x = rng.standard_normal(k.size)
    assert np.allclose(geo.project(geo.project(x)), geo.project(x), atol=1e-10)
    assert np.dot(k, k) == pytest.approx(np.dot(geo.visible_probe(), geo.visible_probe()) + geo.g**2, abs=1e-8)
    for p in probes:
        assert abs(p @ geo.residual) <= 1e-10 * np.linalg.norm(p) * np.linalg.norm(k) + 1e-12
    assert geo.g == pytest.approx(np.linalg.norm(oracles.lstsq_residual(probes, k)), abs=1e-8)


@settings(max_examples=150, deadline=None)
@given(geometries())
def test_g_is_basis_invariant(data):
    probes, k, rng = data
    if probes.shape[0] == 0:
        return
    mix = rng.standard_normal((probes.shape[0], probes.shape[0])) + 3 * np.eye(probes.shape[0])
    if abs(np.linalg.det(mix)) < 1e-3:
        return
    assert build_geometry(mix @ probes, k).g == pytest.approx(build_geometry(probes, k).g, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(geometries(), st.floats(0.1, 10.0), st.floats(-3, 3), st.floats(0, 1), st.floats(0, 2), st.floats(-1, 1))
def test_class_is_scale_invariant(data, c, center, delta, radius, tau):
    probes, k, _ = data
    g = build_geometry(probes, k).g
    gc = build_geometry(probes, c * k).g
    assert gc == pytest.approx(c * g, rel=1e-9, abs=1e-12)
    base = certify_interval(CandidateBound(center, delta, radius), g, tau).decision
    # compare the class after scaling, skipping exact-boundary cases that rounding can flip
    w = delta + radius * g
    if min(abs(center - w - tau), abs(center + w - tau)) < 1e-9:
        return
    scaled = certify_interval(CandidateBound(c * center, c * delta, radius), gc, c * tau).decision
    assert scaled is base


def test_orthonormal_basis_drops_zero_vectors():
    assert orthonormal_basis([np.zeros(3), E[0]], 3).shape == (3, 1)
