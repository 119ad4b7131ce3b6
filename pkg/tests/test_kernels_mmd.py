"""Kernel / MMD estimator tests against independent oracles.

The reference implementations here are deliberately written as literal
quadruple loops over scalar kernel evaluations, sharing no code with the
vectorized module under test.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from euda.errors import ContractError
from euda.kernels_mmd import (
    KernelSpec,
    median_heuristic,
    mmd2_biased,
    mmd2_grad,
    mmd2_unbiased,
    resolve_bandwidths,
    resolve_kernel,
)

RBF1 = KernelSpec(family="rbf_multi", bandwidths=(1.0,), bandwidth_mode="explicit")
LIN = KernelSpec.linear()


def _k_scalar(a, b, family, sigmas):
    if family == "linear":
        return float(np.dot(a, b))
    d2 = float(np.sum((a - b) ** 2))
    return sum(math.exp(-d2 / (2.0 * s * s)) for s in sigmas)


def brute_biased(Z_s, Z_t, kernel):
    sigmas = resolve_bandwidths(kernel, Z_s, Z_t)
    n_s, n_t = len(Z_s), len(Z_t)
    ss = sum(
        _k_scalar(Z_s[i], Z_s[j], kernel.family, sigmas)
        for i in range(n_s)
        for j in range(n_s)
    )
    tt = sum(
        _k_scalar(Z_t[i], Z_t[j], kernel.family, sigmas)
        for i in range(n_t)
        for j in range(n_t)
    )
    st_ = sum(
        _k_scalar(Z_s[i], Z_t[j], kernel.family, sigmas)
        for i in range(n_s)
        for j in range(n_t)
    )
    return max(ss / n_s**2 + tt / n_t**2 - 2.0 * st_ / (n_s * n_t), 0.0)


def brute_unbiased(Z_s, Z_t, kernel):
    sigmas = resolve_bandwidths(kernel, Z_s, Z_t)
    n_s, n_t = len(Z_s), len(Z_t)
    ss = sum(
        _k_scalar(Z_s[i], Z_s[j], kernel.family, sigmas)
        for i in range(n_s)
        for j in range(n_s)
        if i != j
    )
    tt = sum(
        _k_scalar(Z_t[i], Z_t[j], kernel.family, sigmas)
        for i in range(n_t)
        for j in range(n_t)
        if i != j
    )
    st_ = sum(
        _k_scalar(Z_s[i], Z_t[j], kernel.family, sigmas)
        for i in range(n_s)
        for j in range(n_t)
    )
    return ss / (n_s * (n_s - 1)) + tt / (n_t * (n_t - 1)) - 2.0 * st_ / (n_s * n_t)


# ---------------------------------------------------------------- median


def test_median_hand_enumerated():
    # points 0, 1, 3 on the line: squared gaps 1, 9, 4, median 4
    Z = np.array([[0.0], [1.0]])
    W = np.array([[3.0]])
    assert median_heuristic(Z, W) == 4.0


def test_median_degenerate_falls_back_to_one():
    Z = np.array([[2.0, 2.0]])
    assert median_heuristic(Z, Z.copy()) == 1.0


@given(
    arrays(np.float64, (4, 3), elements=st.floats(-5, 5)),
    arrays(np.float64, (3, 3), elements=st.floats(-5, 5)),
    st.floats(0.1, 10.0),
)
@settings(max_examples=50)
def test_median_scales_quadratically(A, B, c):
    base = median_heuristic(A, B)
    scaled = median_heuristic(c * A, c * B)
    if base == 1.0:  # degenerate fallback is scale-free
        assert scaled == 1.0
    else:
        assert scaled == pytest.approx(c * c * base, rel=1e-9)


def test_median_needs_two_pooled_points():
    Z = np.zeros((1, 2))
    with pytest.raises(ContractError):
        median_heuristic(Z[:1], Z[:0])


# ---------------------------------------------------------------- values


def test_biased_closed_form_two_points():
    # sigma=1, points 0 and 2: k(0,0)=k(2,2)=1, k(0,2)=e^{-2}
    got = mmd2_biased(np.array([[0.0]]), np.array([[2.0]]), RBF1)
    assert got == pytest.approx(2.0 - 2.0 * math.exp(-2.0), abs=1e-12)
    assert got == pytest.approx(1.7293294335267746, abs=1e-12)


def test_biased_zero_on_identical_samples():
    rng = np.random.default_rng(7)
    Z = rng.normal(size=(6, 4))
    assert mmd2_biased(Z, Z.copy(), KernelSpec.default_rbf()) <= 1e-12


def test_linear_kernel_is_mean_gap():
    rng = np.random.default_rng(11)
    for _ in range(100):
        Z_s = rng.normal(size=(rng.integers(1, 9), 3))
        Z_t = rng.normal(size=(rng.integers(1, 9), 3)) + 0.5
        want = float(np.sum((Z_s.mean(axis=0) - Z_t.mean(axis=0)) ** 2))
        assert mmd2_biased(Z_s, Z_t, LIN) == pytest.approx(want, abs=1e-12)


def test_unbiased_matches_brute_force_10x3():
    rng = np.random.default_rng(3)
    Z_s = rng.normal(size=(10, 3))
    Z_t = rng.normal(size=(10, 3)) + 1.0
    for kernel in (KernelSpec.default_rbf(), RBF1, LIN):
        got = mmd2_unbiased(Z_s, Z_t, kernel)
        assert got == pytest.approx(brute_unbiased(Z_s, Z_t, kernel), abs=1e-10)


def test_biased_matches_brute_force_random():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n_s, n_t, z = rng.integers(1, 13), rng.integers(1, 13), rng.integers(1, 5)
        Z_s = rng.normal(size=(n_s, z)) * 2.0
        Z_t = rng.normal(size=(n_t, z)) + rng.normal()
        for kernel in (KernelSpec.default_rbf(), LIN):
            got = mmd2_biased(Z_s, Z_t, kernel)
            assert got == pytest.approx(brute_biased(Z_s, Z_t, kernel), abs=1e-10)


def test_unbiased_near_zero_in_expectation():
    # same-distribution draws: U-statistic averages out to ~0
    rng = np.random.default_rng(13)
    kernel = KernelSpec.default_rbf()
    vals = []
    for _ in range(200):
        A = rng.normal(size=(50, 3))
        B = rng.normal(size=(50, 3))
        vals.append(mmd2_unbiased(A, B, kernel))
    assert abs(float(np.mean(vals))) < 0.01


def test_unbiased_close_to_biased_for_duplicate_rows():
    Z_s = np.zeros((2, 2))
    Z_t = np.full((2, 2), 10.0)
    b = mmd2_biased(Z_s, Z_t, RBF1)
    u = mmd2_unbiased(Z_s, Z_t, RBF1)
    assert u > 1.9
    assert u == pytest.approx(b, abs=1e-9)


def test_unbiased_rejects_singletons():
    Z = np.zeros((1, 2))
    with pytest.raises(ContractError):
        mmd2_unbiased(Z, np.zeros((3, 2)), RBF1)
    with pytest.raises(ContractError):
        mmd2_unbiased(np.zeros((3, 2)), Z, RBF1)


def test_non_finite_rejected():
    bad = np.array([[np.nan, 0.0]])
    with pytest.raises(ContractError):
        mmd2_biased(bad, np.zeros((2, 2)), RBF1)
    with pytest.raises(ContractError):
        mmd2_grad(np.zeros((2, 2)), np.array([[np.inf, 0.0]]), RBF1)


def test_dim_mismatch_rejected():
    with pytest.raises(ContractError):
        mmd2_biased(np.zeros((2, 3)), np.zeros((2, 4)), RBF1)


# ------------------------------------------------------------ properties


@given(
    arrays(np.float64, (5, 2), elements=st.floats(-3, 3)),
    arrays(np.float64, (4, 2), elements=st.floats(-3, 3)),
)
@settings(max_examples=60)
def test_symmetry_is_exact(A, B):
    for kernel in (KernelSpec.default_rbf(), LIN):
        assert mmd2_biased(A, B, kernel) == mmd2_biased(B, A, kernel)
        assert mmd2_unbiased(A, B, kernel) == mmd2_unbiased(B, A, kernel)


@given(
    arrays(np.float64, (6, 3), elements=st.floats(-3, 3)),
    arrays(np.float64, (5, 3), elements=st.floats(-3, 3)),
    st.permutations(range(6)),
    st.permutations(range(5)),
)
@settings(max_examples=40)
def test_row_order_does_not_matter(A, B, pa, pb):
    kernel = KernelSpec.default_rbf()
    base_b = mmd2_biased(A, B, kernel)
    base_u = mmd2_unbiased(A, B, kernel)
    assert mmd2_biased(A[list(pa)], B[list(pb)], kernel) == pytest.approx(
        base_b, abs=1e-12
    )
    assert mmd2_unbiased(A[list(pa)], B[list(pb)], kernel) == pytest.approx(
        base_u, abs=1e-12
    )


@given(
    arrays(np.float64, (4, 2), elements=st.floats(-4, 4)),
    arrays(np.float64, (6, 2), elements=st.floats(-4, 4)),
)
@settings(max_examples=60)
def test_biased_never_negative(A, B):
    assert mmd2_biased(A, B, KernelSpec.default_rbf()) >= 0.0
    assert mmd2_biased(A, B, LIN) >= 0.0


def test_grows_with_mean_shift():
    rng = np.random.default_rng(29)
    A = rng.normal(size=(40, 3))
    B = rng.normal(size=(40, 3))
    kernel = KernelSpec.default_rbf()
    vals = [mmd2_biased(A, B + off, kernel) for off in (0.0, 1.0, 2.0, 4.0)]
    assert vals == sorted(vals)
    assert vals[0] < vals[-1]


# ------------------------------------------------------------- gradients


def _fd_grad(f, Z, h=1e-5):
    g = np.zeros_like(Z)
    for idx in np.ndindex(Z.shape):
        Zp = Z.copy()
        Zp[idx] += h
        Zm = Z.copy()
        Zm[idx] -= h
        g[idx] = (f(Zp) - f(Zm)) / (2.0 * h)
    return g


def _max_rel_err(a, f):
    return float(np.max(np.abs(a - f) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))))


@pytest.mark.parametrize("estimator", ["biased", "unbiased"])
@pytest.mark.parametrize("base", [KernelSpec.default_rbf(), RBF1, LIN])
def test_grad_matches_finite_differences(base, estimator):
    rng = np.random.default_rng(17)
    Z_s = rng.normal(size=(6, 3))
    Z_t = rng.normal(size=(5, 3)) + 0.8
    kernel = resolve_kernel(base, Z_s, Z_t)  # pin bandwidths for the FD probe
    value_fn = mmd2_biased if estimator == "biased" else mmd2_unbiased
    dZ_s, dZ_t, value = mmd2_grad(Z_s, Z_t, kernel, estimator=estimator)
    assert value == value_fn(Z_s, Z_t, kernel)
    fd_s = _fd_grad(lambda Z: value_fn(Z, Z_t, kernel), Z_s)
    fd_t = _fd_grad(lambda Z: value_fn(Z_s, Z, kernel), Z_t)
    assert _max_rel_err(dZ_s, fd_s) < 1e-6
    assert _max_rel_err(dZ_t, fd_t) < 1e-6


def test_grad_vanishes_at_coincidence():
    rng = np.random.default_rng(23)
    Z = rng.normal(size=(5, 3))
    dZ_s, dZ_t, value = mmd2_grad(Z, Z.copy(), KernelSpec.default_rbf())
    assert value == 0.0
    assert np.max(np.abs(dZ_s + dZ_t)) == 0.0


def test_grad_linear_closed_form():
    rng = np.random.default_rng(31)
    Z_s = rng.normal(size=(7, 4))
    Z_t = rng.normal(size=(3, 4)) + 1.5
    dZ_s, dZ_t, _ = mmd2_grad(Z_s, Z_t, LIN)
    gap = Z_s.mean(axis=0) - Z_t.mean(axis=0)
    want_s = 2.0 * gap / Z_s.shape[0]
    want_t = -2.0 * gap / Z_t.shape[0]
    assert np.allclose(dZ_s, np.tile(want_s, (7, 1)), atol=1e-12)
    assert np.allclose(dZ_t, np.tile(want_t, (3, 1)), atol=1e-12)


def test_grad_rejects_unknown_estimator():
    Z = np.zeros((3, 2))
    with pytest.raises(ContractError):
        mmd2_grad(Z, Z, RBF1, estimator="jackknife")


def test_resolve_kernel_freezes_median_choice():
    rng = np.random.default_rng(37)
    A, B = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
    frozen = resolve_kernel(KernelSpec.default_rbf(), A, B)
    assert frozen.bandwidth_mode == "explicit"
    med = median_heuristic(A, B)
    want = tuple(math.sqrt(m * med / 2.0) for m in (0.25, 0.5, 1.0, 2.0, 4.0))
    assert frozen.bandwidths == pytest.approx(want)
    # frozen kernel reproduces the adaptive one on the same pair
    assert mmd2_biased(A, B, frozen) == mmd2_biased(A, B, KernelSpec.default_rbf())


def test_kernel_spec_validation():
    with pytest.raises(ContractError):
        KernelSpec(family="poly").validate()
    with pytest.raises(ContractError):
        KernelSpec(bandwidths=(), bandwidth_mode="explicit").validate()
    with pytest.raises(ContractError):
        KernelSpec(bandwidths=(-1.0,), bandwidth_mode="explicit").validate()
    with pytest.raises(ContractError):
        KernelSpec(median_multipliers=()).validate()
    KernelSpec.linear().validate()  # bandwidth fields ignored
