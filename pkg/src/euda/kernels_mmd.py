"""Kernel evaluation and squared maximum-mean-discrepancy estimation.

Estimates the squared distance between the mean embeddings of two samples
in the RKHS induced by the configured kernel. The RBF family sums
``exp(-||a-b||^2 / (2 sigma^2))`` over a list of bandwidths; the linear
kernel is kept because its MMD^2 collapses to the squared distance of the
sample means, which makes it a sharp analytic test case.

Cross-Gram sums are accumulated in sorted order so that swapping the two
samples reproduces bit-identical estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError

DEFAULT_MEDIAN_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth policy.

    ``bandwidth_mode="explicit"`` uses ``bandwidths`` as-is. With
    ``"median_times"`` the bandwidths are derived per call from the median
    heuristic: multiplier c yields sigma = sqrt(c * median / 2), i.e. the
    kernel term exp(-||a-b||^2 / (c * median)).
    """

    family: str = "rbf_multi"
    bandwidths: tuple[float, ...] = ()
    bandwidth_mode: str = "median_times"
    median_multipliers: tuple[float, ...] = DEFAULT_MEDIAN_MULTIPLIERS

    def validate(self) -> None:
        if self.family not in ("rbf_multi", "linear"):
            raise ContractError(f"unknown kernel family '{self.family}'")
        if self.family == "linear":
            return
        if self.bandwidth_mode == "explicit":
            if not self.bandwidths:
                raise ContractError("explicit rbf kernel needs at least one bandwidth")
            if any(b <= 0 for b in self.bandwidths):
                raise ContractError("bandwidths must be positive")
        elif self.bandwidth_mode == "median_times":
            if not self.median_multipliers:
                raise ContractError("median_times needs at least one multiplier")
            if any(m <= 0 for m in self.median_multipliers):
                raise ContractError("median multipliers must be positive")
        else:
            raise ContractError(f"unknown bandwidth_mode '{self.bandwidth_mode}'")

    @classmethod
    def default_rbf(cls) -> "KernelSpec":
        return cls()

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(family="linear")


def _check_sample(Z: np.ndarray, name: str, min_rows: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got ndim={Z.ndim}")
    if Z.shape[0] < min_rows:
        raise ContractError(f"{name} needs >= {min_rows} rows, got {Z.shape[0]}")
    if not np.all(np.isfinite(Z)):
        raise ContractError(f"{name} contains non-finite entries")
    return Z


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def median_heuristic(Z_s: np.ndarray, Z_t: np.ndarray) -> float:
    """Median of pairwise squared distances over the pooled sample.

    All distinct unordered pairs count once; a zero median (all points
    coincide) falls back to 1.0 so downstream bandwidths stay positive.
    """
    Z_s = _check_sample(Z_s, "Z_s", 1)
    Z_t = _check_sample(Z_t, "Z_t", 1)
    pooled = np.vstack([Z_s, Z_t])
    if pooled.shape[0] < 2:
        raise ContractError("median heuristic needs at least 2 pooled points")
    dists = _sq_dists(pooled, pooled)
    iu = np.triu_indices(pooled.shape[0], k=1)
    med = float(np.median(dists[iu]))
    return med if med > 0.0 else 1.0


def resolve_bandwidths(
    kernel: KernelSpec, Z_s: np.ndarray, Z_t: np.ndarray
) -> tuple[float, ...]:
    """Concrete sigma list for this sample pair (empty for linear kernels)."""
    kernel.validate()
    if kernel.family == "linear":
        return ()
    if kernel.bandwidth_mode == "explicit":
        return tuple(float(b) for b in kernel.bandwidths)
    med = median_heuristic(Z_s, Z_t)
    return tuple(float(np.sqrt(m * med / 2.0)) for m in kernel.median_multipliers)


def resolve_kernel(kernel: KernelSpec, Z_s: np.ndarray, Z_t: np.ndarray) -> KernelSpec:
    """Freeze a median_times kernel into an explicit one for this pair."""
    if kernel.family == "linear" or kernel.bandwidth_mode == "explicit":
        kernel.validate()
        return kernel
    return KernelSpec(
        family=kernel.family,
        bandwidths=resolve_bandwidths(kernel, Z_s, Z_t),
        bandwidth_mode="explicit",
    )


def _gram(A: np.ndarray, B: np.ndarray, family: str, sigmas: tuple[float, ...]) -> np.ndarray:
    if family == "linear":
        return A @ B.T
    D = _sq_dists(A, B)
    K = np.zeros_like(D)
    for s in sigmas:
        K += np.exp(-D / (2.0 * s * s))
    return K


def _sorted_sum(K: np.ndarray) -> float:
    # Summing in value order makes the cross term invariant to transposes,
    # so mmd2(A, B) == mmd2(B, A) holds bitwise.
    return float(np.sum(np.sort(K, axis=None)))


def _estimator_terms(
    Z_s: np.ndarray, Z_t: np.ndarray, kernel: KernelSpec
) -> tuple[float, float, float, int, int]:
    sigmas = resolve_bandwidths(kernel, Z_s, Z_t)
    K_ss = _gram(Z_s, Z_s, kernel.family, sigmas)
    K_tt = _gram(Z_t, Z_t, kernel.family, sigmas)
    K_st = _gram(Z_s, Z_t, kernel.family, sigmas)
    return (
        float(np.sum(K_ss)),
        float(np.sum(K_tt)),
        _sorted_sum(K_st),
        Z_s.shape[0],
        Z_t.shape[0],
    )


def mmd2_biased(Z_s: np.ndarray, Z_t: np.ndarray, kernel: KernelSpec) -> float:
    """V-statistic MMD^2 estimate, clamped at zero against rounding residue."""
    Z_s = _check_sample(Z_s, "Z_s", 1)
    Z_t = _check_sample(Z_t, "Z_t", 1)
    if Z_s.shape[1] != Z_t.shape[1]:
        raise ContractError("Z_s and Z_t must share the embedding dimension")
    ss, tt, st, n_s, n_t = _estimator_terms(Z_s, Z_t, kernel)
    value = ss / (n_s * n_s) + tt / (n_t * n_t) - 2.0 * st / (n_s * n_t)
    return max(value, 0.0)


def mmd2_unbiased(Z_s: np.ndarray, Z_t: np.ndarray, kernel: KernelSpec) -> float:
    """U-statistic MMD^2 estimate; unbiased, may be negative."""
    Z_s = _check_sample(Z_s, "Z_s", 2)
    Z_t = _check_sample(Z_t, "Z_t", 2)
    if Z_s.shape[1] != Z_t.shape[1]:
        raise ContractError("Z_s and Z_t must share the embedding dimension")
    sigmas = resolve_bandwidths(kernel, Z_s, Z_t)
    K_ss = _gram(Z_s, Z_s, kernel.family, sigmas)
    K_tt = _gram(Z_t, Z_t, kernel.family, sigmas)
    K_st = _gram(Z_s, Z_t, kernel.family, sigmas)
    n_s, n_t = Z_s.shape[0], Z_t.shape[0]
    ss = float(np.sum(K_ss) - np.sum(np.diag(K_ss)))
    tt = float(np.sum(K_tt) - np.sum(np.diag(K_tt)))
    st = _sorted_sum(K_st)
    return ss / (n_s * (n_s - 1)) + tt / (n_t * (n_t - 1)) - 2.0 * st / (n_s * n_t)


def mmd2_grad(
    Z_s: np.ndarray,
    Z_t: np.ndarray,
    kernel: KernelSpec,
    estimator: str = "biased",
) -> tuple[np.ndarray, np.ndarray, float]:
    """Analytic d(MMD^2)/dZ for both samples, plus the estimate itself.

    Bandwidths resolved from the median heuristic are treated as constants:
    the gradient does not flow through the bandwidth selection. For the RBF
    family, d k(a, b) / da = -(a - b) / sigma^2 * k_sigma(a, b), summed over
    bandwidths; within-domain diagonal terms contribute nothing. The returned
    value matches :func:`mmd2_biased` / :func:`mmd2_unbiased` exactly.
    """
    if estimator not in ("biased", "unbiased"):
        raise ContractError(f"unknown estimator '{estimator}'")
    min_rows = 1 if estimator == "biased" else 2
    Z_s = _check_sample(Z_s, "Z_s", min_rows)
    Z_t = _check_sample(Z_t, "Z_t", min_rows)
    if Z_s.shape[1] != Z_t.shape[1]:
        raise ContractError("Z_s and Z_t must share the embedding dimension")

    frozen = resolve_kernel(kernel, Z_s, Z_t)
    n_s, n_t = Z_s.shape[0], Z_t.shape[0]
    if estimator == "biased":
        value = mmd2_biased(Z_s, Z_t, frozen)
        norm_s = float(n_s * n_s)
        norm_t = float(n_t * n_t)
    else:
        value = mmd2_unbiased(Z_s, Z_t, frozen)
        norm_s = float(n_s * (n_s - 1))
        norm_t = float(n_t * (n_t - 1))
    cross = float(n_s * n_t)

    if frozen.family == "linear":
        sum_s = Z_s.sum(axis=0)
        sum_t = Z_t.sum(axis=0)
        if estimator == "biased":
            d_within_s = np.broadcast_to(2.0 * sum_s / norm_s, Z_s.shape)
            d_within_t = np.broadcast_to(2.0 * sum_t / norm_t, Z_t.shape)
        else:
            # diagonal pairs are excluded, so each row sees the sum minus itself
            d_within_s = 2.0 * (sum_s[None, :] - Z_s) / norm_s
            d_within_t = 2.0 * (sum_t[None, :] - Z_t) / norm_t
        dZ_s = np.ascontiguousarray(d_within_s - 2.0 * sum_t / cross)
        dZ_t = np.ascontiguousarray(d_within_t - 2.0 * sum_s / cross)
        return dZ_s, dZ_t, value

    dZ_s = np.zeros_like(Z_s)
    dZ_t = np.zeros_like(Z_t)
    D_ss = _sq_dists(Z_s, Z_s)
    D_tt = _sq_dists(Z_t, Z_t)
    D_st = _sq_dists(Z_s, Z_t)
    for s in frozen.bandwidths:
        inv = 1.0 / (s * s)
        K_ss = np.exp(-D_ss * (0.5 * inv))
        K_tt = np.exp(-D_tt * (0.5 * inv))
        K_st = np.exp(-D_st * (0.5 * inv))
        # within-domain: sum_j (x_p - x_j) K[p, j] = x_p * rowsum_p - (K X)_p
        rs = K_ss.sum(axis=1)
        dZ_s += (-2.0 * inv / norm_s) * (Z_s * rs[:, None] - K_ss @ Z_s)
        rt = K_tt.sum(axis=1)
        dZ_t += (-2.0 * inv / norm_t) * (Z_t * rt[:, None] - K_tt @ Z_t)
        # cross: the -2C/(n_s n_t) term flips the sign once more
        cs = K_st.sum(axis=1)
        dZ_s += (2.0 * inv / cross) * (Z_s * cs[:, None] - K_st @ Z_t)
        ct = K_st.sum(axis=0)
        dZ_t += (2.0 * inv / cross) * (Z_t * ct[:, None] - K_st.T @ Z_s)
    return dZ_s, dZ_t, value
