"""Debiased covariance estimation and optimal eigenvalue shrinkage under diagonal reduction."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateReductionError
from .model import DataSet, NoiseModel, ReducedModelConfig
from .spike_maps import cos_forward, spike_forward, spike_inverse


class Loss(enum.Enum):
    OPERATOR = "op"
    FROBENIUS = "fro"


class Provenance(enum.Enum):
    DEBIASED = "debiased"
    DEBIASED_SHRUNK = "debiased_shrunk"
    ALT_LINEAR_SYSTEM = "alt_linear_system"


class SpikeQuantity(enum.Enum):
    EIGENVALUE = "eigenvalue"
    COS_SQ = "cos_sq"


@dataclass(frozen=True)
class ShrinkageRule:
    """Loss to optimise and the margin above the bulk edge below which eigenvalues are zeroed.

    ``bulk_margin=None`` means 5% of the bulk edge.
    """

    loss: Loss = Loss.FROBENIUS
    noise_model: NoiseModel = NoiseModel.REDUCED
    bulk_margin: float | None = None

    def __post_init__(self) -> None:
        if self.bulk_margin is not None and not self.bulk_margin > 0:
            raise ValueError("bulk_margin must be positive")


@dataclass(frozen=True)
class CovEstimate:
    """Symmetric covariance estimate with its eigendecomposition (eigenvalues descending)."""

    sigma_hat: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    provenance: Provenance
    moments_estimated: bool = False
    n_flagged: int = 0

    @classmethod
    def from_matrix(cls, sigma: np.ndarray, provenance: Provenance, **kw) -> "CovEstimate":
        sigma = 0.5 * (sigma + sigma.T)
        vals, vecs = np.linalg.eigh(sigma)
        order = np.argsort(vals)[::-1]
        return cls(sigma, vals[order], vecs[:, order], provenance, **kw)


def sample_covariance(data: DataSet | np.ndarray) -> np.ndarray:
    """Uncentred sample covariance ``Y^T Y / n``."""
    y = data.y if isinstance(data, DataSet) else np.asarray(data, dtype=float)
    if y.ndim != 2 or y.shape[0] == 0 or y.shape[1] == 0:
        raise ValueError("sample_covariance needs a non-empty n x p matrix")
    return y.T @ y / y.shape[0]


def estimate_reduction_moments(d: np.ndarray) -> tuple[float, float]:
    """Sample mean and (population) variance of all reduction entries."""
    d = np.asarray(d, dtype=float)
    if d.size < 2:
        raise ValueError("need at least two reduction entries")
    return float(d.mean()), float(d.var())


def _moments(config: ReducedModelConfig) -> tuple[float, float, float]:
    mu, s2 = config.mu, config.sigma2
    if mu == 0:
        raise DegenerateReductionError("reduction mean is zero; the signal is not identifiable")
    return mu, s2, mu**2 + s2


def debias(
    sigma_y: np.ndarray,
    config: ReducedModelConfig,
    noise_model: NoiseModel | None = None,
    moments_estimated: bool = False,
) -> CovEstimate:
    """Remove the reduction and noise bias from ``sigma_y``.

    Reduced noise:   ``S/mu^2 - sigma^2/(m mu^2) diag(S) - I``.
    Unreduced noise: the same with ``I/m`` subtracted instead of ``I``.
    """
    mu, s2, m = _moments(config)
    noise_model = noise_model or config.noise_model
    sigma_y = np.asarray(sigma_y, dtype=float)
    p = sigma_y.shape[0]
    shift = 1.0 if noise_model is NoiseModel.REDUCED else 1.0 / m
    est = sigma_y / mu**2 - (s2 / (m * mu**2)) * np.diag(np.diag(sigma_y)) - shift * np.eye(p)
    return CovEstimate.from_matrix(est, Provenance.DEBIASED, moments_estimated=moments_estimated)


def _scale(config: ReducedModelConfig, noise_model: NoiseModel | None = None) -> float:
    """``delta`` under reduced noise, ``mu^2`` under unreduced noise."""
    noise_model = noise_model or config.noise_model
    return config.delta if noise_model is NoiseModel.REDUCED else config.mu**2


def debiased_bulk_edge(config: ReducedModelConfig, noise_model: NoiseModel | None = None) -> float:
    """Upper edge ``((1 + sqrt(gamma))^2 - 1) / scale`` of the debiased noise spectrum."""
    return ((1 + math.sqrt(config.gamma)) ** 2 - 1) / _scale(config, noise_model)


def limit_spike(
    ell: float,
    config: ReducedModelConfig,
    which: SpikeQuantity = SpikeQuantity.EIGENVALUE,
    noise_model: NoiseModel | None = None,
) -> float:
    """Almost-sure limit of a top eigenvalue of the debiased estimator, or its squared cosine."""
    a = _scale(config, noise_model)
    if which is SpikeQuantity.COS_SQ:
        return cos_forward(a * ell, config.gamma)
    return (spike_forward(a * ell, config.gamma) - 1) / a


def optimal_shrinker(lam: float, rule: ShrinkageRule, config: ReducedModelConfig) -> float:
    """Optimal shrunken value for a single debiased eigenvalue ``lam``.

    Eigenvalues at or below the bulk edge plus margin collapse to zero.
    """
    edge = debiased_bulk_edge(config, rule.noise_model)
    margin = 0.05 * edge if rule.bulk_margin is None else rule.bulk_margin
    if lam <= edge + margin:
        return 0.0
    a = _scale(config, rule.noise_model)
    eff = spike_inverse(a * lam + 1, config.gamma)
    if rule.loss is Loss.OPERATOR:
        return eff / a
    return eff * cos_forward(eff, config.gamma) / a


def shrink_eigenvalues(
    est: CovEstimate,
    rule: ShrinkageRule,
    config: ReducedModelConfig,
    rank: int | None = None,
) -> CovEstimate:
    """Apply the optimal shrinker to ``est``'s spectrum, keeping its eigenvectors.

    When ``rank`` is given only the top ``rank`` eigenvalues are eligible.
    """
    if est.provenance is Provenance.DEBIASED_SHRUNK:
        raise ValueError("estimate has already been shrunk")
    vals = est.eigenvalues
    k_max = len(vals) if rank is None else min(rank, len(vals))
    shrunk = np.zeros_like(vals)
    for k in range(k_max):
        shrunk[k] = optimal_shrinker(float(vals[k]), rule, config)
    keep = np.flatnonzero(shrunk)
    vecs = est.eigenvectors[:, keep]
    sigma = (vecs * shrunk[keep]) @ vecs.T
    return CovEstimate(
        sigma_hat=sigma,
        eigenvalues=shrunk,
        eigenvectors=est.eigenvectors,
        provenance=Provenance.DEBIASED_SHRUNK,
        moments_estimated=est.moments_estimated,
        n_flagged=est.n_flagged,
    )


def asymptotic_loss(rule: ShrinkageRule, config: ReducedModelConfig) -> float:
    """Limiting loss of the optimally shrunk estimator.

    Operator norm: ``max_k l_k s_k`` with ``s_k^2 = 1 - c_k^2``; this is
    attained at the top spike.  Squared Frobenius: ``sum_k (1 - c_k^4) l_k^2``.
    """
    a = _scale(config, rule.noise_model)
    ells = np.asarray(config.spikes, dtype=float)
    if ells.size == 0:
        return 0.0
    c2 = np.array([cos_forward(a * ell, config.gamma) for ell in ells])
    if rule.loss is Loss.OPERATOR:
        return float(np.max(ells * np.sqrt(1 - c2)))
    return float(np.sum((1 - c2**2) * ells**2))


def alt_estimator(
    data: DataSet,
    noise_model: NoiseModel = NoiseModel.REDUCED,
) -> CovEstimate:
    """Solve ``(1/n) sum_k D_k X D_k = RHS`` entrywise.

    With diagonal ``D_k`` the left side is ``M * X`` (Hadamard) with
    ``M = D^T D / n``.  ``RHS = Y^T Y / n - I`` (unreduced noise) or
    ``Y^T Y / n - diag(mean D^2)`` (reduced noise).  Entries with ``M_ij = 0``
    carry no information; they are set to zero and counted in ``n_flagged``.
    """
    y, d = data.y, data.d
    n = y.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")
    mix = d.T @ d / n
    rhs = y.T @ y / n
    if noise_model is NoiseModel.REDUCED:
        rhs = rhs - np.diag(np.diag(mix))
    else:
        rhs = rhs - np.eye(y.shape[1])
    empty = mix == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(empty, 0.0, rhs / np.where(empty, 1.0, mix))
    return CovEstimate.from_matrix(sigma, Provenance.ALT_LINEAR_SYSTEM, n_flagged=int(empty.sum()))


def relative_difference(a: CovEstimate | np.ndarray, b: CovEstimate | np.ndarray) -> float:
    """``||A - B||_F / ||A||_F``."""
    a_mat = a.sigma_hat if isinstance(a, CovEstimate) else np.asarray(a)
    b_mat = b.sigma_hat if isinstance(b, CovEstimate) else np.asarray(b)
    if a_mat.shape != b_mat.shape:
        raise ValueError(f"shape mismatch {a_mat.shape} vs {b_mat.shape}")
    denom = np.linalg.norm(a_mat)
    if denom == 0:
        raise ZeroDivisionError("reference matrix is zero")
    return float(np.linalg.norm(a_mat - b_mat) / denom)


def estimate_covariance(
    data: DataSet,
    config: ReducedModelConfig,
    rule: ShrinkageRule | None = None,
    rank: int | None = None,
    alternative: bool = False,
) -> tuple[CovEstimate, CovEstimate]:
    """Debias (or solve the alternative system) and shrink; returns ``(raw, shrunk)``."""
    rule = rule or ShrinkageRule(noise_model=config.noise_model)
    if alternative:
        raw = alt_estimator(data, rule.noise_model)
    else:
        raw = debias(sample_covariance(data), config, rule.noise_model)
    return raw, shrink_eigenvalues(raw, rule, config, rank=rank)


def covariance_losses(sigma_true: np.ndarray, estimate: CovEstimate | np.ndarray) -> tuple[float, float]:
    """Operator-norm and squared-Frobenius losses of ``estimate`` against ``sigma_true``."""
    est = estimate.sigma_hat if isinstance(estimate, CovEstimate) else np.asarray(estimate)
    diff = sigma_true - est
    return float(np.linalg.norm(diff, 2)), float(np.sum(diff * diff))
