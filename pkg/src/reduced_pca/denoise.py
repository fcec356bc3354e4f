"""BLP / EBLP denoising: optimal coefficients, asymptotic MSE, and matrix denoisers.

All formulas are written with two model constants:

* ``kappa`` -- the per-coordinate noise level of the observations: ``m``
  under reduced noise, ``1`` under unreduced noise;
* ``a = mu^2 l / kappa`` -- the effective spike that sets the limiting sample
  spike ``lambda(a)`` and squared cosine ``c^2(a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .covariance import estimate_reduction_moments
from .model import DataSet, DenoiserMode, DenoiserSpec, NoiseModel, ReducedModelConfig
from .spike_maps import cos_forward, spike_forward, spike_inverse


def _constants(config: ReducedModelConfig) -> tuple[float, float]:
    kappa = config.second_moment if config.noise_model is NoiseModel.REDUCED else 1.0
    return config.mu, kappa


def optimal_coefficients(config: ReducedModelConfig, mode: DenoiserMode) -> list[float]:
    """Asymptotically optimal per-spike coefficients for ``mode``."""
    mu, kappa = _constants(config)
    out = []
    for ell in config.spikes:
        a = mu**2 * ell / kappa
        c2 = cos_forward(a, config.gamma)
        if mode is DenoiserMode.BLP:
            out.append(mu * ell / (mu**2 * ell + kappa))
        elif mode is DenoiserMode.EBLP_IN_SAMPLE:
            out.append(mu * ell * c2 / (mu**2 * ell + kappa))
        else:
            out.append(mu * ell * c2 / (kappa + mu**2 * ell * c2))
    return out


def single_spike_amse(ell: float, eta: float, config: ReducedModelConfig, mode: DenoiserMode) -> float:
    """AMSE of a one-spike denoiser with coefficient ``eta``."""
    mu, kappa = _constants(config)
    g = config.gamma
    a = mu**2 * ell / kappa
    if mode is DenoiserMode.BLP:
        return (1 - eta * mu) ** 2 * ell + eta**2 * kappa
    c2 = cos_forward(a, g)
    if mode is DenoiserMode.EBLP_IN_SAMPLE:
        beta = 1 + g / a
        return ell + eta**2 * kappa * spike_forward(a, g) - 2 * eta * mu * ell * c2 * beta
    return ell + eta**2 * (mu**2 * ell * c2 + kappa) - 2 * eta * mu * ell * c2


@dataclass(frozen=True)
class AmseReport:
    per_spike: tuple[tuple[float, float, float], ...]
    mode: DenoiserMode
    noise_model: NoiseModel
    total: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "total", math.fsum(a for _, _, a in self.per_spike))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "noise_model": self.noise_model.value,
            "per_spike": [{"ell": e, "coefficient": c, "amse": a} for e, c, a in self.per_spike],
            "total": self.total,
        }


def amse(config: ReducedModelConfig, mode: DenoiserMode, coefficients: Sequence[float]) -> AmseReport:
    """Asymptotic MSE of a (possibly suboptimal) denoiser; decouples over spikes."""
    if len(coefficients) != config.rank:
        raise ValueError(f"expected {config.rank} coefficients, got {len(coefficients)}")
    rows = tuple(
        (ell, float(eta), single_spike_amse(ell, float(eta), config, mode))
        for ell, eta in zip(config.spikes, coefficients)
    )
    return AmseReport(rows, mode, config.noise_model)


def optimal_amse(config: ReducedModelConfig, mode: DenoiserMode) -> AmseReport:
    return amse(config, mode, optimal_coefficients(config, mode))


# --------------------------------------------------------------------------
# matrix-level denoisers
# --------------------------------------------------------------------------


def _orient(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def top_right_singular_vectors(y: np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray]:
    """Top ``rank`` singular values of ``y`` and its right singular vectors (p x rank)."""
    _, s, vt = np.linalg.svd(y, full_matrices=False)
    return s[:rank], _orient(vt[:rank].T)


def denoise_matrix(data: DataSet | np.ndarray, coefficients: Sequence[float], rank: int | None = None) -> np.ndarray:
    """Singular-value shrinkage: keep the top ``rank`` singular triplets of ``Y``
    and scale the k-th singular value by ``coefficients[k]``."""
    y = data.y if isinstance(data, DataSet) else np.asarray(data, dtype=float)
    coefficients = np.asarray(coefficients, dtype=float)
    rank = len(coefficients) if rank is None else rank
    if rank > min(y.shape):
        raise ValueError(f"rank {rank} exceeds matrix dimensions {y.shape}")
    if len(coefficients) != rank:
        raise ValueError(f"need {rank} coefficients, got {len(coefficients)}")
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    return (u[:, :rank] * (coefficients * s[:rank])) @ vt[:rank]


def denoise_vector(y0: np.ndarray, u_hats: np.ndarray, coefficients: Sequence[float]) -> np.ndarray:
    """``sum_k eta_k (u_k^T y0) u_k`` for orthonormal columns ``u_hats``."""
    y0 = np.asarray(y0, dtype=float)
    u_hats = np.asarray(u_hats, dtype=float).reshape(len(y0), -1)
    coefficients = np.asarray(coefficients, dtype=float)
    if u_hats.shape[1] != len(coefficients):
        raise ValueError(f"{u_hats.shape[1]} basis vectors but {len(coefficients)} coefficients")
    return u_hats @ (coefficients * (u_hats.T @ y0))


def denoise_rows(y: np.ndarray, basis: np.ndarray, coefficients: Sequence[float]) -> np.ndarray:
    """Apply :func:`denoise_vector` to every row of ``y``."""
    basis = np.asarray(basis, dtype=float)
    coefficients = np.asarray(coefficients, dtype=float)
    if basis.shape[1] != len(coefficients):
        raise ValueError(f"{basis.shape[1]} basis vectors but {len(coefficients)} coefficients")
    return (np.asarray(y, dtype=float) @ basis * coefficients) @ basis.T


def apply_denoiser(spec: DenoiserSpec, y: np.ndarray, basis: np.ndarray) -> np.ndarray:
    if basis.shape[1] != spec.rank:
        raise ValueError("basis rank does not match the number of coefficients")
    return denoise_rows(y, basis, spec.coefficients)


# --------------------------------------------------------------------------
# plug-in parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PluginEstimate:
    """Spike and cosine estimates from inverting the spike forward map.

    ``rank`` comes from a bulk-edge threshold, an extension: the theory
    treats the rank as known.
    """

    spikes: tuple[float, ...]
    cos_sqs: tuple[float, ...]
    rank: int
    mu: float
    sigma2: float
    gamma: float
    normalized_sv_sq: tuple[float, ...]
    rank_estimated: bool = True


def estimate_plugin_params(
    data: DataSet,
    noise_model: NoiseModel = NoiseModel.REDUCED,
    mu: float | None = None,
    sigma2: float | None = None,
    gamma: float | None = None,
    rank: int | None = None,
    margin: float = 0.02,
) -> PluginEstimate:
    """Estimate spikes and squared cosines from the top singular values of ``Y``.

    Reduction moments default to the sample moments of ``data.d`` and
    ``gamma`` to ``p / n``.  A fixed ``rank`` skips the threshold.
    """
    if mu is None or sigma2 is None:
        mu_hat, s2_hat = estimate_reduction_moments(data.d)
        mu = mu_hat if mu is None else mu
        sigma2 = s2_hat if sigma2 is None else sigma2
    gamma = data.p / data.n if gamma is None else gamma
    m = mu**2 + sigma2
    if noise_model is NoiseModel.REDUCED:
        norm, scale = m, mu**2 / m
    else:
        norm, scale = 1.0, mu**2
    s = np.linalg.svd(data.y, compute_uv=False)
    sv_sq = s**2 / data.n / norm
    edge = (1 + math.sqrt(gamma)) ** 2
    if rank is None:
        r = int(np.sum(sv_sq > edge * (1 + margin)))
        estimated = True
    else:
        r, estimated = rank, False
    spikes, cos_sqs = [], []
    for k in range(r):
        eff = spike_inverse(max(float(sv_sq[k]), edge), gamma)
        spikes.append(eff / scale)
        cos_sqs.append(cos_forward(eff, gamma))
    return PluginEstimate(
        spikes=tuple(spikes),
        cos_sqs=tuple(cos_sqs),
        rank=r,
        mu=float(mu),
        sigma2=float(sigma2),
        gamma=float(gamma),
        normalized_sv_sq=tuple(float(v) for v in sv_sq[: max(r, 1)]),
        rank_estimated=estimated,
    )
