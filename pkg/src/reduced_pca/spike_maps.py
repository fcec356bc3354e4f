"""Spike and cosine forward maps, their inverse, and reduced-model predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SubcriticalError
from .model import NoiseModel, ReducedModelConfig, SpectralLaw
from .mp_law import MPSolution, d_transform_inverse, solve_general_mp


def spike_forward(ell: float, gamma: float) -> float:
    """Limiting top eigenvalue ``(1 + l)(1 + gamma / l)`` of a spiked sample covariance.

    Returns the bulk edge ``(1 + sqrt(gamma))^2`` for ``l <= sqrt(gamma)``.
    """
    if ell > math.sqrt(gamma):
        return (1 + ell) * (1 + gamma / ell)
    return (1 + math.sqrt(gamma)) ** 2


def cos_forward(ell: float, gamma: float) -> float:
    """Limiting squared cosine between population and sample right PCs."""
    if ell > math.sqrt(gamma):
        return (1 - gamma / ell**2) / (1 + gamma / ell)
    return 0.0


def cos_forward_left(ell: float, gamma: float) -> float:
    """Limiting squared cosine between population and sample left singular vectors."""
    if ell > math.sqrt(gamma):
        return (1 - gamma / ell**2) / (1 + 1 / ell)
    return 0.0


def spike_inverse(y: float, gamma: float) -> float:
    """Invert :func:`spike_forward` on ``[(1 + sqrt(gamma))^2, inf)``."""
    edge = (1 + math.sqrt(gamma)) ** 2
    if y < edge * (1 - 1e-14):
        raise SubcriticalError(f"y={y} is below the bulk edge {edge}")
    b = y - 1 - gamma
    root_g = 2 * math.sqrt(gamma)
    disc = max((b - root_g) * (b + root_g), 0.0)
    return (b + math.sqrt(disc)) / 2


@dataclass(frozen=True)
class SpikedPrediction:
    """Per-spike limits of squared singular values and squared cosines.

    Non-detectable spikes carry the bulk edge as ``t_sq`` and zero cosines.
    """

    t_sq: tuple[float, ...]
    cos_sq_right: tuple[float, ...]
    cos_sq_left: tuple[float, ...]
    detectable: tuple[bool, ...]

    def __post_init__(self) -> None:
        for c in (*self.cos_sq_right, *self.cos_sq_left):
            if not -1e-12 <= c <= 1 + 1e-12:
                raise ValueError(f"squared cosine {c} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.t_sq)


def effective_spikes(config: ReducedModelConfig) -> np.ndarray:
    """Spikes after reduction: ``delta * l`` (reduced noise) or ``mu^2 * l`` (unreduced)."""
    factor = config.delta if config.noise_model is NoiseModel.REDUCED else config.mu**2
    return factor * np.asarray(config.spikes, dtype=float)


def predict_reduced(config: ReducedModelConfig) -> SpikedPrediction:
    """Closed-form limits for iid reduction and white noise.

    Under reduced noise ``t_sq`` is the limit of ``sigma_k(Y / sqrt(n))^2 / m``;
    under unreduced noise it is the limit of ``sigma_k(Y / sqrt(n))^2`` itself.
    """
    g = config.gamma
    eff = effective_spikes(config)
    return SpikedPrediction(
        t_sq=tuple(spike_forward(a, g) for a in eff),
        cos_sq_right=tuple(cos_forward(a, g) for a in eff),
        cos_sq_left=tuple(cos_forward_left(a, g) for a in eff),
        detectable=tuple(bool(a > math.sqrt(g)) for a in eff),
    )


def predict_general(taus: Sequence[float], spikes: Sequence[float], sol: MPSolution) -> SpikedPrediction:
    """Outlier locations and cosines for a general variance profile.

    ``taus[k]`` is the limit of ``||mu u_k||^2``; ``sol`` must be solved for
    the noise-variance law of the observation model (``H`` or ``G``).  The
    output assumes the signal directions are generic with respect to the
    noise variances, which cannot be checked from ``sol`` alone.

    The left cosine uses the companion transform in place of the Stieltjes
    transform, the analogue of the right-cosine formula for the n-dimensional
    singular vectors.
    """
    if len(taus) != len(spikes):
        raise ValueError("taus and spikes must have equal length")
    t_sq, c_right, c_left, det = [], [], [], []
    for tau, ell in zip(taus, spikes):
        if tau <= 0:
            raise ValueError("taus must be positive")
        try:
            if not ell * tau * sol.d_edge > 1:
                raise SubcriticalError("spike below threshold")
            t2 = d_transform_inverse(1.0 / (tau * ell), sol)
        except SubcriticalError:
            t2 = None
        if t2 is None or t2 <= sol.edge_sq:
            t_sq.append(sol.edge_sq)
            c_right.append(0.0)
            c_left.append(0.0)
            det.append(False)
            continue
        m, m_under, _, d_prime = sol.transforms(t2)
        t_sq.append(t2)
        c_right.append(float(np.clip(m[0] / (d_prime[0] * tau * ell), 0.0, 1.0)))
        c_left.append(float(np.clip(m_under[0] / (d_prime[0] * tau * ell), 0.0, 1.0)))
        det.append(True)
    return SpikedPrediction(tuple(t_sq), tuple(c_right), tuple(c_left), tuple(det))


def noise_law(config: ReducedModelConfig) -> SpectralLaw:
    """Variance profile governing the bulk of ``Y^T Y / n``.

    Reduced noise scales each noise variance by the reduction second moment
    ``m``; unreduced noise leaves it unchanged.
    """
    if config.noise_model is NoiseModel.REDUCED:
        return config.noise_variances.scaled(config.second_moment)
    return config.noise_variances


def reduced_taus(config: ReducedModelConfig) -> list[float]:
    """``||mu u_k||^2`` for unit ``u_k`` and scalar mean reduction ``mu``."""
    return [config.mu**2] * config.rank


def predict_config(config: ReducedModelConfig, sol: MPSolution | None = None, **solver_kw) -> SpikedPrediction:
    """General-profile prediction for ``config``, solving the MP law if needed.

    ``t_sq`` is the raw limit of ``sigma_k(Y / sqrt(n))^2`` (no division by ``m``).
    """
    if sol is None:
        sol = solve_general_mp(noise_law(config), config.gamma, **solver_kw)
    return predict_general(reduced_taus(config), config.spikes, sol)
