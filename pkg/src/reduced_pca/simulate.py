"""Sampling from diagonally reduced spiked models and a seeded Monte Carlo harness."""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import toeplitz

from .covariance import (
    Loss,
    ShrinkageRule,
    asymptotic_loss,
    covariance_losses,
    debias,
    limit_spike,
    sample_covariance,
    shrink_eigenvalues,
)
from .denoise import denoise_matrix, denoise_rows, optimal_amse, optimal_coefficients, top_right_singular_vectors
from .model import DataSet, DenoiserMode, NoiseModel, ReducedModelConfig, ReductionKind, SpectralLaw
from .mp_law import ks_distance, mp_distribution
from .spike_maps import cos_forward, effective_spikes, noise_law, predict_config

THREADS_ENV = "REDUCED_PCA_THREADS"


class Quantity(enum.Enum):
    TOP_EIGENVALUE = "top_eig"
    COS_SQ = "cos_sq"
    COV_LOSS_OP = "cov_loss_op"
    COV_LOSS_FRO = "cov_loss_fro"
    DENOISE_MSE = "denoise_mse"
    BULK_KS = "bulk_ks"
    # extensions: raw singular value against the general-profile prediction,
    # and out-of-sample denoising error on fresh rows
    RAW_TOP_EIGENVALUE = "raw_top_eig"
    DENOISE_MSE_OOS = "denoise_mse_oos"


@dataclass(frozen=True)
class McResult:
    quantity: Quantity
    empirical_mean: float
    empirical_sd: float
    theoretical: float
    reps: int
    seed: int

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.empirical_sd < 0:
            raise ValueError("sd must be non-negative")

    @property
    def std_error(self) -> float:
        return self.empirical_sd / math.sqrt(self.reps)

    def within_sd(self, k: float = 3.0) -> bool:
        return abs(self.empirical_mean - self.theoretical) <= k * self.empirical_sd

    def relative_error(self) -> float:
        return abs(self.empirical_mean - self.theoretical) / abs(self.theoretical)


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def tile_variances(law: SpectralLaw, p: int) -> np.ndarray:
    """Per-coordinate noise variances: sorted atoms repeated in proportion to weight.

    Counts use largest-remainder rounding so they sum to ``p``.
    """
    order = np.argsort(law.atoms_array)
    atoms = law.atoms_array[order]
    raw = law.weights_array[order] * p
    counts = np.floor(raw).astype(int)
    short = p - counts.sum()
    if short:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return np.repeat(atoms, counts)


def gen_ar1_variances(rho: float, p: int) -> SpectralLaw:
    """Eigenvalues of the AR(1) correlation matrix ``rho^|i-j|`` as a uniform law."""
    if not -1 < rho < 1:
        raise ValueError("rho must lie in (-1, 1)")
    if p < 1:
        raise ValueError("p must be positive")
    vals = np.linalg.eigvalsh(toeplitz(rho ** np.arange(p)))
    return SpectralLaw.uniform(np.clip(vals, 0.0, None))


def _draw_reduction(config: ReducedModelConfig, shape, rng: np.random.Generator) -> np.ndarray:
    if config.reduction_law is ReductionKind.BERNOULLI:
        return (rng.random(shape) < config.delta).astype(float)
    return config.mu + math.sqrt(config.sigma2) * rng.standard_normal(shape)


def _draw_latent(rng: np.random.Generator, n: int, r: int, z_dist: str) -> np.ndarray:
    if z_dist == "gaussian":
        return rng.standard_normal((n, r))
    if z_dist == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(n, r))
    raise ValueError(f"unknown z_dist {z_dist!r}")


def _draw_rows(
    config: ReducedModelConfig,
    u: np.ndarray,
    noise_sd: np.ndarray,
    n: int,
    rng: np.random.Generator,
    z_dist: str,
) -> DataSet:
    p, r = u.shape
    z = _draw_latent(rng, n, r, z_dist)
    s = (z * np.sqrt(np.asarray(config.spikes))) @ u.T
    eps = rng.standard_normal((n, p)) * noise_sd
    d = _draw_reduction(config, (n, p), rng)
    if config.noise_model is NoiseModel.REDUCED:
        y = d * (s + eps)
    else:
        y = d * s + eps
    return DataSet(y=y, d=d, s_oracle=s, u_oracle=u, z_oracle=z)


def gen_spiked_data(
    config: ReducedModelConfig,
    n: int,
    p: int,
    seed: int,
    z_dist: str = "gaussian",
) -> DataSet:
    """Draw ``n`` rows of the model in ``config`` with ``p`` coordinates.

    ``config.gamma`` is not checked against ``p / n``; it only enters
    predictions.
    """
    if n < 1 or p < 1:
        raise ValueError(f"invalid shape n={n}, p={p}")
    if config.rank > p:
        raise ValueError(f"rank {config.rank} exceeds p={p}")
    rng = np.random.default_rng(seed)
    u = np.linalg.qr(rng.standard_normal((p, config.rank)))[0] if config.rank else np.zeros((p, 0))
    noise_sd = np.sqrt(tile_variances(config.noise_variances, p))
    return _draw_rows(config, u, noise_sd, n, rng, z_dist)


def gen_fresh_rows(
    config: ReducedModelConfig,
    data: DataSet,
    n_rows: int,
    seed: int,
    z_dist: str = "gaussian",
) -> DataSet:
    """New rows sharing ``data``'s PCs and noise profile, from an independent stream."""
    rng = np.random.default_rng([seed, 1])
    noise_sd = np.sqrt(tile_variances(config.noise_variances, data.p))
    return _draw_rows(config, data.u_oracle, noise_sd, n_rows, rng, z_dist)


# --------------------------------------------------------------------------
# Monte Carlo harness
# --------------------------------------------------------------------------


def _thread_count(requested: int | None, reps: int) -> int:
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        requested = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(requested, reps))


def _theory(config: ReducedModelConfig, q: Quantity, n: int) -> float:
    if q is Quantity.TOP_EIGENVALUE:
        return limit_spike(config.spikes[0], config)
    if q is Quantity.COS_SQ:
        return cos_forward(float(effective_spikes(config)[0]), config.gamma)
    if q is Quantity.COV_LOSS_OP:
        return asymptotic_loss(ShrinkageRule(Loss.OPERATOR, config.noise_model), config)
    if q is Quantity.COV_LOSS_FRO:
        return asymptotic_loss(ShrinkageRule(Loss.FROBENIUS, config.noise_model), config)
    if q is Quantity.DENOISE_MSE:
        return optimal_amse(config, DenoiserMode.EBLP_IN_SAMPLE).total
    if q is Quantity.DENOISE_MSE_OOS:
        return optimal_amse(config, DenoiserMode.EBLP_OUT_OF_SAMPLE).total
    if q is Quantity.RAW_TOP_EIGENVALUE:
        return predict_config(config).t_sq[0]
    return 0.0


def _replicate(
    config: ReducedModelConfig,
    n: int,
    p: int,
    seed: int,
    targets: tuple[Quantity, ...],
    bulk,
    oos_rows: int,
    z_dist: str,
) -> dict[Quantity, float]:
    data = gen_spiked_data(config, n, p, seed, z_dist)
    r = config.rank
    out: dict[Quantity, float] = {}
    sigma_y = sample_covariance(data)
    need_cov = {Quantity.TOP_EIGENVALUE, Quantity.COS_SQ, Quantity.COV_LOSS_OP, Quantity.COV_LOSS_FRO}
    if need_cov.intersection(targets):
        est = debias(sigma_y, config)
        sigma_s = (data.u_oracle * np.asarray(config.spikes)) @ data.u_oracle.T
        if Quantity.TOP_EIGENVALUE in targets:
            out[Quantity.TOP_EIGENVALUE] = float(est.eigenvalues[0])
        if Quantity.COS_SQ in targets:
            out[Quantity.COS_SQ] = float(est.eigenvectors[:, 0] @ data.u_oracle[:, 0]) ** 2
        if Quantity.COV_LOSS_OP in targets:
            shrunk = shrink_eigenvalues(est, ShrinkageRule(Loss.OPERATOR, config.noise_model), config, rank=r)
            out[Quantity.COV_LOSS_OP] = covariance_losses(sigma_s, shrunk)[0]
        if Quantity.COV_LOSS_FRO in targets:
            shrunk = shrink_eigenvalues(est, ShrinkageRule(Loss.FROBENIUS, config.noise_model), config, rank=r)
            out[Quantity.COV_LOSS_FRO] = covariance_losses(sigma_s, shrunk)[1]
    if Quantity.RAW_TOP_EIGENVALUE in targets or Quantity.BULK_KS in targets:
        vals = np.linalg.eigvalsh(sigma_y)[::-1]
        if Quantity.RAW_TOP_EIGENVALUE in targets:
            out[Quantity.RAW_TOP_EIGENVALUE] = float(vals[0])
        if Quantity.BULK_KS in targets:
            out[Quantity.BULK_KS] = ks_distance(vals, bulk)
    if Quantity.DENOISE_MSE in targets:
        coef = optimal_coefficients(config, DenoiserMode.EBLP_IN_SAMPLE)
        s_hat = denoise_matrix(data, coef, r)
        out[Quantity.DENOISE_MSE] = float(np.sum((s_hat - data.s_oracle) ** 2) / n)
    if Quantity.DENOISE_MSE_OOS in targets:
        coef = optimal_coefficients(config, DenoiserMode.EBLP_OUT_OF_SAMPLE)
        _, basis = top_right_singular_vectors(data.y, r)
        fresh = gen_fresh_rows(config, data, oos_rows, seed, z_dist)
        s_hat = denoise_rows(fresh.y, basis, coef)
        out[Quantity.DENOISE_MSE_OOS] = float(np.sum((s_hat - fresh.s_oracle) ** 2) / oos_rows)
    return out


def run_mc(
    config: ReducedModelConfig,
    n: int,
    p: int,
    reps: int,
    targets: Iterable[Quantity],
    master_seed: int = 0,
    workers: int | None = None,
    oos_rows: int = 1,
    z_dist: str = "gaussian",
) -> list[McResult]:
    """Run ``reps`` seeded replicates and compare empirical means to theory.

    Replicate ``r`` uses seed ``master_seed + r``; results are reduced by
    replicate index so the output does not depend on thread scheduling.
    Spike-indexed quantities refer to the top spike.  ``BULK_KS`` has
    theoretical value 0.  ``DENOISE_MSE_OOS`` averages over ``oos_rows``
    fresh rows per replicate.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    targets = tuple(dict.fromkeys(Quantity(t) for t in targets))
    spiky = set(targets) - {Quantity.BULK_KS}
    if spiky and config.rank == 0:
        raise ValueError(f"targets {sorted(q.value for q in spiky)} need at least one spike")
    if oos_rows < 1:
        raise ValueError("oos_rows must be >= 1")
    bulk = mp_distribution(noise_law(config), config.gamma) if Quantity.BULK_KS in targets else None

    def job(r: int) -> dict[Quantity, float]:
        return _replicate(config, n, p, master_seed + r, targets, bulk, oos_rows, z_dist)

    n_threads = _thread_count(workers, reps)
    if n_threads == 1:
        rows = [job(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(job, range(reps)))

    results = []
    for q in targets:
        vals = np.array([row[q] for row in rows])
        sd = float(vals.std(ddof=1)) if reps > 1 else 0.0
        results.append(McResult(q, float(vals.mean()), sd, float(_theory(config, q, n)), reps, master_seed))
    return results
