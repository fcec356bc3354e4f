"""Shared domain types: generative model configs, spectral laws, datasets."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DegenerateReductionError


class NoiseModel(enum.Enum):
    """Whether the reduction also hits the noise: ``D(S + eps)`` vs ``DS + eps``."""

    REDUCED = "reduced"
    UNREDUCED = "unreduced"


class ReductionKind(enum.Enum):
    BERNOULLI = "bernoulli"
    GENERAL_IID = "general"


class DenoiserMode(enum.Enum):
    BLP = "blp"
    EBLP_IN_SAMPLE = "eblp"
    EBLP_OUT_OF_SAMPLE = "oos"


class Basis(enum.Enum):
    POPULATION_PCS = "population"
    EMPIRICAL_PCS = "empirical"


@dataclass(frozen=True)
class SpectralLaw:
    """Discrete distribution of noise variances (atoms with weights)."""

    atoms: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        atoms = tuple(float(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        if not atoms:
            raise ValueError("SpectralLaw needs at least one atom.")
        if len(atoms) != len(weights):
            raise ValueError("atoms and weights must have equal length.")
        if not all(math.isfinite(a) and a >= 0 for a in atoms):
            raise ValueError("atoms must be finite and non-negative.")
        if not all(w > 0 for w in weights):
            raise ValueError("weights must be positive.")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {math.fsum(weights)!r}).")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point_mass(cls, value: float = 1.0) -> "SpectralLaw":
        return cls((value,), (1.0,))

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "SpectralLaw":
        """Equal-weight law on ``atoms``; weights are renormalised exactly."""
        k = len(atoms)
        if k == 0:
            raise ValueError("SpectralLaw needs at least one atom.")
        weights = [1.0 / k] * k
        # absorb the float rounding into the last weight so fsum is exactly 1
        weights[-1] = 1.0 - math.fsum(weights[:-1])
        return cls(tuple(atoms), tuple(weights))

    @property
    def atoms_array(self) -> np.ndarray:
        return np.asarray(self.atoms, dtype=float)

    @property
    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def max_atom(self) -> float:
        return max(self.atoms)

    def mean(self) -> float:
        return float(np.dot(self.atoms_array, self.weights_array))

    def scaled(self, factor: float) -> "SpectralLaw":
        return SpectralLaw(tuple(a * factor for a in self.atoms), self.weights)

    def is_point_mass(self, value: float | None = None, tol: float = 1e-12) -> bool:
        a = self.atoms_array
        if np.ptp(a) > tol * max(1.0, abs(a[0])):
            return False
        return value is None or abs(a[0] - value) <= tol * max(1.0, abs(value))

    def to_dict(self) -> dict[str, list[float]]:
        return {"atoms": list(self.atoms), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SpectralLaw":
        atoms = [float(a) for a in d["atoms"]]
        if "weights" not in d:
            return cls.uniform(atoms)
        return cls(tuple(atoms), tuple(float(w) for w in d["weights"]))


@dataclass(frozen=True)
class ReducedModelConfig:
    """Full description of a diagonally reduced spiked model.

    The reduction entries ``D_ij`` are iid with mean ``reduction_mean`` and
    variance ``reduction_var``; for ``ReductionKind.BERNOULLI`` both are
    derived from the observation probability.  ``noise_variances`` is the
    law of the per-coordinate noise variances (unit point mass = white noise).

    Spikes are stored sorted in decreasing order; ties are rejected.
    """

    gamma: float
    spikes: tuple[float, ...]
    reduction_mean: float
    reduction_var: float
    noise_model: NoiseModel = NoiseModel.REDUCED
    reduction_law: ReductionKind = ReductionKind.GENERAL_IID
    noise_variances: SpectralLaw = field(default_factory=SpectralLaw.point_mass)
    rank: int = -1

    def __post_init__(self) -> None:
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite.")
        spikes = tuple(sorted((float(s) for s in self.spikes), reverse=True))
        if any(s <= 0 for s in spikes):
            raise ValueError("spikes must be positive.")
        if any(a == b for a, b in zip(spikes, spikes[1:])):
            raise ValueError("spikes must be distinct.")
        object.__setattr__(self, "spikes", spikes)
        rank = len(spikes) if self.rank < 0 else int(self.rank)
        if rank != len(spikes):
            raise ValueError(f"rank {rank} does not match {len(spikes)} spikes.")
        object.__setattr__(self, "rank", rank)
        if self.reduction_var < 0:
            raise ValueError("reduction_var must be non-negative.")
        if self.reduction_law is ReductionKind.BERNOULLI:
            p = self.reduction_mean
            if not 0 < p <= 1:
                raise ValueError("Bernoulli observation probability must be in (0, 1].")
            if abs(self.reduction_var - p * (1 - p)) > 1e-12:
                raise ValueError("Bernoulli reduction_var must equal p(1-p).")
        if self.second_moment <= 0:
            raise ValueError("reduction second moment m = mu^2 + sigma^2 must be positive.")
        if self.reduction_mean == 0:
            raise DegenerateReductionError("reduction mean is zero; the signal is not identifiable.")
        if not isinstance(self.noise_variances, SpectralLaw):
            raise TypeError("noise_variances must be a SpectralLaw.")

    @classmethod
    def bernoulli(
        cls,
        gamma: float,
        spikes: Sequence[float],
        delta: float,
        noise_model: NoiseModel = NoiseModel.REDUCED,
        noise_variances: SpectralLaw | None = None,
    ) -> "ReducedModelConfig":
        return cls(
            gamma=gamma,
            spikes=tuple(spikes),
            reduction_mean=delta,
            reduction_var=delta * (1 - delta),
            noise_model=noise_model,
            reduction_law=ReductionKind.BERNOULLI,
            noise_variances=noise_variances or SpectralLaw.point_mass(),
        )

    @classmethod
    def general(
        cls,
        gamma: float,
        spikes: Sequence[float],
        mu: float,
        sigma2: float,
        noise_model: NoiseModel = NoiseModel.REDUCED,
        noise_variances: SpectralLaw | None = None,
    ) -> "ReducedModelConfig":
        return cls(
            gamma=gamma,
            spikes=tuple(spikes),
            reduction_mean=mu,
            reduction_var=sigma2,
            noise_model=noise_model,
            reduction_law=ReductionKind.GENERAL_IID,
            noise_variances=noise_variances or SpectralLaw.point_mass(),
        )

    @property
    def mu(self) -> float:
        return self.reduction_mean

    @property
    def sigma2(self) -> float:
        return self.reduction_var

    @property
    def second_moment(self) -> float:
        return self.reduction_mean**2 + self.reduction_var

    @property
    def delta(self) -> float:
        return self.reduction_mean**2 / self.second_moment

    @property
    def white_noise(self) -> bool:
        return self.noise_variances.is_point_mass(1.0)

    def with_spikes(self, spikes: Sequence[float]) -> "ReducedModelConfig":
        return ReducedModelConfig(
            gamma=self.gamma,
            spikes=tuple(spikes),
            reduction_mean=self.reduction_mean,
            reduction_var=self.reduction_var,
            noise_model=self.noise_model,
            reduction_law=self.reduction_law,
            noise_variances=self.noise_variances,
        )

    def to_dict(self) -> dict[str, Any]:
        if self.reduction_law is ReductionKind.BERNOULLI:
            reduction: dict[str, Any] = {"bernoulli": self.reduction_mean}
        else:
            reduction = {"general": {"mu": self.reduction_mean, "sigma2": self.reduction_var}}
        return {
            "gamma": self.gamma,
            "rank": self.rank,
            "spikes": list(self.spikes),
            "noise_model": self.noise_model.value,
            "reduction": reduction,
            "noise_variances": self.noise_variances.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ReducedModelConfig":
        unknown = set(d) - {"gamma", "rank", "spikes", "noise_model", "reduction", "noise_variances"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        reduction = d.get("reduction", {"bernoulli": 1.0})
        if not isinstance(reduction, dict) or len(reduction) != 1:
            raise ValueError('reduction must be {"bernoulli": p} or {"general": {"mu", "sigma2"}}')
        noise_model = NoiseModel(d.get("noise_model", "reduced"))
        law = (
            SpectralLaw.from_dict(d["noise_variances"])
            if "noise_variances" in d
            else SpectralLaw.point_mass()
        )
        spikes = [float(s) for s in d.get("spikes", [])]
        if "bernoulli" in reduction:
            cfg = cls.bernoulli(float(d["gamma"]), spikes, float(reduction["bernoulli"]), noise_model, law)
        elif "general" in reduction:
            g = reduction["general"]
            cfg = cls.general(float(d["gamma"]), spikes, float(g["mu"]), float(g["sigma2"]), noise_model, law)
        else:
            raise ValueError(f"unknown reduction law {next(iter(reduction))!r}")
        if "rank" in d and int(d["rank"]) != cfg.rank:
            raise ValueError(f"rank {d['rank']} does not match {cfg.rank} spikes.")
        return cfg

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "ReducedModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def derived_moments(config: ReducedModelConfig) -> tuple[float, float]:
    """Return ``(m, delta)`` with ``m = mu^2 + sigma^2`` and ``delta = mu^2 / m``."""
    return config.second_moment, config.delta


@dataclass(frozen=True)
class DataSet:
    """Observations ``y`` (n x p) and reduction diagonals ``d`` (row i = diag(D_i)).

    The optional oracle fields hold the latent signal matrix and its factors
    when the data were simulated. The limits used throughout assume the signal
    directions are delocalised (max entry of order log(p)^B / sqrt(p)); this is
    not checked on user-supplied directions.
    """

    y: np.ndarray
    d: np.ndarray
    s_oracle: np.ndarray | None = None
    u_oracle: np.ndarray | None = None
    z_oracle: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if y.ndim != 2:
            raise ValueError(f"y must be a matrix, got shape {y.shape}")
        if y.shape != d.shape:
            raise ValueError(f"y has shape {y.shape} but d has shape {d.shape}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        if self.s_oracle is not None:
            s = np.asarray(self.s_oracle, dtype=float)
            if s.shape != y.shape:
                raise ValueError(f"s_oracle has shape {s.shape}, expected {y.shape}")
            object.__setattr__(self, "s_oracle", s)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @classmethod
    def unreduced(cls, y: np.ndarray) -> "DataSet":
        y = np.asarray(y, dtype=float)
        return cls(y=y, d=np.ones_like(y))


@dataclass(frozen=True)
class DenoiserSpec:
    mode: DenoiserMode
    coefficients: tuple[float, ...]
    basis: Basis

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.mode is DenoiserMode.BLP and self.basis is not Basis.POPULATION_PCS:
            raise ValueError("BLP denoising uses the population PCs.")
        if self.mode is not DenoiserMode.BLP and self.basis is not Basis.EMPIRICAL_PCS:
            raise ValueError("EBLP denoising uses the empirical PCs.")

    @property
    def rank(self) -> int:
        return len(self.coefficients)
