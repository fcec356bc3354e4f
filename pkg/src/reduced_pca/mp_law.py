"""Marchenko-Pastur numerics: closed forms for the standard law and a solver
for general discrete variance profiles ``H``.

The general solver works with the companion Stieltjes transform ``v`` of the
n x n Gram matrix, which satisfies

    z = -1/v + gamma * sum_j w_j t_j / (1 + t_j v)          (*)

for a discrete ``H = sum_j w_j delta_{t_j}``.  For real ``x`` to the right of
the support, ``v(x)`` is the root of (*) on the increasing branch
``(v_edge, 0)``, where ``v_edge`` minimises the right-hand side over
``(-1/max t, 0)``; that minimum is the squared upper edge ``b^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, SubcriticalError, UnsupportedParameterError
from .model import SpectralLaw

IMAG_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
DAMPING = 0.5


def standard_mp_density(x: float, gamma: float) -> float:
    """Density of the standard MP law, valid for ``0 < gamma < 1``.

    Normalised to integrate to one: ``sqrt((g+ - x)(x - g-)) / (2 pi gamma x)``.
    """
    if not 0 < gamma < 1:
        raise UnsupportedParameterError(f"density formula needs gamma in (0, 1), got {gamma}")
    g_minus = (1 - math.sqrt(gamma)) ** 2
    g_plus = (1 + math.sqrt(gamma)) ** 2
    if x <= g_minus or x >= g_plus:
        return 0.0
    return math.sqrt((g_plus - x) * (x - g_minus)) / (2 * math.pi * gamma * x)


def standard_mp_edge(gamma: float) -> float:
    return (1 + math.sqrt(gamma)) ** 2


def standard_mp_stieltjes(x: float, gamma: float) -> float:
    """Stieltjes transform of the standard MP law at real ``x >= (1+sqrt(gamma))^2``.

    Root of ``gamma x m^2 + (x + gamma - 1) m + 1 = 0`` with ``m -> 0-`` as
    ``x -> inf``, written in the cancellation-free form ``2 / (-b - sqrt(disc))``.
    """
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    edge = standard_mp_edge(gamma)
    if x < edge * (1 - 1e-14):
        raise DomainError(f"x={x} lies inside the MP bulk (edge {edge})")
    b = x + gamma - 1
    disc = max(b * b - 4 * gamma * x, 0.0)
    return 2.0 / (-b - math.sqrt(disc))


# --------------------------------------------------------------------------
# companion-transform equation for a discrete H
# --------------------------------------------------------------------------


def _compress(law: SpectralLaw) -> tuple[np.ndarray, np.ndarray]:
    """Merge repeated atoms and drop zero atoms (they do not enter (*))."""
    atoms, inverse = np.unique(law.atoms_array, return_inverse=True)
    weights = np.bincount(inverse, weights=law.weights_array)
    keep = atoms > 0
    if not keep.any():
        raise DomainError("spectral law is a point mass at zero")
    return atoms[keep], weights[keep]


def _z_of_v(v, atoms, weights, gamma):
    v = np.asarray(v)
    return -1.0 / v + gamma * ((weights * atoms) / (1.0 + np.multiply.outer(v, atoms))).sum(axis=-1)


def _dz_dv(v, atoms, weights, gamma):
    v = np.asarray(v)
    return 1.0 / v**2 - gamma * ((weights * atoms**2) / (1.0 + np.multiply.outer(v, atoms)) ** 2).sum(axis=-1)


def _upper_edge(atoms: np.ndarray, weights: np.ndarray, gamma: float) -> tuple[float, float]:
    """Return ``(b^2, v_edge)``: minimum of (*) over ``(-1/max t, 0)`` and its argmin.

    (*) is convex on that interval, so its derivative is increasing and the
    minimiser is found by root bracketing.
    """
    lo = -1.0 / atoms.max()
    hi = 0.0
    a = lo * (1 - 1e-15)
    b = hi + lo * 1e-15
    # push the bracket endpoints inward until the derivative changes sign
    while _dz_dv(a, atoms, weights, gamma) >= 0:
        a = 0.5 * (a + lo) if a != lo else a * (1 - 1e-12)
        if abs(a - lo) < 1e-300:
            break
    while _dz_dv(b, atoms, weights, gamma) <= 0:
        b *= 0.5
    v_edge = brentq(lambda v: float(_dz_dv(v, atoms, weights, gamma)), a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(_z_of_v(v_edge, atoms, weights, gamma)), float(v_edge)


def mp_upper_edge(law: SpectralLaw, gamma: float) -> float:
    """Squared upper edge ``b^2`` of the support of ``F_{gamma,H}``."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    atoms, weights = _compress(law)
    return _upper_edge(atoms, weights, gamma)[0]


def _fixed_point_complex(z, atoms, weights, gamma, v0, max_iter, tol):
    """Damped fixed-point iteration ``v <- 1 / (-z + gamma sum w t / (1 + t v))``.

    Vectorised over ``z``; converged points drop out of the active set.
    Returns the iterate and the largest relative update among points that
    had not converged at exit.
    """
    v = np.array(v0, dtype=complex)
    wt = weights * atoms
    active = np.arange(v.size)
    delta = np.zeros(v.size)
    for _ in range(max_iter):
        va = v[active]
        s = (wt / (1.0 + np.multiply.outer(va, atoms))).sum(axis=-1)
        step = 1.0 / (-z[active] + gamma * s) - va
        v[active] = va + (1 - DAMPING) * step
        delta[active] = np.abs(step) / np.maximum(np.abs(v[active]), 1e-300)
        active = active[delta[active] >= tol]
        if active.size == 0:
            break
    return v, float(delta.max(initial=0.0))


def _companion_schedule(x, atoms, weights, gamma, schedule=IMAG_SCHEDULE, max_iter=20000, tol=1e-12):
    """Companion transform at ``x + i eta`` for a decreasing ``eta`` schedule.

    Each stage is warm-started from the previous one.  The first stage starts
    from ``-1/z``, the large-|z| asymptote.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = -1.0 / (x + 1j * schedule[0])
    delta = 0.0
    for eta in schedule:
        v, delta = _fixed_point_complex(x + 1j * eta, atoms, weights, gamma, v, max_iter, tol)
    return v, delta


def _polish_real(x, atoms, weights, gamma, v_edge, v_init, max_iter=200):
    """Safeguarded Newton for the real root of (*) on ``(v_edge, 0)``.

    The root is bracketed because (*) increases from ``b^2`` at ``v_edge`` to
    ``+inf`` at ``0-``; steps leaving the bracket fall back to bisection.
    """
    x = np.asarray(x, dtype=float)
    lo = np.full_like(x, v_edge)
    hi = np.zeros_like(x)
    v = np.clip(np.real(v_init), v_edge, 0.0)
    bad = (v <= lo) | (v >= hi)
    v = np.where(bad, 0.5 * (lo + hi), v)
    resid = np.full_like(x, np.inf)
    for _ in range(max_iter):
        f = _z_of_v(v, atoms, weights, gamma) - x
        resid = np.abs(f) / x
        if np.all(resid < 1e-14):
            break
        lo = np.where(f < 0, v, lo)
        hi = np.where(f > 0, v, hi)
        fp = _dz_dv(v, atoms, weights, gamma)
        with np.errstate(divide="ignore", invalid="ignore"):
            v_new = v - f / fp
        outside = ~np.isfinite(v_new) | (v_new <= lo) | (v_new >= hi)
        v_new = np.where(outside, 0.5 * (lo + hi), v_new)
        if np.all(v_new == v):
            break
        v = v_new
    return v, float(np.max(resid))


@dataclass(frozen=True)
class MPSolution:
    """Tabulated transforms of ``F_{gamma,H}`` on a grid to the right of the bulk.

    ``m_hat`` is the Stieltjes transform, ``m_under_hat`` its companion,
    ``d_hat`` the D-transform and ``d_prime_hat`` its derivative.  ``d_edge``
    is the limit of the D-transform at the edge, which is finite for any
    discrete ``H``.
    """

    gamma: float
    law: SpectralLaw
    grid: np.ndarray
    m_hat: np.ndarray
    m_under_hat: np.ndarray
    d_hat: np.ndarray
    d_prime_hat: np.ndarray
    edge_sq: float
    d_edge: float
    v_edge: float
    stage_residual: float = 0.0

    @property
    def _compressed(self):
        return _compress(self.law)

    def companion(self, x) -> np.ndarray:
        """Real companion transform at points strictly right of the edge."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x <= self.edge_sq):
            raise DomainError(f"x must exceed the bulk edge {self.edge_sq}")
        atoms, weights = self._compressed
        v0 = np.interp(x, self.grid, self.m_under_hat, left=0.5 * self.v_edge, right=0.0)
        v0 = np.where(x > self.grid[-1], -1.0 / x, v0)
        v, resid = _polish_real(x, atoms, weights, self.gamma, self.v_edge, v0)
        if resid > 1e-10:
            raise ConvergenceError("real-axis Newton did not converge", resid)
        return v

    def transforms(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(m, m_under, D, D')`` evaluated exactly at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        v = self.companion(x)
        return _transforms_from_companion(x, v, *self._compressed, self.gamma)


def _transforms_from_companion(x, v, atoms, weights, gamma):
    m = (v + (1 - gamma) / x) / gamma
    m_under = gamma * m + (gamma - 1) / x
    d = x * m * m_under
    # derivative of (*) inverted gives dv/dx
    v_prime = 1.0 / _dz_dv(v, atoms, weights, gamma)
    m_prime = (v_prime + (gamma - 1) / x**2) / gamma
    d_prime = m * m_under + x * (m * v_prime + m_prime * m_under)
    return m, m_under, d, d_prime


def solve_general_mp(
    law: SpectralLaw,
    gamma: float,
    n_points: int = 2000,
    span: float = 50.0,
    method: str = "branch",
    schedule: tuple[float, ...] = IMAG_SCHEDULE,
    max_iter: int = 20000,
) -> MPSolution:
    """Tabulate the MP transforms for ``(gamma, law)`` on ``(b^2, span * b^2]``.

    The grid is log-spaced.  With ``method="branch"`` each grid value is the
    root of the MP equation on its real branch, found by bracketed Newton;
    this is the limit the complex iteration converges to as the imaginary
    part goes to zero.  ``method="schedule"`` first runs the damped complex
    fixed point down ``schedule`` and uses it as the Newton starting point.
    """
    if gamma <= 0 or not math.isfinite(gamma):
        raise DomainError("gamma must be positive")
    if n_points < 1:
        raise ValueError("grid must contain at least one point")
    if span <= 1:
        raise ValueError("span must exceed 1")
    if method not in ("branch", "schedule"):
        raise ValueError(f"unknown method {method!r}")
    atoms, weights = _compress(law)
    edge_sq, v_edge = _upper_edge(atoms, weights, gamma)
    grid = edge_sq * np.logspace(0.0, math.log10(span), n_points + 1)[1:]

    stage_resid = 0.0
    if method == "schedule":
        v0, stage_resid = _companion_schedule(grid, atoms, weights, gamma, schedule, max_iter)
    else:
        v0 = np.full_like(grid, 0.5 * v_edge)
    v, resid = _polish_real(grid, atoms, weights, gamma, v_edge, v0)
    if resid > 1e-10:
        raise ConvergenceError("MP equation did not converge on the grid", resid)
    m, m_under, d, d_prime = _transforms_from_companion(grid, v, atoms, weights, gamma)

    m_e = (v_edge + (1 - gamma) / edge_sq) / gamma
    d_edge = float(edge_sq * m_e * (gamma * m_e + (gamma - 1) / edge_sq))
    return MPSolution(
        gamma=float(gamma),
        law=law,
        grid=grid,
        m_hat=m,
        m_under_hat=m_under,
        d_hat=d,
        d_prime_hat=d_prime,
        edge_sq=float(edge_sq),
        d_edge=d_edge,
        v_edge=v_edge,
        stage_residual=stage_resid,
    )


def d_transform(x: float, sol: MPSolution) -> float:
    """D-transform ``x m(x) m_under(x)`` for ``x`` right of the edge."""
    if x <= sol.edge_sq:
        raise DomainError(f"x={x} is not above the bulk edge {sol.edge_sq}")
    return float(sol.transforms(x)[2][0])


def d_transform_derivative(x: float, sol: MPSolution) -> float:
    if x <= sol.edge_sq:
        raise DomainError(f"x={x} is not above the bulk edge {sol.edge_sq}")
    return float(sol.transforms(x)[3][0])


def d_transform_inverse(y: float, sol: MPSolution) -> float:
    """Solve ``D(x) = y`` for ``x >= b^2``.

    Raises ``SubcriticalError`` when ``y`` exceeds the edge value ``D(b^2+)``,
    i.e. when the corresponding spike is below the detection threshold.
    """
    if not y > 0:
        raise DomainError("D-transform takes positive values only")
    if y > sol.d_edge * (1 + 1e-12):
        raise SubcriticalError(f"y={y} exceeds the edge value D(b^2+)={sol.d_edge}")
    if y >= sol.d_edge:
        return sol.edge_sq
    atoms, weights = _compress(sol.law)
    gamma = sol.gamma

    def d_of_v(v: float) -> float:
        x = float(_z_of_v(v, atoms, weights, gamma))
        m = (v + (1 - gamma) / x) / gamma
        return x * m * v

    # D decreases along the grid; bracket y between two grid points in v-space
    k = int(np.searchsorted(-sol.d_hat, -y, side="left"))
    if k < len(sol.grid) and sol.d_hat[k] == y:
        return float(sol.grid[k])
    lo = sol.v_edge if k == 0 else float(sol.m_under_hat[k - 1])
    if k < len(sol.grid):
        hi = float(sol.m_under_hat[k])
    else:
        hi = float(sol.m_under_hat[-1])
        while d_of_v(hi) > y:
            hi *= 0.5
    v = brentq(lambda t: d_of_v(t) - y, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(_z_of_v(v, atoms, weights, gamma))


# --------------------------------------------------------------------------
# density and distribution function (for bulk comparisons)
# --------------------------------------------------------------------------


def _polish_complex(z, atoms, weights, gamma, v, max_iter=50):
    """Newton on (*) for complex ``v`` in the upper half plane; keeps the input on failure."""
    for _ in range(max_iter):
        f = _z_of_v(v, atoms, weights, gamma) - z
        fp = _dz_dv(v, atoms, weights, gamma)
        with np.errstate(divide="ignore", invalid="ignore"):
            v_new = v - f / fp
        ok = np.isfinite(v_new) & (v_new.imag >= 0)
        v_new = np.where(ok, v_new, v)
        if np.allclose(v_new, v, rtol=1e-15, atol=0):
            return v_new
        v = v_new
    return v


def mp_density(law: SpectralLaw, gamma: float, x, chunk: int = 512) -> np.ndarray:
    """Density of the continuous part of ``F_{gamma,H}`` at real points ``x > 0``.

    A short damped fixed-point run down the imaginary schedule lands near the
    Stieltjes branch; complex Newton at the smallest imaginary part finishes.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    atoms, weights = _compress(law)
    eta = IMAG_SCHEDULE[-1]
    out = np.empty_like(x)
    for start in range(0, x.size, chunk):
        xs = x[start : start + chunk]
        v, _ = _companion_schedule(xs, atoms, weights, gamma, max_iter=300, tol=1e-10)
        v = _polish_complex(xs + 1j * eta, atoms, weights, gamma, v)
        m = (v + (1 - gamma) / (xs + 1j * eta)) / gamma
        out[start : start + chunk] = np.maximum(m.imag / math.pi, 0.0)
    return out


@dataclass(frozen=True)
class MPDistribution:
    """Distribution function of ``F_{gamma,H}`` tabulated by integrating the density."""

    x: np.ndarray
    cdf_values: np.ndarray
    atom_at_zero: float

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.x, self.cdf_values, left=self.atom_at_zero, right=1.0)
        return np.where(t < 0, 0.0, out)


def mp_distribution(law: SpectralLaw, gamma: float, n_points: int = 4000) -> MPDistribution:
    """CDF of ``F_{gamma,H}`` by trapezoidal integration of :func:`mp_density`.

    The continuous part is renormalised to its exact mass ``min(1, 1/gamma)``;
    the remainder sits in an atom at zero when ``gamma > 1``.
    """
    edge = mp_upper_edge(law, gamma)
    x = np.linspace(0.0, edge, n_points + 1)[1:]
    dens = mp_density(law, gamma, x)
    x = np.concatenate(([0.0], x))
    dens = np.concatenate(([0.0], dens))
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))))
    mass = min(1.0, 1.0 / gamma)
    atom = 1.0 - mass
    cum = atom + mass * cum / cum[-1]
    return MPDistribution(x=x, cdf_values=cum, atom_at_zero=atom)


def ks_distance(eigenvalues, dist: MPDistribution) -> float:
    """Kolmogorov-Smirnov distance between an empirical spectrum and ``dist``.

    Compares both the distribution functions and their left limits at every
    sample point, which handles ties and the atom at zero.
    """
    # eigenvalues that are zero in exact arithmetic come out as +-1e-15
    ev = np.maximum(np.asarray(eigenvalues, dtype=float), 0.0)
    ev = np.where(ev < 1e-10 * max(ev.max(initial=0.0), 1.0), 0.0, ev)
    k = ev.size
    values, counts = np.unique(ev, return_counts=True)
    emp_right = np.cumsum(counts) / k
    emp_left = emp_right - counts / k
    f_right = dist.cdf(values)
    f_left = f_right - np.where(values == 0.0, dist.atom_at_zero, 0.0)
    return float(max(np.max(np.abs(emp_right - f_right)), np.max(np.abs(emp_left - f_left))))
