"""Euler-Maruyama, Lie-Trotter and Strang integrators for the diffusion approximation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _numerics
from .errors import NumericalError
from .model import NetworkModel, RngStream, _as_state, expm_action, sigma_matrix

__all__ = [
    "Scheme",
    "Trajectory",
    "em_step",
    "lt_step",
    "strang_step",
    "integrate",
    "integrate_paths",
    "coarsen_noise",
    "conditional_covariance",
    "milstein_correction",
]


class Scheme(enum.Enum):
    EULER_MARUYAMA = "em"
    LIE_TROTTER = "lie_trotter"
    STRANG = "strang"
    ODE_LIE_TROTTER = "ode_lie_trotter"
    ODE_STRANG = "ode_strang"

    @property
    def is_ode(self) -> bool:
        return self in (Scheme.ODE_LIE_TROTTER, Scheme.ODE_STRANG)

    @property
    def kernel_id(self) -> int:
        return {
            Scheme.EULER_MARUYAMA: _numerics.SCHEME_EM,
            Scheme.LIE_TROTTER: _numerics.SCHEME_LT,
            Scheme.ODE_LIE_TROTTER: _numerics.SCHEME_LT,
            Scheme.STRANG: _numerics.SCHEME_STRANG,
            Scheme.ODE_STRANG: _numerics.SCHEME_STRANG,
        }[self]


@dataclass
class Trajectory:
    """Solution on the uniform grid ``t_i = i * delta``."""

    delta: float
    states: np.ndarray  # (n_steps + 1, kappa)
    scheme: Scheme | None = None

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(self.states.shape[0])

    def __len__(self):
        return self.states.shape[0]


def _xi(xi) -> tuple[float, float]:
    xi = np.asarray(xi, dtype=float)
    return float(xi[0]), float(xi[1])


def em_step(model: NetworkModel, x, delta: float, noise_scale: float, xi) -> np.ndarray:
    """``x + delta (A x + B(x)) + sqrt(delta) noise_scale sigma(x) xi``."""
    x = _as_state(model, x)
    out = np.empty_like(x)
    _numerics.em_step(model.packed, x, float(delta), float(noise_scale), *_xi(xi), out, np.empty(2 * x.size))
    return out


def lt_step(model: NetworkModel, x, delta: float, noise_scale: float, xi) -> np.ndarray:
    """Nonlinear/noise sub-flow for ``delta`` followed by the exact linear flow."""
    x = _as_state(model, x)
    out = np.empty_like(x)
    coef = _numerics.expm_coeffs(model.packed, float(delta))
    _numerics.lt_step(model.packed, coef, x, float(delta), float(noise_scale), *_xi(xi), out, np.empty(2 * x.size))
    return out


def strang_step(model: NetworkModel, x, delta: float, noise_scale: float, xi) -> np.ndarray:
    """Half linear flow, full nonlinear/noise sub-flow, half linear flow."""
    x = _as_state(model, x)
    out = np.empty_like(x)
    coef = _numerics.expm_coeffs(model.packed, 0.5 * float(delta))
    _numerics.strang_step(model.packed, coef, x, float(delta), float(noise_scale), *_xi(xi), out, np.empty(2 * x.size))
    return out


def integrate_paths(
    model: NetworkModel,
    scheme: Scheme,
    x0,
    delta: float,
    n_steps: int,
    noise_scale: float,
    xi: np.ndarray | None = None,
    stride: int = 1,
) -> np.ndarray:
    """Integrate a batch of paths with prescribed normal increments.

    ``x0`` has shape (M, kappa) or (kappa,); ``xi`` has shape (n_steps, M, 2).
    Returns states of shape (n_steps // stride + 1, M, kappa).
    """
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n_paths = x0.shape[0]
    if scheme.is_ode:
        noise_scale = 0.0
    if noise_scale != 0.0:
        if xi is None or xi.shape != (n_steps, n_paths, 2):
            raise ValueError(f"xi must have shape ({n_steps}, {n_paths}, 2)")
        xi = np.ascontiguousarray(xi, dtype=float)
    else:
        xi = np.zeros((0, 0, 2))
    out = np.empty((n_steps // stride + 1, n_paths, model.kappa))
    bad = _numerics.integrate_paths(model.packed, scheme.kernel_id, np.ascontiguousarray(x0), float(delta),
                                    int(n_steps), float(noise_scale), xi, int(stride), out)
    if bad >= 0:
        raise NumericalError(f"non-finite state at step {bad} ({scheme.value}, delta={delta})")
    return out


def integrate(
    model: NetworkModel,
    scheme: Scheme,
    x0,
    delta: float,
    n_steps: int,
    noise_scale: float,
    rng: RngStream | None,
    stride: int = 1,
) -> Trajectory:
    """Single path; increments are drawn as an (n_steps, 2) standard normal block.

    Column 1 of each draw drives population 2 and column 2 drives population 1.
    """
    x0 = _as_state(model, x0)
    xi = None
    if not scheme.is_ode and noise_scale != 0.0:
        if rng is None:
            raise ValueError("a random stream is required for stochastic schemes")
        xi = rng.normal((n_steps, 1, 2))
    states = integrate_paths(model, scheme, x0, delta, n_steps, noise_scale, xi, stride)
    return Trajectory(delta * stride, states[:, 0, :], scheme)


def coarsen_noise(xi_fine: np.ndarray, factor: int) -> np.ndarray:
    """Standard normals for a step ``factor`` times larger, built from the fine ones.

    ``sqrt(D) xi_coarse = sqrt(D / factor) * sum(xi_fine)`` over each coarse step.
    """
    n, m, d = xi_fine.shape
    if n % factor:
        raise ValueError(f"{n} fine steps are not divisible by {factor}")
    return xi_fine.reshape(n // factor, factor, m, d).sum(axis=1) / math.sqrt(factor)


def conditional_covariance(model: NetworkModel, x, delta: float, n_total: float | None = None) -> np.ndarray:
    """One-step covariance ``(delta/N) e^{A delta} sigma sigma^T e^{A delta}^T`` of the splitting scheme."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    n_total = model.total_neurons if n_total is None else n_total
    sig = sigma_matrix(model, x)
    prop = np.column_stack([expm_action(model, delta, sig[:, m]) for m in range(2)])
    return (delta / n_total) * prop @ prop.T


def milstein_correction(
    model: NetworkModel,
    x,
    sigma_fn: Callable[[NetworkModel, np.ndarray], np.ndarray] | None = None,
    h: float = 1e-6,
) -> np.ndarray:
    """Coefficients ``sum_l sigma^{l,m1} d sigma^{j,m2} / d x^l`` for all (j, m1, m2).

    Derivatives by central differences with step ``h``. Returns an array of
    shape (kappa, 2, 2); it vanishes identically for the network's own
    diffusion matrix. ``sigma_fn`` substitutes another diffusion matrix.
    """
    x = _as_state(model, x)
    sigma_fn = sigma_fn or sigma_matrix
    sig = sigma_fn(model, x)
    kap = model.kappa
    # dsig[l, j, m] = d sigma^{j,m} / d x^l
    dsig = np.empty((kap, kap, 2))
    for l in range(kap):
        e = np.zeros(kap)
        e[l] = h
        dsig[l] = (sigma_fn(model, x + e) - sigma_fn(model, x - e)) / (2 * h)
    return np.einsum("lp,ljq->jpq", sig, dsig)
