"""Analytic moment bounds, their long-time limits and Lyapunov diagnostics.

All bounds refer to a component ``(k, j)`` of population ``k``; the driving
population is ``k + 1`` (mod 2). ``order = eta_k + 1 - j`` is the number of
cascade stages between the jump input and the component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .model import NetworkModel, _as_state

__all__ = [
    "MomentBoundCurve",
    "first_moment_bounds",
    "second_moment_bound",
    "discrete_first_moment_bounds",
    "discrete_second_moment_bound",
    "continuous_integral",
    "riemann_sum",
    "stirling2",
    "polylog_neg",
    "discrete_asymptotic_bounds",
    "lyapunov_G_discrete",
    "lyapunov_alpha",
    "lyapunov_contraction_gap",
    "lyapunov_beta",
    "moment_bound_curves",
]


def _check(model: NetworkModel, k: int, j: int) -> int:
    eta = model.pop(k).eta
    if not 1 <= j <= eta + 1:
        raise IndexError(f"component j={j} out of range 1..{eta + 1}")
    return eta + 1 - j


def _linear_part(model, x0, k, j, t):
    """``(exp(A t) x0)^{k,j}`` for scalar or array ``t``."""
    x0 = _as_state(model, x0)
    q = model.pop(k)
    blk = x0[model.block(k)]
    ts = np.asarray(t, dtype=float)
    acc = np.zeros_like(ts)
    term = np.ones_like(ts)
    for r, m in enumerate(range(j - 1, q.eta + 1)):
        if r:
            term = term * ts / r
        acc = acc + term * blk[m]
    val = np.exp(-q.nu * ts) * acc
    return val if val.ndim else float(val)


def _driver_fmax(model, k):
    return model.f_max(model.driver(k))


def continuous_integral(model: NetworkModel, k: int, j: int, t, u: int = 1):
    """``int_0^t exp(-u nu (t-s)) (t-s)^{u*order} ds`` in closed form."""
    order = _check(model, k, j)
    nu = model.pop(k).nu
    n = u * order
    t = np.asarray(t, dtype=float)
    val = math.factorial(n) / (u * nu) ** (n + 1) * special.gammainc(n + 1, u * nu * t)
    return val if val.ndim else float(val)


def riemann_sum(model: NetworkModel, k: int, j: int, i, delta: float, u: int = 1,
                include_l0: bool = True):
    """``delta * sum_l exp(-u nu t_l) t_l^{u*order}`` for ``l = 0..i`` (``0**0 = 1``).

    ``i`` may be an integer array; all partial sums come from one cumulative sum.
    """
    order = _check(model, k, j)
    nu = model.pop(k).nu
    idx = np.asarray(i, dtype=np.int64)
    tl = delta * np.arange(int(idx.max(initial=0)) + 1)
    terms = np.exp(-u * nu * tl) * tl ** (u * order)
    if not include_l0:
        terms[0] = 0.0
    val = delta * np.cumsum(terms)[idx]
    return val if val.ndim else float(val)


def first_moment_bounds(model: NetworkModel, x0, k: int, j: int, t):
    """Lower and upper bounds on ``E[X_t^{k,j}]`` for the diffusion."""
    order = _check(model, k, j)
    nu = model.pop(k).nu
    c = model.pop(k).c
    amp = c * _driver_fmax(model, k) / nu ** (order + 1)
    bracket = special.gammainc(order + 1, nu * np.asarray(t, dtype=float))
    base = _linear_part(model, x0, k, j, t)
    lo = base + bracket * min(0.0, amp)
    hi = base + bracket * max(0.0, amp)
    if np.ndim(t):
        return lo, hi
    return float(lo), float(hi)


def _second_moment(model, base, k, order, i1, i2):
    fmax = _driver_fmax(model, k)
    c = model.pop(k).c
    fact = math.factorial(order)
    n_p = model.total_neurons * model.p[model.driver(k) - 1]
    cross = 2.0 * base * np.maximum(0.0, c * fmax / fact * i1)
    fluct = fmax * (c / fact) ** 2 * (math.sqrt(fmax) * i1 + np.sqrt(i2 / n_p)) ** 2
    return base**2 + cross + fluct


def second_moment_bound(model: NetworkModel, x0, k: int, j: int, t):
    """Upper bound on ``E[(X_t^{k,j})^2]`` for the diffusion."""
    order = _check(model, k, j)
    base = _linear_part(model, x0, k, j, t)
    i1 = continuous_integral(model, k, j, t, 1)
    i2 = continuous_integral(model, k, j, t, 2)
    val = _second_moment(model, np.asarray(base), k, order, np.asarray(i1), np.asarray(i2))
    return val if np.ndim(t) else float(val)


def discrete_first_moment_bounds(model: NetworkModel, x0, k: int, j: int, i, delta: float,
                                 include_l0: bool = True):
    """Bounds on ``E[X~_{t_i}^{k,j}]`` for the splitting scheme with step ``delta``.

    ``i`` is a step index or an array of them. ``include_l0=False`` drops the
    ``l = 0`` summand of the Riemann sum, which only matters for ``j = eta_k + 1``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    order = _check(model, k, j)
    amp = model.pop(k).c * _driver_fmax(model, k) / math.factorial(order)
    s = riemann_sum(model, k, j, i, delta, 1, include_l0)
    base = _linear_part(model, x0, k, j, np.asarray(i) * delta)
    return base + s * min(0.0, amp), base + s * max(0.0, amp)


def discrete_second_moment_bound(model: NetworkModel, x0, k: int, j: int, i, delta: float,
                                 include_l0: bool = True):
    """Upper bound on ``E[(X~_{t_i}^{k,j})^2]``: the continuous bound with Riemann sums."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    order = _check(model, k, j)
    base = _linear_part(model, x0, k, j, np.asarray(i) * delta)
    i1 = riemann_sum(model, k, j, i, delta, 1, include_l0)
    i2 = riemann_sum(model, k, j, i, delta, 2, include_l0)
    val = _second_moment(model, np.asarray(base), k, order, np.asarray(i1), np.asarray(i2))
    return val if np.ndim(i) else float(val)


def stirling2(n: int, m: int) -> int:
    """Stirling number of the second kind ``S(n, m)``."""
    if n > 64:
        raise OverflowError(f"stirling2 supports n <= 64, got {n}")
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got n={n}, m={m}")
    row = [1] + [0] * m  # S(0, .)
    for nn in range(1, n + 1):
        new = [0] * (m + 1)
        for mm in range(1, min(nn, m) + 1):
            new[mm] = mm * row[mm] + row[mm - 1]
        row = new
    return row[m]


def polylog_neg(order: int, z: float) -> float:
    """``sum_{l>=0} l**order z**l`` (with ``0**0 = 1``) via the Stirling closed form."""
    if not 0 < z < 1:
        raise ValueError(f"z must lie in (0, 1), got {z}")
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    w = -1.0 / (1.0 - z)
    total = sum(math.factorial(l) * stirling2(order + 1, l + 1) * w ** (l + 1) for l in range(order + 1))
    return (-1) ** (order + 1) * total


def discrete_asymptotic_bounds(model: NetworkModel, k: int, j: int, delta: float) -> tuple[float, float]:
    """``i -> infinity`` limits of the discrete first-moment bounds."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    order = _check(model, k, j)
    nu = model.pop(k).nu
    amp = _driver_fmax(model, k) * model.pop(k).c / math.factorial(order)
    s = delta ** (order + 1) * polylog_neg(order, math.exp(-nu * delta))
    return s * min(0.0, amp), s * max(0.0, amp)


def _weights(model: NetworkModel, k: int) -> np.ndarray:
    q = model.pop(k)
    return np.array([j / q.nu ** (j - 1) for j in range(1, q.eta + 2)])


def lyapunov_G_discrete(model: NetworkModel, x) -> float:
    """``sum_k sum_j j / nu_k^{j-1} |x^{k,j}|``."""
    x = _as_state(model, x)
    return float(sum(_weights(model, k) @ np.abs(x[model.block(k)]) for k in (1, 2)))


def lyapunov_alpha(model: NetworkModel, delta: float) -> float:
    """``max_k exp(-nu_k delta) sum_{r<=eta_k} (nu_k delta)^r / r!``; always below 1."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    # exp(-z) sum_{r<=eta} z^r / r! is the Poisson(z) distribution function at eta
    vals = [float(special.gammaincc(q.eta + 1, q.nu * delta)) for q in model.populations]
    return max(vals)


def lyapunov_contraction_gap(model: NetworkModel, delta: float) -> float:
    """``1 - alpha`` computed without cancellation.

    ``alpha_k`` is the probability that a Poisson(nu_k delta) variable is at
    most ``eta_k``, so ``1 - alpha_k`` is the regularised lower incomplete
    gamma function ``P(eta_k + 1, nu_k delta)``. For small ``nu delta`` it
    lies far below machine epsilon, where ``lyapunov_alpha`` rounds to 1.
    """
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return min(float(special.gammainc(q.eta + 1, q.nu * delta)) for q in model.populations)


def lyapunov_beta(model: NetworkModel, delta: float, n_total: float | None = None) -> float:
    """Additive constant of the one-step Lie-Trotter drift of ``G~``.

    Bounds ``delta G~(e^{A delta} B(x)) + E G~(sqrt(delta/N) e^{A delta} sigma(x) xi)``
    uniformly in ``x``, using ``f <= f_max`` and ``E|xi| = sqrt(2/pi)``.
    """
    n_total = model.total_neurons if n_total is None else n_total
    total = 0.0
    for k in (1, 2):
        q = model.pop(k)
        drv = model.driver(k)
        fmax = model.f_max(drv)
        # G~ of exp(A delta) applied to a unit input on the last component of block k
        prop = sum(j / q.nu ** (j - 1) * math.exp(-q.nu * delta) * delta ** (q.eta + 1 - j)
                   / math.factorial(q.eta + 1 - j) for j in range(1, q.eta + 2))
        noise = math.sqrt(delta / n_total) * math.sqrt(fmax / model.p[drv - 1]) * math.sqrt(2 / math.pi)
        total += prop * (delta * fmax + noise)
    return total


@dataclass
class MomentBoundCurve:
    """Bounds for one component on a time grid."""

    component: tuple[int, int]
    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    order: str  # "first" | "second"
    flavor: str  # "continuous" | "discrete"
    delta: float | None = None

    def rows(self):
        flavor = self.flavor if self.delta is None else f"discrete({self.delta!r})"
        comp = f"{self.component[0]},{self.component[1]}"
        for t, lo, hi in zip(self.times, self.lower, self.upper):
            yield float(t), comp, float(lo), float(hi), self.order, flavor


def moment_bound_curves(model: NetworkModel, x0, times, delta: float | None = None,
                        components=None) -> list[MomentBoundCurve]:
    """First- and second-order curves for every requested component.

    With ``delta`` given the discrete (splitting-scheme) curves are added on the
    grid ``i * delta`` for the entries of ``times`` that are multiples of it.
    """
    times = np.asarray(times, dtype=float)
    if components is None:
        components = [(k, j) for k in (1, 2) for j in range(1, model.pop(k).eta + 2)]
    out = []
    for k, j in components:
        lo, hi = first_moment_bounds(model, x0, k, j, times)
        out.append(MomentBoundCurve((k, j), times, np.asarray(lo), np.asarray(hi), "first", "continuous"))
        sec = second_moment_bound(model, x0, k, j, times)
        out.append(MomentBoundCurve((k, j), times, np.zeros_like(times), np.asarray(sec), "second", "continuous"))
        if delta is not None:
            idx = np.rint(times / delta).astype(int)
            if not np.allclose(idx * delta, times, rtol=0, atol=1e-9 * max(1.0, times.max(initial=1.0))):
                raise ValueError("times must be multiples of delta for discrete bounds")
            d_lo, d_hi = discrete_first_moment_bounds(model, x0, k, j, idx, delta)
            d_sec = discrete_second_moment_bound(model, x0, k, j, idx, delta)
            out.append(MomentBoundCurve((k, j), times, np.array(d_lo), np.array(d_hi), "first", "discrete", delta))
            out.append(MomentBoundCurve((k, j), times, np.zeros_like(times), np.array(d_sec), "second",
                                        "discrete", delta))
    return out
