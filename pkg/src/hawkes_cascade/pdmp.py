"""Exact simulation of the Markovian cascade by thinning."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _numerics
from .errors import NumericalError
from .model import NetworkModel, RngStream, _as_state, expm_action

__all__ = [
    "BoundKind",
    "SpikeTrain",
    "PdmpPath",
    "RejectionStats",
    "PdmpResult",
    "poly_real_roots",
    "critical_points",
    "global_bound",
    "local_bound",
    "adaptive_window",
    "thinning_simulate",
    "replay_path",
]


class BoundKind(enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


def poly_real_roots(coefficients, interval: tuple[float, float]) -> list[float]:
    """Distinct real roots of a polynomial inside an open interval.

    Parameters
    ----------
    coefficients : sequence of float
        Coefficients in ascending degree, ``p(t) = sum(a[i] * t**i)``.
    interval : (lo, hi)
        Open interval searched.

    Degrees up to 2 use the closed forms; higher degrees use the
    eigenvalues of the companion matrix. Roots are Newton-polished,
    deduplicated within 1e-9 and returned sorted.
    """
    a = np.trim_zeros(np.asarray(coefficients, dtype=float), "b")
    lo, hi = interval
    if a.size <= 1:
        return []
    scale = np.max(np.abs(a))
    a = a / scale
    while a.size > 1 and abs(a[-1]) <= 1e-14:
        a = a[:-1]
    deg = a.size - 1
    if deg == 0:
        return []
    if deg <= 2:
        buf = np.empty(2)
        n = _numerics._raw_roots(a, deg, buf)
        raw = buf[:n]
    else:
        # numpy.roots builds the companion matrix from descending coefficients
        ev = np.roots(a[::-1])
        raw = ev.real[np.abs(ev.imag) <= 1e-8 * np.maximum(1.0, np.abs(ev.real))]
    out: list[float] = []
    for r in sorted(raw):
        r = float(_numerics._polish(a, deg, float(r)))
        if not (lo < r < hi):
            continue
        if out and abs(out[-1] - r) <= 1e-9 * max(1.0, abs(r)):
            continue
        out.append(r)
    return sorted(out)


def critical_points(model: NetworkModel, k: int, x, window: float) -> list[float]:
    """Critical times in (0, window) of ``t -> (exp(A t) x)^{k,1}``."""
    if not window > 0:
        raise ValueError(f"window must be > 0, got {window}")
    x = _as_state(model, x)
    coeffs = _numerics.critical_poly(model.packed, k - 1, x)
    return poly_real_roots(coeffs, (0.0, window))


def global_bound(model: NetworkModel, k: int, x) -> float:
    """Intensity bound valid for all future times in the absence of spikes."""
    x = _as_state(model, x)
    return float(model.pop(k).rate(_numerics.global_phi(model.packed, k - 1, x)))


def local_bound(model: NetworkModel, k: int, x, window: float) -> float:
    """Intensity bound valid on ``[0, window]`` from the critical points of the flow."""
    x = _as_state(model, x)
    if not window > 0:
        raise ValueError(f"window must be > 0, got {window}")
    best = max(x[model.block(k).start], _numerics.main_component_at(model.packed, k - 1, x, window))
    for tc in critical_points(model, k, x, window):
        best = max(best, _numerics.main_component_at(model.packed, k - 1, x, tc))
    if not np.isfinite(best):
        raise NumericalError(f"local bound is not finite for population {k}")
    return float(model.pop(k).rate(best))


def adaptive_window(model: NetworkModel, lambda_1: float, lambda_2: float) -> float:
    """``1 / (N_1 lambda_1 + N_2 lambda_2)`` clamped to [1e-6, 10]."""
    return float(_numerics.adaptive_window(model.packed, float(lambda_1), float(lambda_2)))


@dataclass
class RejectionStats:
    """Visits of the three branches of the thinning loop."""

    advanced: int
    accepted: int
    rejected: int

    @property
    def candidates(self) -> int:
        return self.accepted + self.rejected

    @property
    def rejection_fraction(self) -> float:
        return self.rejected / self.candidates if self.candidates else 0.0


@dataclass
class SpikeTrain:
    """Accepted spikes as parallel arrays; per-neuron lists are built on demand."""

    n_neurons: tuple[int, int]
    times: np.ndarray
    population: np.ndarray  # 1-based
    neuron: np.ndarray  # 1-based within population

    def population_times(self, k: int) -> np.ndarray:
        return self.times[self.population == k]

    def neuron_times(self, k: int, n: int) -> np.ndarray:
        return self.times[(self.population == k) & (self.neuron == n)]

    def as_lists(self) -> dict[int, list[np.ndarray]]:
        return {k: [self.neuron_times(k, n) for n in range(1, self.n_neurons[k - 1] + 1)] for k in (1, 2)}

    def count(self, k: int) -> int:
        return int(np.sum(self.population == k))


@dataclass
class PdmpPath:
    """Accepted events with the post-jump state and both intensities."""

    x0: np.ndarray
    times: np.ndarray
    k_star: np.ndarray  # 1-based spiking population
    neuron: np.ndarray
    states: np.ndarray  # (n_events, kappa)
    intensities: np.ndarray  # (n_events, 2)

    def __len__(self):
        return self.times.size


@dataclass
class PdmpResult:
    path: PdmpPath | None
    spikes: SpikeTrain | None
    stats: RejectionStats
    spike_counts: tuple[int, int]
    t_max: float
    grid_dt: float | None = None
    grid: np.ndarray | None = field(default=None, repr=False)


def thinning_simulate(
    model: NetworkModel,
    x0,
    t_max: float,
    bound: BoundKind,
    rng: RngStream,
    *,
    record: str = "full",
    grid_dt: float | None = None,
    window: float | None = None,
    _acceptance_scale: float = 1.0,
) -> PdmpResult:
    """Simulate spikes and the cascade on ``[0, t_max]``.

    Parameters
    ----------
    record : {"full", "spikes", "none"}
        ``"full"`` keeps the event path and spike train, ``"spikes"`` only the
        spike train, ``"none"`` only counts (long stationary runs).
    grid_dt : float, optional
        Additionally sample the state on a uniform time grid.
    window : float, optional
        Fixed local-bound window; by default it adapts to the current intensities.
    _acceptance_scale : float
        Multiplies the acceptance probability. Test hook for negative controls.
    """
    if not t_max > 0:
        raise ValueError(f"t_max must be > 0, got {t_max}")
    x0 = _as_state(model, x0).copy()
    rec = {"none": 0, "spikes": 1, "full": 2}[record]
    status, stats, ev_t, ev_k, ev_n, ev_x, ev_lam, grid = _numerics.thinning(
        model.packed, x0, float(t_max), bound is BoundKind.LOCAL, rng.kernel_seed(),
        float(_acceptance_scale), rec, float(grid_dt or 0.0), float(window or 0.0),
    )
    if status == _numerics.STATUS_BROKEN_BOUND:
        raise NumericalError("acceptance ratio exceeded 1: intensity bound violated")
    if status == _numerics.STATUS_NONFINITE:
        raise NumericalError("non-finite cascade state during thinning")
    rs = RejectionStats(int(stats[0]), int(stats[1]), int(stats[2]))
    spikes = path = None
    nn = tuple(q.n_neurons for q in model.populations)
    if rec >= 1:
        spikes = SpikeTrain(nn, ev_t, ev_k + 1, ev_n + 1)
    if rec == 2:
        path = PdmpPath(x0, ev_t, ev_k + 1, ev_n + 1, ev_x, ev_lam)
    return PdmpResult(
        path=path,
        spikes=spikes,
        stats=rs,
        spike_counts=(int(stats[3]), int(stats[4])),
        t_max=float(t_max),
        grid_dt=grid_dt,
        grid=grid if grid_dt else None,
    )


def replay_path(model: NetworkModel, path: PdmpPath) -> np.ndarray:
    """Rebuild each recorded state from the previous one by flow plus jump."""
    out = np.empty_like(path.states)
    x = path.x0.copy()
    t = 0.0
    eta1 = model.populations[0].eta
    for i in range(len(path)):
        x = expm_action(model, path.times[i] - t, x)
        if path.k_star[i] == 2:
            x[eta1] += model.pop(1).c / model.pop(2).n_neurons
        else:
            x[model.kappa - 1] += model.pop(2).c / model.pop(1).n_neurons
        out[i] = x
        t = path.times[i]
    return out
