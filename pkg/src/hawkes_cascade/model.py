"""Two-population Erlang-kernel Hawkes network: parameters, rates and the cascade flow.

States are plain float arrays of length ``kappa`` laid out population by
population: ``x[0:eta_1+1]`` is the block of population 1 and
``x[eta_1+1:]`` the block of population 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _numerics

__all__ = [
    "ExpSigmoid",
    "ClippedLinear",
    "Constant",
    "RateFunction",
    "PopulationParams",
    "NetworkModel",
    "RngStream",
    "index_map",
    "expm_action",
    "drift_B",
    "diffusion_sigma_action",
    "sigma_matrix",
    "full_drift",
    "generator_matrix",
    "paper_rates",
    "paper_model",
]


@dataclass(frozen=True)
class ExpSigmoid:
    """Exponential rate switching to a sigmoid above ``log(threshold)``.

    ``f(x) = scale * exp(x)`` for ``x < log(threshold)`` and
    ``2 * scale * threshold / (1 + threshold**2 * exp(-2x))`` otherwise.
    """

    scale: float
    threshold: float

    kind = _numerics.RATE_EXP_SIGMOID

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"ExpSigmoid scale must be > 0, got {self.scale}")
        if not self.threshold > 1:
            raise ValueError(f"ExpSigmoid threshold must be > 1, got {self.threshold}")

    @property
    def f_max(self) -> float:
        return 2.0 * self.scale * self.threshold

    @property
    def params(self) -> tuple[float, float, float]:
        return (float(self.scale), float(self.threshold), math.log(self.threshold))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        s, th = self.scale, self.threshold
        low = x < math.log(th)
        with np.errstate(over="ignore"):
            out = np.where(low, s * np.exp(np.minimum(x, math.log(th))),
                           2.0 * s * th / (1.0 + th * th * np.exp(-2.0 * np.maximum(x, math.log(th)))))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ClippedLinear:
    """``f(x) = min(base + slope * max(x, 0), cap)``."""

    base: float
    slope: float
    cap: float

    kind = _numerics.RATE_CLIPPED_LINEAR

    def __post_init__(self):
        if not self.base > 0:
            raise ValueError(f"ClippedLinear base must be > 0, got {self.base}")
        if not self.slope >= 0:
            raise ValueError(f"ClippedLinear slope must be >= 0, got {self.slope}")
        if not self.cap >= self.base:
            raise ValueError(f"ClippedLinear cap must be >= base, got {self.cap}")

    @property
    def f_max(self) -> float:
        return float(self.cap)

    @property
    def params(self) -> tuple[float, float, float]:
        return (float(self.base), float(self.slope), float(self.cap))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.minimum(self.base + self.slope * np.maximum(x, 0.0), self.cap)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Constant:
    value: float

    kind = _numerics.RATE_CONSTANT

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"Constant rate must be > 0, got {self.value}")

    @property
    def f_max(self) -> float:
        return float(self.value)

    @property
    def params(self) -> tuple[float, float, float]:
        return (float(self.value), 0.0, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.value)
        return out if out.ndim else float(out)


RateFunction = Union[ExpSigmoid, ClippedLinear, Constant]


@dataclass(frozen=True)
class PopulationParams:
    """One population: Erlang kernel ``c * exp(-nu t) t**eta / eta!`` and its rate.

    ``p`` is the limit proportion ``N_k / N``; ``None`` means "use n_neurons / N"
    and is resolved by :class:`NetworkModel`.
    """

    eta: int
    nu: float
    c: int
    n_neurons: int
    rate: RateFunction
    p: float | None = None

    def __post_init__(self):
        # eta = 0 is accepted for internal tests (pure exponential kernel)
        if int(self.eta) != self.eta or self.eta < 0:
            raise ValueError(f"eta must be a non-negative integer, got {self.eta}")
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if self.c not in (-1, 1):
            raise ValueError(f"c must be -1 or +1, got {self.c}")
        if int(self.n_neurons) != self.n_neurons or self.n_neurons < 1:
            raise ValueError(f"n_neurons must be a positive integer, got {self.n_neurons}")
        if self.p is not None and not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")


@dataclass(frozen=True)
class NetworkModel:
    """Cyclic two-population network; population k is driven by population k+1 (mod 2)."""

    populations: tuple[PopulationParams, PopulationParams]
    packed: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pops = tuple(self.populations)
        if len(pops) != 2:
            raise ValueError("exactly two populations are supported")
        object.__setattr__(self, "populations", pops)
        n_total = sum(q.n_neurons for q in pops)
        ps = [q.p if q.p is not None else q.n_neurons / n_total for q in pops]
        if abs(ps[0] + ps[1] - 1.0) > 1e-12:
            raise ValueError(f"proportions must sum to 1, got {ps[0]} + {ps[1]}")
        object.__setattr__(self, "_p", (float(ps[0]), float(ps[1])))
        object.__setattr__(self, "packed", _numerics.pack(
            eta=[q.eta for q in pops],
            nu=[q.nu for q in pops],
            c=[q.c for q in pops],
            n_neurons=[q.n_neurons for q in pops],
            p=ps,
            rate_kind=[q.rate.kind for q in pops],
            rate_params=[q.rate.params for q in pops],
        ))

    @property
    def kappa(self) -> int:
        return sum(q.eta + 1 for q in self.populations)

    @property
    def total_neurons(self) -> int:
        return sum(q.n_neurons for q in self.populations)

    @property
    def p(self) -> tuple[float, float]:
        return self._p

    def pop(self, k: int) -> PopulationParams:
        """Population ``k`` (1-based)."""
        if k not in (1, 2):
            raise IndexError(f"population index must be 1 or 2, got {k}")
        return self.populations[k - 1]

    def driver(self, k: int) -> int:
        """Index of the population driving population ``k``."""
        return 2 if k == 1 else 1

    def block(self, k: int) -> slice:
        eta1 = self.populations[0].eta
        if k == 1:
            return slice(0, eta1 + 1)
        if k == 2:
            return slice(eta1 + 1, self.kappa)
        raise IndexError(f"population index must be 1 or 2, got {k}")

    def f_max(self, k: int) -> float:
        return self.pop(k).rate.f_max

    def zeros(self) -> np.ndarray:
        return np.zeros(self.kappa)

    def with_neurons(self, n1: int, n2: int) -> "NetworkModel":
        """Copy with new population sizes; proportions follow the new sizes."""
        q1, q2 = self.populations
        return NetworkModel((
            PopulationParams(q1.eta, q1.nu, q1.c, n1, q1.rate),
            PopulationParams(q2.eta, q2.nu, q2.c, n2, q2.rate),
        ))


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Distinct stream ids give statistically independent generators through
    :class:`numpy.random.SeedSequence` spawning keys.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(self._ss))

    def child(self, index: int) -> "RngStream":
        """Stream for replicate ``index`` of this stream, independent of the parent."""
        return RngStream(self.seed, (self.stream_id << 20) + int(index) + 1)

    def kernel_seed(self) -> int:
        """32-bit seed for the compiled simulation kernels."""
        return int(self._ss.generate_state(1, dtype=np.uint32)[0])

    def exponential(self, rate: float, size=None):
        return self.generator.exponential(1.0 / rate, size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def index_map(model: NetworkModel, k: int, j: int) -> int:
    """1-based flat index of component ``(k, j)``."""
    if k not in (1, 2):
        raise IndexError(f"population index must be 1 or 2, got {k}")
    eta = model.pop(k).eta
    if not 1 <= j <= eta + 1:
        raise IndexError(f"component index j={j} out of range 1..{eta + 1} for population {k}")
    return j if k == 1 else model.populations[0].eta + 1 + j


def _as_state(model: NetworkModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.kappa,):
        raise ValueError(f"state must have shape ({model.kappa},), got {x.shape}")
    return x


def expm_action(model: NetworkModel, t: float, x) -> np.ndarray:
    """``exp(A t) x`` through the closed-form upper-triangular Toeplitz blocks."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    x = _as_state(model, x)
    out = np.empty_like(x)
    _numerics.expm_apply(model.packed, float(t), x, out)
    return out


def drift_B(model: NetworkModel, x) -> np.ndarray:
    x = _as_state(model, x)
    out = np.zeros_like(x)
    _numerics.add_drift_b(model.packed, x, 1.0, out)
    return out


def diffusion_sigma_action(model: NetworkModel, x, xi) -> np.ndarray:
    """``sigma(x) @ xi``; column 2 drives population 1, column 1 drives population 2."""
    x = _as_state(model, x)
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(x)
    _numerics.add_sigma_xi(model.packed, x, xi[0], xi[1], 1.0, out)
    return out


def sigma_matrix(model: NetworkModel, x) -> np.ndarray:
    """Dense ``kappa x 2`` diffusion matrix."""
    x = _as_state(model, x)
    out = np.zeros((model.kappa, 2))
    out[:, 0] = diffusion_sigma_action(model, x, (1.0, 0.0))
    out[:, 1] = diffusion_sigma_action(model, x, (0.0, 1.0))
    return out


def generator_matrix(model: NetworkModel) -> np.ndarray:
    """Dense matrix ``A``: ``-nu_k`` on the diagonal, ones on the in-block superdiagonal."""
    A = np.zeros((model.kappa, model.kappa))
    for k in (1, 2):
        sl = model.block(k)
        n = sl.stop - sl.start
        blk = -model.pop(k).nu * np.eye(n) + np.eye(n, k=1)
        A[sl, sl] = blk
    return A


def full_drift(model: NetworkModel, x) -> np.ndarray:
    """``A x + B(x)``."""
    x = _as_state(model, x)
    out = np.empty_like(x)
    _numerics.linear_drift(model.packed, x, out)
    _numerics.add_drift_b(model.packed, x, 1.0, out)
    return out


def paper_rates() -> tuple[ExpSigmoid, ExpSigmoid]:
    """The exponential/sigmoid rates ``f_1`` (scale 10) and ``f_2`` (scale 1), threshold 20."""
    return ExpSigmoid(10.0, 20.0), ExpSigmoid(1.0, 20.0)


def paper_model(n1: int = 50, n2: int = 50, eta=(3, 2), nu=(1.0, 1.0), rates=None) -> NetworkModel:
    """Default network of the numerical study: inhibitory population 1, excitatory population 2."""
    f1, f2 = rates if rates is not None else paper_rates()
    return NetworkModel((
        PopulationParams(eta[0], nu[0], -1, n1, f1),
        PopulationParams(eta[1], nu[1], +1, n2, f2),
    ))
