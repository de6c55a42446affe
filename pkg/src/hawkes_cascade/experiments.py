"""Numerical-study harnesses: convergence order, densities, PDMP/diffusion comparison, timing."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientDataError
from .integrators import Scheme, coarsen_noise, integrate_paths
from .model import NetworkModel, RngStream
from .pdmp import BoundKind, PdmpPath, thinning_simulate

__all__ = [
    "RmseRow",
    "RmseTable",
    "rmse_convergence",
    "DensityEstimate",
    "kde",
    "ComparisonReport",
    "compare_pdmp_diffusion",
    "TimingRow",
    "timing_benchmark",
    "KsResult",
    "time_rescaling_ks",
    "batch_means_se",
]


def _ratio(a: float, b: float) -> int:
    r = a / b
    n = int(round(r))
    if n < 1 or abs(r - n) > 1e-9 * max(1.0, r):
        raise ValueError(f"{b!r} does not divide {a!r}")
    return n


def _run_batches(fn, n_batches: int, workers: int):
    if workers <= 1 or n_batches <= 1:
        return [fn(b) for b in range(n_batches)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_batches)))


# ---------------------------------------------------------------- convergence


@dataclass
class RmseRow:
    delta: float
    scheme: str
    rmse: float
    se: float
    M: int
    t_star: float


@dataclass
class RmseTable:
    rows: list[RmseRow]
    slopes: dict[str, float]
    residuals: dict[str, float]
    monotone_flags: dict[str, str]
    config: dict = field(default_factory=dict)

    def rmse(self, scheme: str) -> np.ndarray:
        rows = sorted((r for r in self.rows if r.scheme == scheme), key=lambda r: r.delta)
        return np.array([r.rmse for r in rows])

    def deltas(self, scheme: str) -> np.ndarray:
        return np.array(sorted(r.delta for r in self.rows if r.scheme == scheme))


def _fit_slope(deltas, rmse):
    x = np.log10(deltas)
    y = np.log10(rmse)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    return float(coef[0]), float(res[0]) if res.size else 0.0


def rmse_convergence(
    model: NetworkModel,
    schemes,
    deltas,
    M: int,
    t_star: float,
    ref_delta: float,
    rng: RngStream,
    *,
    x0=None,
    noise_scale: float | None = None,
    reference_scheme: Scheme = Scheme.EULER_MARUYAMA,
    batch_size: int = 50,
    workers: int = 1,
) -> RmseTable:
    """Strong error at ``t_star`` against a fine reference driven by the same noise.

    Each batch of replicates draws fine-step normals once from its own child
    stream; coarse steps use their normalised sums, so reference and
    approximations follow the same Brownian path.
    """
    deltas = sorted(float(d) for d in deltas)
    schemes = [Scheme(s) for s in schemes]
    factors = {d: _ratio(d, ref_delta) for d in deltas}
    n_fine = _ratio(t_star, ref_delta)
    for d in deltas:
        _ratio(t_star, d)
    x0 = model.zeros() if x0 is None else np.asarray(x0, dtype=float)
    noise_scale = 1.0 / math.sqrt(model.total_neurons) if noise_scale is None else noise_scale
    n_batches = -(-M // batch_size)

    def run(b):
        m = min(batch_size, M - b * batch_size)
        xi = rng.child(b).normal((n_fine, m, 2))
        starts = np.tile(x0, (m, 1))
        ref = integrate_paths(model, reference_scheme, starts, ref_delta, n_fine, noise_scale, xi, n_fine)[-1]
        errs = {}
        for d in deltas:
            xc = coarsen_noise(xi, factors[d])
            n_c = xc.shape[0]
            for s in schemes:
                fin = integrate_paths(model, s, starts, d, n_c, noise_scale, xc, n_c)[-1]
                errs[(d, s)] = np.sum((fin - ref) ** 2, axis=1)
        return errs

    parts = _run_batches(run, n_batches, workers)
    rows = []
    for s in schemes:
        for d in deltas:
            sq = np.concatenate([p[(d, s)] for p in parts])
            rmse = math.sqrt(sq.mean())
            se = sq.std(ddof=1) / math.sqrt(sq.size) / (2 * rmse) if rmse > 0 else 0.0
            rows.append(RmseRow(float(d), s.value, float(rmse), float(se), M, t_star))
    slopes, residuals, flags = {}, {}, {}
    for s in schemes:
        rs = [r for r in rows if r.scheme == s.value]
        vals = np.array([r.rmse for r in rs])
        if np.all(vals > 0) and len(rs) >= 3:
            slopes[s.value], residuals[s.value] = _fit_slope([r.delta for r in rs], vals)
        else:
            slopes[s.value], residuals[s.value] = float("nan"), float("nan")
        inversions = [i for i in range(len(rs) - 1) if rs[i].rmse > rs[i + 1].rmse]
        if not inversions:
            flags[s.value] = "monotone"
        elif len(inversions) == 1 and rs[inversions[0]].rmse - rs[inversions[0] + 1].rmse <= rs[inversions[0]].se:
            flags[s.value] = "inversion-within-se"
        else:
            flags[s.value] = "non-monotone"
    config = dict(deltas=deltas, M=M, t_star=t_star, ref_delta=ref_delta, seed=rng.seed,
                  stream=rng.stream_id, reference_scheme=reference_scheme.value,
                  noise_scale=noise_scale, x0=list(map(float, x0)), schemes=[s.value for s in schemes])
    return RmseTable(rows, slopes, residuals, flags, config)


# ---------------------------------------------------------------- densities


@dataclass
class DensityEstimate:
    component: str
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n: int
    mean: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def kde(samples, bandwidth: float | None = None, component: str = "", n_grid: int = 512) -> DensityEstimate:
    """Gaussian kernel density on a 512-point grid spanning ``[min - 3h, max + 3h]``.

    The default bandwidth is Silverman's ``1.06 * std * n**(-1/5)``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise InsufficientDataError(f"kde needs at least 100 samples, got {x.size}")
    if bandwidth is None:
        sd = x.std(ddof=1)
        if not sd > 0:
            raise ValueError("degenerate sample: zero standard deviation, bandwidth undefined")
        bandwidth = 1.06 * sd * x.size ** (-0.2)
    h = float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be > 0, got {h}")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_grid)
    dens = np.zeros(n_grid)
    for start in range(0, x.size, 4096):
        z = (grid[:, None] - x[None, start:start + 4096]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * h * math.sqrt(2 * math.pi)
    return DensityEstimate(component, grid, dens, h, int(x.size), float(x.mean()))


def batch_means_se(x, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


# ---------------------------------------------------------------- PDMP versus diffusion


@dataclass
class ComparisonReport:
    """Stationary comparison of the main variables of both populations."""

    n_neurons: tuple[int, int]
    t_long: float
    delta: float
    means_pdmp: dict[int, float]
    means_diffusion: dict[int, float]
    amplitude: dict[int, float]
    ks_distance: dict[int, float]
    densities_pdmp: dict[int, DensityEstimate] = field(repr=False)
    densities_diffusion: dict[int, DensityEstimate] = field(repr=False)
    rejection_fraction: float = 0.0
    config: dict = field(default_factory=dict)

    def relative_mean_gap(self, k: int) -> float:
        return abs(self.means_pdmp[k] - self.means_diffusion[k]) / self.amplitude[k]

    def summary(self) -> dict:
        return {
            "n_neurons": list(self.n_neurons),
            "t_long": self.t_long,
            "delta": self.delta,
            "means_pdmp": self.means_pdmp,
            "means_diffusion": self.means_diffusion,
            "amplitude": self.amplitude,
            "ks_distance": self.ks_distance,
            "relative_mean_gap": {k: self.relative_mean_gap(k) for k in (1, 2)},
            "rejection_fraction": self.rejection_fraction,
            "config": self.config,
        }


def compare_pdmp_diffusion(
    model: NetworkModel,
    t_long: float,
    delta: float,
    rng: RngStream,
    *,
    x0=None,
    bound: BoundKind = BoundKind.LOCAL,
    burn_in: float = 0.1,
) -> ComparisonReport:
    """One thinning run and one Strang run over ``[0, t_long]``, sampled on the same grid.

    The PDMP is sampled at ``i * delta`` (left limits), so both marginals are
    time averages. The first ``burn_in`` fraction is discarded. The amplitude
    of a main variable is the 1%-99% quantile range of the pooled samples.
    """
    if t_long < 1e3:
        raise ValueError(f"t_long must be >= 1000, got {t_long}")
    x0 = model.zeros() if x0 is None else np.asarray(x0, dtype=float)
    n_steps = _ratio(t_long, delta)
    pd = thinning_simulate(model, x0, t_long, bound, rng.child(0), record="none", grid_dt=delta)
    xi = rng.child(1).normal((n_steps, 1, 2))
    diff = integrate_paths(model, Scheme.STRANG, x0, delta, n_steps, 1.0 / math.sqrt(model.total_neurons), xi)[:, 0]
    n = min(pd.grid.shape[0], diff.shape[0])
    cut = int(burn_in * n)
    means_p, means_d, amp, ksd, dens_p, dens_d = {}, {}, {}, {}, {}, {}
    for k in (1, 2):
        idx = model.block(k).start
        a = pd.grid[cut:n, idx]
        b = diff[cut:n, idx]
        means_p[k] = float(a.mean())
        means_d[k] = float(b.mean())
        lo, hi = np.quantile(np.concatenate([a, b]), [0.01, 0.99])
        amp[k] = float(hi - lo)
        ksd[k] = float(stats.ks_2samp(a, b).statistic)
        dens_p[k] = kde(a, component=f"{k},1")
        dens_d[k] = kde(b, component=f"{k},1")
    config = dict(t_long=t_long, delta=delta, seed=rng.seed, stream=rng.stream_id, bound=bound.value,
                  burn_in=burn_in, n_neurons=[q.n_neurons for q in model.populations], x0=list(map(float, x0)))
    return ComparisonReport(
        tuple(q.n_neurons for q in model.populations), float(t_long), float(delta),
        means_p, means_d, amp, ksd, dens_p, dens_d, pd.stats.rejection_fraction, config,
    )


# ---------------------------------------------------------------- timing


@dataclass
class TimingRow:
    method: str  # "pdmp" | "diffusion"
    n_total: int
    bound: str
    mean_seconds: float
    sd_seconds: float
    rejection_fractions: list[float]


def timing_benchmark(
    model_template: NetworkModel,
    n_list,
    bound_kinds,
    t_max: float,
    repeats: int,
    rng: RngStream,
    *,
    diffusion_delta: float = 0.1,
    diffusion_n_list=None,
) -> list[TimingRow]:
    """Wall-clock time of thinning runs per (N, bound) and of Strang reference runs.

    Populations are split evenly, ``N_1 = N_2 = N / 2``. A warm-up run
    precedes the timed ones so compilation never enters the table.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    n_list = [int(n) for n in n_list]
    diffusion_n_list = [max(n_list)] if diffusion_n_list is None else [int(n) for n in diffusion_n_list]
    rows = []
    stream = 0
    for n in n_list:
        model = model_template.with_neurons(n // 2, n - n // 2)
        x0 = model.zeros()
        kinds = [BoundKind(bk) for bk in bound_kinds]
        for bk in kinds:
            thinning_simulate(model, x0, min(t_max, 1.0), bk, rng.child(10**6), record="none")
        times = {bk: [] for bk in kinds}
        rej = {bk: [] for bk in kinds}
        # interleave the bound kinds and share the seed within a repeat, so that
        # slow drift of the machine state does not favour either kind
        for _ in range(repeats):
            for bk in kinds:
                t0 = time.perf_counter()
                res = thinning_simulate(model, x0, t_max, bk, rng.child(stream), record="spikes")
                times[bk].append(time.perf_counter() - t0)
                rej[bk].append(res.stats.rejection_fraction)
            stream += 1
        for bk in kinds:
            rows.append(TimingRow("pdmp", n, bk.value, float(np.mean(times[bk])),
                                  float(np.std(times[bk], ddof=1)), rej[bk]))
    n_steps = _ratio(t_max, diffusion_delta)
    for n in diffusion_n_list:
        model = model_template.with_neurons(n // 2, n - n // 2)
        x0 = model.zeros()
        scale = 1.0 / math.sqrt(n)
        integrate_paths(model, Scheme.STRANG, x0, diffusion_delta, 10, scale, np.zeros((10, 1, 2)))
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            xi = rng.child(stream).normal((n_steps, 1, 2))
            integrate_paths(model, Scheme.STRANG, x0, diffusion_delta, n_steps, scale, xi)
            times.append(time.perf_counter() - t0)
            stream += 1
        rows.append(TimingRow("diffusion", n, "strang", float(np.mean(times)), float(np.std(times, ddof=1)), []))
    return rows


# ---------------------------------------------------------------- time rescaling

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


@dataclass
class KsResult:
    population: int
    n_spikes: int
    statistic: float
    pvalue: float

    def as_dict(self):
        return asdict(self)


def _integrated_intensity(model: NetworkModel, k: int, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """``N_k int_0^{len} f_k((e^{As} x)^{k,1}) ds`` per segment, 32-point Gauss-Legendre."""
    q = model.pop(k)
    blk = starts[:, model.block(k)]
    out = np.empty(lengths.size)
    for lo in range(0, lengths.size, 8192):
        L = lengths[lo:lo + 8192, None]
        s = 0.5 * L * (_GL_NODES[None, :] + 1.0)
        acc = np.zeros_like(s)
        term = np.ones_like(s)
        for m in range(q.eta + 1):
            if m:
                term = term * s / m
            acc += term * blk[lo:lo + 8192, m:m + 1]
        vals = q.rate(np.exp(-q.nu * s) * acc)
        out[lo:lo + 8192] = 0.5 * L[:, 0] * (vals @ _GL_WEIGHTS)
    return q.n_neurons * out


def time_rescaling_ks(path: PdmpPath, model: NetworkModel, min_spikes: int = 200) -> dict[int, KsResult]:
    """Test each population's rescaled inter-spike increments against Exp(1).

    The compensator of population ``k`` is integrated along the deterministic
    flow between consecutive accepted events of either population.
    """
    n_events = len(path)
    counts = {k: int(np.sum(path.k_star == k)) for k in (1, 2)}
    for k, cnt in counts.items():
        if cnt < min_spikes:
            raise InsufficientDataError(f"population {k} has {cnt} spikes, need at least {min_spikes}")
    starts = np.vstack([path.x0[None, :], path.states[:-1]]) if n_events else path.x0[None, :]
    seg_t0 = np.concatenate([[0.0], path.times[:-1]])
    lengths = path.times - seg_t0
    out = {}
    for k in (1, 2):
        lam = np.cumsum(_integrated_intensity(model, k, starts, lengths))
        at_spikes = lam[path.k_star == k]
        incs = np.diff(np.concatenate([[0.0], at_spikes]))
        res = stats.kstest(incs, "expon", method="exact" if incs.size <= 10000 else "asymp")
        out[k] = KsResult(k, int(incs.size), float(res.statistic), float(res.pvalue))
    return out
