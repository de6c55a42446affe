"""Compiled building blocks shared by the simulators.

Models travel into compiled code as a flat tuple (see :func:`pack`):
``(eta, nu, c, n_neurons, p, rate_kind, rate_params)``. Population indices
are 0-based here.
"""
import math

import numba as nb
import numpy as np

RATE_EXP_SIGMOID = 0
RATE_CLIPPED_LINEAR = 1
RATE_CONSTANT = 2

SCHEME_EM = 0
SCHEME_LT = 1
SCHEME_STRANG = 2

INTENSITY_FLOOR = 1e-300
WINDOW_MIN = 1e-6
WINDOW_MAX = 10.0

STATUS_OK = 0
STATUS_BROKEN_BOUND = 1
STATUS_NONFINITE = 2

_jit = nb.njit(cache=True, nogil=True)
# Small helpers of the thinning loop are inlined at the Numba IR level: a
# regular call passing the packed model costs a reference-count round trip
# per array, which dominates their run time.
_jit_inline = nb.njit(cache=True, nogil=True, inline="always")


def pack(eta, nu, c, n_neurons, p, rate_kind, rate_params):
    return (
        np.asarray(eta, dtype=np.int64),
        np.asarray(nu, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
        np.asarray(n_neurons, dtype=np.int64),
        np.asarray(p, dtype=np.float64),
        np.asarray(rate_kind, dtype=np.int64),
        np.ascontiguousarray(rate_params, dtype=np.float64).reshape(2, 3),
    )


@_jit_inline
def rate(packed, k, x):
    kind = packed[5][k]
    par = packed[6][k]
    if kind == RATE_EXP_SIGMOID:
        s = par[0]
        th = par[1]
        if x < par[2]:  # par[2] holds log(threshold)
            return s * math.exp(x)
        return 2.0 * s * th / (1.0 + th * th * math.exp(-2.0 * x))
    if kind == RATE_CLIPPED_LINEAR:
        v = par[0] + par[1] * max(x, 0.0)
        return min(v, par[2])
    return par[0]


@_jit_inline
def rate_max(packed, k):
    kind = packed[5][k]
    par = packed[6][k]
    if kind == RATE_EXP_SIGMOID:
        return 2.0 * par[0] * par[1]
    if kind == RATE_CLIPPED_LINEAR:
        return par[2]
    return par[0]


@_jit_inline
def offset(packed, k):
    return 0 if k == 0 else packed[0][0] + 1


@_jit
def expm_coeffs(packed, t):
    """coef[k, r] = exp(-nu_k t) t**r / r! for r = 0..eta_k."""
    eta = packed[0]
    nu = packed[1]
    m = max(eta[0], eta[1]) + 1
    coef = np.zeros((2, m))
    for k in range(2):
        e = math.exp(-nu[k] * t)
        term = 1.0
        for r in range(eta[k] + 1):
            if r > 0:
                term = term * t / r
            coef[k, r] = e * term
    return coef


@_jit
def expm_apply_coeffs(packed, coef, x, out):
    eta = packed[0]
    for k in range(2):
        o = offset(packed, k)
        n = eta[k] + 1
        for j in range(n):
            acc = 0.0
            for m in range(j, n):
                acc += coef[k, m - j] * x[o + m]
            out[o + j] = acc


@_jit_inline
def expm_apply(packed, t, x, out):
    """``out = exp(A t) x`` without temporaries; ``out`` must not alias ``x``."""
    eta = packed[0]
    nu = packed[1]
    for k in range(2):
        o = offset(packed, k)
        n = eta[k] + 1
        e = math.exp(-nu[k] * t)
        for j in range(n):
            acc = 0.0
            term = 1.0
            for r in range(n - j):
                if r > 0:
                    term = term * t / r
                acc += term * x[o + j + r]
            out[o + j] = e * acc


@_jit_inline
def main_component_at(packed, k, x, t):
    """(exp(A t) x)^{k,1}."""
    eta = packed[0][k]
    o = offset(packed, k)
    acc = 0.0
    term = 1.0
    for m in range(eta + 1):
        if m > 0:
            term = term * t / m
        acc += term * x[o + m]
    return math.exp(-packed[1][k] * t) * acc


@_jit
def linear_drift(packed, x, out):
    eta = packed[0]
    nu = packed[1]
    for k in range(2):
        o = offset(packed, k)
        for j in range(eta[k] + 1):
            v = -nu[k] * x[o + j]
            if j < eta[k]:
                v += x[o + j + 1]
            out[o + j] = v


@_jit
def add_drift_b(packed, x, scale, out):
    eta = packed[0]
    c = packed[2]
    o2 = eta[0] + 1
    out[eta[0]] += scale * c[0] * rate(packed, 1, x[o2])
    out[o2 + eta[1]] += scale * c[1] * rate(packed, 0, x[0])


@_jit
def add_sigma_xi(packed, x, xi1, xi2, scale, out):
    # column 2 (xi2) drives population 1, column 1 (xi1) drives population 2
    eta = packed[0]
    c = packed[2]
    p = packed[4]
    o2 = eta[0] + 1
    out[eta[0]] += scale * c[0] / math.sqrt(p[1]) * math.sqrt(rate(packed, 1, x[o2])) * xi2
    out[o2 + eta[1]] += scale * c[1] / math.sqrt(p[0]) * math.sqrt(rate(packed, 0, x[0])) * xi1


# The step functions take a scratch array ``work`` of length >= 2 * kappa.


@_jit
def em_step(packed, x, delta, noise_scale, xi1, xi2, out, work):
    kap = x.shape[0]
    linear_drift(packed, x, work)
    for i in range(kap):
        out[i] = x[i] + delta * work[i]
    add_drift_b(packed, x, delta, out)
    add_sigma_xi(packed, x, xi1, xi2, math.sqrt(delta) * noise_scale, out)


@_jit
def lt_step(packed, coef_full, x, delta, noise_scale, xi1, xi2, out, work):
    kap = x.shape[0]
    y = work[:kap]
    y[:] = x
    add_drift_b(packed, x, delta, y)
    add_sigma_xi(packed, x, xi1, xi2, math.sqrt(delta) * noise_scale, y)
    expm_apply_coeffs(packed, coef_full, y, out)


@_jit
def strang_step(packed, coef_half, x, delta, noise_scale, xi1, xi2, out, work):
    kap = x.shape[0]
    y = work[:kap]
    z = work[kap:2 * kap]
    expm_apply_coeffs(packed, coef_half, x, y)
    z[:] = y
    add_drift_b(packed, y, delta, z)
    add_sigma_xi(packed, y, xi1, xi2, math.sqrt(delta) * noise_scale, z)
    expm_apply_coeffs(packed, coef_half, z, out)


@_jit
def integrate_paths(packed, scheme, x0, delta, n_steps, noise_scale, xi, stride, out):
    """Advance ``M`` independent paths ``n_steps`` steps.

    ``x0`` is (M, kappa); ``xi`` is (n_steps, M, 2) or empty when
    ``noise_scale == 0``; every ``stride``-th state is written to ``out``
    (shape (n_steps // stride + 1, M, kappa)). Returns the index of the first
    step producing a non-finite state, or -1.
    """
    n_paths = x0.shape[0]
    kap = x0.shape[1]
    coef_full = expm_coeffs(packed, delta)
    coef_half = expm_coeffs(packed, 0.5 * delta)
    noisy = noise_scale != 0.0
    work = np.empty(2 * kap)
    x = np.empty(kap)
    nxt = np.empty(kap)
    for m in range(n_paths):
        x[:] = x0[m]
        out[0, m] = x
        for i in range(n_steps):
            xi1 = 0.0
            xi2 = 0.0
            if noisy:
                xi1 = xi[i, m, 0]
                xi2 = xi[i, m, 1]
            if scheme == SCHEME_EM:
                em_step(packed, x, delta, noise_scale, xi1, xi2, nxt, work)
            elif scheme == SCHEME_LT:
                lt_step(packed, coef_full, x, delta, noise_scale, xi1, xi2, nxt, work)
            else:
                strang_step(packed, coef_half, x, delta, noise_scale, xi1, xi2, nxt, work)
            for q in range(kap):
                if not math.isfinite(nxt[q]):
                    return i + 1
            x, nxt = nxt, x
            if (i + 1) % stride == 0:
                out[(i + 1) // stride, m] = x
    return -1


# ---------------------------------------------------------------- root finding


@_jit
def _poly_eval(a, deg, t):
    v = a[deg]
    for i in range(deg - 1, -1, -1):
        v = v * t + a[i]
    return v


@_jit
def _poly_deriv_eval(a, deg, t):
    v = deg * a[deg]
    for i in range(deg - 1, 0, -1):
        v = v * t + i * a[i]
    return v


@_jit
def _polish(a, deg, t):
    for _ in range(3):
        d = _poly_deriv_eval(a, deg, t)
        if d == 0.0:
            break
        step = _poly_eval(a, deg, t) / d
        if not math.isfinite(step):
            break
        t = t - step
    return t


@_jit
def _cbrt(v):
    if v >= 0.0:
        return v ** (1.0 / 3.0)
    return -((-v) ** (1.0 / 3.0))


@_jit
def _raw_roots(a, deg, buf):
    """Real roots of the degree-``deg`` polynomial with ascending coefficients ``a``."""
    n = 0
    if deg == 1:
        buf[0] = -a[0] / a[1]
        return 1
    if deg == 2:
        disc = a[1] * a[1] - 4.0 * a[2] * a[0]
        if disc < 0.0:
            return 0
        sq = math.sqrt(disc)
        q = -0.5 * (a[1] + (sq if a[1] >= 0.0 else -sq))
        if q == 0.0:
            buf[0] = 0.0
            return 1
        buf[0] = q / a[2]
        buf[1] = a[0] / q
        return 2
    if deg == 3:
        b = a[2] / a[3]
        c = a[1] / a[3]
        d = a[0] / a[3]
        p = c - b * b / 3.0
        q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d
        disc = 0.25 * q * q + p * p * p / 27.0
        shift = -b / 3.0
        if disc > 0.0:
            big = _cbrt(0.5 * abs(q) + math.sqrt(disc))
            big = -big if q > 0.0 else big
            small = 0.0 if big == 0.0 else -p / (3.0 * big)
            buf[0] = big + small + shift
            n = 1
        elif p == 0.0:
            buf[0] = shift
            n = 1
        else:
            r = 2.0 * math.sqrt(-p / 3.0)
            arg = 3.0 * q / (p * r)
            arg = min(1.0, max(-1.0, arg))
            phi = math.acos(arg) / 3.0
            for i in range(3):
                buf[i] = r * math.cos(phi - 2.0 * math.pi * i / 3.0) + shift
            n = 3
        return n
    comp = np.zeros((deg, deg), dtype=np.complex128)
    for i in range(deg):
        comp[0, i] = -a[deg - 1 - i] / a[deg]
    for i in range(1, deg):
        comp[i, i - 1] = 1.0
    ev = np.linalg.eigvals(comp)
    for i in range(deg):
        re = ev[i].real
        if abs(ev[i].imag) <= 1e-8 * max(1.0, abs(re)):
            buf[n] = re
            n += 1
    return n


@_jit
def real_roots_in(a_in, lo, hi, out, work):
    """Distinct real roots of ``sum a_in[i] t**i`` in the open interval (lo, hi).

    Writes them sorted into ``out`` and returns their count. ``work`` is
    scratch space of length >= 2 * len(a_in).
    """
    deg = a_in.shape[0] - 1
    scale = 0.0
    for i in range(deg + 1):
        scale = max(scale, abs(a_in[i]))
    if scale == 0.0:
        return 0
    a = work[: deg + 1]
    for i in range(deg + 1):
        a[i] = a_in[i] / scale
    while deg > 0 and abs(a[deg]) <= 1e-14:
        deg -= 1
    if deg == 0:
        return 0
    buf = work[a_in.shape[0]: a_in.shape[0] + deg]
    nraw = _raw_roots(a, deg, buf)
    n = 0
    slack = 1e-6 * max(1.0, abs(lo), abs(hi))
    for i in range(nraw):
        r = buf[i]
        if not (lo - slack < r < hi + slack):
            continue
        r = _polish(a, deg, r)
        if not math.isfinite(r) or r <= lo or r >= hi:
            continue
        dup = False
        for q in range(n):
            if abs(out[q] - r) <= 1e-9 * max(1.0, abs(r)):
                dup = True
        if not dup:
            out[n] = r
            n += 1
    # insertion sort, n <= deg
    for i in range(1, n):
        v = out[i]
        q = i - 1
        while q >= 0 and out[q] > v:
            out[q + 1] = out[q]
            q -= 1
        out[q + 1] = v
    return n


# ---------------------------------------------------------------- intensity bounds


@_jit_inline
def global_phi(packed, k, x):
    eta = packed[0][k]
    nu = packed[1][k]
    o = offset(packed, k)
    best = 0.0
    scale = 1.0
    for j in range(eta + 1):
        v = x[o + j] / scale
        if v > best:
            best = v
        scale *= nu
    return best


@_jit
def critical_poly(packed, k, x):
    """Ascending coefficients of d/dt [exp(nu t) (exp(A t) x)^{k,1}] - nu * (...)."""
    a = np.empty(packed[0][k] + 1)
    critical_poly_into(packed, k, x, a)
    return a


@_jit_inline
def critical_poly_into(packed, k, x, a):
    eta = packed[0][k]
    nu = packed[1][k]
    o = offset(packed, k)
    fact = 1.0
    for m in range(eta + 1):
        if m > 0:
            fact *= m
        v = -nu * x[o + m]
        if m < eta:
            v += x[o + m + 1]
        a[m] = v / fact


@_jit
def bernstein_table(n):
    """``T[k, i] = C(k, i) / C(n, i)`` for ``0 <= i <= k <= n``."""
    tab = np.zeros((n + 1, n + 1))
    for k in range(n + 1):
        ratio = 1.0
        tab[k, 0] = 1.0
        for i in range(1, k + 1):
            ratio = ratio * (k - i + 1) / (n - i + 1)
            tab[k, i] = ratio
    return tab


@_jit_inline
def no_root_in(a, width, tab):
    """True when ``sum a[i] t**i`` provably has no root in (0, width).

    The Bernstein coefficients on [0, width] bound the polynomial's range;
    if they are all nonzero with one sign, so is the polynomial. ``tab``
    comes from :func:`bernstein_table`; ``a`` is overwritten with
    ``a[i] * width**i``.
    """
    n = a.shape[0] - 1
    w = 1.0
    for i in range(1, n + 1):
        w = w * width
        a[i] = a[i] * w
    sign = 0.0
    for k in range(n + 1):
        b = 0.0
        for i in range(k + 1):
            b += tab[k, i] * a[i]
        if b == 0.0:
            return False
        if sign == 0.0:
            sign = b
        elif (b > 0.0) != (sign > 0.0):
            return False
    return True


@_jit_inline
def local_phi_screen(packed, k, x, window, a, tab):
    """Endpoint maximum of the flow on ``[0, window]`` and whether interior
    critical points may exist (``a`` is scratch of length eta_k + 1)."""
    best = max(x[offset(packed, k)], main_component_at(packed, k, x, window))
    critical_poly_into(packed, k, x, a)
    return best, not no_root_in(a, window, tab)


@_jit
def local_phi_refine(packed, k, x, window, best, a, work, roots):
    """Raise ``best`` to the flow's value at each critical point in (0, window)."""
    critical_poly_into(packed, k, x, a)
    n = real_roots_in(a, 0.0, window, roots, work)
    for i in range(n):
        v = main_component_at(packed, k, x, roots[i])
        if v > best:
            best = v
    return best


@_jit
def local_phi(packed, k, x, window, a, work, roots, tab):
    """Maximum of ``t -> (exp(A t) x)^{k,1}`` over ``[0, window]``.

    ``a``, ``roots`` (length eta_k + 1) and ``work`` (length 2 * (eta_k + 1))
    are scratch buffers; ``tab`` is ``bernstein_table(eta_k)``. The screen
    and the refinement are separate so the thinning loop only pays for
    root finding when the Bernstein test cannot exclude critical points.
    """
    best, need = local_phi_screen(packed, k, x, window, a, tab)
    if need:
        best = local_phi_refine(packed, k, x, window, best, a, work, roots)
    return best


@_jit_inline
def adaptive_window(packed, lam1, lam2):
    nn = packed[3]
    tot = nn[0] * lam1 + nn[1] * lam2
    if not tot > 0.0:
        return WINDOW_MAX
    w = 1.0 / tot
    return min(WINDOW_MAX, max(WINDOW_MIN, w))


# ---------------------------------------------------------------- thinning


@_jit
def _grow2(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty((max(need, 2 * a.shape[0]), a.shape[1]))
    b[: a.shape[0]] = a
    return b


@_jit
def _grow1f(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty(max(need, 2 * a.shape[0]))
    b[: a.shape[0]] = a
    return b


@_jit
def _grow1i(a, need):
    if need <= a.shape[0]:
        return a
    b = np.empty(max(need, 2 * a.shape[0]), dtype=np.int64)
    b[: a.shape[0]] = a
    return b


@_jit
def thinning(packed, x0, t_max, use_local, seed, accept_scale, record, grid_dt, fixed_window):
    """Exact simulation of the cascade by thinning.

    record: 0 keeps only counts, 1 adds spike (time, population, neuron),
    2 also keeps the post-jump state and both intensities per spike.
    grid_dt > 0 samples the state on the grid m * grid_dt (left limits).
    fixed_window > 0 replaces the adaptive window.

    Returns (status, stats, ev_t, ev_k, ev_n, ev_x, ev_lam, grid) where
    stats = [branch1, accepted, rejected, spikes_pop1, spikes_pop2].
    """
    np.random.seed(seed)
    eta = packed[0]
    c = packed[2]
    nn = packed[3]
    kap = x0.shape[0]
    o2 = eta[0] + 1
    last1 = eta[0]
    last2 = o2 + eta[1]

    x = x0.copy()
    tmp = np.empty(kap)
    t = 0.0
    stats = np.zeros(5, dtype=np.int64)

    cap = 1024 if record > 0 else 0
    ev_t = np.empty(cap)
    ev_k = np.empty(cap, dtype=np.int64)
    ev_n = np.empty(cap, dtype=np.int64)
    ev_x = np.empty((cap if record > 1 else 0, kap))
    ev_lam = np.empty((cap if record > 1 else 0, 2))
    n_ev = 0

    n_grid = 0
    if grid_dt > 0.0:
        n_grid = int(math.floor(t_max / grid_dt + 1e-9)) + 1
    grid = np.empty((n_grid, kap))
    g_next = 0
    if n_grid > 0:
        grid[0] = x0
        g_next = 1

    a1 = np.empty(eta[0] + 1)
    a2 = np.empty(eta[1] + 1)
    r1 = np.empty(eta[0] + 1)
    r2 = np.empty(eta[1] + 1)
    work = np.empty(2 * (max(eta[0], eta[1]) + 1))
    tab1 = bernstein_table(eta[0])
    tab2 = bernstein_table(eta[1])
    fmax1 = rate_max(packed, 0)
    fmax2 = rate_max(packed, 1)

    status = STATUS_OK
    while t < t_max:
        lam1 = rate(packed, 0, x[0])
        lam2 = rate(packed, 1, x[o2])
        if fixed_window > 0.0:
            window = fixed_window
        else:
            window = adaptive_window(packed, lam1, lam2)
        # lam <= local <= global <= f_max; the root search only runs when
        # the cheaper bounds leave room above the current intensity
        if use_local and lam1 >= fmax1:
            b1 = lam1
        else:
            b1 = rate(packed, 0, global_phi(packed, 0, x))
            if use_local and b1 > lam1:
                phi, need = local_phi_screen(packed, 0, x, window, a1, tab1)
                if need:
                    phi = local_phi_refine(packed, 0, x, window, phi, a1, work, r1)
                b1 = min(b1, rate(packed, 0, phi))
        if use_local and lam2 >= fmax2:
            b2 = lam2
        else:
            b2 = rate(packed, 1, global_phi(packed, 1, x))
            if use_local and b2 > lam2:
                phi, need = local_phi_screen(packed, 1, x, window, a2, tab2)
                if need:
                    phi = local_phi_refine(packed, 1, x, window, phi, a2, work, r2)
                b2 = min(b2, rate(packed, 1, phi))
        b1 = max(b1, INTENSITY_FLOOR)
        b2 = max(b2, INTENSITY_FLOOR)
        tau1 = np.random.exponential(1.0 / (nn[0] * b1))
        tau2 = np.random.exponential(1.0 / (nn[1] * b2))
        if tau1 <= tau2:
            tau = tau1
            kstar = 0
            bstar = b1
        else:
            tau = tau2
            kstar = 1
            bstar = b2
        candidate = tau <= window
        step = tau if candidate else window
        end = min(t + step, t_max)
        while g_next < n_grid and g_next * grid_dt <= end:
            expm_apply(packed, g_next * grid_dt - t, x, tmp)
            grid[g_next] = tmp
            g_next += 1
        if t + step > t_max:
            expm_apply(packed, t_max - t, x, tmp)
            x[:] = tmp
            t = t_max
            break
        expm_apply(packed, step, x, tmp)
        x[:] = tmp
        t = t + step
        if not candidate:
            stats[0] += 1
            continue
        lam = rate(packed, kstar, x[0] if kstar == 0 else x[o2])
        ratio = lam / bstar
        if ratio > 1.0 + 1e-9:
            status = STATUS_BROKEN_BOUND
            break
        u = np.random.random()
        if u < ratio * accept_scale:
            stats[1] += 1
            stats[3 + kstar] += 1
            neuron = np.random.randint(0, nn[kstar])
            # a spike of population 2 feeds population 1 and vice versa
            if kstar == 1:
                x[last1] += c[0] / nn[1]
            else:
                x[last2] += c[1] / nn[0]
            if record > 0:
                ev_t = _grow1f(ev_t, n_ev + 1)
                ev_k = _grow1i(ev_k, n_ev + 1)
                ev_n = _grow1i(ev_n, n_ev + 1)
                ev_t[n_ev] = t
                ev_k[n_ev] = kstar
                ev_n[n_ev] = neuron
                if record > 1:
                    ev_x = _grow2(ev_x, n_ev + 1)
                    ev_lam = _grow2(ev_lam, n_ev + 1)
                    ev_x[n_ev] = x
                    ev_lam[n_ev, 0] = rate(packed, 0, x[0])
                    ev_lam[n_ev, 1] = rate(packed, 1, x[o2])
                n_ev += 1
        else:
            stats[2] += 1
        for q in range(kap):
            if not math.isfinite(x[q]):
                status = STATUS_NONFINITE
        if status != STATUS_OK:
            break
    m = n_ev
    return (status, stats, ev_t[:m].copy(), ev_k[:m].copy(), ev_n[:m].copy(),
            ev_x[: min(m, ev_x.shape[0])].copy(), ev_lam[: min(m, ev_lam.shape[0])].copy(),
            grid[:g_next].copy())
