"""Compiled simulation kernels.

Between reserve releases the capital started from ``x`` is

    X_t = exp(eta_t) * (x - c * I_t),   I_t = int_0^t exp(-eta_s) ds,

with ``eta`` the log-price increment since the interval start.  ``I`` is
nondecreasing, so the interval ends in ruin exactly when ``c * I`` reaches
``x`` before the next release.  Ruin is therefore decided from the grid values
of ``I`` alone; a sign change can never be missed between grid nodes.  The
log-price is sampled exactly at grid nodes and ``I`` is the trapezoidal sum.

Optional dyadic bisection (Levy construction, auxiliary lane keyed by the step)
refines the quadrature of every step without disturbing the main lanes, so runs
with different ``bisect`` values are coupled.  Once a step is known to contain
the crossing, the crossing node is located on a ``refine``-fold sub-grid drawn
from another auxiliary lane; this only sharpens the reported ruin time.
"""

import math

import numba as nb
import numpy as np

from .rng import lane_keys, next_normal, normal_at, path_key, sub_key, uniform_at

# Value-safe fast-math subset: inf and nan semantics are kept.
FASTMATH = {"arcp", "contract", "afn", "reassoc", "nsz"}

STATUS_ALIVE = 0
STATUS_RUINED = 1
STATUS_CAPPED = 2


@nb.njit(fastmath=FASTMATH, cache=True, inline="always")
def _claim(ukey, uctr, kind, mu, table):
    u = uniform_at(ukey, np.uint64(uctr))
    if kind == 0:
        return -mu * math.log1p(-u), uctr + 1
    n = table.shape[0]
    pos = u * n - 0.5
    if pos <= 0.0:
        return table[0], uctr + 1
    if pos >= n - 1:
        return table[n - 1], uctr + 1
    i = int(pos)
    frac = pos - i
    return table[i] + frac * (table[i + 1] - table[i]), uctr + 1


@nb.njit(fastmath=FASTMATH, cache=True, inline="always")
def _interarrival(ukey, uctr, alpha):
    if alpha <= 0.0:
        return np.inf, uctr
    return -math.log(uniform_at(ukey, np.uint64(uctr))) / alpha, uctr + 1


@nb.njit(cache=True, inline="always")
def _step_count(seg, dt):
    nfull = int(seg / dt)
    rem = seg - nfull * dt
    if rem <= 1e-9 * dt:
        if nfull == 0:
            return 1, seg
        return nfull, 0.0
    return nfull + 1, rem


@nb.njit(fastmath=FASTMATH, cache=True)
def _bisect_step(skey, h, deta, sigma, levels, eta):
    """Fill ``eta[0..2**levels]`` with a Brownian bridge from 0 to ``deta``."""
    m = 1 << levels
    eta[0] = 0.0
    eta[m] = deta
    j = 0
    for lev in range(1, levels + 1):
        stride = m >> lev
        sd = sigma * math.sqrt(h * 2.0 * stride / m) * 0.5
        for i in range(stride, m, 2 * stride):
            z = normal_at(skey, np.uint64(j))
            j += 1
            eta[i] = 0.5 * (eta[i - stride] + eta[i + stride]) + sd * z


@nb.njit(fastmath=FASTMATH, cache=True)
def _locate(skey, h, deta, e0, i0, thr, sigma, refine):
    """Offset in ``[0, h]`` of the first ``refine``-grid node where the integral reaches ``thr``.

    The step starts with integrand ``e0`` and integral ``i0``; the log-price
    moves by ``deta`` across it.  Returns ``h`` when the refined sum stays below.
    """
    if refine <= 1:
        return h
    delta = h / refine
    y = 0.0
    e_prev = e0
    acc = i0
    for j in range(1, refine + 1):
        s = (j - 1) * delta
        if j == refine:
            y_new = deta
        else:
            left = h - s
            mean = y + delta / left * (deta - y)
            var = sigma * sigma * delta * (left - delta) / left
            y_new = mean + math.sqrt(max(var, 0.0)) * normal_at(skey, np.uint64(j - 1))
        e_new = e0 * math.exp(-y_new)
        acc += 0.5 * delta * (e_prev + e_new)
        if acc >= thr:
            return j * delta
        y = y_new
        e_prev = e_new
    return h


@nb.njit(fastmath=FASTMATH, cache=True)
def _interval_integral(nkey, nctr, spare_idx, spare, seg, kappa, sigma, dt, bisect, eta):
    """Log-price increment and trapezoidal integral of exp(-eta) over one interval."""
    nsteps, last = _step_count(seg, dt)
    e_cur = 1.0
    acc = 0.0
    d = 0.0
    m = 1 << bisect
    for k in range(nsteps):
        h = dt
        if k == nsteps - 1 and last > 0.0:
            h = last
        step_idx = nctr
        z, nctr, spare_idx, spare = next_normal(nkey, nctr, spare_idx, spare)
        deta = kappa * h + sigma * math.sqrt(h) * z
        if bisect == 0:
            e_next = e_cur * math.exp(-deta)
            acc += 0.5 * h * (e_cur + e_next)
        else:
            _bisect_step(sub_key(nkey, step_idx), h, deta, sigma, bisect, eta)
            hs = h / m
            e_prev = e_cur
            for i in range(1, m + 1):
                e_i = e_cur * math.exp(-eta[i])
                acc += 0.5 * hs * (e_prev + e_i)
                e_prev = e_i
            e_next = e_prev
        e_cur = e_next
        d += deta
    return d, acc, nctr, spare_idx, spare


@nb.njit(fastmath=FASTMATH, cache=True, inline="always")
def _deterministic_integral(a, s):
    if a == 0.0:
        return s
    return -math.expm1(-a * s) / a


@nb.njit(fastmath=FASTMATH, cache=True, inline="always")
def _deterministic_crossing(a, thr):
    """Time at which int_0^t exp(-a v) dv reaches ``thr``; inf if never."""
    if a == 0.0:
        return thr
    arg = -a * thr
    if arg <= -1.0:
        return np.inf
    return -math.log1p(arg) / a


@nb.njit(fastmath=FASTMATH, cache=True)
def run_path(us, ukey, nkey, uctr, nctr, a, sigma, c, alpha, ckind, cmu, ctable,
             dt, horizon, refine, bisect, cap,
             ruin_time, status, terminal, rec_t, rec_x):
    """Simulate one path of the reserve from every capital in ``us`` on shared noise.

    ``us`` must be sorted ascending.  Because the capital at each release is an
    increasing function of the starting capital, the ruined starting values
    always form a prefix of ``us`` and the capped ones a suffix, so only the
    live window ``[lo, hi)`` is tracked.  Jump times and post-jump values of
    ``us[0]`` are written to ``rec_t``/``rec_x`` while space remains.

    Returns ``(uctr, nctr, n_jumps, n_recorded)``.
    """
    m = us.shape[0]
    y = us.copy()
    kappa = a - 0.5 * sigma * sigma
    sub = 1 << bisect
    eta = np.empty(sub + 1)
    for j in range(m):
        ruin_time[j] = np.inf
        status[j] = STATUS_ALIVE
        terminal[j] = np.nan
    lo = 0
    hi = m
    while lo < hi and y[lo] <= 0.0:
        ruin_time[lo] = 0.0
        status[lo] = STATUS_RUINED
        terminal[lo] = y[lo]
        lo += 1
    while hi > lo and y[hi - 1] >= cap:
        status[hi - 1] = STATUS_CAPPED
        terminal[hi - 1] = y[hi - 1]
        hi -= 1
    t = 0.0
    n_jumps = 0
    n_rec = 0
    spare_idx = np.int64(-1)
    spare = 0.0
    while lo < hi:
        dur, uctr = _interarrival(ukey, uctr, alpha)
        jump = t + dur < horizon
        seg = dur if jump else horizon - t
        acc = 0.0
        d = 0.0
        if sigma == 0.0:
            d = a * seg
            acc = _deterministic_integral(a, seg)
            while lo < hi and c > 0.0 and c * acc >= y[lo]:
                s_star = _deterministic_crossing(a, y[lo] / c)
                ruin_time[lo] = t + min(s_star, seg)
                status[lo] = STATUS_RUINED
                terminal[lo] = 0.0
                lo += 1
        elif seg > 0.0:
            nsteps, last = _step_count(seg, dt)
            e_cur = 1.0
            s = 0.0
            for k in range(nsteps):
                h = dt
                if k == nsteps - 1 and last > 0.0:
                    h = last
                step_idx = nctr
                z, nctr, spare_idx, spare = next_normal(nkey, nctr, spare_idx, spare)
                deta = kappa * h + sigma * math.sqrt(h) * z
                if bisect == 0:
                    e_next = e_cur * math.exp(-deta)
                    acc_next = acc + 0.5 * h * (e_cur + e_next)
                    while lo < hi and c * acc_next >= y[lo]:
                        off = _locate(sub_key(nkey ^ np.uint64(0x5BD1E995), step_idx), h, deta,
                                      e_cur, acc, y[lo] / c, sigma, refine)
                        ruin_time[lo] = t + s + off
                        status[lo] = STATUS_RUINED
                        terminal[lo] = 0.0
                        lo += 1
                else:
                    skey = sub_key(nkey, step_idx)
                    _bisect_step(skey, h, deta, sigma, bisect, eta)
                    hs = h / sub
                    e_prev = e_cur
                    acc_next = acc
                    for i in range(1, sub + 1):
                        e_i = e_cur * math.exp(-eta[i])
                        acc_prev = acc_next
                        acc_next += 0.5 * hs * (e_prev + e_i)
                        while lo < hi and c * acc_next >= y[lo]:
                            off = _locate(sub_key(skey, i), hs, eta[i] - eta[i - 1], e_prev,
                                          acc_prev, y[lo] / c, sigma, refine)
                            ruin_time[lo] = t + s + (i - 1) * hs + off
                            status[lo] = STATUS_RUINED
                            terminal[lo] = 0.0
                            lo += 1
                        e_prev = e_i
                    e_next = e_prev
                e_cur = e_next
                acc = acc_next
                d += deta
                s += h
                if lo >= hi:
                    break
        if lo >= hi:
            break
        growth = math.exp(d)
        if jump:
            xi, uctr = _claim(ukey, uctr, ckind, cmu, ctable)
            for j in range(lo, hi):
                y[j] = growth * (y[j] - c * acc) + xi
            t += dur
            n_jumps += 1
            if lo == 0 and n_rec < rec_t.shape[0]:
                rec_t[n_rec] = t
                rec_x[n_rec] = y[0]
                n_rec += 1
            while hi > lo and y[hi - 1] >= cap:
                status[hi - 1] = STATUS_CAPPED
                terminal[hi - 1] = y[hi - 1]
                hi -= 1
        else:
            for j in range(lo, hi):
                terminal[j] = growth * (y[j] - c * acc)
            break
    return uctr, nctr, n_jumps, n_rec


@nb.njit(parallel=True, fastmath=FASTMATH, cache=True)
def mc_ruin(us, seed, n_paths, a, sigma, c, alpha, ckind, cmu, ctable,
            dt, horizon, refine, bisect, cap):
    """Ruin times and end states for ``n_paths`` independent paths, each from all of ``us``."""
    m = us.shape[0]
    ruin_time = np.empty((n_paths, m))
    status = np.empty((n_paths, m), dtype=np.int8)
    terminal = np.empty((n_paths, m))
    n_jumps = np.empty(n_paths, dtype=np.int64)
    for i in nb.prange(n_paths):
        ukey, nkey = lane_keys(path_key(seed, i))
        rt = np.empty(m)
        st = np.empty(m, dtype=np.int8)
        tv = np.empty(m)
        dummy = np.empty(0)
        _, _, nj, _ = run_path(us, ukey, nkey, 0, 0, a, sigma, c, alpha, ckind, cmu, ctable,
                               dt, horizon, refine, bisect, cap, rt, st, tv, dummy, dummy)
        for j in range(m):
            ruin_time[i, j] = rt[j]
            status[i, j] = st[j]
            terminal[i, j] = tv[j]
        n_jumps[i] = nj
    return ruin_time, status, terminal, n_jumps


@nb.njit(fastmath=FASTMATH, cache=True)
def payout_functional(nkey, nctr, kappa, sigma, c, dt, horizon, bisect, r_stop):
    """``c * int_0^horizon exp(-eta_v) dv`` by trapezoid; stops once it exceeds ``r_stop``."""
    if c == 0.0:
        return 0.0, nctr
    if sigma == 0.0:
        return c * _deterministic_integral(kappa, horizon), nctr
    nsteps, last = _step_count(horizon, dt)
    sub = 1 << bisect
    eta = np.empty(sub + 1)
    e_cur = 1.0
    acc = 0.0
    spare_idx = np.int64(-1)
    spare = 0.0
    for k in range(nsteps):
        h = dt
        if k == nsteps - 1 and last > 0.0:
            h = last
        step_idx = nctr
        z, nctr, spare_idx, spare = next_normal(nkey, nctr, spare_idx, spare)
        deta = kappa * h + sigma * math.sqrt(h) * z
        if bisect == 0:
            e_next = e_cur * math.exp(-deta)
            acc += 0.5 * h * (e_cur + e_next)
        else:
            _bisect_step(sub_key(nkey, step_idx), h, deta, sigma, bisect, eta)
            hs = h / sub
            e_prev = e_cur
            for i in range(1, sub + 1):
                e_i = e_cur * math.exp(-eta[i])
                acc += 0.5 * hs * (e_prev + e_i)
                e_prev = e_i
            e_next = e_prev
        e_cur = e_next
        if c * acc > r_stop:
            break
    return c * acc, nctr


@nb.njit(parallel=True, fastmath=FASTMATH, cache=True)
def mc_payout(seed, n_paths, kappa, sigma, c, dt, horizon, bisect, r_stop):
    out = np.empty(n_paths)
    for i in nb.prange(n_paths):
        _, nkey = lane_keys(path_key(seed, i))
        out[i], _ = payout_functional(nkey, 0, kappa, sigma, c, dt, horizon, bisect, r_stop)
    return out


@nb.njit(fastmath=FASTMATH, cache=True)
def run_chain(u, ukey, nkey, uctr, nctr, a, sigma, c, alpha, ckind, cmu, ctable, dt, bisect,
              times, xis, mults, qs, ys):
    """Embedded jump-time chain ``Y_k = M_k Y_{k-1} + Q_k`` for ``times.shape[0]`` steps.

    Draws are consumed in the same order as :func:`run_path`, so the two are
    coupled on the same stream.
    """
    n = times.shape[0]
    kappa = a - 0.5 * sigma * sigma
    eta = np.empty((1 << bisect) + 1)
    spare_idx = np.int64(-1)
    spare = 0.0
    t = 0.0
    y = u
    for k in range(n):
        dur, uctr = _interarrival(ukey, uctr, alpha)
        if sigma == 0.0:
            d = a * dur
            acc = _deterministic_integral(a, dur)
        else:
            d, acc, nctr, spare_idx, spare = _interval_integral(
                nkey, nctr, spare_idx, spare, dur, kappa, sigma, dt, bisect, eta)
        xi, uctr = _claim(ukey, uctr, ckind, cmu, ctable)
        mult = math.exp(d)
        q = xi - c * mult * acc
        y = mult * y + q
        t += dur
        times[k] = t
        xis[k] = xi
        mults[k] = mult
        qs[k] = q
        ys[k] = y
    return uctr, nctr


@nb.njit(parallel=True, fastmath=FASTMATH, cache=True)
def mc_chain_step(seed, n_paths, a, sigma, c, alpha, ckind, cmu, ctable, dt, bisect):
    """One chain step ``(M_1, Q_1)`` for each of ``n_paths`` independent streams."""
    mults = np.empty(n_paths)
    qs = np.empty(n_paths)
    for i in nb.prange(n_paths):
        ukey, nkey = lane_keys(path_key(seed, i))
        tt = np.empty(1)
        xx = np.empty(1)
        mm = np.empty(1)
        qq = np.empty(1)
        yy = np.empty(1)
        run_chain(0.0, ukey, nkey, 0, 0, a, sigma, c, alpha, ckind, cmu, ctable, dt, bisect,
                  tt, xx, mm, qq, yy)
        mults[i] = mm[0]
        qs[i] = qq[0]
    return mults, qs


@nb.njit(fastmath=FASTMATH, cache=True)
def running_max(ukey, nkey, uctr, nctr, drift, rate, dt):
    """max over [0, nu] of ``drift*v + W_v`` on a grid, ``nu ~ Exp(rate)``."""
    nu = -math.log(uniform_at(ukey, np.uint64(uctr))) / rate
    uctr += 1
    nsteps, last = _step_count(nu, dt)
    w = 0.0
    best = 0.0
    spare_idx = np.int64(-1)
    spare = 0.0
    for k in range(nsteps):
        h = dt
        if k == nsteps - 1 and last > 0.0:
            h = last
        z, nctr, spare_idx, spare = next_normal(nkey, nctr, spare_idx, spare)
        w += drift * h + math.sqrt(h) * z
        if w > best:
            best = w
    return best, uctr, nctr


@nb.njit(parallel=True, fastmath=FASTMATH, cache=True)
def mc_running_max(seed, n_paths, drift, rate, dt):
    out = np.empty(n_paths)
    for i in nb.prange(n_paths):
        ukey, nkey = lane_keys(path_key(seed, i))
        out[i], _, _ = running_max(ukey, nkey, 0, 0, drift, rate, dt)
    return out


@nb.njit(cache=True)
def autoregression(x0, a, b):
    """``x_n = a_n x_{n-1} + b_n`` for the given coefficient arrays."""
    n = a.shape[0]
    out = np.empty(n)
    x = x0
    for i in range(n):
        x = a[i] * x + b[i]
        out[i] = x
    return out


@nb.njit(parallel=True, fastmath=FASTMATH, cache=True)
def chain_steps_keyed(key, start, n, a, sigma, c, alpha, ckind, cmu, ctable, dt, bisect):
    """``n`` independent chain steps; step ``i`` uses the sub-stream ``start + i`` of ``key``."""
    mults = np.empty(n)
    qs = np.empty(n)
    for i in nb.prange(n):
        ukey, nkey = lane_keys(sub_key(key, np.uint64(start) + np.uint64(i)))
        tt = np.empty(1)
        xx = np.empty(1)
        mm = np.empty(1)
        qq = np.empty(1)
        yy = np.empty(1)
        run_chain(0.0, ukey, nkey, 0, 0, a, sigma, c, alpha, ckind, cmu, ctable, dt, bisect,
                  tt, xx, mm, qq, yy)
        mults[i] = mm[0]
        qs[i] = qq[0]
    return mults, qs
