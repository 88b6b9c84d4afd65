"""Compiled kernels for the bounce map.

State is carried as ``(theta, p)`` where ``theta`` is the conformal boundary
parameter and ``p`` the tangential component of the outgoing unit velocity.
Converting ``theta`` to arclength is left to the caller.
"""
import math
import os

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old for numba; pick a layer that needs no extra library
if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER = "workqueue"

TWO_PI = 2.0 * math.pi
_SCAN_CELLS = 96


@njit(cache=True)
def _unit_tangent(lam, th):
    c = math.cos(th)
    s = math.sin(th)
    dx = -s * (1.0 + 4.0 * lam * c)
    dy = c + 2.0 * lam * (c * c - s * s)
    v = math.sqrt(dx * dx + dy * dy)
    return dx / v, dy / v


@njit(cache=True)
def _h(lam, c0, s0, dx, dy, phi):
    # h(phi) = Re(conj(d) F), F = e^{i th0} e^{i phi/2} (1 + lam e^{i th0}(e^{i phi} + 1));
    # zeros of h in (0, 2 pi) are the chord endpoints other than the launch point.
    ch = math.cos(0.5 * phi)
    sh = math.sin(0.5 * phi)
    cp = ch * ch - sh * sh
    sp = 2.0 * ch * sh
    # g = 1 + lam e^{i th0} (e^{i phi} + 1)
    ar = cp + 1.0
    ai = sp
    gr = 1.0 + lam * (c0 * ar - s0 * ai)
    gi = lam * (c0 * ai + s0 * ar)
    # e = e^{i th0} e^{i phi/2}
    er = c0 * ch - s0 * sh
    ei = c0 * sh + s0 * ch
    fr = er * gr - ei * gi
    fi = er * gi + ei * gr
    # derivative: F' = e * ((i/2) g + i lam e^{i th0} e^{i phi})
    tr = c0 * cp - s0 * sp
    ti = c0 * sp + s0 * cp
    kr = -0.5 * gi - lam * ti
    ki = 0.5 * gr + lam * tr
    fpr = er * kr - ei * ki
    fpi = er * ki + ei * kr
    return dx * fr + dy * fi, dx * fpr + dy * fpi


@njit(cache=True)
def _refine(lam, c0, s0, dx, dy, lo, hi, flo, guess):
    """Safeguarded Newton on a bracket where h changes sign."""
    x = guess
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    polish = False
    for _ in range(200):
        f, fp = _h(lam, c0, s0, dx, dy, x)
        if fp != 0.0 and abs(f) <= 1e-15 * abs(fp):
            return x - f / fp
        if (f < 0.0) == (flo < 0.0):
            lo = x
        else:
            hi = x
        xn = 0.5 * (lo + hi)
        if fp != 0.0:
            xt = x - f / fp
            if lo <= xt <= hi:
                xn = xt
        if polish or hi - lo <= 1e-15:
            return xn
        # one extra step after convergence to reach full precision
        polish = abs(xn - x) <= 1e-9
        x = xn
    return x


@njit(cache=True)
def bounce_theta(lam, th0, p, convex):
    """One collision.  Returns ``(theta1, p1, ok)``; ``ok`` is False on failure."""
    tx, ty = _unit_tangent(lam, th0)
    q = math.sqrt(max(0.0, 1.0 - p * p))
    # inward normal is the tangent rotated by +90 degrees
    dx = p * tx - q * ty
    dy = p * ty + q * tx
    c0 = math.cos(th0)
    s0 = math.sin(th0)
    h0, _ = _h(lam, c0, s0, dx, dy, 0.0)
    phi = -1.0
    if convex:
        guess = 2.0 * math.acos(min(1.0, max(-1.0, p)))
        phi = _refine(lam, c0, s0, dx, dy, 0.0, TWO_PI, h0, guess)
    else:
        x0 = math.cos(th0) + lam * math.cos(2.0 * th0)
        y0 = math.sin(th0) + lam * math.sin(2.0 * th0)
        best_t = 1e300
        prev = 0.0
        fprev = h0
        for j in range(1, _SCAN_CELLS + 1):
            cur = TWO_PI * j / _SCAN_CELLS
            fcur, _ = _h(lam, c0, s0, dx, dy, cur)
            if (fcur < 0.0) != (fprev < 0.0) or fcur == 0.0:
                root = _refine(lam, c0, s0, dx, dy, prev, cur, fprev, 0.5 * (prev + cur))
                th = th0 + root
                xr = math.cos(th) + lam * math.cos(2.0 * th)
                yr = math.sin(th) + lam * math.sin(2.0 * th)
                t = dx * (xr - x0) + dy * (yr - y0)
                if 1e-12 < t < best_t:
                    best_t = t
                    phi = root
            prev = cur
            fprev = fcur
    if not (0.0 < phi < TWO_PI):
        return th0, p, False
    th1 = th0 + phi
    th1 = th1 - TWO_PI * math.floor(th1 / TWO_PI)
    t1x, t1y = _unit_tangent(lam, th1)
    p1 = dx * t1x + dy * t1y
    return th1, p1, True


@njit(cache=True)
def iterate(lam, th0, p0, n, convex):
    ths = np.empty(n + 1)
    ps = np.empty(n + 1)
    ths[0] = th0
    ps[0] = p0
    th = th0
    p = p0
    for i in range(n):
        th, p, ok = bounce_theta(lam, th, p, convex)
        if not ok:
            raise RuntimeError("bounce failed")
        ths[i + 1] = th
        ps[i + 1] = p
    return ths, ps


@njit(cache=True, parallel=True)
def ensemble_second_moment(lam, th, p, n_collisions, n_chunks, convex):
    """Per-chunk sums of ``p**2`` after each collision.

    The particle-to-chunk assignment depends only on ``n_chunks``, so the
    result is independent of the number of worker threads.
    """
    n = th.shape[0]
    acc = np.zeros((n_chunks, n_collisions + 1))
    failures = np.zeros(n_chunks, dtype=np.int64)
    for c in prange(n_chunks):
        start = (n * c) // n_chunks
        stop = (n * (c + 1)) // n_chunks
        for i in range(start, stop):
            t = th[i]
            q = p[i]
            acc[c, 0] += q * q
            for k in range(1, n_collisions + 1):
                t, q, ok = bounce_theta(lam, t, q, convex)
                if not ok:
                    failures[c] += 1
                    break
                acc[c, k] += q * q
    return acc, failures


@njit(cache=True)
def visit_cells(lam, th0, p0, n_collisions, theta_edges, n_p, convex):
    """Mark the (s, p) cells visited by a single orbit."""
    n_q = theta_edges.shape[0] - 1
    grid = np.zeros((n_q, n_p), dtype=np.int8)
    th = th0
    p = p0
    for _ in range(n_collisions):
        th, p, ok = bounce_theta(lam, th, p, convex)
        if not ok:
            raise RuntimeError("bounce failed")
        i = np.searchsorted(theta_edges, th, side="right") - 1
        if i >= n_q:
            i = n_q - 1
        j = int((p + 1.0) * 0.5 * n_p)
        if j >= n_p:
            j = n_p - 1
        elif j < 0:
            j = 0
        grid[i, j] = 1
    return grid


@njit(cache=True)
def finite_time_lyapunov(lam, th0, p0, n, delta, convex):
    """Benettin estimate of the largest exponent per collision."""
    th = th0
    p = p0
    th2 = th0 + delta
    p2 = p0
    total = 0.0
    for _ in range(n):
        th, p, ok1 = bounce_theta(lam, th, p, convex)
        th2, p2, ok2 = bounce_theta(lam, th2, p2, convex)
        if not (ok1 and ok2):
            return np.nan
        dth = th2 - th
        dth = dth - TWO_PI * math.floor(dth / TWO_PI + 0.5)
        dp = p2 - p
        dist = math.sqrt(dth * dth + dp * dp)
        if dist == 0.0:
            dist = 1e-300
        total += math.log(dist / delta)
        th2 = th + dth * delta / dist
        p2 = p + dp * delta / dist
        if p2 >= 1.0 or p2 <= -1.0:
            p2 = p
    return total / n
