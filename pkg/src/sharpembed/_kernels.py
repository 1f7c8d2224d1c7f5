"""Compiled inner loops.

Conventions used throughout:

* a solution is carried as the pair ``(x, y) = (u(n-1), u(n))`` "at site n";
  the step that uses ``V[n]`` maps the pair at site n to the pair at site n+1;
* the Pruefer angle is carried as ``base + f`` with ``f`` in [0, 2) and
  ``base`` an even integer stored as float, so trig is always evaluated on a
  small argument while the unwrapped angle stays available.
"""

import math

import numpy as np
from numba import njit

PI = math.pi
TWO_PI = 2.0 * math.pi
ANGLE_RTOL = 1e-12
ANGLE_ATOL = 1e-15


@njit(cache=True, nogil=True)
def wrap2(x):
    y = x - 2.0 * math.floor(0.5 * x)
    if y >= 2.0:
        y -= 2.0
    if y < 0.0:
        y += 2.0
    return y


@njit(cache=True, nogil=True)
def logaddexp(a, b):
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True, nogil=True)
def prufer_update(f, V, k, sin_pk):
    """One exact Pruefer step on the reduced angle.

    Returns ``(dlogR2, delta, f_new)`` where ``delta = theta' - k - theta`` on
    the branch closest to zero.
    """
    if V == 0.0:
        return 0.0, 0.0, wrap2(f + k)
    w = V / sin_pk
    s = math.sin(PI * f)
    c = math.cos(PI * f)
    ws = w * s
    # s^2 + (c - ws)^2 - 1 = ws (ws - 2c)
    dlog = math.log1p(ws * (ws - 2.0 * c))
    alpha = math.atan2(s, c - ws) / PI
    delta = alpha - f
    delta -= 2.0 * math.floor(0.5 * delta + 0.5)
    return dlog, delta, wrap2(alpha + k)


@njit(cache=True, nogil=True)
def advance(logR2, base, f, V, k, sin_pk):
    dlog, delta, fn = prufer_update(f, V, k, sin_pk)
    base += 2.0 * math.floor(0.5 * (f + k + delta - fn) + 0.5)
    return logR2 + dlog, base, fn, delta


@njit(cache=True, nogil=True)
def angle_bound_ok(delta, w):
    return abs(delta) <= abs(w) * (1.0 + ANGLE_RTOL) + ANGLE_ATOL


@njit(cache=True, nogil=True)
def pair_to_prufer(x, y, k, sin_pk, cos_pk):
    """Return (log R^2, f) for the pair (u(n-1), u(n))."""
    y0 = x
    y1 = (y - cos_pk * x) / sin_pk
    return math.log(y0 * y0 + y1 * y1), wrap2(math.atan2(y0, y1) / PI + k)


@njit(cache=True, nogil=True)
def integrate_forward(V, E, k, u0, u1, n_max, samples,
                      out_V, out_x, out_y, out_logR2, out_theta, out_logRt2, out_logS):
    """Direct recursion and Pruefer channel side by side.

    Returns (status, site, angle_bound_violations, n_large, first_large,
    max_err_logR2, max_err_theta).  status 0 = ok, 1 = non-finite value.
    """
    sin_pk = math.sin(PI * k)
    cos_pk = math.cos(PI * k)
    x = u0
    y = u1
    r = x * x + y * y
    L = math.log(r)
    inv = 1.0 / math.sqrt(r)
    x *= inv
    y *= inv
    lr, f = pair_to_prufer(x, y, k, sin_pk, cos_pk)
    logR2 = L + lr
    base = 0.0
    logS = L
    ns = samples.shape[0]
    j = 0
    viol = 0
    n_large = 0
    first_large = -1
    err_r = 0.0
    err_t = 0.0
    if ns > 0 and samples[0] == 1:
        out_V[0] = V[1] if V.shape[0] > 1 else 0.0
        out_x[0] = x
        out_y[0] = y
        out_logR2[0] = logR2
        out_theta[0] = base + f
        out_logRt2[0] = L
        out_logS[0] = logS
        j = 1
    for n in range(1, n_max):
        v = V[n]
        z = (E - v) * y - x
        x = y
        y = z
        r = x * x + y * y
        if not (r > 0.0 and r < 1e300):
            return 1, n + 1, viol, n_large, first_large, err_r, err_t
        L += math.log(r)
        inv = 1.0 / math.sqrt(r)
        x *= inv
        y *= inv
        logS = logaddexp(logS, L)
        w = v / sin_pk
        logR2, base, f, delta = advance(logR2, base, f, v, k, sin_pk)
        if abs(w) >= 0.5:
            n_large += 1
            if first_large < 0:
                first_large = n
        elif not angle_bound_ok(delta, w):
            viol += 1
        m = n + 1
        if j < ns and samples[j] == m:
            out_V[j] = V[m] if m < V.shape[0] else 0.0
            out_x[j] = x
            out_y[j] = y
            out_logR2[j] = logR2
            out_theta[j] = base + f
            out_logRt2[j] = L
            out_logS[j] = logS
            lr, fd = pair_to_prufer(x, y, k, sin_pk, cos_pk)
            e1 = abs(L + lr - logR2)
            d = abs(fd - f)
            if d > 1.0:
                d = 2.0 - d
            if e1 > err_r:
                err_r = e1
            if d > err_t:
                err_t = d
            j += 1
    return 0, 0, viol, n_large, first_large, err_r, err_t


@njit(cache=True, nogil=True)
def integrate_backward(V, E, n_top, x, y, samples_desc, out_x, out_y, out_L, out_logSuf):
    """Run u(n-2) = (E - V(n-1)) u(n-1) - u(n) from site n_top down to site 1.

    ``(x, y)`` is the (unnormalised) pair at n_top.  Samples are site indices
    in decreasing order.  ``out_logSuf[j]`` is log sum_{m > site} Rt(m)^2 over
    (site, n_top].  Returns (status, site, L_at_1, x1, y1, log_total).
    """
    r = x * x + y * y
    L = math.log(r)
    inv = 1.0 / math.sqrt(r)
    x *= inv
    y *= inv
    logSuf = -np.inf
    ns = samples_desc.shape[0]
    j = 0
    n = n_top
    while True:
        if j < ns and samples_desc[j] == n:
            out_x[j] = x
            out_y[j] = y
            out_L[j] = L
            out_logSuf[j] = logSuf
            j += 1
        if logSuf == -np.inf:
            logSuf = L
        else:
            logSuf = logaddexp(logSuf, L)
        if n == 1:
            break
        z = (E - V[n - 1]) * x - y
        y = x
        x = z
        r = x * x + y * y
        if not (r > 0.0 and r < 1e300):
            return 1, n - 1, L, x, y, logSuf
        L += math.log(r)
        inv = 1.0 / math.sqrt(r)
        x *= inv
        y *= inv
        n -= 1
    return 0, 0, L, x, y, logSuf


@njit(cache=True, nogil=True)
def free_prufer(logR2, base, f, k, sin_pk, n_steps):
    for _ in range(n_steps):
        logR2, base, f, _d = advance(logR2, base, f, 0.0, k, sin_pk)
    return logR2, base, f


@njit(cache=True, nogil=True)
def sign_type_kernel(a, k, logR2, base, f, n_start, n_end, V_out):
    """Co-evolve V(n) = a sgn(sin 2 pi theta(n)) / (1 + n) with the angle.

    Returns (status, site, logR2, base, f, violations, identity_misses).
    """
    sin_pk = math.sin(PI * k)
    viol = 0
    misses = 0
    for n in range(n_start, n_end):
        s2 = math.sin(TWO_PI * f)
        if s2 > 0.0:
            v = a / (1.0 + n)
        elif s2 < 0.0:
            v = -a / (1.0 + n)
        else:
            v = 0.0
        w = v / sin_pk
        if abs(w) >= 0.5:
            return 1, n, logR2, base, f, viol, misses
        V_out[n] = v
        s = math.sin(PI * f)
        expected = math.log1p(-(a / sin_pk) * abs(s2) / (1.0 + n) + w * w * s * s)
        old = logR2
        logR2, base, f, delta = advance(logR2, base, f, v, k, sin_pk)
        if v != 0.0 and abs((logR2 - old) - expected) > 1e-12 * (1.0 + abs(expected)) + 1e-15:
            misses += 1
        if not angle_bound_ok(delta, w):
            viol += 1
    return 0, 0, logR2, base, f, viol, misses


@njit(cache=True, nogil=True)
def period_numerator(theta_in, a, k, pplus, pminus):
    """Solve the per-period cancellation equation for the last negative numerator."""
    half = pplus.shape[0]
    sp = 0.0
    for j in range(half):
        s = math.sin(PI * (theta_in + pplus[j] * k))
        sp += s * s
    sm = 0.0
    for j in range(half - 1):
        s = math.sin(PI * (theta_in + pminus[j] * k))
        sm += s * s
    s = math.sin(PI * (theta_in + pminus[half - 1] * k))
    return a * (sp - sm) / (s * s)


@njit(cache=True, nogil=True)
def even_q_kernel(a, k, q, pplus, pminus, n0, n_periods, delta_win,
                  logR2, base, f, V_out, th_in, th_out, a_minus, resid):
    """Chain almost-sign-type periods starting at site n0.

    Status codes: 0 ok, 1 phase lock lost, 2 degenerate period, 3 step too
    large.  Returns (status, where, logR2, base, f, angle_bound_violations,
    sign_misalignments, periods_done).
    """
    sin_pk = math.sin(PI * k)
    target = 0.5 / q
    half = q // 2
    viol = 0
    badsign = 0
    for m in range(n_periods):
        n_abs = n0 + m * q
        d = f - math.floor(f) - target
        d -= math.floor(d + 0.5)
        if abs(d) >= delta_win:
            return 1, m, logR2, base, f, viol, badsign, m
        am = period_numerator(f, a, k, pplus, pminus)
        if not (am > 0.0) or abs(am - a) > 0.5 * a:
            return 2, m, logR2, base, f, viol, badsign, m
        scale = 1.0 / (1.0 + n_abs)
        for j in range(half):
            V_out[n_abs + pplus[j]] = a * scale
        for j in range(half - 1):
            V_out[n_abs + pminus[j]] = -a * scale
        V_out[n_abs + pminus[half - 1]] = -am * scale
        res = 0.0
        for j in range(q):
            s = math.sin(PI * (f + j * k))
            res += s * s * V_out[n_abs + j]
        th_in[m] = base + f
        a_minus[m] = am
        resid[m] = res
        for j in range(q):
            v = V_out[n_abs + j]
            w = v / sin_pk
            if abs(w) >= 0.5:
                return 3, n_abs + j, logR2, base, f, viol, badsign, m
            if v * math.sin(TWO_PI * f) < 0.0:
                badsign += 1
            logR2, base, f, delta = advance(logR2, base, f, v, k, sin_pk)
            if not angle_bound_ok(delta, w):
                viol += 1
        th_out[m] = base + f
    return 0, 0, logR2, base, f, viol, badsign, n_periods


@njit(cache=True, nogil=True)
def wvn_at(amp, k, phi, b, n):
    return amp * math.sin(TWO_PI * k * n + phi) / (n - b)


@njit(cache=True, nogil=True)
def wvn_fill(out, amp, k, phi, b, n_lo, n_hi):
    for n in range(n_lo, n_hi):
        out[n] = wvn_at(amp, k, phi, b, n)


@njit(cache=True, nogil=True)
def segment_scan(E, amp, k, b, n0, n1, x0, y0, phis, out):
    """log(Rt(n1)^2 / Rt(n0)^2) for every phase in ``phis`` at once.

    The potential lives on the open interval (n0, n1).
    """
    m = phis.shape[0]
    xs = np.empty(m)
    ys = np.empty(m)
    L = np.zeros(m)
    cph = np.cos(phis)
    sph = np.sin(phis)
    for i in range(m):
        xs[i] = x0
        ys[i] = y0
    for n in range(n0, n1):
        if n == n0:
            for i in range(m):
                z = E * ys[i] - xs[i]
                xs[i] = ys[i]
                ys[i] = z
            continue
        arg = TWO_PI * k * n
        sn = math.sin(arg)
        cn = math.cos(arg)
        c = amp / (n - b)
        for i in range(m):
            v = c * (sn * cph[i] + cn * sph[i])
            z = (E - v) * ys[i] - xs[i]
            xs[i] = ys[i]
            ys[i] = z
            r = xs[i] * xs[i] + z * z
            if r > 1e100 or r < 1e-100:
                s = 1.0 / math.sqrt(r)
                xs[i] *= s
                ys[i] *= s
                L[i] += math.log(r)
    r0 = math.log(x0 * x0 + y0 * y0)
    for i in range(m):
        out[i] = L[i] + math.log(xs[i] * xs[i] + ys[i] * ys[i]) - r0


@njit(cache=True, nogil=True)
def segment_eval(E, amp, k, phi, b, n0, n1, x, y):
    """Follow one solution across a WvN segment on (n0, n1).

    Returns (log ratio at n1, max log ratio over the segment, x1, y1) with the
    output pair normalised; ratios are of Rt^2 relative to site n0.
    """
    r = x * x + y * y
    L = 0.0
    inv = 1.0 / math.sqrt(r)
    x *= inv
    y *= inv
    Lmax = 0.0
    for n in range(n0, n1):
        v = 0.0 if n == n0 else wvn_at(amp, k, phi, b, n)
        z = (E - v) * y - x
        x = y
        y = z
        r = x * x + y * y
        L += math.log(r)
        inv = 1.0 / math.sqrt(r)
        x *= inv
        y *= inv
        if L > Lmax:
            Lmax = L
    return L, Lmax, x, y


@njit(cache=True, nogil=True)
def segment_transfer_norm(E, amp, k, phi, b, n0, n1):
    """max over the segment of log ||T(n0 -> n)||_2^2 (det T = 1)."""
    a11 = 1.0
    a12 = 0.0
    a21 = 0.0
    a22 = 1.0
    best = 0.0
    Lsc = 0.0
    for n in range(n0, n1):
        v = 0.0 if n == n0 else wvn_at(amp, k, phi, b, n)
        t = E - v
        z1 = t * a21 - a11
        z2 = t * a22 - a12
        a11 = a21
        a12 = a22
        a21 = z1
        a22 = z2
        F = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22
        if F > 1e100:
            s = 1.0 / math.sqrt(F)
            a11 *= s
            a12 *= s
            a21 *= s
            a22 *= s
            Lsc += math.log(F)
            F = 1.0
        # largest eigenvalue of T^T T with det(T) scaled by exp(-Lsc)
        det2 = math.exp(-2.0 * Lsc)
        disc = F * F - 4.0 * det2
        if disc < 0.0:
            disc = 0.0
        lam = 0.5 * (F + math.sqrt(disc))
        val = Lsc + math.log(lam)
        if val > best:
            best = val
    return best


@njit(cache=True, nogil=True)
def oscillatory_kernel(V, k1, x1, y1, k2, x2, y2, has2, n_max, samples, out1, out2):
    """Running sums of cos(4 pi theta1)/(1+t) and sin(2 pi theta1) sin(2 pi theta2)/(1+t)."""
    s1 = math.sin(PI * k1)
    c1 = math.cos(PI * k1)
    _l, fa = pair_to_prufer(x1, y1, k1, s1, c1)
    fb = 0.0
    s2 = 1.0
    if has2:
        s2 = math.sin(PI * k2)
        c2 = math.cos(PI * k2)
        _l, fb = pair_to_prufer(x2, y2, k2, s2, c2)
    S1 = 0.0
    S2 = 0.0
    j = 0
    ns = samples.shape[0]
    for t in range(1, n_max + 1):
        S1 += math.cos(2.0 * TWO_PI * fa) / (1.0 + t)
        if has2:
            S2 += math.sin(TWO_PI * fa) * math.sin(TWO_PI * fb) / (1.0 + t)
        if j < ns and samples[j] == t:
            out1[j] = S1
            out2[j] = S2
            j += 1
        if t == n_max:
            break
        v = V[t]
        _d, _dl, fa = prufer_update(fa, v, k1, s1)
        if has2:
            _d, _dl, fb = prufer_update(fb, v, k2, s2)
