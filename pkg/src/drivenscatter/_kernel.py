"""Compiled RK4 integration loop with event detection.

Everything in here is numba ``njit`` code operating on plain floats and
arrays. The public wrappers live in :mod:`drivenscatter.dynamics`.
"""
import numpy as np
from numba import njit

# parameter vector layout
P_POT = 0
P_DRV = 1
P_OMEGA = 2
P_E0 = 3
P_NU = 4
P_NENV = 5
P_ESCX = 6
P_TNR = 7
P_HESC = 8
NPARAM = 9

POT_V1 = 0
POT_V2 = 1
DRV_NONE = 0
DRV_F1 = 1
DRV_F2 = 2

# exit status
ST_CUTOFF = 0
ST_ESCAPED = 1
ST_NORETURN = 2
ST_BOUND = 3
ST_CROSSINGS = 4
ST_STEPLIMIT = 5
ST_NONFINITE = 6

ZERO_TOL = 1e-10
ESCAPE_MARGIN = 1e-4


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def v_value(kind, x):
    ax = abs(x)
    if kind == POT_V1:
        if ax <= 2.0:
            return x * x * (0.5 - 0.1875 * ax + 0.00625 * ax * ax * ax)
        return -1.0 / ax + 1.2
    return 1.2 * x * x / (2.4 + x * x)


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def v_force(kind, x):
    # -dV/dx
    ax = abs(x)
    if kind == POT_V1:
        if ax <= 2.0:
            return -x * (1.0 - 0.5625 * ax + 0.03125 * ax * ax * ax)
        return -x / (ax * ax * ax)
    d = 2.4 + x * x
    return -5.76 * x / (d * d)


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def drive(prm, t):
    kind = int(prm[P_DRV])
    e0 = prm[P_E0]
    nu = prm[P_NU]
    if kind == DRV_F2:
        return e0 * np.sin(nu * t)
    if kind == DRV_F1:
        ph = nu * t
        n = prm[P_NENV]
        if ph < 0.0 or ph > n * np.pi:
            return 0.0
        s = np.sin(ph / n)
        return e0 * s * s * np.cos(ph)
    return 0.0


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def accel(prm, x, t):
    w = prm[P_OMEGA]
    return w * w * v_force(int(prm[P_POT]), x) + drive(prm, t)


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def rk4_forced(prm, x, p, h, f0, fm, f1):
    """One RK4 step given the driver at the start, middle and end."""
    kind = int(prm[P_POT])
    w2 = prm[P_OMEGA] * prm[P_OMEGA]
    k1x = p
    k1p = w2 * v_force(kind, x) + f0
    k2x = p + 0.5 * h * k1p
    k2p = w2 * v_force(kind, x + 0.5 * h * k1x) + fm
    k3x = p + 0.5 * h * k2p
    k3p = w2 * v_force(kind, x + 0.5 * h * k2x) + fm
    k4x = p + h * k3p
    k4p = w2 * v_force(kind, x + h * k3x) + f1
    xn = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    pn = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    return xn, pn


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def rk4(prm, x, p, t, h):
    return rk4_forced(prm, x, p, h, drive(prm, t), drive(prm, t + 0.5 * h),
                      drive(prm, t + h))


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def free_energy(prm, x, p):
    w = prm[P_OMEGA]
    return 0.5 * p * p + w * w * v_value(int(prm[P_POT]), x)


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def is_conservative(prm, t):
    kind = int(prm[P_DRV])
    if kind == DRV_NONE or prm[P_E0] == 0.0:
        return True
    if kind == DRV_F1:
        return prm[P_NU] * t > prm[P_NENV] * np.pi
    return False


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def drift_coords(prm, x, p, t):
    """Guiding-centre position and momentum (quiver removed) for f2."""
    if int(prm[P_DRV]) == DRV_F2:
        e0 = prm[P_E0]
        nu = prm[P_NU]
        return x + e0 / (nu * nu) * np.sin(nu * t), p + e0 / nu * np.cos(nu * t)
    return x, p


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def asymptotic_energy(prm, x, p, t):
    """Free energy of the guiding centre; conserved far from the core."""
    xd, pd = drift_coords(prm, x, p, t)
    return free_energy(prm, xd, pd)


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def _push2(buf, n, a, b):
    if n >= buf.shape[0]:
        nb = np.empty((2 * buf.shape[0], 2))
        nb[:n] = buf[:n]
        buf = nb
    buf[n, 0] = a
    buf[n, 1] = b
    return buf


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def _push3(buf, n, a, b, c):
    if n >= buf.shape[0]:
        nb = np.empty((2 * buf.shape[0], 3))
        nb[:n] = buf[:n]
        buf = nb
    buf[n, 0] = a
    buf[n, 1] = b
    buf[n, 2] = c
    return buf


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def _refine_zero(prm, x0, p0, t0, h, which):
    # bisection on the sub-step length; which=0 -> x, which=1 -> p
    lo = 0.0
    hi = h
    ref = x0 if which == 0 else p0
    xm = x0
    pm = p0
    mid = h
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xm, pm = rk4(prm, x0, p0, t0, mid)
        val = xm if which == 0 else pm
        if abs(val) < ZERO_TOL:
            break
        if (val > 0.0) == (ref > 0.0):
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) < 1e-17 * (1.0 + abs(t0)):
            break
    return t0 + mid, xm, pm


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def run(x, p, t0, dt, t_end, prm, max_steps, stop_after, stop_when_bound,
        start_is_crossing, strobe_t0, strobe_period, sample_stride):
    """Integrate with fixed RK4 steps of signed size ``dt``.

    Returns (status, x, p, t, steps, crossings[n,2], turns[m,2],
    strobe[k,3], samples[s,3]).
    """
    h_esc = prm[P_HESC]
    esc_x = prm[P_ESCX]
    t_nr = prm[P_TNR]
    d = 1.0 if dt > 0 else -1.0

    cross = np.empty((16, 2))
    nc = 0
    turns = np.empty((16, 2))
    nt = 0
    strobe = np.empty((16, 3))
    ns = 0
    samples = np.empty((16, 3))
    nsmp = 0

    t_last = t0
    if start_is_crossing and x == 0.0:
        cross = _push2(cross, nc, t0, p)
        nc += 1

    do_strobe = strobe_period > 0.0 and d > 0
    k_next = 0
    if do_strobe:
        k_next = int(np.ceil((t0 - strobe_t0) / strobe_period))
        if strobe_t0 + k_next * strobe_period < t0:
            k_next += 1
        ts = strobe_t0 + k_next * strobe_period
        if ts == t0:
            strobe = _push3(strobe, ns, x, p, t0)
            ns += 1
            k_next += 1

    if sample_stride > 0:
        samples = _push3(samples, nsmp, x, p, t0)
        nsmp += 1

    kind_drv = int(prm[P_DRV])
    always_cons = kind_drv == DRV_NONE or prm[P_E0] == 0.0
    t_off = np.inf
    if kind_drv == DRV_F1:
        t_off = prm[P_NENV] * np.pi / prm[P_NU]
    check_drift = kind_drv == DRV_F2 and not always_cons

    t = t0
    f_cur = drive(prm, t)
    status = ST_CUTOFF
    i = 0
    while True:
        if d * (t_end - t) <= 0.0:
            status = ST_CUTOFF
            break
        if i >= max_steps:
            status = ST_STEPLIMIT
            break
        t_next = t0 + (i + 1) * dt
        if d * (t_next - t_end) > 0.0:
            t_next = t_end
        h = t_next - t
        f_mid = drive(prm, t + 0.5 * h)
        f_new = drive(prm, t_next)
        xn, pn = rk4_forced(prm, x, p, h, f_cur, f_mid, f_new)
        i += 1
        if not (abs(xn) < 1e300 and abs(pn) < 1e300):
            status = ST_NONFINITE
            break

        # stroboscopic samples falling in (t, t_next]
        if do_strobe:
            ts = strobe_t0 + k_next * strobe_period
            while ts <= t_next:
                if ts == t_next:
                    strobe = _push3(strobe, ns, xn, pn, ts)
                else:
                    xs, ps = rk4(prm, x, p, t, ts - t)
                    strobe = _push3(strobe, ns, xs, ps, ts)
                ns += 1
                k_next += 1
                ts = strobe_t0 + k_next * strobe_period

        # turning point
        if p != 0.0 and (pn == 0.0 or (pn > 0.0) != (p > 0.0)):
            if pn == 0.0:
                turns = _push2(turns, nt, t_next, xn)
            else:
                tt, xt, pt = _refine_zero(prm, x, p, t, h, 1)
                turns = _push2(turns, nt, tt, xt)
            nt += 1

        crossed = False
        if x != 0.0 and (xn == 0.0 or (xn > 0.0) != (x > 0.0)):
            if xn == 0.0:
                tc = t_next
                pc = pn
            else:
                tc, xc, pc = _refine_zero(prm, x, p, t, h, 0)
            cross = _push2(cross, nc, tc, pc)
            nc += 1
            t_last = tc
            crossed = True

        x = xn
        p = pn
        t = t_next
        f_cur = f_new

        if sample_stride > 0 and i % sample_stride == 0:
            samples = _push3(samples, nsmp, x, p, t)
            nsmp += 1

        if crossed and stop_after > 0 and nc >= stop_after:
            status = ST_CROSSINGS
            break

        # fate decisions
        # fate is decidable once no driving lies ahead in the direction of travel
        if always_cons or (kind_drv == DRV_F1 and (
                (d > 0.0 and t > t_off) or (d < 0.0 and t < 0.0))):
            e = free_energy(prm, x, p)
            if e >= h_esc and d * x * p > 0.0:
                status = ST_ESCAPED
                break
            if e < h_esc and stop_when_bound:
                status = ST_BOUND
                break
        elif check_drift and abs(x) > esc_x:
            xd, pd = drift_coords(prm, x, p, t)
            if abs(xd) > esc_x and d * xd * pd > 0.0:
                if free_energy(prm, xd, pd) > h_esc + ESCAPE_MARGIN:
                    status = ST_ESCAPED
                    break
        if d * (t - t_last) > t_nr:
            status = ST_NORETURN
            break

    return (status, x, p, t, i, cross[:nc].copy(), turns[:nt].copy(),
            strobe[:ns].copy(), samples[:nsmp].copy())


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def first_return(x, p, t0, dt, prm, max_steps, t_limit):
    """Integrate until the next zero of x; returns (status, t1, p1, xext, t_ext).

    ``xext`` is the extremum of x (largest |x|) over the excursion.
    """
    st, xf, pf, tf, n, cross, turns, strobe, smp = run(
        x, p, t0, dt, t0 + t_limit * (1.0 if dt > 0 else -1.0), prm, max_steps,
        1, False, False, -1.0, 0.0, 0)
    xext = 0.0
    text = t0
    for k in range(turns.shape[0]):
        if abs(turns[k, 1]) > abs(xext):
            xext = turns[k, 1]
            text = turns[k, 0]
    if st == ST_CROSSINGS:
        return st, cross[0, 0], cross[0, 1], xext, text
    return st, tf, pf, xext, text


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def advance(x, p, t0, h, nsteps, prm):
    """Plain RK4 for ``nsteps`` steps of size ``h`` (negative h runs backward)."""
    t = t0
    for i in range(nsteps):
        x, p = rk4(prm, x, p, t, h)
        t = t0 + (i + 1) * h
    return x, p


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def advance_many(xs, ps, t0, h, nsteps, prm):
    n = xs.shape[0]
    xo = np.empty(n)
    po = np.empty(n)
    for k in range(n):
        xo[k], po[k] = advance(xs[k], ps[k], t0, h, nsteps, prm)
    return xo, po


@njit(cache=True, error_model="numpy", fastmath={"contract", "arcp", "nsz"})
def sprinkle(xs, ps, t0, h, steps_per_period, periods, prm, xlo, xhi, plo, phi):
    """Stroboscopic survival test for a batch of initial points.

    A point survives if every strobe image up to ``periods`` lies inside
    the box. Returns (alive, x_final, p_final).
    """
    n = xs.shape[0]
    alive = np.zeros(n, dtype=np.bool_)
    xo = np.empty(n)
    po = np.empty(n)
    for k in range(n):
        x = xs[k]
        p = ps[k]
        ok = True
        for j in range(periods):
            x, p = advance(x, p, t0 + j * steps_per_period * h, h, steps_per_period, prm)
            if not (xlo <= x <= xhi and plo <= p <= phi):
                ok = False
                break
        alive[k] = ok
        xo[k] = x
        po[k] = p
    return alive, xo, po
