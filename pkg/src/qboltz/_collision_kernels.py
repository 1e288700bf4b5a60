"""Compiled inner loops of the direct collision quadrature.

Layout conventions: a velocity slice is a flat float64 array over the
tensor grid, node id = ix * n + iy.  Every kernel is deterministic: the
reduction order is fixed (pairs in row-major order, angles ascending), and
the parallel variant distributes whole spatial cells across threads.

Two exact symmetries halve the work twice: the integrand is invariant under
exchanging the colliding pair (j <-> k), and under sigma -> -sigma, which
swaps the two post-collision velocities without changing the bracket.
Pairs whose collision circle stays inside the node hull take a branch-free
inner loop.

Screening: pairs whose loss product and whose ring-gain bound both fall
below a relative threshold contribute nothing at double precision and are
skipped.  The gain bound uses radial shell maxima of |f| dilated by the
interpolation footprint, combined through the exact energy constraint
|v'|^2 + |v*'|^2 = |v|^2 + |v_*|^2, so the skip is conservative.

The kernels compile with fastmath: value arithmetic may be reassociated
and contracted, which can flip the inclusion of post-collision points that
graze the node-hull edge exactly (a measure-zero quadrature convention).
Results remain bitwise deterministic for a given build and thread count
independent, but agree with a strict-IEEE reference only to the weight of
such grazing terms.
"""

import numpy as np
from numba import njit, prange

__all__ = ["collide_cell", "collide_field", "screen_tables"]


@njit(cache=True)
def screen_tables(f, shell_of, dilate, n_shells):
    """Per-shell |f| maxima (dilated) and the pair-energy product table."""
    fhat = np.zeros(n_shells)
    for j in range(f.size):
        a = abs(f[j])
        s = shell_of[j]
        if a > fhat[s]:
            fhat[s] = a
    fdil = np.zeros(n_shells)
    for s in range(n_shells):
        lo = s - dilate[s]
        if lo < 0:
            lo = 0
        hi = s + dilate[s]
        if hi > n_shells - 1:
            hi = n_shells - 1
        m = 0.0
        for t in range(lo, hi + 1):
            if fhat[t] > m:
                m = fhat[t]
        fdil[s] = m
    gtab = np.zeros(2 * n_shells)
    for s1 in range(n_shells):
        a = fdil[s1]
        if a == 0.0:
            continue
        for s2 in range(s1, n_shells):
            v = a * fdil[s2]
            t = s1 + s2
            if v > gtab[t]:
                gtab[t] = v
    return gtab


@njit(cache=True, inline="always", fastmath=True)
def _interp(f, gx, gy, n, nm1):
    ix = int(gx)
    if ix > nm1 - 1:
        ix = nm1 - 1
    iy = int(gy)
    if iy > nm1 - 1:
        iy = nm1 - 1
    wx = gx - ix
    wy = gy - iy
    b = ix * n + iy
    return ((1.0 - wx) * ((1.0 - wy) * f[b] + wy * f[b + 1])
            + wx * ((1.0 - wy) * f[b + n] + wy * f[b + n + 1]))


@njit(cache=True, fastmath=True)
def collide_cell(f, vx, vy, vsq, r_pair, cos_s, sin_s, theta0, sgn,
                 n, half_width, inv_dv, pref, gamma,
                 shell_of, dilate, n_shells, inv_de, screen_rel, Q):
    """Accumulate the collision operator of one cell into Q (not projected)."""
    N = f.size
    nsh = cos_s.size
    nm1 = n - 1

    fmax = 0.0
    for j in range(N):
        a = abs(f[j])
        if a > fmax:
            fmax = a
    if fmax == 0.0:
        return
    qfac = 1.0 + theta0 * fmax
    tau = screen_rel * fmax * fmax
    screening = screen_rel > 0.0
    if screening:
        gtab = screen_tables(f, shell_of, dilate, n_shells)
    else:
        gtab = np.zeros(1)

    # the two-angle rule with exact axis-aligned nodes takes an unrolled path
    axis_rule = (nsh == 2 and cos_s[0] == 1.0 and sin_s[0] == 0.0
                 and cos_s[1] == 0.0 and sin_s[1] == 1.0)

    for j in range(N):
        fj = f[j]
        vjx = vx[j]
        vjy = vy[j]
        qj = 1.0 + sgn * theta0 * fj
        for k in range(j + 1, N):
            fk = f[k]
            fjk = fj * fk
            if screening:
                t = int((vsq[j] + vsq[k]) * inv_de)
                gmax = gtab[t]
                if t > 0 and gtab[t - 1] > gmax:
                    gmax = gtab[t - 1]
                if t > 1 and gtab[t - 2] > gmax:
                    gmax = gtab[t - 2]
                bound = abs(fjk)
                if gmax > bound:
                    bound = gmax
                if bound * qfac * qfac <= tau:
                    continue
            cx = 0.5 * (vjx + vx[k])
            cy = 0.5 * (vjy + vy[k])
            r = r_pair[j, k]
            qjk = qj * (1.0 + sgn * theta0 * fk)
            bgx = (cx + half_width) * inv_dv - 0.5
            bgy = (cy + half_width) * inv_dv - 0.5
            rho = r * inv_dv
            acc = 0.0
            if bgx - rho >= 0.0 and bgx + rho <= nm1 and \
                    bgy - rho >= 0.0 and bgy + rho <= nm1:
                # whole collision circle inside the node hull: no checks
                if axis_rule:
                    f1 = _interp(f, bgx + rho, bgy, n, nm1)
                    f2 = _interp(f, bgx - rho, bgy, n, nm1)
                    acc += (f1 * f2 * qjk
                            - fjk * (1.0 + sgn * theta0 * f1)
                            * (1.0 + sgn * theta0 * f2))
                    f1 = _interp(f, bgx, bgy + rho, n, nm1)
                    f2 = _interp(f, bgx, bgy - rho, n, nm1)
                    acc += (f1 * f2 * qjk
                            - fjk * (1.0 + sgn * theta0 * f1)
                            * (1.0 + sgn * theta0 * f2))
                else:
                    for m in range(nsh):
                        dgx = rho * cos_s[m]
                        dgy = rho * sin_s[m]
                        f1 = _interp(f, bgx + dgx, bgy + dgy, n, nm1)
                        f2 = _interp(f, bgx - dgx, bgy - dgy, n, nm1)
                        acc += (f1 * f2 * qjk
                                - fjk * (1.0 + sgn * theta0 * f1)
                                * (1.0 + sgn * theta0 * f2))
            else:
                for m in range(nsh):
                    dgx = rho * cos_s[m]
                    dgy = rho * sin_s[m]
                    gx = bgx + dgx
                    gy = bgy + dgy
                    if gx < 0.0 or gx > nm1 or gy < 0.0 or gy > nm1:
                        continue
                    gx2 = bgx - dgx
                    gy2 = bgy - dgy
                    if gx2 < 0.0 or gx2 > nm1 or gy2 < 0.0 or gy2 > nm1:
                        continue
                    f1 = _interp(f, gx, gy, n, nm1)
                    f2 = _interp(f, gx2, gy2, n, nm1)
                    acc += (f1 * f2 * qjk
                            - fjk * (1.0 + sgn * theta0 * f1)
                            * (1.0 + sgn * theta0 * f2))
            val = acc * pref
            if gamma != 0.0:
                val *= (2.0 * r) ** gamma
            Q[j] += val
            Q[k] += val


@njit(cache=True, parallel=True, fastmath=True)
def collide_field(F, vx, vy, vsq, r_pair, cos_s, sin_s, theta0, sgn,
                  n, half_width, inv_dv, pref, gamma,
                  shell_of, dilate, n_shells, inv_de, screen_rel, Qout):
    for c in prange(F.shape[0]):
        collide_cell(F[c], vx, vy, vsq, r_pair, cos_s, sin_s, theta0, sgn,
                     n, half_width, inv_dv, pref, gamma,
                     shell_of, dilate, n_shells, inv_de, screen_rel, Qout[c])
