"""Pure-Python MCMC sweep kernel.

Mirrors ``_kernel.pyx`` operation for operation (same arithmetic order,
same bit-generator calls) so both backends give identical chains.

Coordinates are numbered 0..19: ``k < 10`` is ``a_k``; ``k >= 10`` is the
second coordinate of wicket ``k - 10``, which is ``b_w`` under the AB
parametrization and ``c_w = a_w b_w`` under AC. ``values`` and ``weights``
are indexed ``[w][u - 1]``.
"""
from __future__ import annotations

import math

NW = 10
NU = 50
MAX_SHRINK = 200
SIGMA2_FLOOR = 1e-12

# d/dx of the log prior in each coordinate, as coefficients of log(x)
PRIOR_COEF_A_AB = (-2.0,) + (-1.0,) * 8 + (1.0,)
PRIOR_COEF_B_AB = (-1.0,) * 9 + (0.0,)
PRIOR_COEF_AC = (-1.0,) * 9 + (0.0,)


class SliceCollapseError(RuntimeError):
    pass


def decay(a_w: float, s_w: float, u: float, ab: bool) -> float:
    b_w = s_w if ab else s_w / a_w
    return a_w * -math.expm1(-b_w * u)


def column_sse(a_w, s_w, vals, wts, ab):
    b_w = s_w if ab else s_w / a_w
    acc = 0.0
    for i in range(NU):
        wt = wts[i]
        if wt > 0.0:
            r = vals[i] - a_w * -math.expm1(-b_w * (i + 1.0))
            acc += wt * r * r
    return acc


def log_target(k, x, a, s, sigma2, values, weights, ab):
    """Log prior + log likelihood as a function of coordinate ``k`` alone, up to a constant."""
    if k < NW:
        w = k
        coef = PRIOR_COEF_A_AB[w] if ab else PRIOR_COEF_AC[w]
        sse = column_sse(x, s[w], values[w], weights[w], ab)
    else:
        w = k - NW
        coef = PRIOR_COEF_B_AB[w] if ab else PRIOR_COEF_AC[w]
        sse = column_sse(a[w], x, values[w], weights[w], ab)
    lp = coef * math.log(x) if coef != 0.0 else 0.0
    return lp - 0.5 * sse / sigma2


def coordinate_bounds(k, a, s, ab, A0, S0):
    """Open interval (lo, hi) keeping every ordering constraint intact."""
    if k < NW:
        w = k
        lo = 0.0
        hi = A0 if w == 0 else a[w - 1]
        if w < NW - 1 and a[w + 1] > lo:
            lo = a[w + 1]
        if ab:
            b_w = s[w]
            if w < NW - 1:
                t = a[w + 1] * s[w + 1] / b_w
                if t > lo:
                    lo = t
            if w > 0:
                t = a[w - 1] * s[w - 1] / b_w
                if t < hi:
                    hi = t
    else:
        w = k - NW
        if ab:
            lo = 0.0
            hi = S0 if w == 0 else a[w - 1] * s[w - 1] / a[w]
            if w < NW - 1:
                t = a[w + 1] * s[w + 1] / a[w]
                if t > lo:
                    lo = t
        else:
            lo = s[w + 1] if w < NW - 1 else 0.0
            hi = S0 if w == 0 else s[w - 1]
    return lo, hi


def _accept(x0, x1, left, right, width, logy, f):
    """Reversibility check for doubling: could ``x1`` have produced the same bracket?"""
    lh = left
    rh = right
    differ = False
    while rh - lh > 1.1 * width:
        mid = (lh + rh) / 2.0
        if (x0 < mid and x1 >= mid) or (x0 >= mid and x1 < mid):
            differ = True
        if x1 < mid:
            rh = mid
        else:
            lh = mid
        if differ and not f(lh) > logy and not f(rh) > logy:
            return False
    return True


def slice_coordinate(k, a, s, sigma2, values, weights, ab, A0, S0, width, max_doublings, rng):
    """One doubling/shrink slice update of coordinate ``k``, in place.

    The bracket is clipped to the coordinate's support before shrinking.
    Returns the number of target evaluations.
    """
    x0 = a[k] if k < NW else s[k - NW]
    lo, hi = coordinate_bounds(k, a, s, ab, A0, S0)
    if not lo < hi:
        raise SliceCollapseError(f"empty support for coordinate {k}: ({lo}, {hi})")
    evals = 0

    def f(x):
        nonlocal evals
        if x <= lo or x >= hi:
            return -math.inf
        evals += 1
        return log_target(k, x, a, s, sigma2, values, weights, ab)

    logy = f(x0) + math.log(1.0 - rng.random())
    left = x0 - width * rng.random()
    right = left + width
    f_left = f(left)
    f_right = f(right)
    for _ in range(max_doublings):
        if not (f_left > logy or f_right > logy):
            break
        if rng.random() < 0.5:
            left = left - (right - left)
            f_left = f(left)
        else:
            right = right + (right - left)
            f_right = f(right)
    lb = left if left > lo else lo
    rb = right if right < hi else hi
    for _ in range(MAX_SHRINK):
        x1 = lb + rng.random() * (rb - lb)
        if f(x1) > logy and _accept(x0, x1, left, right, width, logy, f):
            if k < NW:
                a[k] = x1
            else:
                s[k - NW] = x1
            return evals
        if x1 < x0:
            lb = x1
        else:
            rb = x1
    raise SliceCollapseError(f"slice for coordinate {k} shrank {MAX_SHRINK} times without acceptance")


def impute(a, s, sigma2, values, miss_w, miss_u, ab, rng):
    sd = math.sqrt(sigma2)
    for idx in range(len(miss_w)):
        w = miss_w[idx]
        u = miss_u[idx]
        values[w][u - 1] = decay(a[w], s[w], float(u), ab) + sd * rng.standard_normal()


def draw_sigma2(a, s, values, weights, ab, gamma_a, gamma_b, rng):
    n_active = 0
    sse = 0.0
    for w in range(NW):
        wts = weights[w]
        for i in range(NU):
            if wts[i] > 0.0:
                n_active += 1
        sse += column_sse(a[w], s[w], values[w], wts, ab)
    shape = gamma_a + 0.5 * n_active
    rate = gamma_b + 0.5 * sse
    tau = rng.standard_gamma(shape) / rate
    if tau < 1e-300:
        tau = 1e-300
    sigma2 = 1.0 / tau
    return sigma2 if sigma2 > SIGMA2_FLOOR else SIGMA2_FLOOR


def run_sweeps(a, s, sigma2, values, weights, miss_w, miss_u, ab, A0, S0,
               gamma_a, gamma_b, width_a, width_s, max_doublings,
               burn_in, keep, thin, impute_first,
               out_a, out_b, out_sigma2, out_imp, evals, rng):
    """Run ``burn_in + keep * thin`` sweeps, writing retained draws into the out arrays.

    Array arguments are numpy arrays; they are updated in place so the final
    state is visible to the caller.
    """
    a_l = [float(x) for x in a]
    s_l = [float(x) for x in s]
    vals = [[float(x) for x in row] for row in values]
    wts = [[float(x) for x in row] for row in weights]
    mw = [int(x) for x in miss_w]
    mu = [int(x) for x in miss_u]
    s2 = float(sigma2[0])
    ev = [0] * (2 * NW)
    total = burn_in + keep * thin
    stored = 0
    try:
        for t in range(total):
            if impute_first:
                impute(a_l, s_l, s2, vals, mw, mu, ab, rng)
            for k in range(2 * NW):
                width = width_a if k < NW else width_s
                ev[k] += slice_coordinate(k, a_l, s_l, s2, vals, wts, ab, A0, S0,
                                          width, max_doublings, rng)
            s2 = draw_sigma2(a_l, s_l, vals, wts, ab, gamma_a, gamma_b, rng)
            if not impute_first:
                impute(a_l, s_l, s2, vals, mw, mu, ab, rng)
            if t >= burn_in and (t - burn_in + 1) % thin == 0:
                for w in range(NW):
                    out_a[stored, w] = a_l[w]
                    out_b[stored, w] = s_l[w] if ab else s_l[w] / a_l[w]
                out_sigma2[stored] = s2
                for idx in range(len(mw)):
                    out_imp[stored, idx] = vals[mw[idx]][mu[idx] - 1]
                stored += 1
    finally:
        a[:] = a_l
        s[:] = s_l
        sigma2[0] = s2
        values[:] = vals
        for k in range(2 * NW):
            evals[k] += ev[k]
    return stored
