# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MCMC sweep kernel; see ``_kernel_py`` for the reference version."""
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport expm1, log, sqrt, INFINITY
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_gamma

from ._kernel_py import SliceCollapseError

cdef enum:
    NW = 10
    NU = 50
    MAX_SHRINK = 200

cdef double SIGMA2_FLOOR = 1e-12

cdef double PRIOR_COEF_A_AB[NW]
cdef double PRIOR_COEF_B_AB[NW]
cdef double PRIOR_COEF_AC[NW]
cdef int _i
for _i in range(NW):
    PRIOR_COEF_A_AB[_i] = -1.0
    PRIOR_COEF_B_AB[_i] = -1.0
    PRIOR_COEF_AC[_i] = -1.0
PRIOR_COEF_A_AB[0] = -2.0
PRIOR_COEF_A_AB[NW - 1] = 1.0
PRIOR_COEF_B_AB[NW - 1] = 0.0
PRIOR_COEF_AC[NW - 1] = 0.0


cdef inline double next_double(bitgen_t *rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef inline double decay(double a_w, double s_w, double u, bint ab) noexcept nogil:
    cdef double b_w = s_w if ab else s_w / a_w
    return a_w * -expm1(-b_w * u)


cdef double column_sse(double a_w, double s_w, const double[:] vals, const double[:] wts,
                       bint ab) noexcept nogil:
    cdef double b_w = s_w if ab else s_w / a_w
    cdef double acc = 0.0, r, wt
    cdef int i
    for i in range(NU):
        wt = wts[i]
        if wt > 0.0:
            r = vals[i] - a_w * -expm1(-b_w * (i + 1.0))
            acc += wt * r * r
    return acc


cdef double log_target(int k, double x, double[:] a, double[:] s, double sigma2,
                       double[:, :] values, const double[:, :] weights, bint ab) noexcept nogil:
    cdef int w
    cdef double coef, sse, lp
    if k < NW:
        w = k
        coef = PRIOR_COEF_A_AB[w] if ab else PRIOR_COEF_AC[w]
        sse = column_sse(x, s[w], values[w], weights[w], ab)
    else:
        w = k - NW
        coef = PRIOR_COEF_B_AB[w] if ab else PRIOR_COEF_AC[w]
        sse = column_sse(a[w], x, values[w], weights[w], ab)
    lp = coef * log(x) if coef != 0.0 else 0.0
    return lp - 0.5 * sse / sigma2


cdef void coordinate_bounds(int k, double[:] a, double[:] s, bint ab, double A0, double S0,
                            double *lo_out, double *hi_out) noexcept nogil:
    cdef int w
    cdef double lo, hi, t, b_w
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
    lo_out[0] = lo
    hi_out[0] = hi


cdef inline double bounded_target(int k, double x, double lo, double hi, double[:] a, double[:] s,
                                  double sigma2, double[:, :] values, const double[:, :] weights,
                                  bint ab, long *evals) noexcept nogil:
    if x <= lo or x >= hi:
        return -INFINITY
    evals[0] += 1
    return log_target(k, x, a, s, sigma2, values, weights, ab)


cdef bint accept(int k, double x0, double x1, double left, double right, double width, double logy,
                 double lo, double hi, double[:] a, double[:] s, double sigma2,
                 double[:, :] values, const double[:, :] weights, bint ab, long *evals) noexcept nogil:
    cdef double lh = left, rh = right, mid
    cdef bint differ = False
    while rh - lh > 1.1 * width:
        mid = (lh + rh) / 2.0
        if (x0 < mid and x1 >= mid) or (x0 >= mid and x1 < mid):
            differ = True
        if x1 < mid:
            rh = mid
        else:
            lh = mid
        if differ and not bounded_target(k, lh, lo, hi, a, s, sigma2, values, weights, ab, evals) > logy \
                and not bounded_target(k, rh, lo, hi, a, s, sigma2, values, weights, ab, evals) > logy:
            return False
    return True


cdef long slice_coordinate(int k, double[:] a, double[:] s, double sigma2, double[:, :] values,
                           const double[:, :] weights, bint ab, double A0, double S0,
                           double width, int max_doublings, bitgen_t *rng) noexcept nogil:
    """Returns the evaluation count, or -1 if the slice collapsed."""
    cdef double x0, lo, hi, logy, left, right, x1, f_left, f_right, lb, rb
    cdef int it
    cdef long evals = 0
    x0 = a[k] if k < NW else s[k - NW]
    coordinate_bounds(k, a, s, ab, A0, S0, &lo, &hi)
    if not lo < hi:
        return -1
    logy = bounded_target(k, x0, lo, hi, a, s, sigma2, values, weights, ab, &evals) \
        + log(1.0 - next_double(rng))
    left = x0 - width * next_double(rng)
    right = left + width
    f_left = bounded_target(k, left, lo, hi, a, s, sigma2, values, weights, ab, &evals)
    f_right = bounded_target(k, right, lo, hi, a, s, sigma2, values, weights, ab, &evals)
    for it in range(max_doublings):
        if not (f_left > logy or f_right > logy):
            break
        if next_double(rng) < 0.5:
            left = left - (right - left)
            f_left = bounded_target(k, left, lo, hi, a, s, sigma2, values, weights, ab, &evals)
        else:
            right = right + (right - left)
            f_right = bounded_target(k, right, lo, hi, a, s, sigma2, values, weights, ab, &evals)
    lb = left if left > lo else lo
    rb = right if right < hi else hi
    for it in range(MAX_SHRINK):
        x1 = lb + next_double(rng) * (rb - lb)
        if bounded_target(k, x1, lo, hi, a, s, sigma2, values, weights, ab, &evals) > logy \
                and accept(k, x0, x1, left, right, width, logy, lo, hi, a, s, sigma2,
                           values, weights, ab, &evals):
            if k < NW:
                a[k] = x1
            else:
                s[k - NW] = x1
            return evals
        if x1 < x0:
            lb = x1
        else:
            rb = x1
    return -1


cdef void impute(double[:] a, double[:] s, double sigma2, double[:, :] values,
                 const long[:] miss_w, const long[:] miss_u, bint ab, bitgen_t *rng) noexcept nogil:
    cdef double sd = sqrt(sigma2)
    cdef Py_ssize_t idx
    cdef long w, u
    for idx in range(miss_w.shape[0]):
        w = miss_w[idx]
        u = miss_u[idx]
        values[w, u - 1] = decay(a[w], s[w], <double>u, ab) + sd * random_standard_normal(rng)


cdef double draw_sigma2(double[:] a, double[:] s, double[:, :] values, const double[:, :] weights,
                        bint ab, double gamma_a, double gamma_b, bitgen_t *rng) noexcept nogil:
    cdef long n_active = 0
    cdef double sse = 0.0, shape, rate, tau, sigma2
    cdef int w, i
    for w in range(NW):
        for i in range(NU):
            if weights[w, i] > 0.0:
                n_active += 1
        sse += column_sse(a[w], s[w], values[w], weights[w], ab)
    shape = gamma_a + 0.5 * n_active
    rate = gamma_b + 0.5 * sse
    tau = random_standard_gamma(rng, shape) / rate
    if tau < 1e-300:
        tau = 1e-300
    sigma2 = 1.0 / tau
    return sigma2 if sigma2 > SIGMA2_FLOOR else SIGMA2_FLOOR


def run_sweeps(double[:] a, double[:] s, double[:] sigma2, double[:, :] values,
               const double[:, :] weights, const long[:] miss_w, const long[:] miss_u,
               bint ab, double A0, double S0, double gamma_a, double gamma_b,
               double width_a, double width_s, int max_doublings,
               long burn_in, long keep, long thin, bint impute_first,
               double[:, :] out_a, double[:, :] out_b, double[:] out_sigma2,
               double[:, :] out_imp, long[:] evals, rng):
    """Compiled counterpart of ``_kernel_py.run_sweeps``."""
    cdef bitgen_t *bitgen
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    bitgen = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef long total = burn_in + keep * thin
    cdef long t, stored = 0, e
    cdef int k, w, failed = -1
    cdef Py_ssize_t idx
    cdef double s2 = sigma2[0], width
    cdef long n_miss = miss_w.shape[0]

    with rng.bit_generator.lock, nogil:
        for t in range(total):
            if impute_first:
                impute(a, s, s2, values, miss_w, miss_u, ab, bitgen)
            for k in range(2 * NW):
                width = width_a if k < NW else width_s
                e = slice_coordinate(k, a, s, s2, values, weights, ab, A0, S0,
                                     width, max_doublings, bitgen)
                if e < 0:
                    failed = k
                    break
                evals[k] += e
            if failed >= 0:
                break
            s2 = draw_sigma2(a, s, values, weights, ab, gamma_a, gamma_b, bitgen)
            if not impute_first:
                impute(a, s, s2, values, miss_w, miss_u, ab, bitgen)
            if t >= burn_in and (t - burn_in + 1) % thin == 0:
                for w in range(NW):
                    out_a[stored, w] = a[w]
                    out_b[stored, w] = s[w] if ab else s[w] / a[w]
                out_sigma2[stored] = s2
                for idx in range(n_miss):
                    out_imp[stored, idx] = values[miss_w[idx], miss_u[idx] - 1]
                stored += 1
    sigma2[0] = s2
    if failed >= 0:
        raise SliceCollapseError(f"slice for coordinate {failed} collapsed at sweep {t}")
    return stored
