# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: Weibull illness-occupancy integrals and the
Aalen-Johansen forward recursion. Mirrors ``_fallback`` panel for panel."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, pow, fabs, log
from libc.float cimport DBL_EPSILON

cnp.import_array()

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
cdef double SEEDS[4]

XGK[:] = [0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
          0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
          0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
          0.207784955007898467600689403773245, 0.0]
WGK[:] = [0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
          0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
          0.169004726639267902826583426888872, 0.190350578064785409913256402421014,
          0.204432940075298892414161999234649, 0.209482141084727828012999174891714]
WG[:] = [0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
         0.381830050505118944950369775488975, 0.417959183673469387755102040816327]
SEEDS[:] = [1.0, 4.0, 16.0, 64.0]

DEF MAXSTACK = 200
DEF MAXPANEL = 14

cdef struct Params:
    double a01, k01, a02, k02, a12, k12, q, s01, s02, t12, sl01, sl02, tl12


cdef inline double integrand(double x, Params* p, double* g, int ng) nogil:
    # u = x**q; all powers of u evaluated through one log
    cdef double lx = log(x)
    cdef double lu = p.q * lx
    cdef double w01 = exp(p.k01 * lu)
    cdef double w02 = exp(p.k02 * lu)
    cdef double w12 = exp(p.k12 * lu)
    cdef double f = (p.a01 * p.k01 * p.q * w01 / x
                     * exp(-p.a01 * (w01 - p.s01) - p.a02 * (w02 - p.s02)
                           - p.a12 * (p.t12 - w12)))
    if ng:
        # d f / d log-parameter = f * factor
        g[0] = f * (1.0 - p.a01 * (w01 - p.s01))
        g[1] = f * (1.0 + p.k01 * lu - p.a01 * p.k01 * (w01 * lu - p.sl01))
        g[2] = -f * p.a02 * (w02 - p.s02)
        g[3] = -f * p.a02 * p.k02 * (w02 * lu - p.sl02)
        g[4] = -f * p.a12 * (p.t12 - w12)
        g[5] = -f * p.a12 * p.k12 * (p.tl12 - w12 * lu)
    return f


cdef inline void gk15(double a, double b, Params* p, double* res, double* err, int ng) nogil:
    cdef double c = 0.5 * (a + b), h = 0.5 * (b - a)
    cdef double g1[6]
    cdef double g2[6]
    cdef double fc = integrand(c, p, g1, ng)
    cdef double rk = WGK[7] * fc, rg = WG[3] * fc, ra = WGK[7] * fabs(fc)
    cdef double f1, f2, dx
    cdef int j, m
    for m in range(ng):
        res[1 + m] = WGK[7] * g1[m]
    for j in range(7):
        dx = h * XGK[j]
        f1 = integrand(c - dx, p, g1, ng)
        f2 = integrand(c + dx, p, g2, ng)
        rk += WGK[j] * (f1 + f2)
        ra += WGK[j] * (fabs(f1) + fabs(f2))
        if j % 2 == 1:
            rg += WG[j // 2] * (f1 + f2)
        for m in range(ng):
            res[1 + m] += WGK[j] * (g1[m] + g2[m])
    res[0] = rk * h
    for m in range(ng):
        res[1 + m] *= h
    # error below the roundoff level of the panel counts as converged
    err[0] = fabs((rk - rg) * h)
    if err[0] <= 50.0 * DBL_EPSILON * ra * h:
        err[0] = 0.0


cdef int seed_panels(double s, double t, Params* p, double* edges) nogil:
    # u-points where a cumulative hazard measured from an endpoint hits 1, 4, 16, 64
    cdef double pts[MAXPANEL]
    cdef int n = 0, i, j
    cdef double v, tmp
    pts[n] = s; n += 1
    for i in range(4):
        v = p.t12 - SEEDS[i] / p.a12
        if v > 0:
            v = pow(v, 1.0 / p.k12)
            if s < v < t:
                pts[n] = v; n += 1
        v = pow(p.s01 + SEEDS[i] / p.a01, 1.0 / p.k01)
        if s < v < t:
            pts[n] = v; n += 1
        v = pow(p.s02 + SEEDS[i] / p.a02, 1.0 / p.k02)
        if s < v < t:
            pts[n] = v; n += 1
    pts[n] = t; n += 1
    for i in range(1, n):
        tmp = pts[i]
        j = i - 1
        while j >= 0 and pts[j] > tmp:
            pts[j + 1] = pts[j]
            j -= 1
        pts[j + 1] = tmp
    for i in range(n):
        edges[i] = pow(pts[i], 1.0 / p.q)
    return n


cdef void adaptive(Params* p, double s, double t, double epsabs, double epsrel,
                   double* acc, int ng) nogil:
    cdef double edges[MAXPANEL]
    cdef double pr[MAXPANEL][7]
    cdef double pe[MAXPANEL]
    cdef double sa[MAXSTACK]
    cdef double sb[MAXSTACK]
    cdef double r[7]
    cdef int top = 0, n, i, m
    cdef double tol, e, mid, a, b, width, est = 0.0
    n = seed_panels(s, t, p, edges)
    width = edges[n - 1] - edges[0]
    for m in range(ng + 1):
        acc[m] = 0.0
    for i in range(n - 1):
        gk15(edges[i], edges[i + 1], p, pr[i], &pe[i], ng)
        est += pr[i][0]
    tol = epsabs
    if epsrel * fabs(est) > tol:
        tol = epsrel * fabs(est)
    for i in range(n - 1):
        a = edges[i]
        b = edges[i + 1]
        # non-finite estimates are accepted so they surface in the result
        if (not (pe[i] > tol * (b - a) / width) or pe[i] <= epsrel * fabs(pr[i][0])
                or b - a < 1e-9 * width):
            for m in range(ng + 1):
                acc[m] += pr[i][m]
            continue
        mid = 0.5 * (a + b)
        sa[0] = mid; sb[0] = b; sa[1] = a; sb[1] = mid
        top = 2
        while top > 0:
            top -= 1
            a = sa[top]
            b = sb[top]
            gk15(a, b, p, r, &e, ng)
            if (not (e > tol * (b - a) / width) or e <= epsrel * fabs(r[0]) or top >= MAXSTACK - 2
                    or (b - a) < 1e-9 * width):
                for m in range(ng + 1):
                    acc[m] += r[m]
            else:
                mid = 0.5 * (a + b)
                sa[top] = mid; sb[top] = b
                sa[top + 1] = a; sb[top + 1] = mid
                top += 2


cdef inline double xlogx_pow(double x, double k) nogil:
    # x**k * log(x), continuous at 0
    if x <= 0.0:
        return 0.0
    return pow(x, k) * log(x)


def weibull_p01(double[:] s, double[:] t, double a01, double k01, double a02,
                double k02, double a12, double k12, double epsabs=1e-14,
                double epsrel=1e-11, bint grad=False):
    """P01(s_i, t_i) for a Weibull illness-death model.

    Integrates in x with u = x**q, q = max(1, 3 / min(k)), which removes the
    k < 1 singularity of the 0->1 hazard at the origin. With ``grad=True``
    also returns the (n, 6) derivatives with respect to
    ``log(a01, k01, a02, k02, a12, k12)``, integrated on the same panels.
    """
    cdef Py_ssize_t n = s.shape[0], i
    cdef int ng = 6 if grad else 0, m
    out = np.zeros(n)
    dout = np.zeros((n, 6))
    cdef double[:] o = out
    cdef double[:, :] do = dout
    cdef double acc[7]
    cdef Params p
    p.a01 = a01; p.k01 = k01; p.a02 = a02; p.k02 = k02; p.a12 = a12; p.k12 = k12
    p.q = max(1.0, 3.0 / min(k01, k02, k12))
    with nogil:
        for i in range(n):
            if t[i] <= s[i]:
                continue
            p.s01 = pow(s[i], k01); p.s02 = pow(s[i], k02); p.t12 = pow(t[i], k12)
            p.sl01 = xlogx_pow(s[i], k01); p.sl02 = xlogx_pow(s[i], k02)
            p.tl12 = xlogx_pow(t[i], k12)
            adaptive(&p, s[i], t[i], epsabs, epsrel, acc, ng)
            o[i] = acc[0]
            for m in range(ng):
                do[i, m] = acc[1 + m]
    if grad:
        return out, dout
    return out


def aj_forward(double[:] d01, double[:] d02, double[:] d12, double p0=1.0, double p1=0.0):
    """Occupancy of states 0 and 1 after each jump of the product-integral."""
    cdef Py_ssize_t n = d01.shape[0], j
    P00 = np.empty(n)
    P01 = np.empty(n)
    cdef double[:] q0 = P00
    cdef double[:] q1 = P01
    cdef double a = p0, b = p1, na
    with nogil:
        for j in range(n):
            na = a * (1.0 - d01[j] - d02[j])
            b = b * (1.0 - d12[j]) + a * d01[j]
            a = na
            q0[j] = a
            q1[j] = b
    return P00, P01
