"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``.

The adaptive rule is the same G7/K15 bisection with identical local
acceptance tests, evaluated breadth-first over all integrals at once.
"""

import numpy as np

XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                0.207784955007898467600689403773245, 0.0])
WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                0.169004726639267902826583426888872, 0.190350578064785409913256402421014,
                0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
               0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

# 15 abscissae on [-1, 1] with Kronrod and embedded Gauss weights
_X = np.concatenate([-XGK[:7], XGK[7:], XGK[:7][::-1]])
_WK = np.concatenate([WGK[:7], WGK[7:], WGK[:7][::-1]])
_WG = np.zeros(15)
_WG[[1, 3, 5]] = WG[:3]
_WG[7] = WG[3]
_WG[[9, 11, 13]] = WG[:3][::-1]


def _integrand(x, s01, s02, t12, sl01, sl02, tl12, a01, k01, a02, k02, a12, k12, q,
               grad=False):
    lu = q * np.log(x)
    w01 = np.exp(k01 * lu)
    w02 = np.exp(k02 * lu)
    w12 = np.exp(k12 * lu)
    f = (a01 * k01 * q * w01 / x
         * np.exp(-a01 * (w01 - s01) - a02 * (w02 - s02) - a12 * (t12 - w12)))
    if not grad:
        return f, None
    g = np.stack([
        f * (1.0 - a01 * (w01 - s01)),
        f * (1.0 + k01 * lu - a01 * k01 * (w01 * lu - sl01)),
        -f * a02 * (w02 - s02),
        -f * a02 * k02 * (w02 * lu - sl02),
        -f * a12 * (t12 - w12),
        -f * a12 * k12 * (tl12 - w12 * lu),
    ])
    return f, g


def _xlogx_pow(x, k):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x ** k * np.log(np.where(x > 0, x, 1.0)), 0.0)


_SEEDS = np.array([1.0, 4.0, 16.0, 64.0])


def _seed_points(s, t, s01, s02, t12, a01, k01, a02, k02, a12, k12):
    # u-points where a cumulative hazard measured from an endpoint hits 1, 4, 16, 64
    with np.errstate(invalid="ignore"):
        v12 = t12[:, None] - _SEEDS / a12
        c12 = np.where(v12 > 0, np.abs(v12) ** (1.0 / k12), np.nan)
    c01 = (s01[:, None] + _SEEDS / a01) ** (1.0 / k01)
    c02 = (s02[:, None] + _SEEDS / a02) ** (1.0 / k02)
    pts = np.concatenate([c12, c01, c02], axis=1)
    inside = (pts > s[:, None]) & (pts < t[:, None])
    pts = np.where(inside, pts, np.nan)
    pts = np.concatenate([s[:, None], pts, t[:, None]], axis=1)
    return np.sort(pts, axis=1)


def weibull_p01(s, t, a01, k01, a02, k02, a12, k12, epsabs=1e-14, epsrel=1e-11, grad=False):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros(s.shape[0])
    dout = np.zeros((s.shape[0], 6))
    live = np.flatnonzero(t > s)
    if live.size == 0:
        return (out, dout) if grad else out
    sl, tl = s[live], t[live]
    pw = (sl ** k01, sl ** k02, tl ** k12,
          _xlogx_pow(sl, k01), _xlogx_pow(sl, k02), _xlogx_pow(tl, k12))
    q = max(1.0, 3.0 / min(k01, k02, k12))
    args = (a01, k01, a02, k02, a12, k12, q)

    def gk(a, b, own):
        c = 0.5 * (a + b)
        h = 0.5 * (b - a)
        w = c[:, None] + h[:, None] * _X
        f, g = _integrand(w, *(v[own, None] for v in pw), *args, grad=grad)
        rk = f @ _WK * h
        rg = f @ _WG * h
        err = np.abs(rk - rg)
        err[err <= 50.0 * np.finfo(float).eps * (np.abs(f) @ _WK) * h] = 0.0
        dr = (g @ _WK * h).T if grad else None
        return rk, err, dr

    edges = _seed_points(sl, tl, pw[0], pw[1], pw[2], *args[:-1]) ** (1.0 / q)
    width = tl ** (1.0 / q) - sl ** (1.0 / q)
    valid = np.isfinite(edges[:, 1:])
    row, col = np.nonzero(valid)
    pa, pb, po = edges[row, col], edges[row, col + 1], row

    r, e, dr = gk(pa, pb, po)
    total = np.zeros(live.size)
    np.add.at(total, po, r)
    tol = np.maximum(epsabs, epsrel * np.abs(total))
    acc = np.zeros(live.size)
    dacc = np.zeros((live.size, 6))
    while po.size:
        # non-finite estimates are accepted so they surface in the result
        ok = (~(e > tol[po] * (pb - pa) / width[po]) | (e <= epsrel * np.abs(r))
              | ((pb - pa) < 1e-9 * width[po]))
        np.add.at(acc, po[ok], r[ok])
        if grad:
            np.add.at(dacc, po[ok], dr[ok])
        pa, pb, po = pa[~ok], pb[~ok], po[~ok]
        mid = 0.5 * (pa + pb)
        pa, pb, po = np.concatenate([pa, mid]), np.concatenate([mid, pb]), np.concatenate([po, po])
        if po.size:
            r, e, dr = gk(pa, pb, po)
    out[live] = acc
    if grad:
        dout[live] = dacc
        return out, dout
    return out


def aj_forward(d01, d02, d12, p0=1.0, p1=0.0):
    n = len(d01)
    P00 = np.empty(n)
    P01 = np.empty(n)
    a, b = p0, p1
    for j in range(n):
        a, b = a * (1.0 - d01[j] - d02[j]), b * (1.0 - d12[j]) + a * d01[j]
        P00[j] = a
        P01[j] = b
    return P00, P01
