"""Compiled kernels: right-hand side and fixed-step rollouts.

The numerics must match model.dynamics bit-for-bit in structure (same
assembly formulas, same elimination order is not required since the system
is solved exactly either way); a regression test pins the two paths to each
other.  Everything here is written so it also runs as plain Python when
numba is unavailable, just slowly.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_OK = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_OK = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


# Dormand-Prince 5(4) coefficients, propagation weights only.
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)


@njit(cache=True)
def rhs_into(y, hperp, hpar, ell, xi, eta, kap, m1, m2, c, out):
    """State derivative for field (hperp, hpar); writes into out."""
    sa = np.sin(y[3])
    ca = np.cos(y[3])
    l2 = ell * ell
    l3 = l2 * ell
    d11 = xi * ca * ca + eta * sa * sa
    d12 = (xi - eta) * ca * sa
    d22 = xi * sa * sa + eta * ca * ca

    a = np.empty((4, 4))
    a[0, 0] = xi * ell + ell * d11
    a[0, 1] = ell * d12
    a[0, 2] = l2 * (c * d12 + 0.5 * eta * sa)
    a[0, 3] = l2 * 0.5 * eta * sa
    a[1, 1] = eta * ell + ell * d22
    a[1, 2] = eta * l2 * (c + 0.5) + l2 * (c * d22 - 0.5 * eta * ca)
    a[1, 3] = -l2 * 0.5 * eta * ca
    a[2, 2] = (eta * l3 * (c * c + c + 1.0 / 3.0)
               + l3 * (c * c * d22 - c * eta * ca + eta / 3.0))
    a[2, 3] = l3 * (eta / 3.0 - 0.5 * c * eta * ca)
    a[3, 3] = l3 * eta / 3.0
    for i in range(4):
        for j in range(i):
            a[i, j] = a[j, i]

    b = np.empty(4)
    b[0] = 0.0
    b[1] = 0.0
    b[2] = (m2 + m1 * ca) * hpar + m1 * sa * hperp
    b[3] = m1 * ca * hpar + m1 * sa * hperp - kap * y[3]

    # A is symmetric positive definite, so elimination needs no pivoting
    for col in range(3):
        piv = a[col, col]
        for r in range(col + 1, 4):
            f = a[r, col] / piv
            for cc in range(col + 1, 4):
                a[r, cc] -= f * a[col, cc]
            b[r] -= f * b[col]
    v3 = b[3] / a[3, 3]
    v2 = (b[2] - a[2, 3] * v3) / a[2, 2]
    v1 = (b[1] - a[1, 2] * v2 - a[1, 3] * v3) / a[1, 1]
    v0 = (b[0] - a[0, 1] * v1 - a[0, 2] * v2 - a[0, 3] * v3) / a[0, 0]

    ct = np.cos(y[2])
    st = np.sin(y[2])
    out[0] = ct * v0 - st * v1
    out[1] = st * v0 + ct * v1
    out[2] = v2
    out[3] = v3


@njit(cache=True)
def _dp5_step(y, h, hperp, hpar, ell, xi, eta, kap, m1, m2, c,
              k1, k2, k3, k4, k5, k6, yt):
    rhs_into(y, hperp, hpar, ell, xi, eta, kap, m1, m2, c, k1)
    for i in range(4):
        yt[i] = y[i] + h * _A21 * k1[i]
    rhs_into(yt, hperp, hpar, ell, xi, eta, kap, m1, m2, c, k2)
    for i in range(4):
        yt[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
    rhs_into(yt, hperp, hpar, ell, xi, eta, kap, m1, m2, c, k3)
    for i in range(4):
        yt[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
    rhs_into(yt, hperp, hpar, ell, xi, eta, kap, m1, m2, c, k4)
    for i in range(4):
        yt[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i]
                            + _A54 * k4[i])
    rhs_into(yt, hperp, hpar, ell, xi, eta, kap, m1, m2, c, k5)
    for i in range(4):
        yt[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                            + _A64 * k4[i] + _A65 * k5[i])
    rhs_into(yt, hperp, hpar, ell, xi, eta, kap, m1, m2, c, k6)
    for i in range(4):
        y[i] += h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                     + _B5 * k5[i] + _B6 * k6[i])


@njit(cache=True)
def rollout_pwc(y0, values, T, nsub, ell, xi, eta, kap, m1, m2, c):
    """Fixed-step run over piecewise-constant controls.

    values has shape (n, 2) ordered (h_perp, h_par); each of the n equal
    intervals is integrated with nsub fifth-order steps.  Returns the final
    state and the maximum euclidean state norm over all step endpoints.
    """
    n = values.shape[0]
    h = T / (n * nsub)
    y = y0.copy()
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    k5 = np.empty(4)
    k6 = np.empty(4)
    yt = np.empty(4)
    size = np.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3])
    for j in range(n):
        hperp = values[j, 0]
        hpar = values[j, 1]
        for _ in range(nsub):
            _dp5_step(y, h, hperp, hpar, ell, xi, eta, kap, m1, m2, c,
                      k1, k2, k3, k4, k5, k6, yt)
            nrm = np.sqrt(y[0] * y[0] + y[1] * y[1]
                          + y[2] * y[2] + y[3] * y[3])
            if nrm > size:
                size = nrm
    return y, size


@njit(cache=True)
def penalty_batch(y0, u_batch, T, nsub, mu, wsize,
                  ell, xi, eta, kap, m1, m2, c):
    """Penalty objective for a batch of flattened control vectors.

    u_batch has shape (nb, 2n).  Returns (phi, size, defect, final) where
    phi = -wsize * size + mu * sum((z(T) - z0)^2), defect is the largest
    absolute component of z(T) - z0, and final collects the end states.
    """
    nb = u_batch.shape[0]
    n = u_batch.shape[1] // 2
    phis = np.empty(nb)
    sizes = np.empty(nb)
    defects = np.empty(nb)
    finals = np.empty((nb, 4))
    for bidx in range(nb):
        values = u_batch[bidx].reshape(n, 2)
        yf, size = rollout_pwc(y0, values, T, nsub, ell, xi, eta, kap,
                               m1, m2, c)
        d2 = 0.0
        dmax = 0.0
        for i in range(4):
            di = yf[i] - y0[i]
            d2 += di * di
            if abs(di) > dmax:
                dmax = abs(di)
            finals[bidx, i] = yf[i]
        phis[bidx] = -wsize * size + mu * d2
        sizes[bidx] = size
        defects[bidx] = dmax
    return phis, sizes, defects, finals


def rhs_array(y, hperp, hpar, params, c):
    """Convenience wrapper returning a fresh derivative array."""
    out = np.empty(4)
    rhs_into(np.asarray(y, dtype=float), float(hperp), float(hpar),
             params.ell, params.xi, params.eta, params.kappa,
             params.m1, params.m2, c, out)
    return out
