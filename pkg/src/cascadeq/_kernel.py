"""Compiled fixed-step RK4 propagation of the no-jump Schroedinger equation.

Matrix-vector products are explicit loops over a fixed, row-major list of
nonzero entries, so the floating-point summation order never depends on BLAS
threading; this is what makes ensembles bit-identical across worker counts.
"""

import numpy as np
from numba import njit

STATUS_DONE = 0
STATUS_JUMP = 1
STATUS_NONFINITE = 2
STATUS_NORM_GROWTH = 3

ENV_CONSTANT = 0
ENV_GAUSSIAN = 1


@njit(cache=True, nogil=True)
def envelope_value(row, t):
    if row[0] == ENV_GAUSSIAN:
        x = (t - row[2]) / row[3]
        return row[1] * np.exp(-0.5 * x * x)
    return row[1]


@njit(cache=True, nogil=True)
def _deriv(t, psi, rowptr, cols, vals, blk, env, coef, out):
    # out = -i H(t) psi with -i folded into vals; entry n is scaled by
    # coef[blk[n]], where block 0 is static and block k+1 follows envelope k
    coef[0] = 1.0
    for k in range(env.shape[0]):
        coef[k + 1] = envelope_value(env[k], t)
    for i in range(psi.shape[0]):
        acc = 0j
        for n in range(rowptr[i], rowptr[i + 1]):
            acc += coef[blk[n]] * (vals[n] * psi[cols[n]])
        out[i] = acc


@njit(cache=True, nogil=True)
def _norm2(psi):
    s = 0.0
    for i in range(psi.shape[0]):
        s += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
    return s


@njit(cache=True, nogil=True)
def rk4_step(psi, t, h, rowptr, cols, vals, blk, env, coef, k1, k2, k3, k4, tmp, out):
    d = psi.shape[0]
    _deriv(t, psi, rowptr, cols, vals, blk, env, coef, k1)
    for i in range(d):
        tmp[i] = psi[i] + 0.5 * h * k1[i]
    _deriv(t + 0.5 * h, tmp, rowptr, cols, vals, blk, env, coef, k2)
    for i in range(d):
        tmp[i] = psi[i] + 0.5 * h * k2[i]
    _deriv(t + 0.5 * h, tmp, rowptr, cols, vals, blk, env, coef, k3)
    for i in range(d):
        tmp[i] = psi[i] + h * k3[i]
    _deriv(t + h, tmp, rowptr, cols, vals, blk, env, coef, k4)
    for i in range(d):
        out[i] = psi[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


def nonzero_blocks(static, driven):
    """CSR layout of -i times the static and driven matrices, tagged by block.

    Within a row, entries are ordered by block then column.
    """
    d = static.shape[0]
    mats = [static, *driven]
    rowptr, cols, vals, blk = [0], [], [], []
    for i in range(d):
        for b, m in enumerate(mats):
            nz = np.nonzero(m[i])[0]
            cols.extend(nz.tolist())
            vals.extend((-1j * m[i, nz]).tolist())
            blk.extend([b] * nz.size)
        rowptr.append(len(cols))
    return (np.array(rowptr, dtype=np.int64), np.array(cols, dtype=np.int64),
            np.array(vals, dtype=np.complex128), np.array(blk, dtype=np.int64))


@njit(cache=True, nogil=True)
def propagate(psi, t, t_stop, dt, r, rowptr, cols, vals, blk, env, sample_t, samples, k, slack, jump_rtol):
    """Advance ``psi`` in place from ``t`` towards ``t_stop``.

    Stops early when the squared norm falls to ``r``; the crossing time is
    bisected inside the step. Normalized copies of the state are written to
    ``samples`` whenever a sample time is reached.

    Returns ``(status, t, k, norm2)``.
    """
    d = psi.shape[0]
    k1 = np.empty(d, dtype=np.complex128)
    k2 = np.empty(d, dtype=np.complex128)
    k3 = np.empty(d, dtype=np.complex128)
    k4 = np.empty(d, dtype=np.complex128)
    tmp = np.empty(d, dtype=np.complex128)
    coef = np.empty(env.shape[0] + 1, dtype=np.float64)
    trial = np.empty(d, dtype=np.complex128)
    n_samples = sample_t.shape[0]
    nrm = _norm2(psi)

    while t < t_stop:
        t_next = t + dt
        if k < n_samples and sample_t[k] < t_next:
            t_next = sample_t[k]
        if t_stop < t_next:
            t_next = t_stop
        h = t_next - t
        rk4_step(psi, t, h, rowptr, cols, vals, blk, env, coef, k1, k2, k3, k4, tmp, trial)
        n2 = _norm2(trial)
        if not np.isfinite(n2):
            return STATUS_NONFINITE, t, k, nrm
        if n2 > nrm + slack:
            return STATUS_NORM_GROWTH, t, k, nrm
        if n2 <= r:
            lo = 0.0
            hi = h
            while hi - lo > jump_rtol * h:
                mid = 0.5 * (lo + hi)
                rk4_step(psi, t, mid, rowptr, cols, vals, blk, env, coef, k1, k2, k3, k4, tmp, trial)
                if _norm2(trial) <= r:
                    hi = mid
                else:
                    lo = mid
            rk4_step(psi, t, hi, rowptr, cols, vals, blk, env, coef, k1, k2, k3, k4, tmp, trial)
            for i in range(d):
                psi[i] = trial[i]
            t = t + hi
            nrm = _norm2(psi)
            while k < n_samples and sample_t[k] <= t:
                s = 1.0 / np.sqrt(nrm)
                for i in range(d):
                    samples[k, i] = psi[i] * s
                k += 1
            return STATUS_JUMP, t, k, nrm
        for i in range(d):
            psi[i] = trial[i]
        nrm = n2
        t = t_next
        while k < n_samples and sample_t[k] <= t:
            s = 1.0 / np.sqrt(nrm)
            for i in range(d):
                samples[k, i] = psi[i] * s
            k += 1
    return STATUS_DONE, t, k, nrm
