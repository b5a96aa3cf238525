# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels. Semantics mirror the numpy fallbacks in
``_kernels.py``; agreement is covered by the backend parity tests."""

from libc.math cimport exp, log, pow, sqrt, tanh
from libc.stdlib cimport free, malloc


def vwr_pipeline(double[::1] values, double sigma_max, double tau,
                 bint sample_std, bint use_flip,
                 double[::1] processed, double[::1] reference):
    """Past-reward pipeline; fills processed/reference, returns the scalars."""
    cdef Py_ssize_t t = values.shape[0]
    cdef double inv = 1.0 / (t + 1)
    cdef double run = 1.0
    cdef Py_ssize_t n, j
    cdef double fi

    processed[0] = inv
    for n in range(1, t + 1):
        j = t - n if use_flip else n - 1
        fi = values[j] if j == 0 else values[j] - values[j - 1]
        run += fi
        processed[n] = run * inv

    cdef double r0 = processed[0]
    cdef double rt = processed[t]
    if rt <= 0.0:
        for n in range(t + 1):
            reference[n] = r0
        return 0.0, 0.0, 0.0, 0.0, 2

    cdef double rate = log(rt / r0) / t
    for n in range(t + 1):
        reference[n] = r0 * exp(n * rate)

    cdef double mean = 0.0
    for n in range(t + 1):
        mean += processed[n] / reference[n] - 1.0
    mean /= t + 1
    cdef double var = 0.0
    cdef double dev
    for n in range(t + 1):
        dev = processed[n] / reference[n] - 1.0 - mean
        var += dev * dev
    var /= t if sample_std else t + 1

    cdef double sigma = sqrt(var)
    cdef double omega = 1.0 - pow(sigma / sigma_max, tau)
    cdef double r_high = 100.0 * (exp(rate) - 1.0)
    if sigma >= sigma_max:
        return 0.0, r_high, sigma, omega, 1
    return r_high * omega, r_high, sigma, omega, 0


def mlp_forward(double[:, ::1] trunk_w, double[::1] trunk_b,
                double[:, ::1] policy_w, double[::1] policy_b,
                double[::1] vs_w, double[::1] vs_b,
                double[::1] vl_w, double[::1] vl_b,
                double[::1] state, double[::1] pre, double[::1] hid,
                double[::1] logits, double[::1] probs):
    """Shared-trunk forward pass; fills the caller-allocated buffers."""
    cdef Py_ssize_t h = trunk_w.shape[0]
    cdef Py_ssize_t s = trunk_w.shape[1]
    cdef Py_ssize_t a = policy_w.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc, mx, total, v_short, v_long

    for i in range(h):
        acc = trunk_b[i]
        for j in range(s):
            acc += trunk_w[i, j] * state[j]
        pre[i] = acc
        hid[i] = tanh(acc)

    mx = -1e308
    for i in range(a):
        acc = policy_b[i]
        for j in range(h):
            acc += policy_w[i, j] * hid[j]
        logits[i] = acc
        if acc > mx:
            mx = acc
    total = 0.0
    for i in range(a):
        probs[i] = exp(logits[i] - mx)
        total += probs[i]
    for i in range(a):
        probs[i] /= total

    v_short = vs_b[0]
    v_long = vl_b[0]
    for j in range(h):
        v_short += vs_w[j] * hid[j]
        v_long += vl_w[j] * hid[j]
    return v_short, v_long


def mlp_backward_accum(double[::1] state, double[::1] hid, double[::1] probs,
                       Py_ssize_t action, double advantage, double td_short,
                       double td_long, double entropy_coef,
                       double[:, ::1] policy_w, double[::1] vs_w, double[::1] vl_w,
                       double[:, ::1] g_trunk_w, double[::1] g_trunk_b,
                       double[:, ::1] g_policy_w, double[::1] g_policy_b,
                       double[::1] g_vs_w, double[::1] g_vs_b,
                       double[::1] g_vl_w, double[::1] g_vl_b,
                       double scale):
    """Accumulate one step's scaled gradient into the g_* buffers."""
    cdef Py_ssize_t h = hid.shape[0]
    cdef Py_ssize_t s = state.shape[0]
    cdef Py_ssize_t a = probs.shape[0]
    cdef Py_ssize_t i, j
    cdef double entropy = 0.0
    cdef double p, dz, dpre, tmp

    for i in range(a):
        p = probs[i]
        if p > 0.0:
            entropy -= p * log(p)

    cdef double dv_s = -2.0 * td_short
    cdef double dv_l = -2.0 * td_long
    cdef double* dh = <double*> malloc(h * sizeof(double))
    if dh == NULL:
        raise MemoryError()
    try:
        for j in range(h):
            dh[j] = dv_s * vs_w[j] + dv_l * vl_w[j]

        for i in range(a):
            p = probs[i]
            dz = advantage * p
            if i == action:
                dz -= advantage
            if entropy_coef != 0.0 and p > 0.0:
                dz += entropy_coef * p * (log(p) + entropy)
            g_policy_b[i] += scale * dz
            tmp = scale * dz
            for j in range(h):
                g_policy_w[i, j] += tmp * hid[j]
                dh[j] += dz * policy_w[i, j]

        tmp = scale * dv_s
        g_vs_b[0] += tmp
        for j in range(h):
            g_vs_w[j] += tmp * hid[j]
        tmp = scale * dv_l
        g_vl_b[0] += tmp
        for j in range(h):
            g_vl_w[j] += tmp * hid[j]

        for j in range(h):
            dpre = dh[j] * (1.0 - hid[j] * hid[j])
            g_trunk_b[j] += scale * dpre
            tmp = scale * dpre
            for i in range(s):
                g_trunk_w[j, i] += tmp * state[i]
    finally:
        free(dh)
