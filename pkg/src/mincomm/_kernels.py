"""Hot inner loops, each in two flavours.

Every kernel exists as a numba-compiled scalar loop (``*_nb``) and as a
vectorised numpy twin (``*_np``) with the same signature.  The module-level
names without suffix dispatch to one or the other according to
``mincomm._backend.USE_NUMBA``.

All randomness used by the coding scheme comes from a counter-mode hash
(SplitMix64 finaliser) so any codeword or Gumbel variate is a pure function
of ``(seed, index)``.  Normals are produced by Box-Muller on open-interval
uniforms built from the top 53 bits of each hash word.  Additions are done
in the same order in both flavours; the only expected cross-backend
differences are last-ulp ones from ``log``/``cos``/``sin``.
"""
import math

import numpy as np
from scipy.special import expit

from . import _backend
from ._backend import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi
_NP_CHUNK = 1 << 15


def _mix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def mix64(x):
    """SplitMix64 finaliser on a uint64 scalar or array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        return _mix64(np.asarray(x, dtype=np.uint64))


def _open_uniform_np(h):
    return ((h >> _S11).astype(np.float64) + 0.5) * _INV53


# --------------------------------------------------------------------------
# numba flavour
# --------------------------------------------------------------------------

_mix64_nb = njit(_mix64)


def _normals_into(key, d, out):
    for p in range((d + 1) // 2):
        h1 = _mix64_nb(key + np.uint64(2 * p))
        h2 = _mix64_nb(key + np.uint64(2 * p + 1))
        u1 = (np.float64(h1 >> _S11) + 0.5) * _INV53
        u2 = (np.float64(h2 >> _S11) + 0.5) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        th = _TWO_PI * u2
        out[2 * p] = r * np.cos(th)
        if 2 * p + 1 < d:
            out[2 * p + 1] = r * np.sin(th)


_normals_into_nb = njit(_normals_into)


def _codewords_impl(seed, j0, count, mean, psd):
    d = mean.shape[0]
    out = np.empty((count, d))
    z = np.empty(d)
    base = _mix64_nb(np.uint64(seed))
    for i in range(count):
        key = _mix64_nb(base ^ np.uint64(j0 + i))
        _normals_into_nb(key, d, z)
        for c in range(d):
            out[i, c] = mean[c] + psd * z[c]
    return out


def _log_ratios_of_impl(cw, w, mean, psd, ksd):
    count, d = cw.shape
    c0 = 0.5 * d * (2.0 * np.log(psd) - 2.0 * np.log(ksd))
    inv2k = 0.5 / (ksd * ksd)
    inv2p = 0.5 / (psd * psd)
    out = np.empty(count)
    for i in range(count):
        dw = 0.0
        dq = 0.0
        for c in range(d):
            a = cw[i, c] - w[c]
            b = cw[i, c] - mean[c]
            dw += a * a
            dq += b * b
        out[i] = c0 - dw * inv2k + dq * inv2p
    return out


def _log_ratios_impl(seed, j0, count, w, mean, psd, ksd):
    d = mean.shape[0]
    c0 = 0.5 * d * (2.0 * np.log(psd) - 2.0 * np.log(ksd))
    inv2k = 0.5 / (ksd * ksd)
    inv2p = 0.5 / (psd * psd)
    out = np.empty(count)
    z = np.empty(d)
    base = _mix64_nb(np.uint64(seed))
    for i in range(count):
        key = _mix64_nb(base ^ np.uint64(j0 + i))
        _normals_into_nb(key, d, z)
        dw = 0.0
        dq = 0.0
        for c in range(d):
            x = mean[c] + psd * z[c]
            a = x - w[c]
            b = x - mean[c]
            dw += a * a
            dq += b * b
        out[i] = c0 - dw * inv2k + dq * inv2p
    return out


def _ordered_gumbels_impl(enc_seed, n_total, count):
    out = np.empty(count)
    key = _mix64_nb(np.uint64(enc_seed))
    t = 0.0
    for n in range(count):
        h = _mix64_nb(key + np.uint64(n))
        u = (np.float64(h >> _S11) + 0.5) * _INV53
        t += -np.log(u) / (n_total - n)
        out[n] = -np.log(t)
    return out


def _orc_select_impl(lr, enc_seed, lr_max):
    n_total = lr.shape[0]
    key = _mix64_nb(np.uint64(enc_seed))
    t = 0.0
    best = -np.inf
    k = 0
    examined = n_total
    for n in range(n_total):
        h = _mix64_nb(key + np.uint64(n))
        u = (np.float64(h >> _S11) + 0.5) * _INV53
        t += -np.log(u) / (n_total - n)
        g = -np.log(t)
        if lr_max + g <= best:
            examined = n
            break
        s = lr[n] + g
        if s > best:
            best = s
            k = n + 1
    return k, examined


def _orc_lazy_impl(seed, n_total, w, mean, psd, ksd, enc_seed, lr_bound):
    d = mean.shape[0]
    c0 = 0.5 * d * (2.0 * np.log(psd) - 2.0 * np.log(ksd))
    inv2k = 0.5 / (ksd * ksd)
    inv2p = 0.5 / (psd * psd)
    z = np.empty(d)
    base = _mix64_nb(np.uint64(seed))
    gkey = _mix64_nb(np.uint64(enc_seed))
    t = 0.0
    best = -np.inf
    k = 0
    examined = n_total
    for n in range(n_total):
        h = _mix64_nb(gkey + np.uint64(n))
        u = (np.float64(h >> _S11) + 0.5) * _INV53
        t += -np.log(u) / (n_total - n)
        g = -np.log(t)
        if lr_bound + g <= best:
            examined = n
            break
        key = _mix64_nb(base ^ np.uint64(n + 1))
        _normals_into_nb(key, d, z)
        dw = 0.0
        dq = 0.0
        for c in range(d):
            x = mean[c] + psd * z[c]
            a = x - w[c]
            b = x - mean[c]
            dw += a * a
            dq += b * b
        s = c0 - dw * inv2k + dq * inv2p + g
        if s > best:
            best = s
            k = n + 1
    return k, examined


def _vq_select_impl(seed, n_total, w, mean, psd):
    d = mean.shape[0]
    z = np.empty(d)
    base = _mix64_nb(np.uint64(seed))
    best = np.inf
    k = 0
    for j in range(1, n_total + 1):
        key = _mix64_nb(base ^ np.uint64(j))
        _normals_into_nb(key, d, z)
        dw = 0.0
        for c in range(d):
            a = mean[c] + psd * z[c] - w[c]
            dw += a * a
        if dw < best:
            best = dw
            k = j
    return k, np.sqrt(best)


def _appendix_sums_impl(seeds, n_total, w, mean, psd, ksd, log_a):
    trials = seeds.shape[0]
    d = mean.shape[0]
    c0 = 0.5 * d * (2.0 * np.log(psd) - 2.0 * np.log(ksd))
    inv2k = 0.5 / (ksd * ksd)
    inv2p = 0.5 / (psd * psd)
    i_n = np.empty(trials)
    rho_mean = np.empty(trials)
    i_clip = np.empty(trials)
    z = np.empty(d)
    for tr in range(trials):
        base = _mix64_nb(seeds[tr])
        acc = 0.0
        accr = 0.0
        accc = 0.0
        for j in range(1, n_total + 1):
            key = _mix64_nb(base ^ np.uint64(j))
            _normals_into_nb(key, d, z)
            dw = 0.0
            dq = 0.0
            for c in range(d):
                x = mean[c] + psd * z[c]
                a = x - w[c]
                b = x - mean[c]
                dw += a * a
                dq += b * b
            lr = c0 - dw * inv2k + dq * inv2p
            rho = np.exp(lr)
            v = np.sqrt(dw) * rho
            acc += v
            accr += rho
            if lr <= log_a:
                accc += v
        i_n[tr] = acc / n_total
        rho_mean[tr] = accr / n_total
        i_clip[tr] = accc / n_total
    return i_n, rho_mean, i_clip


def _sigmoid_scalar(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


_sigmoid_nb = njit(_sigmoid_scalar)


def _epoch_order_nb(key, epoch, n):
    ek = _mix64_nb(key + np.uint64(epoch))
    hs = np.empty(n, dtype=np.uint64)
    for i in range(n):
        hs[i] = _mix64_nb(ek ^ np.uint64(i))
    return np.argsort(hs)


def _sgd_run_impl(x, y, w0, mean, lr, epochs, batch, lam, inv_pvar, shuffle_seed):
    n, d = x.shape
    w = w0.copy()
    grad = np.empty(d)
    key = _mix64_nb(np.uint64(shuffle_seed))
    for epoch in range(epochs):
        order = _epoch_order_nb(key, epoch, n)
        for start in range(0, n, batch):
            stop = min(start + batch, n)
            for c in range(d):
                grad[c] = 0.0
            for ii in range(start, stop):
                i = order[ii]
                zz = 0.0
                for c in range(d):
                    zz += w[c] * x[i, c]
                s = _sigmoid_nb(zz)
                coef = (1.0 - 2.0 * y[i]) * s * (1.0 - s)
                for c in range(d):
                    grad[c] += coef * x[i, c]
            m = stop - start
            for c in range(d):
                g = grad[c] / m + lam * (w[c] - mean[c]) * inv_pvar
                w[c] -= lr * g
        nrm = 0.0
        for c in range(d):
            nrm += w[c] * w[c]
        if not np.isfinite(nrm) or nrm > 1e12:
            return w, True
    return w, False


if _backend.HAVE_NUMBA:
    _epoch_order_nb = njit(_epoch_order_nb)
    codewords_nb = njit(_codewords_impl)
    log_ratios_of_nb = njit(_log_ratios_of_impl)
    log_ratios_nb = njit(_log_ratios_impl)
    ordered_gumbels_nb = njit(_ordered_gumbels_impl)
    orc_select_nb = njit(_orc_select_impl)
    orc_lazy_nb = njit(_orc_lazy_impl)
    vq_select_nb = njit(_vq_select_impl)
    appendix_sums_nb = njit(_appendix_sums_impl)
    sgd_run_nb = njit(_sgd_run_impl)


# --------------------------------------------------------------------------
# numpy flavour
# --------------------------------------------------------------------------

def _keys_np(seed, j0, count):
    base = mix64(np.uint64(seed))
    j = np.arange(j0, j0 + count, dtype=np.uint64)
    return mix64(base ^ j)


def _normals_np(keys, d):
    npairs = (d + 1) // 2
    offs = np.arange(2 * npairs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix64(keys[:, None] + offs[None, :])
    u = _open_uniform_np(h)
    r = np.sqrt(-2.0 * np.log(u[:, 0::2]))
    th = _TWO_PI * u[:, 1::2]
    z = np.empty((keys.shape[0], 2 * npairs))
    z[:, 0::2] = r * np.cos(th)
    z[:, 1::2] = r * np.sin(th)
    return z[:, :d]


def codewords_np(seed, j0, count, mean, psd):
    z = _normals_np(_keys_np(seed, j0, count), mean.shape[0])
    return mean[None, :] + psd * z


def log_ratios_of_np(cw, w, mean, psd, ksd):
    d = cw.shape[1]
    c0 = 0.5 * d * (2.0 * np.log(psd) - 2.0 * np.log(ksd))
    dw = np.zeros(cw.shape[0])
    dq = np.zeros(cw.shape[0])
    for c in range(d):
        a = cw[:, c] - w[c]
        b = cw[:, c] - mean[c]
        dw += a * a
        dq += b * b
    return c0 - dw * (0.5 / (ksd * ksd)) + dq * (0.5 / (psd * psd))


def log_ratios_np(seed, j0, count, w, mean, psd, ksd):
    out = np.empty(count)
    for s in range(0, count, _NP_CHUNK):
        m = min(_NP_CHUNK, count - s)
        out[s:s + m] = log_ratios_of_np(codewords_np(seed, j0 + s, m, mean, psd),
                                        w, mean, psd, ksd)
    return out


def _gumbel_chunk(gkey, n_total, start, m, t_prev):
    n = np.arange(start, start + m, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u = _open_uniform_np(mix64(gkey + n))
    inc = -np.log(u) / (n_total - np.arange(start, start + m, dtype=np.float64))
    inc[0] = t_prev + inc[0]
    t = np.cumsum(inc)
    return -np.log(t), t[-1]


def ordered_gumbels_np(enc_seed, n_total, count):
    gkey = mix64(np.uint64(enc_seed))
    g, _ = _gumbel_chunk(gkey, n_total, 0, count, 0.0)
    return g


def _scan_chunk(scores_fn, gkey, n_total, bound):
    """Chunked ORC scan; ``scores_fn(start, m)`` gives log ratios of a block."""
    best = -np.inf
    k = 0
    t_prev = 0.0
    bounded = bound != np.inf
    for start in range(0, n_total, _NP_CHUNK):
        m = min(_NP_CHUNK, n_total - start)
        g, t_prev = _gumbel_chunk(gkey, n_total, start, m, t_prev)
        if bounded and bound + g[0] <= best:
            return k, start
        s = scores_fn(start, m) + g
        if bounded:
            # incumbent seen by position i is the max over everything before it
            before = np.empty(m)
            before[0] = best
            np.maximum(best, np.maximum.accumulate(s)[:-1], out=before[1:])
            hit = np.nonzero(bound + g <= before)[0]
            if hit.size:
                stop = int(hit[0])
                i = int(np.argmax(s[:stop]))
                if s[i] > best:
                    k = start + i + 1
                return k, start + stop
        i = int(np.argmax(s))
        if s[i] > best:
            best = s[i]
            k = start + i + 1
    return k, n_total


def orc_select_np(lr, enc_seed, lr_max):
    gkey = mix64(np.uint64(enc_seed))
    return _scan_chunk(lambda s, m: lr[s:s + m], gkey, lr.shape[0], lr_max)


def orc_lazy_np(seed, n_total, w, mean, psd, ksd, enc_seed, lr_bound):
    gkey = mix64(np.uint64(enc_seed))

    def scores(start, m):
        return log_ratios_of_np(codewords_np(seed, start + 1, m, mean, psd), w, mean, psd, ksd)

    return _scan_chunk(scores, gkey, n_total, lr_bound)


def vq_select_np(seed, n_total, w, mean, psd):
    best = np.inf
    k = 0
    for start in range(0, n_total, _NP_CHUNK):
        m = min(_NP_CHUNK, n_total - start)
        cw = codewords_np(seed, start + 1, m, mean, psd)
        dw = np.zeros(m)
        for c in range(mean.shape[0]):
            a = cw[:, c] - w[c]
            dw += a * a
        i = int(np.argmin(dw))
        if dw[i] < best:
            best = dw[i]
            k = start + i + 1
    return k, math.sqrt(best)


def appendix_sums_np(seeds, n_total, w, mean, psd, ksd, log_a):
    trials = seeds.shape[0]
    i_n = np.empty(trials)
    rho_mean = np.empty(trials)
    i_clip = np.empty(trials)
    for tr in range(trials):
        acc = accr = accc = 0.0
        for start in range(0, n_total, _NP_CHUNK):
            m = min(_NP_CHUNK, n_total - start)
            cw = codewords_np(int(seeds[tr]), start + 1, m, mean, psd)
            lr = log_ratios_of_np(cw, w, mean, psd, ksd)
            dw = np.zeros(m)
            for c in range(mean.shape[0]):
                a = cw[:, c] - w[c]
                dw += a * a
            rho = np.exp(lr)
            v = np.sqrt(dw) * rho
            acc += v.sum()
            accr += rho.sum()
            accc += v[lr <= log_a].sum()
        i_n[tr] = acc / n_total
        rho_mean[tr] = accr / n_total
        i_clip[tr] = accc / n_total
    return i_n, rho_mean, i_clip


def _epoch_order_np(key, epoch, n):
    with np.errstate(over="ignore"):
        ek = mix64(key + np.uint64(epoch))
    return np.argsort(mix64(ek ^ np.arange(n, dtype=np.uint64)))


def sgd_run_np(x, y, w0, mean, lr, epochs, batch, lam, inv_pvar, shuffle_seed):
    n = x.shape[0]
    w = w0.copy()
    sign = 1.0 - 2.0 * y.astype(np.float64)
    key = mix64(np.uint64(shuffle_seed))
    for epoch in range(epochs):
        order = _epoch_order_np(key, epoch, n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            xb = x[idx]
            s = expit(xb @ w)
            grad = (sign[idx] * s * (1.0 - s)) @ xb / idx.shape[0]
            w -= lr * (grad + lam * (w - mean) * inv_pvar)
        nrm = float(w @ w)
        if not np.isfinite(nrm) or nrm > 1e12:
            return w, True
    return w, False


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

_NAMES = ("codewords", "log_ratios_of", "log_ratios", "ordered_gumbels", "orc_select",
          "orc_lazy", "vq_select", "appendix_sums", "sgd_run")


def implementations(backend):
    """Return a dict of kernel name -> callable for ``"numba"`` or ``"numpy"``."""
    if backend == "numba":
        if not _backend.HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        return {n: globals()[n + "_nb"] for n in _NAMES}
    if backend == "numpy":
        return {n: globals()[n + "_np"] for n in _NAMES}
    raise ValueError(f"unknown backend {backend!r}")


_active = implementations(_backend.backend_name())
codewords = _active["codewords"]
log_ratios_of = _active["log_ratios_of"]
log_ratios = _active["log_ratios"]
ordered_gumbels = _active["ordered_gumbels"]
orc_select = _active["orc_select"]
orc_lazy = _active["orc_lazy"]
vq_select = _active["vq_select"]
appendix_sums = _active["appendix_sums"]
sgd_run = _active["sgd_run"]
