"""Index encoders (MRC, ORC, VQ), the residual quantizer, the decoder and the wire message.

Encoders see only the trained model, the shared codebook, the kernel and the
prior; nothing about how the model was trained.
"""
from dataclasses import dataclass
import math
import struct

import numpy as np

from . import _kernels
from .codebook import derive_seed
from .errors import (CapExceededError, ConfigError, DecodeError, NumericUnderflowError,
                     QuantizerContractError)
from .hypothesis import as_hypothesis
from .index_codec import IndexCode, encode_index, pack_bits, read_index, unpack_bits
from .quantkernel import kl_to_prior, log_ratio_sup

DEFAULT_ORC_CAP = 1 << 26
MAX_PRECISION_BITS = 32
_MODE_BYTES = {"none": 0, "full": 1, "quantized": 2}


@dataclass(frozen=True, eq=False)
class PrecisionPayload:
    mode: str
    values: np.ndarray
    payload_bits: int
    bits: int | None = None
    codes: np.ndarray | None = None
    scale: float | None = None
    exact: np.ndarray | None = None

    @property
    def norm(self):
        return math.nan if self.values is None else float(np.linalg.norm(self.values))

    def apply(self, codeword):
        """``codeword + W_eps``; full precision returns the exact sum, i.e. the model itself."""
        if self.exact is not None:
            return self.exact.copy()
        return codeword + self.values


@dataclass(frozen=True, eq=False)
class EncodingResult:
    index: int
    candidates_examined: int
    candidate_count: int
    precision: PrecisionPayload | None
    encoder_kind: str


class GumbelStream:
    """Descending order statistics of ``n_total`` i.i.d. standard Gumbels.

    Uses the exponential-spacings form of the truncated-Gumbel recursion:
    with ``T_n = T_{n-1} + E_n / (n_total - n + 1)`` and ``E_n ~ Exp(1)``,
    ``-log T_n`` is the n-th largest Gumbel, each one a Gumbel conditioned to
    fall below its predecessor.  Same stream as the ORC kernels.
    """

    def __init__(self, seed, n_total):
        self.seed = int(seed)
        self.n_total = int(n_total)
        self._key = _kernels.mix64(np.uint64(self.seed))
        self._n = 0
        self._t = 0.0
        self.current_max = math.inf

    def __iter__(self):
        return self

    def __next__(self):
        if self._n >= self.n_total:
            raise StopIteration
        with np.errstate(over="ignore"):
            h = _kernels.mix64(self._key + np.uint64(self._n))
        u = (float(h >> np.uint64(11)) + 0.5) * 2.0 ** -53
        self._t += -math.log(u) / (self.n_total - self._n)
        self._n += 1
        self.current_max = -math.log(self._t)
        return self.current_max


def parse_precision(mode):
    """Normalise ``"none"``, ``"full"``, ``"q<b>"``, an int ``b`` or ``("quantized", b)``."""
    if isinstance(mode, tuple):
        kind, b = mode
    elif isinstance(mode, (int, np.integer)) and not isinstance(mode, bool):
        kind, b = ("none", None) if mode == 0 else ("quantized", int(mode))
    elif mode in ("none", "full"):
        kind, b = mode, None
    elif isinstance(mode, str) and mode.startswith("q") and mode[1:].isdigit():
        kind, b = "quantized", int(mode[1:])
    else:
        raise ConfigError(f"unknown precision mode {mode!r}")
    if kind == "quantized" and not 1 <= b <= MAX_PRECISION_BITS:
        raise ConfigError(f"quantized precision needs 1..{MAX_PRECISION_BITS} bits (use 'none' for 0)")
    if kind not in _MODE_BYTES:
        raise ConfigError(f"unknown precision mode {mode!r}")
    return kind, b


def orc_candidate_count(kl, t, cap=DEFAULT_ORC_CAP):
    """``ceil(exp(kl + t))``, refusing anything above ``cap``."""
    x = kl + t
    if x > math.log(cap) + 1e-12:
        required = math.inf if x > 700 else math.ceil(math.exp(x))
        raise CapExceededError(required, cap)
    return max(1, math.ceil(math.exp(x)))


def sample_from_log_weights(log_w, u):
    """Index (1-based) drawn with probability proportional to ``exp(log_w)`` using uniform ``u``."""
    log_w = np.asarray(log_w, dtype=np.float64)
    top = log_w.max()
    if not np.isfinite(top):
        raise NumericUnderflowError("all candidate weights are zero")
    cdf = np.cumsum(np.exp(log_w - top))
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, log_w.shape[0] - 1) + 1


def _uniform(seed, tag):
    return np.random.default_rng(derive_seed(seed, tag)).random()


def encode_mrc(w, cb, n_w, k, q, seed, precision="none"):
    """Minimal random coding: pick ``j`` with probability proportional to ``rho_w(codeword j)``."""
    w = as_hypothesis(w, q.d)
    if n_w < 1:
        raise ConfigError("N_w must be >= 1")
    lr = _kernels.log_ratios(np.uint64(cb.seed), 1, int(n_w), w, q.mean, q.sd, k.sd)
    idx = sample_from_log_weights(lr, _uniform(seed, "mrc"))
    return _finish(w, cb, idx, int(n_w), int(n_w), precision, "mrc")


def encode_orc(w, cb, t, k, q, seed, precision="none", cap=DEFAULT_ORC_CAP, n_w=None):
    """Ordered random coding over ``ceil(exp(KL + t))`` candidates.

    Candidates are paired with descending Gumbels in index order and the
    argmax of ``log rho + Gumbel`` wins.  When the kernel is narrower than
    the prior the log ratio is bounded and the scan stops as soon as no
    later candidate can win; the result is identical to a full scan.
    ``n_w`` overrides the candidate count (test hook).
    """
    w = as_hypothesis(w, q.d)
    if not t > 0:
        raise ConfigError("t must be positive")
    if n_w is None:
        n_w = orc_candidate_count(kl_to_prior(w, k, q), t, cap)
    bound = log_ratio_sup(w, k, q)
    idx, examined = _kernels.orc_lazy(np.uint64(cb.seed), int(n_w), w, q.mean, q.sd, k.sd,
                                      np.uint64(seed), bound)
    return _finish(w, cb, int(idx), int(examined), int(n_w), precision, "orc")


def orc_select(log_ratios, seed, lr_max=None):
    """ORC choice over precomputed log ratios (same stream as :func:`encode_orc`)."""
    lr = np.ascontiguousarray(log_ratios, dtype=np.float64)
    top = float(lr.max()) if lr_max is None else lr_max
    idx, _ = _kernels.orc_select(lr, np.uint64(seed), top)
    return int(idx)


def encode_vq(w, cb, n, precision="none"):
    """Nearest of the first ``n`` codewords (ties go to the smallest index)."""
    w = as_hypothesis(w, cb.d)
    if n < 1:
        raise ConfigError("N must be >= 1")
    idx, _ = _kernels.vq_select(np.uint64(cb.seed), int(n), w, cb.prior.mean, cb.prior.sd)
    return _finish(w, cb, int(idx), int(n), int(n), precision, "vq")


def vq_nearest(w, rows):
    """1-based index of the row nearest to ``w`` over an explicit codeword array."""
    d2 = np.sum((np.asarray(rows, dtype=np.float64) - np.asarray(w, dtype=np.float64)) ** 2, axis=1)
    return int(np.argmin(d2)) + 1


def _finish(w, cb, idx, examined, count, precision, kind):
    payload = None if precision is None else quantize_residual(w, cb[idx], precision)
    return EncodingResult(idx, examined, count, payload, kind)


def _dequantize(codes, b, scale):
    return ((codes + 0.5) * (2.0 / (1 << b)) - 1.0) * scale


def quantize_residual(w, codeword, mode):
    """Precision payload for the residual ``w - codeword``.

    ``quantized(b)`` uses a uniform midrise quantizer on ``[-|r|_inf, |r|_inf]``
    followed by a radial shrink onto the ball of radius ``|r|``.  The shrink
    is folded into the transmitted range scalar so the decoder needs nothing
    else.  ``|W_eps| <= |r|`` and ``|r - W_eps| <= |r|`` hold exactly.
    """
    w = np.asarray(w, dtype=np.float64)
    codeword = np.asarray(codeword, dtype=np.float64)
    if w.shape != codeword.shape:
        raise ConfigError("dimension mismatch between model and codeword")
    kind, b = parse_precision(mode)
    r = w - codeword
    d = r.shape[0]
    if kind == "none":
        return PrecisionPayload("none", np.zeros(d), 0)
    if kind == "full":
        # cw + fl(w - cw) can miss w by an ulp, so the exact sum travels as the model's own bits
        return PrecisionPayload("full", r, 64 * d, exact=w.copy())
    levels = 1 << b
    big = float(np.abs(r).max())
    nr = float(np.linalg.norm(r))
    if big == 0.0:
        codes = np.full(d, levels // 2, dtype=np.int64)
        return PrecisionPayload("quantized", np.zeros(d), b * d + 64, b, codes, 0.0)
    codes = np.clip(np.floor((r + big) / (2.0 * big / levels)), 0, levels - 1).astype(np.int64)
    unit = _dequantize(codes, b, 1.0)
    nq = float(np.linalg.norm(unit)) * big
    scale = big * min(1.0, nr / nq) if nq > 0 else 0.0
    vals = _dequantize(codes, b, scale)
    if np.linalg.norm(r - vals) > nr:
        # only reachable when d > 4**b: fall back to the least-squares gain
        scale = min(scale, max(0.0, float(r @ unit) / float(unit @ unit)))
        vals = _dequantize(codes, b, scale)
    while scale > 0 and (np.linalg.norm(vals) > nr or np.linalg.norm(r - vals) > nr):
        scale = float(np.nextafter(scale, 0.0))
        vals = _dequantize(codes, b, scale)
    return PrecisionPayload("quantized", vals, b * d + 64, b, codes, scale)


def decode(k, payload, cb):
    """Server rule: codeword ``k`` plus the precision payload."""
    cw = cb[int(k)]
    if payload is None:
        return cw
    return payload.apply(cw)


def delta_u(w, k, payload, cb, tol=1e-12):
    """Distance gained by the payload: ``|w - cw_k| - |w - decode(k, payload)|``."""
    w = np.asarray(w, dtype=np.float64)
    cw = cb[int(k)]
    gain = float(np.linalg.norm(w - cw) - np.linalg.norm(w - decode(k, payload, cb)))
    if gain < -tol:
        raise QuantizerContractError(f"precision payload increased the distance by {-gain:g}")
    return max(gain, 0.0)


# -- wire message -----------------------------------------------------------

def encode_message(result, code=IndexCode()):
    """Client -> server bytes: packed index bits, mode byte, optional payload."""
    out = bytearray(pack_bits(encode_index(result.index, code)))
    p = result.precision
    mode = "none" if p is None else p.mode
    out.append(_MODE_BYTES[mode])
    if mode == "full":
        out += np.asarray(p.exact, dtype="<f8").tobytes()
    elif mode == "quantized":
        out.append(p.bits)
        out += struct.pack("<d", p.scale)
        bits = "".join(format(int(c), f"0{p.bits}b") for c in p.codes)
        pad = (-len(bits)) % 8
        out += int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big")
    return bytes(out)


def decode_message(buf, d, code=IndexCode(), cb=None):
    """Parse a wire message for dimension ``d``; returns ``(index, payload)``.

    A full-precision payload only knows its residual once the codebook is
    given; without ``cb`` its ``values`` are ``None``.
    """
    bits, pos = unpack_bits(buf)
    k, used = read_index(bits, 0, code)
    if used != len(bits):
        raise DecodeError("trailing bits after index")
    if pos >= len(buf):
        raise DecodeError("missing precision mode byte")
    mode_byte = buf[pos]
    pos += 1
    if mode_byte == 0:
        payload = PrecisionPayload("none", np.zeros(d), 0)
    elif mode_byte == 1:
        if len(buf) != pos + 8 * d:
            raise DecodeError("bad full-precision payload length")
        exact = np.frombuffer(buf, dtype="<f8", count=d, offset=pos).astype(np.float64)
        vals = None if cb is None else exact - cb[k]
        payload = PrecisionPayload("full", vals, 64 * d, exact=exact)
        pos += 8 * d
    elif mode_byte == 2:
        if len(buf) < pos + 9:
            raise DecodeError("truncated quantized payload header")
        b = buf[pos]
        if not 1 <= b <= MAX_PRECISION_BITS:
            raise DecodeError(f"bad bit depth {b}")
        (scale,) = struct.unpack_from("<d", buf, pos + 1)
        pos += 9
        nbytes = (b * d + 7) // 8
        if len(buf) != pos + nbytes:
            raise DecodeError("bad quantized payload length")
        stream = format(int.from_bytes(buf[pos:pos + nbytes], "big"), f"0{nbytes * 8}b")
        codes = np.array([int(stream[i * b:(i + 1) * b], 2) for i in range(d)], dtype=np.int64)
        payload = PrecisionPayload("quantized", _dequantize(codes, b, scale), b * d + 64, b, codes, scale)
        pos += nbytes
    else:
        raise DecodeError(f"unknown precision mode byte {mode_byte}")
    if pos != len(buf):
        raise DecodeError("trailing bytes in message")
    return k, payload
