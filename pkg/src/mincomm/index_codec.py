"""Prefix-free codes for the transmitted codeword index.

Bitstrings are ``str`` objects over ``'0'``/``'1'``.  Two codes:

* ``elias_delta``: parameter-free, ``log2 K + 2 log2(log2 K + 1) + O(1)`` bits.
* ``zipf``: tuned to ``p(k) ~ k**-s``.  ``K`` is split into a magnitude
  bucket ``b = floor(log2 K)`` and ``b`` raw offset bits; the bucket gets a
  canonical Huffman codeword built from the Zipf mass of each bucket, so the
  length tracks ``s * log2 K`` without any arithmetic coding.
"""
from dataclasses import dataclass
from functools import lru_cache
import heapq
import math
import struct

from scipy.special import zeta

from .errors import ConfigError, DecodeError

MAX_INDEX_BITS = 64
_BUCKETS = MAX_INDEX_BITS


@dataclass(frozen=True)
class IndexCode:
    kind: str = "elias_delta"
    zipf_exponent: float | None = None

    def __post_init__(self):
        if self.kind == "zipf":
            if self.zipf_exponent is None or not self.zipf_exponent > 1:
                raise ConfigError("zipf code needs an exponent > 1")
        elif self.kind != "elias_delta":
            raise ConfigError(f"unknown index code {self.kind!r}")

    @classmethod
    def for_rate(cls, c_hat):
        """Zipf code with exponent ``1 + 1/(c_hat + 1/e)``; Elias delta if no estimate."""
        if c_hat is None:
            return cls()
        return cls("zipf", 1.0 + 1.0 / (max(c_hat, 0.0) + math.exp(-1.0)))


def comm_budget(c):
    """Expected-rate budget ``C + ln(C + 1) + 4`` in nats."""
    if c < 0:
        raise ConfigError("C must be non-negative")
    return c + math.log(c + 1.0) + 4.0


def _check_index(k):
    if int(k) != k or k < 1:
        raise ConfigError(f"index must be an integer >= 1, got {k!r}")
    if k.bit_length() > MAX_INDEX_BITS:
        raise ConfigError(f"index {k} needs more than {MAX_INDEX_BITS} bits")


def _elias_gamma(n):
    b = bin(n)[2:]
    return "0" * (len(b) - 1) + b


def _elias_delta(k):
    b = bin(k)[2:]
    return _elias_gamma(len(b)) + b[1:]


@lru_cache(maxsize=64)
def _zipf_table(s):
    """Canonical Huffman codewords for the 64 magnitude buckets."""
    mass = [float(zeta(s, 2.0 ** b) - zeta(s, 2.0 ** (b + 1))) for b in range(_BUCKETS)]
    mass = [max(m, 1e-300) for m in mass]
    heap = [(m, i, (i,)) for i, m in enumerate(mass)]
    heapq.heapify(heap)
    depth = [0] * _BUCKETS
    tie = _BUCKETS
    while len(heap) > 1:
        m1, _, a = heapq.heappop(heap)
        m2, _, b = heapq.heappop(heap)
        for i in a + b:
            depth[i] += 1
        heapq.heappush(heap, (m1 + m2, tie, a + b))
        tie += 1
    order = sorted(range(_BUCKETS), key=lambda i: (depth[i], i))
    codes = [""] * _BUCKETS
    code = 0
    prev = depth[order[0]]
    for pos, i in enumerate(order):
        if pos:
            code = (code + 1) << (depth[i] - prev)
            prev = depth[i]
        codes[i] = format(code, f"0{depth[i]}b")
    return tuple(codes), {c: i for i, c in enumerate(codes)}


def encode_index(k, code=IndexCode()):
    """Prefix-free bitstring for ``k >= 1``."""
    _check_index(k)
    k = int(k)
    if code.kind == "elias_delta":
        return _elias_delta(k)
    b = k.bit_length() - 1
    codes, _ = _zipf_table(code.zipf_exponent)
    return codes[b] + (bin(k)[3:] if b else "")


def _read_elias(bits, pos):
    zeros = 0
    while pos + zeros < len(bits) and bits[pos + zeros] == "0":
        zeros += 1
    if zeros > 6:
        raise DecodeError("length prefix too long")
    start = pos + zeros
    if start + zeros + 1 > len(bits):
        raise DecodeError("truncated length prefix")
    length = int(bits[start:start + zeros + 1], 2)
    if length > MAX_INDEX_BITS:
        raise DecodeError("index longer than 64 bits")
    pos = start + zeros + 1
    if pos + length - 1 > len(bits):
        raise DecodeError("truncated index body")
    return int("1" + bits[pos:pos + length - 1], 2), pos + length - 1


def _read_zipf(bits, pos, s):
    _, lookup = _zipf_table(s)
    end = pos
    while True:
        end += 1
        if end > len(bits) or end - pos > _BUCKETS:
            raise DecodeError("no bucket codeword matches")
        b = lookup.get(bits[pos:end])
        if b is not None:
            break
    if end + b > len(bits):
        raise DecodeError("truncated offset bits")
    return (1 << b) | (int(bits[end:end + b], 2) if b else 0), end + b


def read_index(bits, pos=0, code=IndexCode()):
    """Decode one index starting at ``pos``; returns ``(k, next_pos)``."""
    if any(c not in "01" for c in bits[pos:]):
        raise DecodeError("bitstring must contain only '0' and '1'")
    if code.kind == "elias_delta":
        return _read_elias(bits, pos)
    return _read_zipf(bits, pos, code.zipf_exponent)


def decode_index(bits, code=IndexCode()):
    """Exact inverse of :func:`encode_index`; trailing bits are an error."""
    k, pos = read_index(bits, 0, code)
    if pos != len(bits):
        raise DecodeError(f"{len(bits) - pos} trailing bits after index")
    return k


def decode_stream(bits, code=IndexCode()):
    """Decode a concatenation of codewords."""
    out, pos = [], 0
    while pos < len(bits):
        k, pos = read_index(bits, pos, code)
        out.append(k)
    return out


def pack_bits(bits):
    """u32 little-endian bit count followed by the bits packed MSB-first."""
    pad = (-len(bits)) % 8
    body = int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big") if bits else b""
    return struct.pack("<I", len(bits)) + body


def unpack_bits(buf, offset=0):
    """Inverse of :func:`pack_bits`; returns ``(bits, next_offset)``."""
    if len(buf) < offset + 4:
        raise DecodeError("missing bit count")
    (nbits,) = struct.unpack_from("<I", buf, offset)
    nbytes = (nbits + 7) // 8
    body = buf[offset + 4:offset + 4 + nbytes]
    if len(body) != nbytes:
        raise DecodeError("truncated bit payload")
    bits = format(int.from_bytes(body, "big"), f"0{nbytes * 8}b")[:nbits] if nbytes else ""
    return bits, offset + 4 + nbytes
