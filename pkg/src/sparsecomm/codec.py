"""Truncated sign-magnitude binary representation of reals.

A value is sent as one sign bit followed by the magnitude bits
``b_{-P} .. b_U``, i.e. ``U + P + 2`` bits in total.  Decoding gives
``(2*sign - 1) * sum_j b_j 2**j`` and, as long as ``|x| < 2**(U+1)``,
the error is below ``2**-P``.  Bits above ``b_U`` are silently dropped;
callers that care about overflow must pick ``U`` accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BitString",
    "ENCODINGS",
    "trunc",
    "approx",
    "index_bits",
    "trunc_array",
    "approx_array",
    "threshold_precision",
    "quantize_threshold",
]


@dataclass(frozen=True)
class BitString:
    """Encoded real.

    ``magnitude`` packs ``b_{-P} .. b_U`` into an integer whose bit ``k`` is
    ``b_{k-P}``; the decoded magnitude is therefore ``magnitude / 2**P``.
    """

    sign: int
    magnitude: int
    U: int
    P: int

    def __post_init__(self):
        if self.sign not in (0, 1):
            raise ValueError("sign bit must be 0 or 1")
        if self.U < 0 or self.P < 0:
            raise ValueError("U and P must be nonnegative")
        if not 0 <= self.magnitude < (1 << (self.U + self.P + 1)):
            raise ValueError("magnitude does not fit in U + P + 1 bits")

    def __len__(self) -> int:
        return self.U + self.P + 2

    @property
    def bits(self) -> tuple[int, ...]:
        """Magnitude bits ordered ``(b_{-P}, ..., b_U)``."""
        return tuple((self.magnitude >> k) & 1 for k in range(self.U + self.P + 1))

    @classmethod
    def from_bits(cls, sign: int, bits, U: int, P: int) -> "BitString":
        bits = list(bits)
        if len(bits) != U + P + 1:
            raise ValueError(f"expected {U + P + 1} magnitude bits, got {len(bits)}")
        magnitude = 0
        for k, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("bits must be 0 or 1")
            magnitude |= b << k
        return cls(sign, magnitude, U, P)

    def to_bytes(self) -> bytes:
        """Canonical packing: sign bit, then ``b_U`` down to ``b_{-P}``, zero padded."""
        n = len(self)
        word = (self.sign << (n - 1)) | self.magnitude
        nbytes = (n + 7) // 8
        return (word << (8 * nbytes - n)).to_bytes(nbytes, "big")

    @classmethod
    def from_bytes(cls, data: bytes, U: int, P: int) -> "BitString":
        n = U + P + 2
        nbytes = (n + 7) // 8
        if len(data) != nbytes:
            raise ValueError(f"expected {nbytes} bytes for U={U}, P={P}, got {len(data)}")
        word = int.from_bytes(data, "big") >> (8 * nbytes - n)
        return cls(word >> (n - 1), word & ((1 << (n - 1)) - 1), U, P)


def trunc(x: float, U: int, P: int) -> BitString:
    if U < 0 or P < 0:
        raise ValueError("U and P must be nonnegative")
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite value {x!r}")
    # copysign keeps -0.0 negative so trunc(approx(s)) == s for every s
    sign = 1 if math.copysign(1.0, x) > 0 else 0
    # scaling by 2**P is exact in binary floating point, so floor gives the bits
    scaled = math.floor(math.ldexp(abs(x), P))
    return BitString(sign, scaled & ((1 << (U + P + 1)) - 1), U, P)


def approx(s: BitString, U: int, P: int) -> float:
    if (s.U, s.P) != (U, P):
        raise ValueError(f"bit string has U={s.U}, P={s.P}; decoder expects U={U}, P={P}")
    return (2 * s.sign - 1) * math.ldexp(s.magnitude, -P)


def index_bits(d: int) -> int:
    """Bits needed for one index out of ``d``: ceil(log2 d)."""
    if d < 2:
        raise ValueError(f"index_bits needs d >= 2, got {d}")
    return (d - 1).bit_length()


def trunc_array(x: np.ndarray, U: int, P: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`trunc`; returns ``(sign, magnitude)`` integer arrays.

    Only valid while ``U + P + 1 <= 62`` so magnitudes fit in int64.
    """
    if U + P + 1 > 62:
        raise ValueError("trunc_array supports U + P + 1 <= 62; use trunc()")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot encode non-finite values")
    sign = (~np.signbit(x)).astype(np.int64)
    scaled = np.floor(np.ldexp(np.abs(x), P))
    # values past 2**62 would overflow the cast; only their low bits survive anyway
    scaled = np.fmod(scaled, float(1 << (U + P + 1)))
    return sign, scaled.astype(np.int64)


def approx_array(sign: np.ndarray, magnitude: np.ndarray, P: int) -> np.ndarray:
    return (2 * np.asarray(sign) - 1) * np.ldexp(np.asarray(magnitude, dtype=float), -P)


ENCODINGS = ("paper", "appendixB")


def threshold_precision(tau: float, d: int, encoding: str = "paper") -> tuple[int, int]:
    """``(U, P)`` used to ship a threshold to the machines.

    ``"paper"`` uses ``U = floor(log2 tau)`` (clamped at 0 for tau < 1) and
    ``P = ceil(log2 d)``; ``"appendixB"`` is the fixed ``U=2, P=3`` format.
    """
    if encoding == "paper":
        U = max(0, math.floor(math.log2(tau))) if tau > 0 else 0
        return U, index_bits(d)
    if encoding == "appendixB":
        return 2, 3
    raise ValueError(f"unknown encoding {encoding!r}; choose from {ENCODINGS}")


def quantize_threshold(t, d: int, encoding: str = "paper"):
    """Value the machines actually compare against after encoding ``t``.

    Vectorised over ``t``; agrees with
    ``approx(trunc(t, U, P), U, P)`` for ``(U, P) = threshold_precision(t, d, encoding)``.
    """
    t = np.asarray(t, dtype=float)
    if encoding == "paper":
        # U >= floor(log2 t) by construction, so no high bits are lost
        P = index_bits(d)
        sign, mag = trunc_array(t, 62 - P - 1, P)
    elif encoding == "appendixB":
        sign, mag = trunc_array(t, 2, 3)
        P = 3
    else:
        raise ValueError(f"unknown encoding {encoding!r}; choose from {ENCODINGS}")
    out = approx_array(sign, mag, P)
    return float(out) if out.ndim == 0 else out
