"""Probability models and the lossless range coder behind every bitstream.

Cumulative frequencies are 16-bit (they sum to ``1 << 16``).  The coder keeps
64-bit ``low``/``range`` state and renormalises one byte at a time once
``range`` drops below ``1 << 32``.  Carries never occur: when the interval
straddles a top-byte boundary, ``range`` is clamped down to the boundary, so
emitted bytes are final.  This byte discipline is documented in
``docs/formats.md`` and must not change once streams exist.

Two symbol models are provided:

* :class:`FactorizedPrior` - per-channel integer CDF tables with a trailing
  escape symbol; out-of-range values are escape-coded with a sign bit and an
  Exp-Golomb extension.
* :class:`GaussianCodingModel` - per-element discretized Gaussians.  Scales
  are snapped to a 64-level geometric table and means to 1/256 steps so both
  ends of the wire derive bit-identical CDFs; the window boundary symbols
  absorb the tails and double as escapes.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

__all__ = [
    "FREQ_BITS",
    "FREQ_TOTAL",
    "SIGMA_MIN",
    "SIGMA_MAX",
    "SCALE_LEVELS",
    "DecodeError",
    "BitSink",
    "BitSource",
    "RangeEncoder",
    "RangeDecoder",
    "ChannelTable",
    "FactorizedPrior",
    "GaussianCodingModel",
    "quantize",
    "gaussian_pmf",
    "quantize_pmf",
    "scale_table",
    "sigma_to_level",
    "encode_symbols",
    "decode_symbols",
    "rate_hyper",
    "rate_latent",
    "sigma_clamp_count",
    "reset_sigma_clamp_count",
]

FREQ_BITS = 16
FREQ_TOTAL = 1 << FREQ_BITS

SIGMA_MIN = 0.11
SIGMA_MAX = 64.0
SCALE_LEVELS = 64
MU_FRAC_STEPS = 256  # mean fraction snapped to 1/256 before table derivation

_MASK64 = (1 << 64) - 1
_TOP = 1 << 56
_BOT = 1 << 32

_LOG2 = math.log(2.0)


class DecodeError(ValueError):
    """A compressed stream is corrupt or inconsistent with its model."""


# ---------------------------------------------------------------------------
# byte buffers


class BitSink:
    """Growable byte buffer the encoder emits into."""

    def __init__(self):
        self.buffer = bytearray()

    def write_byte(self, b: int) -> None:
        self.buffer.append(b)

    def getvalue(self) -> bytes:
        return bytes(self.buffer)


class BitSource:
    """Byte reader with bounded zero padding past the end.

    The encoder's flush is at most 8 bytes shorter than the state it
    represents, so a well-formed decode never reads more than 8 virtual
    padding bytes; anything beyond that is a truncated stream.
    """

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self._padding = 0

    def read_byte(self) -> int:
        if self.pos < len(self.data):
            b = self.data[self.pos]
            self.pos += 1
            return b
        self._padding += 1
        if self._padding > 8:
            raise DecodeError("range decoder read past end of stream")
        return 0


# ---------------------------------------------------------------------------
# range coder


class RangeEncoder:
    """Carry-less range encoder over 16-bit cumulative frequency tables."""

    def __init__(self, sink: BitSink | None = None):
        self._low = 0
        self._range = 1 << 64
        self._sink = sink if sink is not None else BitSink()
        self._done = False

    def encode(self, cum: int, freq: int, total: int = FREQ_TOTAL) -> None:
        """Narrow the interval to the [cum, cum+freq) slice out of total."""
        assert not self._done and freq > 0 and cum + freq <= total <= FREQ_TOTAL
        r = self._range // total
        self._low += r * cum
        if cum + freq == total:
            # last slice keeps the division remainder
            self._range -= r * cum
        else:
            self._range = r * freq
        self._normalize()

    def encode_bit(self, bit: int) -> None:
        self.encode(bit & 1, 1, 2)

    def encode_bits(self, value: int, nbits: int) -> None:
        for i in range(nbits - 1, -1, -1):
            self.encode_bit((value >> i) & 1)

    def _normalize(self) -> None:
        low, rng = self._low, self._range
        while True:
            if (low ^ (low + rng - 1)) < _TOP:
                pass  # top byte settled, emit it
            elif rng < _BOT:
                # interval straddles a top-byte boundary but is too small to
                # settle soon: cut it at the next 2^32 boundary (carry-less)
                rng = (-low) & (_BOT - 1)
            else:
                break
            self._sink.write_byte(low >> 56)
            low = (low << 8) & _MASK64
            rng <<= 8
        self._low, self._range = low, rng

    def finish(self) -> bytes:
        """Flush the shortest byte prefix that pins a point inside the interval."""
        assert not self._done
        self._done = True
        low, rng = self._low, self._range
        for nbytes in range(9):
            shift = 64 - 8 * nbytes
            v = low if nbytes == 8 else ((low + (1 << shift) - 1) >> shift) << shift
            if low <= v < low + rng and v <= _MASK64:
                for i in range(nbytes):
                    self._sink.write_byte((v >> (56 - 8 * i)) & 0xFF)
                break
        return self._sink.getvalue()


class RangeDecoder:
    """Mirror of :class:`RangeEncoder`; tracks the same low/range trajectory."""

    def __init__(self, source: BitSource | bytes):
        self._src = source if isinstance(source, BitSource) else BitSource(source)
        self._low = 0
        self._range = 1 << 64
        code = 0
        for _ in range(8):
            code = (code << 8) | self._src.read_byte()
        self._code = code

    def decode(self, cdf, total: int = FREQ_TOTAL) -> int:
        """Decode one symbol index from a cumulative table (cdf[0]=0, cdf[-1]=total)."""
        r = self._range // total
        off = (self._code - self._low) // r
        if off >= total:
            off = total - 1
        s = bisect_right(cdf, off) - 1
        if s < 0 or s >= len(cdf) - 1:
            raise DecodeError("corrupt stream: decoded offset outside table")
        cum = int(cdf[s])
        nxt = int(cdf[s + 1])
        if nxt <= cum:
            raise DecodeError("corrupt stream: zero-width symbol")
        self._low += r * cum
        if nxt == total:
            self._range -= r * cum
        else:
            self._range = r * (nxt - cum)
        self._normalize()
        return s

    def decode_bit(self) -> int:
        return self.decode(_BIT_CDF, 2)

    def decode_bits(self, nbits: int) -> int:
        v = 0
        for _ in range(nbits):
            v = (v << 1) | self.decode_bit()
        return v

    def _normalize(self) -> None:
        low, rng, code = self._low, self._range, self._code
        while True:
            if (low ^ (low + rng - 1)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            low = (low << 8) & _MASK64
            rng <<= 8
            code = ((code << 8) & _MASK64) | self._src.read_byte()
        self._low, self._range, self._code = low, rng, code


_BIT_CDF = (0, 1, 2)


def _eg_encode(enc: RangeEncoder, v: int) -> None:
    """Exp-Golomb code for a nonnegative integer, via bypass bits."""
    n = v + 1
    k = n.bit_length()
    enc.encode_bits(0, k - 1)
    enc.encode_bits(n, k)


def _eg_decode(dec: RangeDecoder) -> int:
    k = 1
    while dec.decode_bit() == 0:
        k += 1
        if k > 64:
            raise DecodeError("corrupt stream: runaway escape extension")
    n = 1
    for _ in range(k - 1):
        n = (n << 1) | dec.decode_bit()
    return n - 1


def _eg_bits(v: int) -> int:
    return 2 * (v + 1).bit_length() - 1


# ---------------------------------------------------------------------------
# scalar helpers


def quantize(t) -> np.ndarray:
    """Round to nearest integer, halves away from zero."""
    t = np.asarray(t)
    if not np.isfinite(t).all():
        raise ValueError("quantize requires finite inputs")
    return np.sign(t) * np.floor(np.abs(t) + 0.5)


_clamp_count = 0


def sigma_clamp_count() -> int:
    """Number of sigma values clamped up to SIGMA_MIN since the last reset."""
    return _clamp_count


def reset_sigma_clamp_count() -> None:
    global _clamp_count
    _clamp_count = 0


def gaussian_pmf(k: int, mu: float, sigma: float) -> float:
    """P(round(X)=k) for X ~ N(mu, sigma), integration over [k-1/2, k+1/2]."""
    global _clamp_count
    if sigma < SIGMA_MIN:
        _clamp_count += 1
        sigma = SIGMA_MIN
    hi = ndtr((k + 0.5 - mu) / sigma)
    lo = ndtr((k - 0.5 - mu) / sigma)
    return float(hi - lo)


def quantize_pmf(p: np.ndarray) -> np.ndarray:
    """Turn probabilities into 16-bit frequencies, each >= 1, summing to 2^16.

    Largest-remainder rounding with deterministic tie-breaking so every
    platform builds the identical table.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    if n >= FREQ_TOTAL // 2:
        raise ValueError("pmf too long for 16-bit quantisation")
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total <= 0:
        p = np.full(n, 1.0 / n)
    else:
        p = p / total
    budget = FREQ_TOTAL - n
    scaled = p * budget
    freqs = np.floor(scaled).astype(np.int64) + 1
    short = FREQ_TOTAL - int(freqs.sum())
    if short > 0:
        frac = scaled - np.floor(scaled)
        order = np.lexsort((np.arange(n), -frac))
        freqs[order[:short]] += 1
    return freqs


def scale_table() -> np.ndarray:
    """The 64-level geometric sigma grid shared by encoder and decoder."""
    return _SCALE_TABLE.copy()


_SCALE_TABLE = np.geomspace(SIGMA_MIN, SIGMA_MAX, SCALE_LEVELS)
_LOG_RATIO = math.log(SIGMA_MAX / SIGMA_MIN)


def sigma_to_level(sigma) -> np.ndarray:
    """Nearest scale-table level index for each sigma (log-domain rounding)."""
    s = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
    idx = np.rint(np.log(s / SIGMA_MIN) / _LOG_RATIO * (SCALE_LEVELS - 1))
    return idx.astype(np.int64)


# ---------------------------------------------------------------------------
# windowed Gaussian tables (shared by the latent coder and the wavelet coder)


def _window_halfwidth(level: int) -> int:
    sigma = _SCALE_TABLE[level]
    return max(2, int(math.ceil(6.0 * sigma)) + 1)


def folded_gaussian_pmf(mu: float, sigma: float, s_min: int, s_max: int) -> np.ndarray:
    """Discretized N(mu, sigma) over integers s_min..s_max, tails folded into
    the boundary symbols; sums to 1 up to float rounding."""
    if sigma < SIGMA_MIN:
        sigma = SIGMA_MIN
    edges = (np.arange(s_min, s_max + 1) + 0.5 - mu) / sigma
    cdf_vals = ndtr(edges)
    p = np.empty(s_max - s_min + 1)
    p[0] = cdf_vals[0]
    if p.size > 1:
        p[1:-1] = np.diff(cdf_vals)[:-1]
        p[-1] = 1.0 - cdf_vals[-2]
    return p


@lru_cache(maxsize=65536)
def _gaussian_table(f_int: int, level: int):
    """CDF over symbols -W..W for N(f_int/256, scale[level]), tails folded.

    Returns (halfwidth W, cdf tuple of length 2W+2, bits array of -log2 pmf).
    Boundary symbols fold the tails and signal Exp-Golomb extensions.
    """
    sigma = float(_SCALE_TABLE[level])
    w = _window_halfwidth(level)
    p = folded_gaussian_pmf(f_int / MU_FRAC_STEPS, sigma, -w, w)
    freqs = quantize_pmf(p)
    cdf = np.zeros(freqs.size + 1, dtype=np.int64)
    np.cumsum(freqs, out=cdf[1:])
    bits = -np.log2(freqs / FREQ_TOTAL)
    return w, tuple(int(c) for c in cdf), bits


def encode_centered(enc: RangeEncoder, symbols, level: int, f_int: int = 0) -> None:
    """Encode integer symbols against one cached table (constant mu fraction)."""
    w, cdf, _ = _gaussian_table(f_int, level)
    for s in symbols:
        s = int(s)
        if s <= -w:
            enc.encode(cdf[0], cdf[1] - cdf[0])
            _eg_encode(enc, -w - s)
        elif s >= w:
            enc.encode(cdf[2 * w], FREQ_TOTAL - cdf[2 * w])
            _eg_encode(enc, s - w)
        else:
            i = s + w
            enc.encode(cdf[i], cdf[i + 1] - cdf[i])


def decode_centered(dec: RangeDecoder, count: int, level: int, f_int: int = 0) -> np.ndarray:
    w, cdf, _ = _gaussian_table(f_int, level)
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        idx = dec.decode(cdf)
        if idx == 0:
            out[i] = -w - _eg_decode(dec)
        elif idx == 2 * w:
            out[i] = w + _eg_decode(dec)
        else:
            out[i] = idx - w
    return out


def centered_cost_bits(symbols, level: int, f_int: int = 0) -> float:
    """Exact model cost in bits of encode_centered for these symbols."""
    w, _, bits = _gaussian_table(f_int, level)
    s = np.asarray(symbols, dtype=np.int64).ravel()
    idx = np.clip(s + w, 0, 2 * w)
    total = float(bits[idx].sum())
    for v in s[np.abs(s) >= w]:
        total += _eg_bits(abs(int(v)) - w)
    return total


# ---------------------------------------------------------------------------
# factorized prior


@dataclass(frozen=True)
class ChannelTable:
    """Integer CDF for one hyper-latent channel plus a trailing escape symbol."""

    s_min: int
    s_max: int
    cdf: tuple  # length (s_max - s_min + 2) + 1; cdf[0] == 0, cdf[-1] == FREQ_TOTAL

    def __post_init__(self):
        n = self.s_max - self.s_min + 2  # in-range symbols + escape
        if self.s_max < self.s_min:
            raise ValueError("empty symbol range")
        if len(self.cdf) != n + 1:
            raise ValueError("CDF length does not match symbol range")
        if self.cdf[0] != 0 or self.cdf[-1] != FREQ_TOTAL:
            raise ValueError("CDF must start at 0 and end at 2^16")
        diffs = np.diff(np.asarray(self.cdf, dtype=np.int64))
        if (diffs[:-1] <= 0).any() or diffs[-1] < 0:
            raise ValueError("in-range CDF entries must be strictly increasing")

    @property
    def escape_freq(self) -> int:
        return self.cdf[-1] - self.cdf[-2]


class FactorizedPrior:
    """Per-channel position-independent model for the quantized hyper-latents."""

    def __init__(self, tables: list[ChannelTable]):
        if not tables:
            raise ValueError("prior needs at least one channel table")
        self.tables = list(tables)
        self._bits = []
        for t in self.tables:
            freqs = np.diff(np.asarray(t.cdf, dtype=np.int64)).astype(np.float64)
            with np.errstate(divide="ignore"):
                self._bits.append(-np.log2(freqs / FREQ_TOTAL))

    @property
    def num_channels(self) -> int:
        return len(self.tables)

    def symbol_bits(self, channel: int, s: int) -> float:
        """Exact coding cost in bits of symbol s in this channel."""
        t = self.tables[channel]
        bits = self._bits[channel]
        if t.s_min <= s <= t.s_max:
            return float(bits[s - t.s_min])
        if t.escape_freq == 0:
            return math.inf
        if s > t.s_max:
            return float(bits[-1]) + 1 + _eg_bits(s - t.s_max - 1)
        return float(bits[-1]) + 1 + _eg_bits(t.s_min - 1 - s)

    def encode_channel(self, enc: RangeEncoder, channel: int, symbols) -> None:
        t = self.tables[channel]
        cdf = t.cdf
        esc = len(cdf) - 2
        for s in symbols:
            s = int(s)
            if t.s_min <= s <= t.s_max:
                i = s - t.s_min
                enc.encode(cdf[i], cdf[i + 1] - cdf[i])
            else:
                if t.escape_freq == 0:
                    raise ValueError(
                        f"symbol {s} outside [{t.s_min}, {t.s_max}] and no escape mass"
                    )
                enc.encode(cdf[esc], cdf[esc + 1] - cdf[esc])
                if s > t.s_max:
                    enc.encode_bit(0)
                    _eg_encode(enc, s - t.s_max - 1)
                else:
                    enc.encode_bit(1)
                    _eg_encode(enc, t.s_min - 1 - s)

    def decode_channel(self, dec: RangeDecoder, channel: int, count: int) -> np.ndarray:
        t = self.tables[channel]
        cdf = t.cdf
        esc = len(cdf) - 2
        out = np.empty(count, dtype=np.int64)
        for i in range(count):
            idx = dec.decode(cdf)
            if idx == esc:
                if dec.decode_bit() == 0:
                    out[i] = t.s_max + 1 + _eg_decode(dec)
                else:
                    out[i] = t.s_min - 1 - _eg_decode(dec)
            else:
                out[i] = t.s_min + idx
        return out


def gaussian_channel_table(
    s_min: int, s_max: int, mu: float = 0.0, sigma: float = 2.0
) -> ChannelTable:
    """Build a prior channel table from a discretized Gaussian with escape."""
    ks = np.arange(s_min, s_max + 1)
    edges_hi = ndtr((ks + 0.5 - mu) / sigma)
    edges_lo = ndtr((ks - 0.5 - mu) / sigma)
    p_in = edges_hi - edges_lo
    p_esc = max(1.0 - p_in.sum(), 0.0)
    freqs = quantize_pmf(np.append(p_in, p_esc))
    cdf = np.concatenate([[0], np.cumsum(freqs)])
    return ChannelTable(int(s_min), int(s_max), tuple(int(c) for c in cdf))


# ---------------------------------------------------------------------------
# conditional Gaussian coding of the latents


class GaussianCodingModel:
    """Per-element discretized Gaussians bound to (mu, sigma) arrays.

    Means are split into an integer part (the symbol offset) and a fraction
    snapped to 1/256; sigmas snap to the geometric scale table.  All CDFs are
    then integer-derived, so encoder and decoder agree bit-exactly.
    """

    def __init__(self, mu, sigma):
        mu = np.asarray(mu, dtype=np.float64).ravel()
        sigma = np.asarray(sigma, dtype=np.float64).ravel()
        if mu.shape != sigma.shape:
            raise ValueError("mu and sigma must have the same size")
        self.size = mu.size
        self.m = quantize(mu).astype(np.int64)
        self.f_int = np.rint((mu - self.m) * MU_FRAC_STEPS).astype(np.int64)
        self.level = sigma_to_level(sigma)

    def _tables(self) -> list:
        """Per-element (w, cdf) references, resolved once per distinct key."""
        keys = (self.f_int + MU_FRAC_STEPS // 2) * SCALE_LEVELS + self.level
        cache = {
            int(k): _gaussian_table(
                int(k) // SCALE_LEVELS - MU_FRAC_STEPS // 2, int(k) % SCALE_LEVELS
            )
            for k in np.unique(keys)
        }
        return [cache[int(k)] for k in keys]

    def encode(self, enc: RangeEncoder, symbols) -> None:
        s = np.asarray(symbols, dtype=np.int64).ravel()
        if s.size != self.size:
            raise ValueError("symbol count does not match model size")
        rel = (s - self.m).tolist()
        for r, (w, cdf, _) in zip(rel, self._tables()):
            if -w < r < w:
                j = r + w
                enc.encode(cdf[j], cdf[j + 1] - cdf[j])
            elif r <= -w:
                enc.encode(cdf[0], cdf[1] - cdf[0])
                _eg_encode(enc, -w - r)
            else:
                enc.encode(cdf[2 * w], FREQ_TOTAL - cdf[2 * w])
                _eg_encode(enc, r - w)

    def decode(self, dec: RangeDecoder, count: int) -> np.ndarray:
        if count != self.size:
            raise ValueError("symbol count does not match model size")
        out = []
        for m, (w, cdf, _) in zip(self.m.tolist(), self._tables()):
            idx = dec.decode(cdf)
            if idx == 0:
                rel = -w - _eg_decode(dec)
            elif idx == 2 * w:
                rel = w + _eg_decode(dec)
            else:
                rel = idx - w
            out.append(rel + m)
        return np.asarray(out, dtype=np.int64)

    def cost_bits(self, symbols) -> float:
        """Exact model cost of encoding these symbols, in bits.

        This is the cross entropy under the coding tables themselves
        (quantized scales, 16-bit frequencies, escape extensions), so the
        realized stream length exceeds it only by bounded coder overhead.
        """
        s = np.asarray(symbols, dtype=np.int64).ravel()
        if s.size != self.size:
            raise ValueError("symbol count does not match model size")
        rel = s - self.m
        keys = (self.f_int + MU_FRAC_STEPS // 2) * SCALE_LEVELS + self.level
        total = 0.0
        for k in np.unique(keys):
            w, _, bits = _gaussian_table(
                int(k) // SCALE_LEVELS - MU_FRAC_STEPS // 2, int(k) % SCALE_LEVELS
            )
            r = rel[keys == k]
            total += float(bits[np.clip(r + w, 0, 2 * w)].sum())
            for v in r[np.abs(r) >= w]:
                total += _eg_bits(abs(int(v)) - w)
        return total


# ---------------------------------------------------------------------------
# spec-level symbol coding surface


def encode_symbols(symbols, model, sink: BitSink | None = None) -> bytes:
    """Encode an integer tensor under a probability model; returns the bytes.

    With a :class:`FactorizedPrior` the leading axis of ``symbols`` indexes
    channels; with a :class:`GaussianCodingModel` the flattened symbols must
    match the model's element count.
    """
    enc = RangeEncoder(sink)
    arr = np.asarray(symbols)
    if isinstance(model, FactorizedPrior):
        if arr.ndim < 1 or arr.shape[0] != model.num_channels:
            raise ValueError(
                f"expected leading channel axis of {model.num_channels}, got {arr.shape}"
            )
        flat = arr.reshape(arr.shape[0], -1)
        for c in range(flat.shape[0]):
            model.encode_channel(enc, c, flat[c])
    elif isinstance(model, GaussianCodingModel):
        model.encode(enc, arr)
    else:
        raise TypeError(f"unsupported model type {type(model)!r}")
    return enc.finish()


def decode_symbols(source, model, count: int) -> np.ndarray:
    """Decode ``count`` symbols; inverse of :func:`encode_symbols` (flat array)."""
    dec = RangeDecoder(source)
    if isinstance(model, FactorizedPrior):
        if count % model.num_channels:
            raise ValueError("count must be a multiple of the channel count")
        per = count // model.num_channels
        parts = [model.decode_channel(dec, c, per) for c in range(model.num_channels)]
        return np.concatenate(parts)
    if isinstance(model, GaussianCodingModel):
        return model.decode(dec, count)
    raise TypeError(f"unsupported model type {type(model)!r}")


# ---------------------------------------------------------------------------
# rate estimators


def rate_hyper(z_hat, prior: FactorizedPrior) -> float:
    """Mean coding cost of the quantized hyper-latents in bits per element.

    Uses the prior's own 16-bit tables (escape extensions included), so the
    estimate matches the range coder's model cost exactly.
    """
    z = np.asarray(z_hat)
    if z.ndim < 1 or z.shape[0] != prior.num_channels:
        raise ValueError(
            f"expected leading channel axis of {prior.num_channels}, got {z.shape}"
        )
    flat = z.reshape(z.shape[0], -1).astype(np.int64)
    total = 0.0
    for c in range(flat.shape[0]):
        t = prior.tables[c]
        bits = prior._bits[c]
        s = flat[c]
        inside = (s >= t.s_min) & (s <= t.s_max)
        idx = np.clip(s - t.s_min, 0, t.s_max - t.s_min)
        total += float(bits[idx][inside].sum())
        for v in s[~inside]:
            total += prior.symbol_bits(c, int(v))
    return total / flat.size


def rate_latent(y_hat, mu, sigma) -> float:
    """Mean ideal cost of the quantized latents under N(mu, sigma), bits/element.

    This is the exact discretized-Gaussian cross entropy (no table
    quantisation); the coder's realized cost exceeds it only by the bounded
    coder overhead.
    """
    y = np.asarray(y_hat, dtype=np.float64).ravel()
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sig = np.asarray(sigma, dtype=np.float64).ravel()
    if not (y.size == mu.size == sig.size):
        raise ValueError("y_hat, mu, sigma must have equal sizes")
    global _clamp_count
    below = sig < SIGMA_MIN
    if below.any():
        _clamp_count += int(below.sum())
        sig = np.maximum(sig, SIGMA_MIN)
    p = ndtr((y + 0.5 - mu) / sig) - ndtr((y - 0.5 - mu) / sig)
    p = np.maximum(p, 2.0**-60)
    return float(-np.log2(p).mean())
