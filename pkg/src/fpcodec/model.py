"""Network definition for the hyperprior codec and its portable weight file.

Four transforms with fixed geometry derived from the channel counts (N, M):

* analysis: four stride-2 5x5 convs (16x total downsampling), LeakyReLU between
* synthesis: the mirrored stride-2 5x5 transposed convs, output clamped to [0, 1]
* hyper-analysis: 3x3 stride-1 conv then two stride-2 5x5 convs (further 4x)
* hyper-synthesis: the mirror, final layer emitting 2N channels split into
  (mu, sigma); sigma is exp()-parameterised and floored at SIGMA_MIN

Weight files are little-endian binary with a trailing CRC32; the exact layout
lives in docs/formats.md and is shared with the trainer.
"""

from __future__ import annotations

import hashlib
import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .entropy import (
    SIGMA_MIN,
    ChannelTable,
    FactorizedPrior,
    gaussian_channel_table,
)
from .tensor import ShapeError, conv2d, conv_transpose2d, leaky_relu

__all__ = [
    "MAGIC",
    "VERSION",
    "VARIANT_FINGER",
    "VARIANT_RGB",
    "DEFAULT_N",
    "DEFAULT_M",
    "DEFAULT_LEAKY_SLOPE",
    "LAMBDA_GRID",
    "LayerSpec",
    "LayerParams",
    "ModelWeights",
    "WeightFormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedWeightsError",
    "InconsistentShapeError",
    "transform_specs",
    "analysis",
    "synthesis",
    "hyper_analysis",
    "hyper_synthesis",
    "save_weights",
    "load_weights",
    "make_test_weights",
]

log = logging.getLogger(__name__)

MAGIC = b"FPMW"
VERSION = 1

VARIANT_FINGER = "finger_msh"
VARIANT_RGB = "msh_rgb"
_VARIANT_CODES = {VARIANT_FINGER: 0, VARIANT_RGB: 1}
_CODE_VARIANTS = {v: k for k, v in _VARIANT_CODES.items()}

DEFAULT_N = 128
DEFAULT_M = 192
DEFAULT_LEAKY_SLOPE = 0.01

# trade-off tags the trainer sweeps; 0.0 marks untagged weights
LAMBDA_GRID = (0.0018, 0.0035, 0.0067, 0.013, 0.025, 0.0483, 0.0932)


class WeightFormatError(ValueError):
    """Base class for weight-file problems."""


class BadMagicError(WeightFormatError):
    pass


class VersionMismatchError(WeightFormatError):
    pass


class TruncatedWeightsError(WeightFormatError):
    pass


class InconsistentShapeError(WeightFormatError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one weighted layer.

    ``dim0``/``dim1`` are the leading kernel axes: (out, in) for convs and
    (in, out) for transposed convs, matching the on-disk array layout.
    """

    kind: str  # "conv" | "conv_transpose"
    dim0: int
    dim1: int
    k: int
    stride: int
    padding: int
    output_padding: int = 0

    @property
    def out_channels(self) -> int:
        return self.dim0 if self.kind == "conv" else self.dim1

    @property
    def kernel_shape(self) -> tuple:
        return (self.dim0, self.dim1, self.k, self.k)


def transform_specs(n_latent: int, n_hyper: int, in_channels: int = 1) -> dict:
    """Layer lists for the four transforms given channel counts (N, M)."""
    n, m = n_latent, n_hyper
    conv = lambda a, b, k, s, p: LayerSpec("conv", a, b, k, s, p)
    deconv = lambda a, b, k, s, p, op: LayerSpec("conv_transpose", a, b, k, s, p, op)
    return {
        "analysis": [
            conv(n, in_channels, 5, 2, 2),
            conv(n, n, 5, 2, 2),
            conv(n, n, 5, 2, 2),
            conv(n, n, 5, 2, 2),
        ],
        "synthesis": [
            deconv(n, n, 5, 2, 2, 1),
            deconv(n, n, 5, 2, 2, 1),
            deconv(n, n, 5, 2, 2, 1),
            deconv(n, in_channels, 5, 2, 2, 1),
        ],
        "hyper_analysis": [
            conv(m, n, 3, 1, 1),
            conv(m, m, 5, 2, 2),
            conv(m, m, 5, 2, 2),
        ],
        "hyper_synthesis": [
            deconv(m, m, 5, 2, 2, 1),
            deconv(m, m, 5, 2, 2, 1),
            conv(2 * n, m, 3, 1, 1),
        ],
    }


_TRANSFORM_ORDER = ("analysis", "synthesis", "hyper_analysis", "hyper_synthesis")


@dataclass
class LayerParams:
    spec: LayerSpec
    kernel: np.ndarray  # float32, spec.kernel_shape
    bias: np.ndarray  # float32, (out_channels,)


@dataclass
class ModelWeights:
    """Loaded transform parameters plus the factorized-prior tables.

    Treated as immutable once constructed; forward passes over a shared
    instance are safe to run concurrently.
    """

    variant: str
    n_latent: int
    n_hyper: int
    lambda_tag: float
    leaky_slope: float
    layers: dict  # transform name -> list[LayerParams]
    prior: FactorizedPrior
    in_channels: int = 1
    _cached_bytes: bytes | None = field(default=None, repr=False, compare=False)

    def validate(self) -> None:
        specs = transform_specs(self.n_latent, self.n_hyper, self.in_channels)
        for name in _TRANSFORM_ORDER:
            want = specs[name]
            got = self.layers.get(name, [])
            if len(got) != len(want):
                raise InconsistentShapeError(
                    f"{name}: expected {len(want)} layers, found {len(got)}"
                )
            for i, (lp, spec) in enumerate(zip(got, want)):
                if lp.spec != spec:
                    raise InconsistentShapeError(f"{name}[{i}]: geometry {lp.spec} != {spec}")
                if lp.kernel.shape != spec.kernel_shape:
                    raise InconsistentShapeError(
                        f"{name}[{i}]: kernel shape {lp.kernel.shape} != {spec.kernel_shape}"
                    )
                if lp.bias.shape != (spec.out_channels,):
                    raise InconsistentShapeError(
                        f"{name}[{i}]: bias shape {lp.bias.shape} != ({spec.out_channels},)"
                    )
        if self.prior.num_channels != self.n_hyper:
            raise InconsistentShapeError(
                f"prior has {self.prior.num_channels} channels, expected {self.n_hyper}"
            )
        if self.lambda_tag and not any(
            abs(self.lambda_tag - g) < 1e-6 for g in LAMBDA_GRID
        ):
            log.warning(
                "lambda_tag %g is outside the standard grid %s",
                self.lambda_tag,
                LAMBDA_GRID,
            )

    def to_bytes(self) -> bytes:
        if self._cached_bytes is None:
            object.__setattr__(self, "_cached_bytes", save_weights(self))
        return self._cached_bytes

    @property
    def model_id(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]

    @property
    def model_hash(self) -> int:
        return int.from_bytes(hashlib.sha256(self.to_bytes()).digest()[:8], "little")


# ---------------------------------------------------------------------------
# forward passes


def _run_stack(x: np.ndarray, layers: list, slope: float) -> np.ndarray:
    out = x
    last = len(layers) - 1
    for i, lp in enumerate(layers):
        s = lp.spec
        if s.kind == "conv":
            out = conv2d(out, lp.kernel, lp.bias, stride=s.stride, padding=s.padding)
        else:
            out = conv_transpose2d(
                out,
                lp.kernel,
                lp.bias,
                stride=s.stride,
                padding=s.padding,
                output_padding=s.output_padding,
            )
        if i != last:
            out = leaky_relu(out, slope)
    return out


def analysis(x: np.ndarray, w: ModelWeights) -> np.ndarray:
    """Image tensor (C, H, W) in [0,1] with H, W multiples of 64 -> latents y."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != w.in_channels:
        raise ShapeError(f"expected ({w.in_channels}, H, W) input, got {x.shape}")
    _, h, wd = x.shape
    if h % 64 or wd % 64:
        raise ShapeError(
            f"input {h}x{wd} is not a multiple of 64; center-crop or pad first "
            "(see fpcodec.data.center_crop)"
        )
    return _run_stack(x, w.layers["analysis"], w.leaky_slope)


def synthesis(y_hat: np.ndarray, w: ModelWeights) -> np.ndarray:
    """Latents (N, h, w) -> image tensor in [0, 1] (clamped)."""
    y_hat = np.asarray(y_hat, dtype=np.float32)
    if y_hat.ndim != 3 or y_hat.shape[0] != w.n_latent:
        raise ShapeError(f"expected ({w.n_latent}, h, w) latents, got {y_hat.shape}")
    out = _run_stack(y_hat, w.layers["synthesis"], w.leaky_slope)
    return np.clip(out, 0.0, 1.0)


def hyper_analysis(y: np.ndarray, w: ModelWeights) -> np.ndarray:
    y = np.asarray(y, dtype=np.float32)
    if y.ndim != 3 or y.shape[0] != w.n_latent:
        raise ShapeError(f"expected ({w.n_latent}, h, w) latents, got {y.shape}")
    return _run_stack(y, w.layers["hyper_analysis"], w.leaky_slope)


def hyper_synthesis(z_hat: np.ndarray, w: ModelWeights) -> tuple:
    """Integer-valued hyper-latents -> (mu, sigma), each shaped like y."""
    z_hat = np.asarray(z_hat, dtype=np.float32)
    if z_hat.ndim != 3 or z_hat.shape[0] != w.n_hyper:
        raise ShapeError(f"expected ({w.n_hyper}, h, w) hyper-latents, got {z_hat.shape}")
    out = _run_stack(z_hat, w.layers["hyper_synthesis"], w.leaky_slope)
    n = w.n_latent
    mu = out[:n]
    sigma = np.maximum(np.exp(out[n:]), np.float32(SIGMA_MIN))
    return mu, sigma


# ---------------------------------------------------------------------------
# serialization


def save_weights(w: ModelWeights) -> bytes:
    w.validate()
    out = bytearray()
    out += MAGIC
    out += struct.pack(
        "<IBHHffI",
        VERSION,
        _VARIANT_CODES[w.variant],
        w.n_latent,
        w.n_hyper,
        w.lambda_tag,
        w.leaky_slope,
        sum(len(w.layers[n]) for n in _TRANSFORM_ORDER),
    )
    for name in _TRANSFORM_ORDER:
        for lp in w.layers[name]:
            s = lp.spec
            out += struct.pack(
                "<BBBBHHH",
                0 if s.kind == "conv" else 1,
                s.stride,
                s.padding,
                s.output_padding,
                s.dim0,
                s.dim1,
                s.k,
            )
            out += np.ascontiguousarray(lp.kernel, dtype="<f4").tobytes()
            out += np.ascontiguousarray(lp.bias, dtype="<f4").tobytes()
    out += struct.pack("<H", w.prior.num_channels)
    for t in w.prior.tables:
        out += struct.pack("<hhH", t.s_min, t.s_max, len(t.cdf))
        out += np.asarray(t.cdf, dtype="<u4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedWeightsError(
                f"weight file ends at byte {len(self.data)}, needed {self.pos + n}"
            )
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(data: bytes) -> ModelWeights:
    """Parse weight-file bytes; save_weights(load_weights(b)) == b."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise BadMagicError("not a weight file (bad magic)")
    if len(data) < 4 + 4:
        raise TruncatedWeightsError("missing header")
    crc_stored = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != crc_stored:
        raise TruncatedWeightsError("CRC mismatch: file corrupt or truncated")
    r = _Reader(data[:-4])
    r.take(4)
    version, variant_code, n, m, lam, slope, layer_count = r.unpack("<IBHHffI")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported weight-file version {version}")
    if variant_code not in _CODE_VARIANTS:
        raise InconsistentShapeError(f"unknown variant code {variant_code}")
    layers = []
    for _ in range(layer_count):
        kind_code, stride, padding, outpad, d0, d1, k = r.unpack("<BBBBHHH")
        kind = "conv" if kind_code == 0 else "conv_transpose"
        spec = LayerSpec(kind, d0, d1, k, stride, padding, outpad)
        kern = np.frombuffer(r.take(4 * d0 * d1 * k * k), dtype="<f4").reshape(
            spec.kernel_shape
        )
        bias = np.frombuffer(r.take(4 * spec.out_channels), dtype="<f4")
        layers.append(LayerParams(spec, kern.copy(), bias.copy()))
    (prior_channels,) = r.unpack("<H")
    tables = []
    for _ in range(prior_channels):
        s_min, s_max, cdf_len = r.unpack("<hhH")
        cdf = np.frombuffer(r.take(4 * cdf_len), dtype="<u4")
        try:
            tables.append(ChannelTable(s_min, s_max, tuple(int(c) for c in cdf)))
        except ValueError as e:
            raise InconsistentShapeError(f"bad prior table: {e}") from e
    if r.pos != len(r.data):
        raise TruncatedWeightsError(f"{len(r.data) - r.pos} trailing bytes after prior")

    variant = _CODE_VARIANTS[variant_code]
    in_ch = 3 if variant == VARIANT_RGB else 1
    counts = [4, 4, 3, 3]
    if layer_count != sum(counts):
        raise InconsistentShapeError(f"expected 14 layers, file has {layer_count}")
    grouped = {}
    i = 0
    for name, c in zip(_TRANSFORM_ORDER, counts):
        grouped[name] = layers[i : i + c]
        i += c
    w = ModelWeights(
        variant=variant,
        n_latent=n,
        n_hyper=m,
        lambda_tag=lam,
        leaky_slope=slope,
        layers=grouped,
        prior=FactorizedPrior(tables),
        in_channels=in_ch,
        _cached_bytes=data,
    )
    w.validate()
    return w


# ---------------------------------------------------------------------------
# deterministic desk-scale test weights


_LCG_A = 1664525
_LCG_C = 1013904223
_LCG_MASK = 0xFFFFFFFF


def _lcg_states(count: int, seed: int) -> np.ndarray:
    """First ``count`` states of x' = (1664525 x + 1013904223) mod 2^32.

    Jump-doubling keeps this vectorised: x_{i+n} = a^n x_i + c (a^{n-1}+...+1).
    Bit-identical to the scalar recurrence (verified in tests).
    """
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    states = np.empty(count, dtype=np.uint64)
    states[0] = (seed * _LCG_A + _LCG_C) & _LCG_MASK
    n = 1
    jump_a, jump_c = _LCG_A, _LCG_C
    while n < count:
        take = min(n, count - n)
        states[n : n + take] = (jump_a * states[:take] + jump_c) & _LCG_MASK
        jump_c = (jump_a * jump_c + jump_c) & _LCG_MASK
        jump_a = (jump_a * jump_a) & _LCG_MASK
        n += take
    return states


def _lcg_floats(count: int, seed: int) -> np.ndarray:
    """Linear-congruential values in [-0.05, 0.05]; platform independent."""
    states = _lcg_states(count, seed)
    return (states.astype(np.float64) / 2**32 * 0.1 - 0.05).astype(np.float32)


def make_test_weights(
    n_latent: int = DEFAULT_N,
    n_hyper: int = DEFAULT_M,
    seed: int = 0,
    lambda_tag: float = 0.0,
    variant: str = VARIANT_FINGER,
    prior_sigma: float = 2.0,
) -> ModelWeights:
    """Deterministic pseudo-random weights so the suite runs without training.

    The prior defaults to a zero-mean Gaussian table per hyper channel; the
    escape path keeps coding lossless whatever the latent statistics are.
    """
    in_ch = 3 if variant == VARIANT_RGB else 1
    specs = transform_specs(n_latent, n_hyper, in_ch)
    total = sum(
        int(np.prod(s.kernel_shape)) + s.out_channels
        for name in _TRANSFORM_ORDER
        for s in specs[name]
    )
    stream = _lcg_floats(total, seed)
    cursor = [0]

    def draw(count):
        vals = stream[cursor[0] : cursor[0] + count]
        cursor[0] += count
        return vals.copy()

    layers = {}
    for name in _TRANSFORM_ORDER:
        lst = []
        for spec in specs[name]:
            kern = draw(int(np.prod(spec.kernel_shape))).reshape(spec.kernel_shape)
            bias = draw(spec.out_channels)
            lst.append(LayerParams(spec, kern, bias))
        layers[name] = lst
    table = gaussian_channel_table(-64, 64, mu=0.0, sigma=prior_sigma)
    prior = FactorizedPrior([table] * n_hyper)
    w = ModelWeights(
        variant=variant,
        n_latent=n_latent,
        n_hyper=n_hyper,
        lambda_tag=lambda_tag,
        leaky_slope=DEFAULT_LEAKY_SLOPE,
        layers=layers,
        prior=prior,
        in_channels=in_ch,
    )
    w.validate()
    return w
