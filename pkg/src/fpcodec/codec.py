"""End-to-end hyperprior codec: image -> self-describing bitstream -> image.

Encoding: the image runs through the analysis transform, the latents through
the hyper-analysis; the rounded hyper-latents are coded under the factorized
prior, fed back through the hyper-synthesis to get (mu, sigma), and the
rounded latents are coded under those Gaussians.  The latents are rounded
directly (not mean-centred) and the Gaussian is evaluated at the integers.

Decoding mirrors this exactly, so the decoder's reconstruction is
bit-identical to the one the encoder can compute locally.

Container layout (magic ``FPBS``) is documented in docs/formats.md.  Each
segment carries a CRC32 so corruption is detected rather than silently
mis-decoded.  Total rate in bpp is ``8 * total_bytes / (H * W)``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .entropy import (
    BitSource,
    DecodeError,
    GaussianCodingModel,
    decode_symbols,
    encode_symbols,
    quantize,
    rate_hyper,
    rate_latent,
)
from .model import ModelWeights, analysis, hyper_analysis, hyper_synthesis, synthesis
from .tensor import ShapeError

__all__ = [
    "BITSTREAM_MAGIC",
    "BITSTREAM_VERSION",
    "CODEC_HYPERPRIOR",
    "CODEC_WAVELET",
    "Bitstream",
    "RDLoss",
    "EncodeResult",
    "encode",
    "decode",
    "reconstruct",
    "rd_loss",
    "image_to_tensor",
    "tensor_to_image",
]

BITSTREAM_MAGIC = b"FPBS"
BITSTREAM_VERSION = 1
CODEC_HYPERPRIOR = 0
CODEC_WAVELET = 1


@dataclass
class Bitstream:
    """Self-describing compressed image: header fields plus coded segments."""

    codec: int
    height: int
    width: int
    model_hash: int = 0
    n_latent: int = 0
    n_hyper: int = 0
    extra: bytes = b""  # codec-specific header block (wavelet params live here)
    segments: tuple = ()

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += BITSTREAM_MAGIC
        out += struct.pack(
            "<IBIIQHHH",
            BITSTREAM_VERSION,
            self.codec,
            self.height,
            self.width,
            self.model_hash,
            self.n_latent,
            self.n_hyper,
            len(self.extra),
        )
        out += self.extra
        out += struct.pack("<B", len(self.segments))
        for seg in self.segments:
            out += struct.pack("<II", len(seg), zlib.crc32(seg))
            out += seg
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < 4 or data[:4] != BITSTREAM_MAGIC:
            raise DecodeError("not a bitstream (bad magic)")
        try:
            head = struct.calcsize("<IBIIQHHH")
            version, codec, h, w, mh, n, m, extra_len = struct.unpack(
                "<IBIIQHHH", data[4 : 4 + head]
            )
            pos = 4 + head
            if version != BITSTREAM_VERSION:
                raise DecodeError(f"unsupported bitstream version {version}")
            extra = data[pos : pos + extra_len]
            if len(extra) != extra_len:
                raise DecodeError("truncated bitstream header")
            pos += extra_len
            (nseg,) = struct.unpack("<B", data[pos : pos + 1])
            pos += 1
            segments = []
            for _ in range(nseg):
                length, crc = struct.unpack("<II", data[pos : pos + 8])
                pos += 8
                seg = data[pos : pos + length]
                if len(seg) != length:
                    raise DecodeError("truncated bitstream segment")
                if zlib.crc32(seg) != crc:
                    raise DecodeError("segment CRC mismatch: stream corrupt")
                pos += length
                segments.append(seg)
            if pos != len(data):
                raise DecodeError(f"{len(data) - pos} trailing bytes after segments")
        except struct.error as e:
            raise DecodeError(f"truncated bitstream: {e}") from e
        return cls(codec, h, w, mh, n, m, extra, tuple(segments))

    @property
    def total_bytes(self) -> int:
        return len(self.to_bytes())

    @property
    def bpp(self) -> float:
        return 8.0 * self.total_bytes / (self.height * self.width)


@dataclass
class RDLoss:
    """Inference-mode rate-distortion loss with true (rounded) quantization."""

    lam: float
    distortion: float  # raw MSE over [0, 1]-scaled pixels
    rate_y: float  # bits per latent element
    rate_z: float  # bits per hyper element
    scale: float = 1.0  # distortion scale; trainers conventionally use 255**2

    @property
    def total(self) -> float:
        return self.lam * self.distortion * self.scale + self.rate_y + self.rate_z


@dataclass
class EncodeResult:
    bitstream: Bitstream
    recon: np.ndarray  # uint8, encoder-side reconstruction
    rate_y: float  # ideal bits/element (exact discretized Gaussian)
    rate_z: float  # bits/element under the prior tables
    coded_bits_y: float  # model cost as coded (quantized-scale tables)
    coded_bits_z: float
    y_elements: int
    z_elements: int


def image_to_tensor(img: np.ndarray) -> np.ndarray:
    """Grayscale uint8 (H, W) image -> (1, H, W) float32 scaled to [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ShapeError(f"expected uint8 pixels, got {img.dtype}")
    return (img.astype(np.float32) / 255.0)[None]


def tensor_to_image(x: np.ndarray) -> np.ndarray:
    """(1, H, W) float tensor in [0, 1] -> uint8 (H, W) image."""
    return np.clip(np.round(np.asarray(x)[0] * 255.0), 0, 255).astype(np.uint8)


def _forward(img: np.ndarray, w: ModelWeights):
    x = image_to_tensor(img)
    y = analysis(x, w)
    z = hyper_analysis(y, w)
    z_hat = quantize(z)
    mu, sigma = hyper_synthesis(z_hat.astype(np.float32), w)
    y_hat = quantize(y)
    return x, y, z, z_hat, mu, sigma, y_hat


def encode_full(img: np.ndarray, w: ModelWeights) -> EncodeResult:
    """Encode and also return the encoder-side reconstruction and rates."""
    x, y, z, z_hat, mu, sigma, y_hat = _forward(img, w)
    z_int = z_hat.astype(np.int64)
    seg_z = encode_symbols(z_int, w.prior)
    gmodel = GaussianCodingModel(mu, sigma)
    seg_y = encode_symbols(y_hat.astype(np.int64), gmodel)
    bs = Bitstream(
        codec=CODEC_HYPERPRIOR,
        height=img.shape[0],
        width=img.shape[1],
        model_hash=w.model_hash,
        n_latent=w.n_latent,
        n_hyper=w.n_hyper,
        segments=(seg_z, seg_y),
    )
    recon = tensor_to_image(synthesis(y_hat.astype(np.float32), w))
    return EncodeResult(
        bitstream=bs,
        recon=recon,
        rate_y=rate_latent(y_hat, mu, sigma),
        rate_z=rate_hyper(z_int, w.prior),
        coded_bits_y=gmodel.cost_bits(y_hat.astype(np.int64)),
        coded_bits_z=rate_hyper(z_int, w.prior) * z_int.size,
        y_elements=y_hat.size,
        z_elements=z_int.size,
    )


def encode(img: np.ndarray, w: ModelWeights) -> Bitstream:
    """Grayscale uint8 image (H, W multiples of 64) -> bitstream."""
    return encode_full(img, w).bitstream


def decode(bs: Bitstream, w: ModelWeights) -> np.ndarray:
    """Bitstream -> uint8 image; requires the weights it was encoded with."""
    if bs.codec != CODEC_HYPERPRIOR:
        raise DecodeError(f"bitstream codec id {bs.codec} is not the hyperprior codec")
    if bs.model_hash != w.model_hash:
        raise DecodeError(
            f"bitstream was produced by model {bs.model_hash:016x}, "
            f"loaded weights are {w.model_hash:016x}"
        )
    if len(bs.segments) != 2:
        raise DecodeError(f"expected 2 segments, found {len(bs.segments)}")
    zh, zw = bs.height // 64, bs.width // 64
    yh, yw = bs.height // 16, bs.width // 16
    z_flat = decode_symbols(BitSource(bs.segments[0]), w.prior, w.n_hyper * zh * zw)
    z_hat = z_flat.reshape(w.n_hyper, zh, zw).astype(np.float32)
    mu, sigma = hyper_synthesis(z_hat, w)
    gmodel = GaussianCodingModel(mu, sigma)
    y_flat = decode_symbols(BitSource(bs.segments[1]), gmodel, w.n_latent * yh * yw)
    y_hat = y_flat.reshape(w.n_latent, yh, yw).astype(np.float32)
    return tensor_to_image(synthesis(y_hat, w))


def reconstruct(img: np.ndarray, w: ModelWeights) -> np.ndarray:
    """Encoder-side reconstruction; equals decode(encode(img, w), w) bit-exactly."""
    _, _, _, _, _, _, y_hat = _forward(img, w)
    return tensor_to_image(synthesis(y_hat.astype(np.float32), w))


def rd_loss(img: np.ndarray, w: ModelWeights, lam: float, scale: float = 1.0) -> RDLoss:
    """One true-quantization forward pass composed into the RD objective."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    x, y, z, z_hat, mu, sigma, y_hat = _forward(img, w)
    x_rec = synthesis(y_hat.astype(np.float32), w)
    mse = float(np.mean((x.astype(np.float64) - x_rec.astype(np.float64)) ** 2))
    return RDLoss(
        lam=lam,
        distortion=mse,
        rate_y=rate_latent(y_hat, mu, sigma),
        rate_z=rate_hyper(z_hat.astype(np.int64), w.prior),
        scale=scale,
    )
