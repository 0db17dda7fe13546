"""Writer for the codec's binary weight-file format.

Implements the layout in the codec repo's docs/formats.md: little-endian,
magic ``FPMW`` version 1, 14 layer records in analysis/synthesis/
hyper-analysis/hyper-synthesis order, per-channel prior CDF tables, trailing
CRC32.  Conv kernels serialize as (out, in, k, k), transposed convs in
torch's native (in, out, k, k).
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
from torch import nn

from .model import LEAKY_SLOPE, HyperpriorAutoencoder
from .prior import LogisticFactorizedPrior, export_prior_tables

MAGIC = b"FPMW"
VERSION = 1
VARIANT_FINGER = 0


def _layer_record(layer: nn.Module) -> bytes:
    weight = layer.weight.detach().cpu().numpy().astype("<f4")
    bias = layer.bias.detach().cpu().numpy().astype("<f4")
    if isinstance(layer, nn.ConvTranspose2d):
        kind = 1
        outpad = layer.output_padding[0]
    else:
        kind = 0
        outpad = 0
    d0, d1, k, _ = weight.shape
    head = struct.pack(
        "<BBBBHHH",
        kind,
        layer.stride[0],
        layer.padding[0],
        outpad,
        d0,
        d1,
        k,
    )
    return head + weight.tobytes() + bias.tobytes()


def serialize_weights(
    model: HyperpriorAutoencoder,
    prior: LogisticFactorizedPrior,
    lambda_tag: float,
) -> bytes:
    convs = []
    for stack in (model.analysis, model.synthesis, model.hyper_analysis, model.hyper_synthesis):
        convs.extend(m for m in stack if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)))
    assert len(convs) == 14
    out = bytearray()
    out += MAGIC
    out += struct.pack(
        "<IBHHffI",
        VERSION,
        VARIANT_FINGER,
        model.n_latent,
        model.n_hyper,
        lambda_tag,
        LEAKY_SLOPE,
        len(convs),
    )
    for layer in convs:
        out += _layer_record(layer)
    tables = export_prior_tables(prior)
    out += struct.pack("<H", len(tables))
    for s_min, s_max, cdf in tables:
        out += struct.pack("<hhH", s_min, s_max, len(cdf))
        out += np.asarray(cdf, dtype="<u4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def export_weights(
    model: HyperpriorAutoencoder,
    prior: LogisticFactorizedPrior,
    lambda_tag: float,
    path,
) -> Path:
    """Atomic write (temp file + rename) of the weight file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = serialize_weights(model, prior, lambda_tag)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return path
