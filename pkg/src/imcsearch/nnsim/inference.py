"""Crossbar-aware noisy inference and batchnorm adaptation.

Every conv/dense layer runs through the full hardware path: input
bit-serialization, positive/negative cell arrays per weight slice,
row-chunked analog column sums with device variation, ADC partial-sum
quantization, and shift-and-add recombination across slices, bit planes
and row chunks.  Everything else (batchnorm, ReLU, pooling) stays ideal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossbar import CellArrays, NoiseSpec, chunk_rows, prepare_cells
from .network import BatchNorm, Conv2D, Dense, RefNet, TensorBatch, im2col
from .quantize import adc_dequantize, adc_quantize, quantize_inputs


@dataclass(frozen=True)
class AdcRange:
    """Full-scale policy for the partial-sum ADC.

    ``worst_case`` spans xbar_size * (2^slice_bits - 1), the largest sum a
    fully-on column can produce; ``calibrated`` uses the largest ideal
    partial sum observed on the evaluated batch (per layer), which keeps
    quantization steps useful on small fixtures.
    """

    mode: str = "worst_case"  # worst_case | calibrated

    def __post_init__(self) -> None:
        if self.mode not in ("worst_case", "calibrated"):
            raise ValueError(f"unknown ADC range mode {self.mode!r}")


def _noisy_matmul(cells: CellArrays, ap: int, ip: int,
                  in_codes: np.ndarray, noise: NoiseSpec,
                  xbar_size: int, full_range: float) -> np.ndarray:
    """Bit-serial sliced matmul of integer input codes against cell arrays.

    ``in_codes`` is the (batch, rows) integer code matrix.  Returns
    integer-valued accumulator sums (before weight/input scales).
    """
    n, rows = in_codes.shape
    cols = cells.pos_effective[0].shape[1]
    chunks = chunk_rows(rows, xbar_size)
    acc = np.zeros((n, cols))
    for b in range(ip):
        plane = ((in_codes >> b) & 1).astype(float)
        for s in range(cells.n_slices):
            for sl in chunks:
                pos = plane[:, sl] @ cells.pos_effective[s][sl]
                neg = plane[:, sl] @ cells.neg_effective[s][sl]
                if noise.quantization:
                    pos = adc_dequantize(adc_quantize(pos, ap, full_range),
                                         ap, full_range)
                    neg = adc_dequantize(adc_quantize(neg, ap, full_range),
                                         ap, full_range)
                acc += (pos - neg) * (2 ** (cells.slice_bits * s)) * (2 ** b)
    return acc


def _layer_full_range(cells: CellArrays, codes: np.ndarray, xbar_size: int,
                      slice_bits: int, adc_range: AdcRange) -> float:
    if adc_range.mode == "worst_case":
        return float(xbar_size * (2 ** slice_bits - 1))
    # calibrated: largest ideal (noise-free) chunk partial sum on this batch
    chunks = chunk_rows(codes.shape[1], xbar_size)
    peak = 0.0
    ones = (codes > 0).astype(float)
    for s in range(cells.n_slices):
        for sl in chunks:
            peak = max(peak, float((ones[:, sl] @ cells.pos_effective[s][sl]).max(initial=0.0)),
                       float((ones[:, sl] @ cells.neg_effective[s][sl]).max(initial=0.0)))
    return max(peak, 1.0)


def _quantized_layer_output(layer: Conv2D | Dense, x: np.ndarray, ap: int,
                            ip: int, noise: NoiseSpec, platform,
                            adc_range: AdcRange, key: tuple[int, ...]):
    """Run one conv/dense layer through the crossbar path."""
    if isinstance(layer, Conv2D):
        cols, (oh, ow) = im2col(x, layer.kernel, layer.stride, layer.pad)
        w = layer.weight_matrix()
    else:
        cols, (oh, ow) = x, (1, 1)
        w = layer.weight
    cells = prepare_cells(w, noise, platform.weight_bits,
                          platform.weight_slice_bits, key)
    codes, in_scale = quantize_inputs(np.maximum(cols, 0.0), ip)
    full_range = _layer_full_range(cells, codes, platform.xbar_size,
                                   platform.weight_slice_bits, adc_range)
    acc = _noisy_matmul(cells, ap, ip, codes, noise,
                        platform.xbar_size, full_range)
    out = acc * cells.scale * in_scale
    if isinstance(layer, Dense):
        return out + layer.bias
    n = x.shape[0]
    return out.reshape(n, oh, ow, layer.c_out).transpose(0, 3, 1, 2)


def noisy_forward(net: RefNet, batch: TensorBatch | np.ndarray,
                  plan: list[tuple[int, int]], noise: NoiseSpec,
                  platform, adc_range: AdcRange = AdcRange()) -> np.ndarray:
    """Forward pass with per-layer (ap, ip) quantization and device noise.

    ``plan`` holds one (ap, ip) pair per conv/dense layer, in network
    order.  The raw input is clipped at zero before bit-serialization
    (fixture data is non-negative by construction).
    """
    x = batch.data if isinstance(batch, TensorBatch) else np.asarray(batch, float)
    q_layers = net.quantizable()
    if len(plan) != len(q_layers):
        raise ValueError(f"plan has {len(plan)} entries for {len(q_layers)} "
                         "quantizable layers")
    qi = 0
    for layer in net.layers:
        if isinstance(layer, (Conv2D, Dense)):
            ap, ip = plan[qi]
            x = _quantized_layer_output(layer, x, ap, ip, noise, platform,
                                        adc_range, key=(qi,))
            qi += 1
        else:
            x = layer.forward(x, train=False)
    return x


def bn_adapt(net: RefNet, batches: list[TensorBatch], plan: list[tuple[int, int]],
             noise: NoiseSpec, platform, momentum: float = 0.1,
             adc_range: AdcRange = AdcRange()) -> RefNet:
    """Recompute batchnorm running statistics under the noisy forward path.

    Returns an adapted copy; weights and every non-batchnorm parameter are
    untouched.  During adaptation each batchnorm normalizes with its batch
    statistics (the usual training behavior) while the running mean and
    variance blend in with ``momentum``.
    """
    if not batches:
        raise ValueError("bn_adapt needs at least one batch")
    adapted = net.clone()
    q_layers = adapted.quantizable()
    if len(plan) != len(q_layers):
        raise ValueError(f"plan has {len(plan)} entries for {len(q_layers)} "
                         "quantizable layers")
    for batch in batches:
        x = batch.data if isinstance(batch, TensorBatch) else np.asarray(batch, float)
        qi = 0
        for layer in adapted.layers:
            if isinstance(layer, (Conv2D, Dense)):
                ap, ip = plan[qi]
                x = _quantized_layer_output(layer, x, ap, ip, noise, platform,
                                            adc_range, key=(qi,))
                qi += 1
            elif isinstance(layer, BatchNorm):
                mean, var = layer.batch_stats(x)
                layer.update_running(mean, var, momentum)
                x = layer.normalize(x, mean, var)
            else:
                x = layer.forward(x, train=False)
    return adapted
