"""Crossbar matrix-vector products with device-variation noise.

Cells hold unsigned slice values; signed weights map onto a positive and
a negative column set that are converted separately and subtracted after
the ADC.  Device variation multiplies every cell by N(1, sigma/mu); with
a pinned seed the draw is frozen per (seed, key), which models one
programmed chip instance reused across forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    """Noise-source switches for crossbar inference."""

    sigma_over_mu: float = 0.20
    rng_seed: int | None = None
    quantization: bool = True
    variation: bool = True

    def __post_init__(self) -> None:
        if self.sigma_over_mu < 0:
            raise ValueError("sigma_over_mu must be >= 0")

    def multipliers(self, shape: tuple[int, ...],
                    key: tuple[int, ...] = (0,)) -> np.ndarray | None:
        """Per-cell conductance multipliers, or None when variation is off.

        With a seed set, the same (seed, key) always yields the same
        draw; without one, every call resamples.
        """
        if not self.variation or self.sigma_over_mu == 0:
            return None
        if self.rng_seed is None:
            rng = np.random.default_rng()
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence(self.rng_seed, spawn_key=tuple(key)))
        return 1.0 + self.sigma_over_mu * rng.standard_normal(shape)


#: Noiseless, quantization-free spec for ideal-path checks.
IDEAL_NOISE = NoiseSpec(sigma_over_mu=0.0, rng_seed=0,
                        quantization=False, variation=False)


def chunk_rows(n_rows: int, xbar_size: int) -> list[slice]:
    if xbar_size < 1:
        raise ValueError("xbar_size must be >= 1")
    return [slice(r, min(r + xbar_size, n_rows))
            for r in range(0, n_rows, xbar_size)]


def crossbar_matvec(weight_cells: np.ndarray, input_plane: np.ndarray,
                    noise: NoiseSpec, xbar_size: int,
                    key: tuple[int, ...] = (0,)) -> np.ndarray:
    """Per-chunk analog column sums of one cell matrix against a bit plane.

    ``weight_cells`` is (rows, cols) of unsigned slice values,
    ``input_plane`` is (batch, rows) binary.  Rows are split into
    crossbar-sized chunks; the result is (chunks, batch, cols).  With
    variation disabled the sums are exact integer dot products.
    """
    weight_cells = np.asarray(weight_cells, dtype=float)
    input_plane = np.asarray(input_plane, dtype=float)
    if input_plane.ndim == 1:
        input_plane = input_plane[None, :]
    if input_plane.shape[1] != weight_cells.shape[0]:
        raise ValueError(f"plane width {input_plane.shape[1]} != weight rows "
                         f"{weight_cells.shape[0]}")
    mult = noise.multipliers(weight_cells.shape, key)
    effective = weight_cells if mult is None else weight_cells * mult
    chunks = chunk_rows(weight_cells.shape[0], xbar_size)
    out = np.empty((len(chunks), input_plane.shape[0], weight_cells.shape[1]))
    for c, sl in enumerate(chunks):
        out[c] = input_plane[:, sl] @ effective[sl]
    return out


@dataclass
class CellArrays:
    """Signed weight matrix prepared for the crossbar path."""

    pos_effective: list[np.ndarray] = field(default_factory=list)
    neg_effective: list[np.ndarray] = field(default_factory=list)
    scale: float = 1.0
    slice_bits: int = 4

    @property
    def n_slices(self) -> int:
        return len(self.pos_effective)


def prepare_cells(weight_matrix: np.ndarray, noise: NoiseSpec,
                  weight_bits: int, slice_bits: int,
                  key: tuple[int, ...] = (0,)) -> CellArrays:
    """Quantize, slice and (optionally) perturb a (rows, cols) weight matrix.

    The variation multiplier is drawn once per slice and sign polarity and
    reused for every bit plane and row chunk, matching cells that are
    programmed once per inference run.
    """
    from .quantize import quantize_slice_weights

    sliced = quantize_slice_weights(weight_matrix, weight_bits, slice_bits)
    pos_mask = (sliced.sign > 0)
    neg_mask = (sliced.sign < 0)
    arrays = CellArrays(scale=sliced.scale, slice_bits=slice_bits)
    for s, sl in enumerate(sliced.slices):
        pos = np.where(pos_mask, sl, 0).astype(float)
        neg = np.where(neg_mask, sl, 0).astype(float)
        mp = noise.multipliers(pos.shape, key + (s, 0))
        mn = noise.multipliers(neg.shape, key + (s, 1))
        arrays.pos_effective.append(pos if mp is None else pos * mp)
        arrays.neg_effective.append(neg if mn is None else neg * mn)
    return arrays
