"""Analytical cost model for candidate networks on the tiled crossbar platform.

Maps every layer onto crossbars, PEs and tiles, then accumulates area,
delay and energy per hardware component.  All functions are pure and
deterministic; the only inputs are the candidate assignment, the layer
geometry and the platform's unit-cost calibration table.

Conventions:
  * area in mm^2, delay in ns, energy in pJ
  * one ADC serves xbar_size/cs columns; conversions within a round run
    in parallel across ADCs and serially across the cs mux positions
  * an 8-bit weight on 4-bit devices occupies weight_bits/slice_bits
    physical columns, folded into the column term of the tile count
  * layer delays add up (no inter-layer pipelining)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .designspace import (
    ADCType,
    CandidateModel,
    DesignSpace,
    LayerChoice,
    LayerShape,
    PlatformParams,
    validate_candidate,
)

#: Breakdown keys, in reporting order.
COMPONENTS = ("XbarArray", "ADC", "Mux", "SwitchMatrix", "Accumulators",
              "Buffers", "HTree")


class InvalidModelError(ValueError):
    """Raised when a cost operation receives a model that fails validation."""


@dataclass(frozen=True)
class ADCProfile:
    """Behavioral cost of one analog-to-digital converter instance."""

    area: float  # mm^2
    energy_per_conversion: float  # pJ
    latency_per_conversion: float  # ns
    comparator_count: int


def adc_profile(at: ADCType, ap: int, platform: PlatformParams) -> ADCProfile:
    """Area/energy/latency of a single ADC of type ``at`` at ``ap`` bits.

    Flash: 2^ap - 1 cascaded comparators plus a thermometer encoder;
    converts in one comparator settle.  SAR: one comparator with a
    binary-weighted cap-DAC (2^ap units); resolves one bit per clock.
    """
    if not 1 <= ap <= 8:
        raise ValueError(f"ap must be in [1, 8], got {ap}")
    uc = platform.unit_costs
    cmp_ = uc["comparator"]
    if at is ADCType.FLASH:
        n_cmp = 2 ** ap - 1
        return ADCProfile(
            area=n_cmp * cmp_.area + n_cmp * uc["flash_encoder"].area,
            energy_per_conversion=n_cmp * cmp_.energy,
            latency_per_conversion=cmp_.latency,
            comparator_count=n_cmp,
        )
    sar = uc["sar_logic"]
    return ADCProfile(
        area=cmp_.area + (2 ** ap) * sar.area,
        energy_per_conversion=ap * (cmp_.energy + sar.energy),
        latency_per_conversion=ap * platform.clock_period,
        comparator_count=1,
    )


def tiles_for_layer(cd_in: int, shape: LayerShape, choice: LayerChoice,
                    platform: PlatformParams) -> int:
    """Number of tiles a layer occupies.

    Row chunks hold cd_in * k^2 inputs in groups of xbar_size; column
    chunks hold cd_out * weight_slices outputs in groups of xbar_size.
    Tiles are physical, so the crossbar count rounds up to whole tiles
    (minimum 1).
    """
    x = platform.xbar_size
    rows = cd_in * shape.kernel ** 2
    cols = choice.cd_out * platform.weight_slices
    xbars = math.ceil(rows / x) * math.ceil(cols / x)
    return max(1, math.ceil(xbars / platform.xbars_per_tile))


def active_xbars(cd_in: int, shape: LayerShape, choice: LayerChoice,
                 platform: PlatformParams) -> int:
    x = platform.xbar_size
    rows = cd_in * shape.kernel ** 2
    cols = choice.cd_out * platform.weight_slices
    return math.ceil(rows / x) * math.ceil(cols / x)


def read_cycles(choice: LayerChoice, platform: PlatformParams) -> int:
    """ADC-conversion rounds per crossbar activation.

    Inputs are processed bit-serially (ip cycles) and each ADC is
    time-multiplexed over cs columns.
    """
    return (choice.ip // platform.input_slice_bits) * choice.cs


@dataclass(frozen=True)
class LayerCost:
    tiles: int
    read_cycles_per_activation: int
    area: float  # mm^2
    delay: float  # ns
    energy: float  # pJ
    breakdown: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "tiles": self.tiles,
            "read_cycles_per_activation": self.read_cycles_per_activation,
            "area_mm2": self.area,
            "delay_ns": self.delay,
            "energy_pJ": self.energy,
            "breakdown": self.breakdown,
        }


def layer_cost(cd_in: int, shape: LayerShape, choice: LayerChoice,
               platform: PlatformParams) -> LayerCost:
    """Full area/delay/energy of one layer, with a per-component breakdown.

    Area counts whole tiles (a tile's crossbars, converters, buffers and
    trees exist whether or not the layer fills them); energy counts only
    the active crossbars.
    """
    uc = platform.unit_costs
    hier = platform.hierarchy
    x = platform.xbar_size

    tiles = tiles_for_layer(cd_in, shape, choice, platform)
    n_active = active_xbars(cd_in, shape, choice, platform)
    adcs_per_xbar = math.ceil(x / choice.cs)
    adc = adc_profile(choice.at, choice.ap, platform)
    rounds = read_cycles(choice, platform)
    out_h, out_w = shape.out_spatial()
    positions = out_h * out_w
    pes_per_tile = math.ceil(platform.xbars_per_tile / hier.xbars_per_pe)
    hops_tile = math.ceil(math.log2(pes_per_tile)) + 1 if pes_per_tile > 1 else 1
    hops = hops_tile + hier.htree_global_hops

    # Data volumes, in bytes: inputs stream at ip bits per activation,
    # outputs at one byte per activation.
    in_h, in_w = shape.in_spatial
    in_bytes = cd_in * in_h * in_w * choice.ip / 8.0
    out_bytes = choice.cd_out * positions * 1.0
    xfer_bytes = in_bytes + out_bytes

    # --- area (per tile, times tiles) ---
    acc_area_tile = (
        pes_per_tile * uc["accumulator_pe"].area
        + uc["accumulator_tile"].area
        + uc["accumulator_global"].area
    )
    buf_area_tile = (
        pes_per_tile * hier.pe_buffer_bytes * uc["buffer_pe"].area
        + hier.tile_buffer_bytes * uc["buffer_tile"].area
        + hier.global_buffer_bytes * uc["buffer_global"].area
    )
    htree_area_tile = hops * hier.htree_bus_bytes * uc["htree"].area

    area_b = {
        "XbarArray": tiles * platform.xbars_per_tile * x * x * uc["xbar_cell"].area,
        "ADC": tiles * platform.xbars_per_tile * adcs_per_xbar * adc.area,
        "Mux": tiles * platform.xbars_per_tile * x * uc["mux"].area,
        "SwitchMatrix": tiles * platform.xbars_per_tile * x * uc["switch_matrix"].area,
        "Accumulators": tiles * (platform.xbars_per_tile * adcs_per_xbar
                                 * choice.ap * uc["shift_add"].area + acc_area_tile),
        "Buffers": tiles * buf_area_tile,
        "HTree": tiles * htree_area_tile,
    }

    # --- delay ---
    # Each activation position takes `rounds` conversion rounds; one round
    # drives the rows, settles the array, switches the mux, converts and
    # shift-adds.  The accumulation chain and data transfers pipeline per
    # position / per byte respectively.
    per_round = (
        uc["switch_matrix"].latency
        + uc["xbar_cell"].latency
        + uc["mux"].latency
        + adc.latency_per_conversion
        + choice.ap * uc["shift_add"].latency
    )
    acc_chain = (uc["accumulator_pe"].latency + uc["accumulator_tile"].latency
                 + uc["accumulator_global"].latency)
    buffer_lat_per_byte = (uc["buffer_pe"].latency + uc["buffer_tile"].latency
                           + uc["buffer_global"].latency)
    delay_b = {
        "XbarArray": positions * rounds * uc["xbar_cell"].latency,
        "SwitchMatrix": positions * rounds * uc["switch_matrix"].latency,
        "Mux": positions * rounds * uc["mux"].latency,
        "ADC": positions * rounds * adc.latency_per_conversion,
        "Accumulators": positions * (rounds * choice.ap * uc["shift_add"].latency
                                     + acc_chain),
        "Buffers": xfer_bytes * buffer_lat_per_byte,
        "HTree": math.ceil(xfer_bytes / hier.htree_bus_bytes) * hops
                 * uc["htree"].latency,
    }

    # --- energy ---
    conversions = positions * rounds * n_active * adcs_per_xbar
    energy_b = {
        "XbarArray": positions * rounds * n_active * x * x * uc["xbar_cell"].energy,
        "SwitchMatrix": positions * rounds * n_active * x
                        * uc["switch_matrix"].energy,
        "Mux": conversions * uc["mux"].energy,
        "ADC": conversions * adc.energy_per_conversion,
        "Accumulators": (conversions * choice.ap * uc["shift_add"].energy
                         + positions * (n_active * uc["accumulator_pe"].energy
                                        + tiles * uc["accumulator_tile"].energy
                                        + uc["accumulator_global"].energy)),
        "Buffers": xfer_bytes * (uc["buffer_pe"].energy + uc["buffer_tile"].energy
                                 + uc["buffer_global"].energy),
        "HTree": xfer_bytes * hops * uc["htree"].energy,
    }

    breakdown = {
        comp: {
            "area": area_b.get(comp, 0.0),
            "delay": delay_b.get(comp, 0.0),
            "energy": energy_b.get(comp, 0.0),
        }
        for comp in COMPONENTS
    }
    return LayerCost(
        tiles=tiles,
        read_cycles_per_activation=rounds,
        area=sum(v["area"] for v in breakdown.values()),
        delay=sum(v["delay"] for v in breakdown.values()),
        energy=sum(v["energy"] for v in breakdown.values()),
        breakdown=breakdown,
    )


def layer_macs(cd_in: int, shape: LayerShape, choice: LayerChoice) -> int:
    out_h, out_w = shape.out_spatial()
    return cd_in * shape.kernel ** 2 * choice.cd_out * out_h * out_w


def psi(model: CandidateModel) -> float:
    """Mean column sharing times the fraction of SAR-converter layers.

    An empirical proxy for crossbar read delay: both factors raise the
    number of serial clock cycles a crossbar read takes.
    """
    n = len(model.layers)
    mean_cs = sum(choice.cs for _, choice in model.layers) / n
    sar_fraction = sum(1 for _, choice in model.layers
                       if choice.at is ADCType.SAR) / n
    return mean_cs * sar_fraction


def edap_from_totals(energy_pj: float, delay_ns: float, area_mm2: float) -> float:
    """Energy-delay-area product in mJ * ms * mm^2."""
    return (energy_pj / 1e9) * (delay_ns / 1e6) * area_mm2


@dataclass(frozen=True)
class CostReport:
    area: float  # mm^2
    delay: float  # ns
    energy: float  # pJ
    edap: float  # mJ * ms * mm^2
    tops_per_watt: float
    tops_per_mm2: float
    psi: float
    op_count: int
    per_layer: tuple[LayerCost, ...]

    def to_dict(self) -> dict:
        return {
            "area_mm2": self.area,
            "delay_ns": self.delay,
            "energy_pJ": self.energy,
            "edap_mJ_ms_mm2": self.edap,
            "tops_per_watt": self.tops_per_watt,
            "tops_per_mm2": self.tops_per_mm2,
            "psi": self.psi,
            "op_count": self.op_count,
            "per_layer": [lc.to_dict() for lc in self.per_layer],
        }

    def csv_rows(self) -> list[dict[str, object]]:
        """Flat per-layer rows plus a totals row; units in the column names."""
        rows: list[dict[str, object]] = []
        for idx, lc in enumerate(self.per_layer):
            rows.append({
                "layer": idx,
                "tiles": lc.tiles,
                "read_cycles_per_activation": lc.read_cycles_per_activation,
                "area_mm2": lc.area,
                "delay_ns": lc.delay,
                "energy_pJ": lc.energy,
            })
        rows.append({
            "layer": "total",
            "tiles": sum(lc.tiles for lc in self.per_layer),
            "read_cycles_per_activation": "",
            "area_mm2": self.area,
            "delay_ns": self.delay,
            "energy_pJ": self.energy,
        })
        return rows


def model_cost(model: CandidateModel, platform: PlatformParams,
               space: DesignSpace | None = None) -> CostReport:
    """Whole-network cost report: per-layer sums plus derived metrics.

    When a design space is given the model is validated first and an
    ``InvalidModelError`` lists every violation.
    """
    if space is not None:
        violations = validate_candidate(model, space, platform)
        if violations:
            raise InvalidModelError(
                "; ".join(f"layer {v.layer} [{v.field}]: {v.message}"
                          for v in violations))
    per_layer = []
    op_count = 0
    for idx, (shape, choice) in enumerate(model.layers):
        cd_in = model.cd_in(idx)
        per_layer.append(layer_cost(cd_in, shape, choice, platform))
        op_count += 2 * layer_macs(cd_in, shape, choice)
    area = sum(lc.area for lc in per_layer)
    delay = sum(lc.delay for lc in per_layer)
    energy = sum(lc.energy for lc in per_layer)
    return CostReport(
        area=area,
        delay=delay,
        energy=energy,
        edap=edap_from_totals(energy, delay, area),
        tops_per_watt=op_count / energy,
        tops_per_mm2=op_count / (delay * 1e3 * area),
        psi=psi(model),
        op_count=op_count,
        per_layer=tuple(per_layer),
    )
