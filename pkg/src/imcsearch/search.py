"""Dual-phase co-search orchestration.

Phase 1 relaxes the (CD, CS, AT) grid per layer and minimizes delay under
an area constraint; candidates whose discrete-argmax area lands within 2%
of the constraint join the pool.  The pool is then ranked by a
training-free Hamming-distance score against delay.  Phase 2 freezes the
winner's widths and converters, trains nothing, and searches per-layer
(AP, IP) against noisy-accuracy loss plus a delay penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costmodel import CostReport, LayerCost, layer_cost, model_cost
from .designspace import (
    CandidateModel,
    DesignSpace,
    LayerChoice,
    PlatformParams,
    enumerate_options,
)
from .nnsim import (
    AdcRange,
    NoiseSpec,
    RefNet,
    TensorBatch,
    bn_adapt,
    build_refnet,
    cross_entropy,
    hd_score,
    noisy_forward,
)
from .relax import (
    CostTables,
    LogitMatrix,
    OptState,
    build_cost_tables,
    phase1_loss_grad,
    sgd_step,
    softmax_probs,
)

#: Relative area margin for pool admission.
ADMISSION_MARGIN = 0.02


class EmptyPoolError(RuntimeError):
    """Phase 1 finished without admitting any candidate."""


@dataclass(frozen=True)
class SearchConfig:
    area_constraint: float  # mm^2
    n1_steps: int = 2000
    n2_steps: int = 20
    lambda1: float = 0.01
    lambda2: float = 0.001
    lr1: float = 13.0
    lr2: float = 0.1
    seed: int = 0
    phase1_ap: int = 6
    phase1_ip: int = 8
    hd_batch_size: int = 64
    adapt_momentum: float = 0.1
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.area_constraint <= 0:
            raise ValueError("area_constraint must be positive")
        if self.n1_steps < 0 or self.n2_steps < 0:
            raise ValueError("step counts must be >= 0")
        for name in ("lr1", "lr2", "temperature", "adapt_momentum"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # zero disables the respective penalty term; negative flips its sign
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")


def admit(report: CostReport, area_constraint: float) -> bool:
    """True when the report's area is within 2% of the constraint."""
    if area_constraint <= 0:
        raise ValueError("area_constraint must be positive")
    return abs(report.area - area_constraint) / area_constraint <= ADMISSION_MARGIN


@dataclass
class PoolEntry:
    model: CandidateModel
    report: CostReport
    step: int
    admitted: bool
    hd_score: float | None = None

    def choice_key(self) -> tuple:
        return tuple((c.cd_out, c.cs, c.at.value) for _, c in self.model.layers)


@dataclass
class CandidatePool:
    entries: list[PoolEntry] = field(default_factory=list)

    def admitted(self) -> list[PoolEntry]:
        return [e for e in self.entries if e.admitted]

    def record(self, entry: PoolEntry) -> bool:
        """Add a distinct candidate (earliest step wins); True when new."""
        key = entry.choice_key()
        for existing in self.entries:
            if existing.choice_key() == key:
                return False
        self.entries.append(entry)
        return True


def _candidate_from_indices(space: DesignSpace, indices: list[int], ap: int,
                            ip: int) -> CandidateModel:
    layers = []
    for l, idx in enumerate(indices):
        cd, cs, at = enumerate_options(space, l, phase=1)[idx]
        layers.append((space.layer_shapes[l],
                       LayerChoice(cd_out=cd, cs=cs, at=at, ap=ap, ip=ip)))
    return CandidateModel(layers=tuple(layers),
                          input_channels=space.input_channels)


@dataclass
class Phase1Result:
    pool: CandidatePool
    trace: list[dict]
    logits: LogitMatrix
    delay_ref: float
    final_candidate: CandidateModel


def phase1_run(space: DesignSpace, platform: PlatformParams,
               config: SearchConfig) -> Phase1Result:
    """Area-constrained delay minimization over the (CD, CS, AT) grid.

    Each step evaluates the relaxed expected cost, records the current
    discrete argmax candidate (admitting it to the pool when its area is
    within the margin), then applies one SGD update to the logits.  The
    run is deterministic given the config.
    """
    tables = build_cost_tables(space, platform, config.phase1_ap,
                               config.phase1_ip)
    counts = [tables.areas[l].shape[1] for l in range(space.num_layers)]
    logits = LogitMatrix.uniform(counts, config.temperature)
    opt = OptState(learning_rate=config.lr1, rng_seed=config.seed)
    pool = CandidatePool()
    trace: list[dict] = []
    delay_ref = None
    candidate = _candidate_from_indices(space, logits.argmax(),
                                        config.phase1_ap, config.phase1_ip)
    for step in range(config.n1_steps):
        if delay_ref is None:
            # self-normalization: reference delay is the step-0 expectation
            delay_ref = _expected_only(logits, tables)[1]
        loss, e_area, e_delay, grads = phase1_loss_grad(
            logits, space, platform, config.area_constraint, config.lambda1,
            delay_ref, tables=tables)
        candidate = _candidate_from_indices(space, logits.argmax(),
                                            config.phase1_ap, config.phase1_ip)
        report = model_cost(candidate, platform)
        admitted = admit(report, config.area_constraint)
        is_new = pool.record(PoolEntry(model=candidate, report=report,
                                       step=step, admitted=admitted))
        trace.append({
            "step": step,
            "loss": loss,
            "expected_area_mm2": e_area,
            "expected_delay_ns": e_delay,
            "argmax_area_mm2": report.area,
            "argmax_delay_ns": report.delay,
            "admitted": int(admitted),
            "new_candidate": int(is_new),
        })
        logits = sgd_step(logits, grads, opt)
    if delay_ref is None:
        delay_ref = _expected_only(logits, tables)[1]
    return Phase1Result(pool=pool, trace=trace, logits=logits,
                        delay_ref=delay_ref, final_candidate=candidate)


def _expected_only(logits: LogitMatrix, tables: CostTables) -> tuple[float, float]:
    probs = logits.probs()
    e_area = 0.0
    e_delay = 0.0
    for l, (a, d) in enumerate(zip(tables.areas, tables.delays)):
        p_prev = np.ones(1) if l == 0 else probs[l - 1]
        e_area += float(p_prev @ a @ probs[l])
        e_delay += float(p_prev @ d @ probs[l])
    return e_area, e_delay


def _minmax_normalize(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) for v in values]


def rank_candidates(pool: CandidatePool, hd_batch: TensorBatch, seed: int,
                    class_count: int) -> PoolEntry:
    """Pick the admitted candidate with high HD score and low delay.

    The two objectives are min-max normalized over the admitted pool and
    combined with equal weight; ties resolve to the earliest entry.  Every
    admitted entry gets its hd_score field filled in.
    """
    admitted = pool.admitted()
    if not admitted:
        raise EmptyPoolError("no admitted candidates to rank")
    for entry in admitted:
        net = build_refnet(entry.model, class_count, seed=seed)
        entry.hd_score = hd_score(net, hd_batch, rng_seed=seed)
    hd_n = _minmax_normalize([e.hd_score for e in admitted])
    delay_n = _minmax_normalize([e.report.delay for e in admitted])
    scores = [h - d for h, d in zip(hd_n, delay_n)]
    best = max(range(len(admitted)), key=lambda i: (scores[i], -admitted[i].step))
    return admitted[best]


def phase2_loss(ce: float, expected_delay: float, delay_ref: float,
                lambda2: float) -> float:
    """L2 = cross-entropy plus a normalized delay penalty."""
    if delay_ref <= 0:
        raise ValueError("delay_ref must be positive")
    return ce + lambda2 * expected_delay / delay_ref


@dataclass
class Phase2Data:
    """Fixture data feeding phase 2's noisy-accuracy signal."""

    adapt_batches: list[TensorBatch]
    eval_batch: TensorBatch


@dataclass
class Phase2Result:
    assignment: list[tuple[int, int]]
    trace: list[dict]
    logits: LogitMatrix
    delay_ref: float


def _phase2_delays(model: CandidateModel, space: DesignSpace,
                   platform: PlatformParams) -> list[np.ndarray]:
    """Per-layer delay vector over the (ap, ip) option grid."""
    options = enumerate_options(space, 0, phase=2)
    out = []
    for l, (shape, choice) in enumerate(model.layers):
        cd_in = model.cd_in(l)
        d = np.empty(len(options))
        for i, (ap, ip) in enumerate(options):
            c = LayerChoice(cd_out=choice.cd_out, cs=choice.cs, at=choice.at,
                            ap=ap, ip=ip)
            d[i] = layer_cost(cd_in, shape, c, platform).delay
        out.append(d)
    return out


def _frozen_delay(model: CandidateModel, platform: PlatformParams,
                  ap: int, ip: int) -> float:
    total = 0.0
    for l, (shape, choice) in enumerate(model.layers):
        c = LayerChoice(cd_out=choice.cd_out, cs=choice.cs, at=choice.at,
                        ap=ap, ip=ip)
        total += layer_cost(model.cd_in(l), shape, c, platform).delay
    return total


def phase2_run(trained_net: RefNet, phase1_model: CandidateModel,
               space: DesignSpace, platform: PlatformParams,
               config: SearchConfig, data: Phase2Data,
               adc_range: AdcRange = AdcRange("calibrated")) -> Phase2Result:
    """Per-layer (AP, IP) search on a trained, frozen network.

    Each step picks one layer, evaluates the noisy cross-entropy of all of
    its options (holding the other layers at their argmax, with batchnorm
    re-adapted per option), forms the soft-mixture loss for that layer
    plus the differentiable delay penalty for all layers, and takes one
    SGD step on the option logits.  Weights, CD, CS and AT are never
    modified; batchnorm adaptation happens on private copies.
    """
    options = enumerate_options(space, 0, phase=2)
    n_layers = len(phase1_model.layers)
    n_opts = len(options)
    logits = LogitMatrix.uniform([n_opts] * n_layers, config.temperature)
    opt = OptState(learning_rate=config.lr2, rng_seed=config.seed)
    delays = _phase2_delays(phase1_model, space, platform)
    delay_ref = _frozen_delay(phase1_model, platform, config.phase1_ap,
                              config.phase1_ip)
    noise = NoiseSpec(sigma_over_mu=platform.sigma_over_mu,
                      rng_seed=config.seed)
    rng = np.random.default_rng(config.seed)
    ce_cache: dict[tuple, float] = {}

    def ce_for(assignment: tuple[tuple[int, int], ...]) -> float:
        if assignment in ce_cache:
            return ce_cache[assignment]
        plan = list(assignment)
        adapted = bn_adapt(trained_net, data.adapt_batches, plan, noise,
                           platform, momentum=config.adapt_momentum,
                           adc_range=adc_range)
        logits_out = noisy_forward(adapted, data.eval_batch, plan, noise,
                                   platform, adc_range=adc_range)
        ce = cross_entropy(logits_out, data.eval_batch.labels)
        ce_cache[assignment] = ce
        return ce

    trace: list[dict] = []
    for step in range(config.n2_steps):
        probs = [softmax_probs(r, logits.temperature) for r in logits.rows]
        argmax = logits.argmax()
        layer = int(rng.integers(n_layers))
        base = [options[i] for i in argmax]
        ce_values = np.empty(n_opts)
        for i in range(n_opts):
            probe = list(base)
            probe[layer] = options[i]
            ce_values[i] = ce_for(tuple(probe))
        e_delay = float(sum(p @ d for p, d in zip(probs, delays)))
        mixture_ce = float(probs[layer] @ ce_values)
        loss = phase2_loss(mixture_ce, e_delay, delay_ref, config.lambda2)
        grads = []
        dl_ddelay = config.lambda2 / delay_ref
        for l in range(n_layers):
            g_p = dl_ddelay * delays[l]
            if l == layer:
                g_p = g_p + ce_values
            p = probs[l]
            grads.append(p * (g_p - float(p @ g_p)) / logits.temperature)
        trace.append({
            "step": step,
            "layer": layer,
            "mixture_ce": mixture_ce,
            "expected_delay_ns": e_delay,
            "loss": loss,
        })
        logits = sgd_step(logits, grads, opt)
    assignment = [options[i] for i in logits.argmax()]
    return Phase2Result(assignment=assignment, trace=trace, logits=logits,
                        delay_ref=delay_ref)


def apply_assignment(model: CandidateModel,
                     assignment: list[tuple[int, int]]) -> CandidateModel:
    """Candidate with phase-2 (ap, ip) choices written into each layer."""
    if len(assignment) != len(model.layers):
        raise ValueError("assignment length does not match model")
    layers = []
    for (shape, choice), (ap, ip) in zip(model.layers, assignment):
        layers.append((shape, LayerChoice(cd_out=choice.cd_out, cs=choice.cs,
                                          at=choice.at, ap=ap, ip=ip)))
    return CandidateModel(layers=tuple(layers),
                          input_channels=model.input_channels)
