"""Training-free candidate scoring from binary ReLU activation codes.

An untrained (randomly initialized) network maps each input to the binary
pattern of its ReLU activations; inputs that land in different linear
regions get codes far apart in Hamming distance.  The log-determinant of
the code-similarity kernel rewards architectures that separate the batch
well, without training any weights.
"""

from __future__ import annotations

import numpy as np

from .network import RefNet, TensorBatch

#: Regularizer weight relative to the code length.
LAMBDA_RATIO = 1e-3


def hamming_kernel(codes: np.ndarray) -> np.ndarray:
    """K[i, j] = code_length - hamming(c_i, c_j) for binary code rows."""
    c = np.asarray(codes, dtype=float)
    ones = c @ c.T
    zeros = (1.0 - c) @ (1.0 - c).T
    return ones + zeros


def hd_score(net: RefNet, batch: TensorBatch | np.ndarray, rng_seed: int) -> float:
    """Log-determinant Hamming-distance score of an architecture.

    Weights are re-initialized from ``rng_seed`` (the input net is not
    modified), the batch is forwarded once, binary ReLU codes are
    collected and scored as log|K + lambda*I| where K counts agreeing
    code bits.  Duplicate inputs make K rank-deficient; the regularizer
    keeps the score finite (at its floor).
    """
    x = batch.data if isinstance(batch, TensorBatch) else np.asarray(batch, float)
    scored = net.clone()
    scored.init_weights(np.random.default_rng(rng_seed))
    _, codes = scored.forward_with_codes(x)
    n_a = codes.shape[1]
    k = hamming_kernel(codes)
    reg = k + LAMBDA_RATIO * n_a * np.eye(k.shape[0])
    sign, logdet = np.linalg.slogdet(reg)
    if sign <= 0:
        raise FloatingPointError("similarity kernel lost positive definiteness")
    return float(logdet)
