import math

import numpy as np
import pytest

from imcsearch.nnsim import TensorBatch, hd_score, make_blobs, make_mlp
from imcsearch.nnsim.network import Dense, RefNet, ReLU
from imcsearch.nnsim.score import LAMBDA_RATIO, hamming_kernel


def test_hamming_kernel_against_hand_counts():
    codes = np.array([
        [1, 0, 1, 1],
        [1, 1, 0, 1],
        [0, 0, 0, 0],
    ])
    # pairwise Hamming distances by hand: d(0,1)=2, d(0,2)=3, d(1,2)=3
    want = np.array([
        [4, 2, 1],
        [2, 4, 1],
        [1, 1, 4],
    ], dtype=float)
    assert np.array_equal(hamming_kernel(codes), want)


def test_hand_set_weights_reproduce_hand_determinant():
    # Dense(2 -> 4) with hand-set weights; thresholds chosen so the three
    # inputs produce known ReLU sign patterns
    net = RefNet(layers=[Dense(2, 4), ReLU(), Dense(4, 2)], class_count=2)
    d = net.layers[0]
    d.weight = np.array([[1.0, -1.0, 2.0, 0.5],
                         [-1.0, 1.0, 1.0, -2.0]])
    d.bias = np.array([0.0, 0.0, -3.0, 0.0])
    x = np.array([[1.0, 0.0],
                  [0.0, 1.0],
                  [2.0, 2.0]])
    # pre-ReLU: x @ W + b ->
    #   [ 1, -1, -1,  0.5]  -> code 1001
    #   [-1,  1, -2, -2  ]  -> code 0100
    #   [ 0,  0,  3, -3  ]  -> code 0010
    _, codes = net.forward_with_codes(x)
    assert np.array_equal(codes, np.array([[1, 0, 0, 1],
                                           [0, 1, 0, 0],
                                           [0, 0, 1, 0]]))
    k = hamming_kernel(codes)
    hand_k = np.array([[4.0, 1.0, 1.0],
                       [1.0, 4.0, 2.0],
                       [1.0, 2.0, 4.0]])
    assert np.array_equal(k, hand_k)
    lam = LAMBDA_RATIO * 4
    want = math.log(np.linalg.det(hand_k + lam * np.eye(3)))
    sign, logdet = np.linalg.slogdet(hand_k + lam * np.eye(3))
    assert sign > 0 and logdet == pytest.approx(want)


def test_single_sample_score_closed_form():
    net = make_mlp([2, 6, 2], seed=0)
    batch = TensorBatch(np.array([[1.0, 2.0]]))
    score = hd_score(net, batch, rng_seed=4)
    assert score == pytest.approx(math.log(6 + LAMBDA_RATIO * 6))


def test_duplicate_inputs_hit_regularization_floor():
    net = make_mlp([2, 8, 2], seed=0)
    dup = TensorBatch(np.array([[1.0, 2.0], [1.0, 2.0]]))
    distinct = TensorBatch(np.array([[1.0, 2.0], [3.0, 0.5]]))
    floor = hd_score(net, dup, rng_seed=4)
    spread = hd_score(net, distinct, rng_seed=4)
    assert np.isfinite(floor)
    assert floor < spread
    # rank-deficient kernel: the floor sits near log(2*N_A) + log(lambda)
    n_a = 8
    lam = LAMBDA_RATIO * n_a
    assert floor == pytest.approx(math.log(2 * n_a + lam) + math.log(lam),
                                  rel=0.05)


def test_hd_score_deterministic_and_seed_sensitive():
    net = make_mlp([2, 8, 2], seed=0)
    batch = make_blobs(16, seed=3)
    a = hd_score(net, batch, rng_seed=7)
    b = hd_score(net, batch, rng_seed=7)
    c = hd_score(net, batch, rng_seed=8)
    assert a == b
    assert a != c


def test_hd_score_permutation_invariant():
    net = make_mlp([2, 8, 2], seed=0)
    batch = make_blobs(12, seed=5)
    base = hd_score(net, batch, rng_seed=1)
    perm = np.random.default_rng(0).permutation(12)
    shuffled = TensorBatch(batch.data[perm], batch.labels[perm])
    assert hd_score(net, shuffled, rng_seed=1) == pytest.approx(base, rel=1e-12)


def test_hd_score_does_not_mutate_input_net():
    net = make_mlp([2, 8, 2], seed=0)
    before = [p.copy() for l in net.layers for p in l.params()]
    hd_score(net, make_blobs(8, seed=1), rng_seed=2)
    after = [p for l in net.layers for p in l.params()]
    for b, a in zip(before, after):
        assert np.array_equal(b, a)
