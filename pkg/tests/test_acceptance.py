"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected and repeated in the pytest terminal summary
(see conftest.py).
"""
import itertools
import time

import numpy as np
from scipy.stats import chisquare

from avcc.coding import (
    CodingScheme,
    EncodedShard,
    EvalPoints,
    build_encoding_matrix,
    check_feasible,
    decode,
    det,
    encode,
)
from avcc.data import synthetic_blobs
from avcc.field import PrimeField
from avcc.sim import Constant, WorkerBehavior, WorkerShard, worker_compute
from avcc.train import TrainConfig, Trainer
from avcc.verify import check_round1, check_round2, gen_keys, keys_from_vectors

F257 = PrimeField(257)
RESULTS = []


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)
    return ok


def blobs(seed=0):
    train, test = synthetic_blobs(1200, 50, seed)
    return train.with_bias(), test.with_bias()


def test_criterion_1_feasibility_bound():
    t0 = time.perf_counter()
    a = check_feasible(CodingScheme(12, 9, 2, 1, 0, 1))
    b = check_feasible(CodingScheme(12, 9, 2, 2, 0, 1))
    c = check_feasible(CodingScheme(12, 9, 1, 2, 0, 1))
    elapsed = time.perf_counter() - t0
    ok = (a.feasible and a.slack == 0 and not b.feasible and c.feasible and not c.lcc_feasible
          and elapsed < 1.0)
    report(1, ok, f"(12,9,2,1) slack {a.slack}, (12,9,2,2) feasible={b.feasible}, "
                  f"(12,9,1,2) AVCC={c.feasible} LCC={c.lcc_feasible}, {elapsed:.3f}s")
    assert ok


def _f(block, w, deg):
    y = F257.matmul(block, w)
    return y if deg == 1 else (y * y) % 257


def test_criterion_2_codec_round_trip():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    cases = decodes = failures = 0
    while cases < 500:
        deg = int(rng.integers(1, 3))
        K, T = int(rng.integers(1, 5)), int(rng.integers(0, 3))
        thr = (K + T - 1) * deg + 1
        if thr > 8:
            continue
        N = int(rng.integers(thr, 9))
        scheme = CodingScheme(N, K, T=T, deg_f=deg)
        pts = EvalPoints.default(K, T, N, F257)
        U = build_encoding_matrix(pts, F257, K)
        blocks = [F257.random(rng, (2, 3)) for _ in range(K)]
        noise = [F257.random(rng, (2, 3)) for _ in range(T)]
        w = F257.random(rng, 3)
        shards = encode(blocks, noise, U)
        evals = [(s.alpha, _f(s.data, w, deg)) for s in shards]
        want = [_f(b, w, deg) for b in blocks]
        for subset in itertools.combinations(range(N), thr):
            got = decode([evals[j] for j in subset], scheme, pts, F257)
            decodes += 1
            failures += not all(np.array_equal(g, x) for g, x in zip(got, want))
        cases += 1
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 30
    report(2, ok, f"{cases} cases, {decodes} subset decodes, {failures} mismatches, {elapsed:.1f}s")
    assert ok


def test_criterion_3_privacy_structure():
    t0 = time.perf_counter()
    singular = checked = 0
    for K in range(1, 5):
        for T in range(1, 4):
            for N in range(K + T, 9):
                pts = EvalPoints.default(K, T, N, F257)
                bottom = build_encoding_matrix(pts, F257, K).bottom
                for cols in itertools.combinations(range(N), T):
                    checked += 1
                    singular += det(bottom[:, cols], F257) == 0
    # joint view of T=2 colluders over F_7: uniform over all 49 pairs
    F7 = PrimeField(7)
    rng = np.random.default_rng(0)
    n = 100_000
    pts = EvalPoints.default(1, 2, 3, F7)
    U = build_encoding_matrix(pts, F7, 1)
    data = np.full((1, n), 3, dtype=np.int64)
    shards = encode([data], [F7.random(rng, (1, n)) for _ in range(2)], U)
    pair = shards[0].data[0] * 7 + shards[1].data[0]
    p = chisquare(np.bincount(pair, minlength=49)).pvalue
    elapsed = time.perf_counter() - t0
    ok = singular == 0 and p > 0.01 and elapsed < 60
    report(3, ok, f"{checked} T-subsets, {singular} singular, chi-square p={p:.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_freivalds_soundness():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    A = F257.random(rng, (6, 5))
    w = F257.random(rng, 5)
    honest = F257.matmul(A, w)
    wrong = honest.copy()
    wrong[1] = (wrong[1] + 5) % 257
    trials = 100_000
    false_accepts = false_rejects = 0
    r1 = F257.random(rng, (trials, 6))
    r2 = F257.random(rng, (trials, 5))
    for i in range(trials):
        key = keys_from_vectors(0, A, A.T, r1[i], r2[i], F257)
        false_accepts += check_round1(key, w, wrong).accepted
        false_rejects += not check_round1(key, w, honest).accepted
    p = 1 / 257
    limit = p + 3 * np.sqrt(p * (1 - p) / trials)
    rate = false_accepts / trials
    elapsed = time.perf_counter() - t0
    ok = rate <= limit and false_rejects == 0 and elapsed < 60
    report(4, ok, f"accept rate {rate:.5f} <= {limit:.5f}, {false_rejects} false rejections "
                  f"in {trials} honest trials, {elapsed:.1f}s")
    assert ok


def test_criterion_5_byzantine_end_to_end():
    t0 = time.perf_counter()
    train, test = blobs()
    scheme = CodingScheme(12, 9, S=1, M=2)
    attack = {w: WorkerBehavior("byzantine", attack=Constant()) for w in (0, 1)}
    acc = {}
    for name, mode, beh in (("clean", "avcc", {}), ("avcc", "avcc", attack),
                            ("uncoded", "uncoded", attack)):
        tr = Trainer(train, test, TrainConfig(scheme, mode=mode, iterations=50, behaviors=beh))
        tr.run()
        acc[name] = tr.metrics[-1].accuracy
    elapsed = time.perf_counter() - t0
    ok = (abs(acc["avcc"] - acc["clean"]) <= 0.01 and acc["avcc"] - acc["uncoded"] >= 0.05
          and elapsed < 300)
    report(5, ok, f"clean {acc['clean']:.4f}, AVCC under attack {acc['avcc']:.4f}, "
                  f"uncoded under attack {acc['uncoded']:.4f}, {elapsed:.1f}s")
    assert ok


def test_criterion_6_dynamic_adaptation():
    t0 = time.perf_counter()
    train, test = blobs()
    beh = {w: WorkerBehavior("straggler", delay=1.0) for w in (9, 10, 11)}
    beh[0] = WorkerBehavior("byzantine", attack=Constant())
    totals, logs = {}, {}
    for mode in ("avcc", "static_vcc"):
        tr = Trainer(train, test, TrainConfig(CodingScheme(12, 9, S=2, M=1), mode=mode,
                                              iterations=10, behaviors=beh))
        tr.run()
        totals[mode] = sum(m.total_s for m in tr.metrics)
        logs[mode] = [(r.iteration, r.transition.new.N, r.transition.new.K) for r in tr.transitions]
    elapsed = time.perf_counter() - t0
    ok = logs["avcc"] == [(2, 11, 8)] and totals["avcc"] < totals["static_vcc"] and elapsed < 300
    report(6, ok, f"transitions {logs['avcc']}, AVCC {totals['avcc']:.2f}s vs static "
                  f"{totals['static_vcc']:.2f}s over 10 iterations, {elapsed:.1f}s")
    assert ok


def test_criterion_7_zero_perturbation():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    identical = 0
    for i in range(10):
        K = int(rng.integers(1, 6))
        S, M = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        scheme = CodingScheme(K + S + M + int(rng.integers(0, 2)), K, S, M)
        m, d = int(rng.integers(20, 200)), int(rng.integers(2, 20))
        train, test = synthetic_blobs(m, d, seed=i, test_m=50)
        train, test = train.with_bias(), test.with_bias()
        runs = []
        for mode in ("avcc", "uncoded"):
            tr = Trainer(train, test, TrainConfig(scheme, mode=mode, iterations=10, seed=i))
            tr.run()
            runs.append(tr.weights)
        identical += all(np.array_equal(a, b) for a, b in zip(*runs))
    elapsed = time.perf_counter() - t0
    ok = identical == 10 and elapsed < 120
    report(7, ok, f"{identical}/10 configs bit-identical over 10 iterations, {elapsed:.1f}s")
    assert ok


def _best(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def test_criterion_8_verification_asymptotics():
    F = PrimeField()
    rng = np.random.default_rng(8)
    K = 8
    sizes, verify_t = [], []
    worker_t = ratio = None
    for e in range(8, 15):
        n = 2**e
        rows = n // K
        # one worker's coded row block and coded column block for m = d = n
        shard = WorkerShard(F.random(rng, (rows, n)), F.random(rng, (rows, n)))
        key = gen_keys(EncodedShard(0, 1, shard.row), rng, F,
                       transposed=EncodedShard(0, 1, shard.col))
        w, ev = F.random(rng, n), F.random(rng, n)
        z = F.matmul(shard.row, w)
        g = F.matmul(shard.col, ev)

        def verify():
            assert check_round1(key, w, z).accepted
            assert check_round2(key, ev, g).accepted

        verify_t.append(_best(verify, 50))
        sizes.append(2 * n)
        if e == 14:
            def work():
                worker_compute(shard, w, 1, WorkerBehavior(), F)
                worker_compute(shard, ev, 2, WorkerBehavior(), F)
            worker_t = _best(work, 3)
            ratio = verify_t[-1] / worker_t
    slope = float(np.polyfit(np.log(sizes), np.log(verify_t), 1)[0])
    ok = abs(slope - 1.0) <= 0.15 and ratio <= 0.05
    report(8, ok, f"log-log slope {slope:.3f}, verification {verify_t[-1] * 1e3:.3f} ms vs "
                  f"worker compute {worker_t * 1e3:.1f} ms ({ratio:.2%}) at m=d=2^14")
    assert ok

