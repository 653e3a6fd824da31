"""Two-round coded logistic regression driving the whole stack.

Each iteration the master quantizes ``w``, collects verified coded
products ``z = X w`` (round 1), forms ``e = sigmoid(z) - y`` in the clear,
collects verified coded products ``g = X^T e`` (round 2) and takes a
gradient step. Round 2 uses a second code over the column blocks of X, so
each worker stores a coded row block and a coded column block.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import expit

from . import adapt
from .coding import (
    CodingScheme,
    EvalPoints,
    build_encoding_matrix,
    decode,
    encode,
    split_rows,
)
from .data import Dataset
from .errors import AccumulationOverflow, InsufficientVerifiedResults
from .field import PrimeField, QuantParams, dequantize, quantize
from .sim import HONEST_BEHAVIOR, InProcTransport, WorkerShard
from .verify import check_round1, check_round2, gen_keys

log = logging.getLogger(__name__)

AVCC = "avcc"
STATIC_VCC = "static_vcc"
UNCODED = "uncoded"
MODES = (AVCC, STATIC_VCC, UNCODED)


def sigmoid(theta):
    """Logistic function; saturates cleanly for large ``|theta|``."""
    return expit(theta)


def cross_entropy(w, data: Dataset) -> float:
    z = data.X @ w
    # log(1 + e^z) - y z, stable for both signs
    return float(np.mean(np.logaddexp(0.0, z) - data.y * z))


def evaluate_accuracy(w, test: Dataset) -> float:
    """Fraction of test rows where ``sigmoid(x . w) >= 0.5`` matches the label."""
    if test.m == 0:
        return float("nan")
    pred = (sigmoid(test.X @ w) >= 0.5).astype(np.float64)
    return float(np.mean(pred == test.y))


@dataclass
class TrainState:
    w: np.ndarray
    iteration: int = 0
    eta: float = 0.1
    quant: QuantParams = QuantParams(5)


@dataclass
class IterationMetrics:
    iteration: int
    compute_s: float = 0.0
    comm_s: float = 0.0
    verify_s: float = 0.0
    decode_s: float = 0.0
    accuracy: float = float("nan")
    rejected: int = 0
    stragglers: int = 0
    scheme_N: int = 0
    scheme_K: int = 0
    loss: float = float("nan")
    total_s: float = 0.0

    @property
    def overhead_s(self) -> float:
        return self.total_s - (self.compute_s + self.comm_s + self.verify_s + self.decode_s)


@dataclass
class TransitionRecord:
    iteration: int
    transition: adapt.SchemeTransition


@dataclass
class TrainConfig:
    scheme: CodingScheme
    field: PrimeField = dc_field(default_factory=PrimeField)
    quant: QuantParams = QuantParams(5)
    quant_x: QuantParams | None = QuantParams(5)
    eta: float = 0.1
    iterations: int = 50
    mode: str = AVCC
    behaviors: dict = dc_field(default_factory=dict)
    adapt_mode: str = "auto"
    timeout_multiplier: float = 5.0
    straggler_floor: float = 0.05
    seed: int = 0
    verify_repeats: int = 1
    precompute: bool = False
    round_timeout: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scheme.deg_f != 1:
            raise ValueError("logistic regression rounds are linear: deg_f must be 1")


@dataclass
class _Encoding:
    scheme: CodingScheme
    points: EvalPoints
    shards: list       # per code column: WorkerShard
    keys: list         # per code column: VerificationKeyPair (None when uncoded)


class Trainer:
    """Master-side orchestrator for one training run.

    Worker ids are physical: behaviors stay attached to the same worker
    across re-encodes. Workers rejected by verification are quarantined for
    the rest of the run.
    """

    def __init__(self, train: Dataset, test: Dataset, config: TrainConfig, transport=None):
        self.cfg = config
        self.field = config.field
        self.train = train
        self.test = test
        self.transport = transport or InProcTransport(self.field, seed=config.seed)
        self._owns_transport = transport is None
        self.rng = np.random.default_rng(config.seed)
        config.quant.check(self.field)
        self.qx = QuantParams(0) if train.integral or config.quant_x is None else config.quant_x
        self.qx.check(self.field)
        self.Xq = quantize(train.X, self.qx, self.field)
        absX = np.abs(self.field.lift(self.Xq)).astype(object)
        self._row_l1 = int(absX.sum(axis=1).max()) if train.m else 0
        self._col_l1 = int(absX.sum(axis=0).max()) if train.m else 0
        self.scheme = config.scheme
        if config.mode == UNCODED:
            # K data holders, nothing redundant, nothing verified
            self.scheme = CodingScheme(config.scheme.K, config.scheme.K)
        else:
            self.scheme.validate()
        self.workers = list(range(self.scheme.N))
        self.quarantined: set[int] = set()
        self.transitions: list[TransitionRecord] = []
        self.metrics: list[IterationMetrics] = []
        self.weights: list[np.ndarray] = []
        self.state = TrainState(np.zeros(train.d), 0, config.eta, config.quant)
        self._ladder: dict = {}
        mode = config.adapt_mode
        if mode == "auto":
            mode = adapt.MDS if self.scheme.deg_f == 1 else adapt.LAGRANGE
        self.adapt_mode = mode
        if config.precompute and config.mode == AVCC:
            s = self.scheme
            for i in range(s.M + s.S + 1):
                if s.K - i >= 1:
                    key = (s.N - i, s.K - i)
                    self._ladder[key] = self._build(CodingScheme(s.N - i, s.K - i, T=s.T))
        self.enc = None
        self._install(self.scheme, self.workers)

    # --- encoding -----------------------------------------------------------

    def _build(self, scheme: CodingScheme) -> _Encoding:
        F = self.field
        coded = self.cfg.mode != UNCODED
        points = EvalPoints.default(scheme.K, scheme.T, scheme.N, F)
        U = build_encoding_matrix(points, F, scheme.K)
        row_blocks, _ = split_rows(self.Xq, scheme.K, F)
        col_blocks, _ = split_rows(np.ascontiguousarray(self.Xq.T), scheme.K, F)
        row_noise = [F.random(self.rng, row_blocks[0].shape) for _ in range(scheme.T)]
        col_noise = [F.random(self.rng, col_blocks[0].shape) for _ in range(scheme.T)]
        rows = encode(row_blocks, row_noise, U)
        cols = encode(col_blocks, col_noise, U)
        shards, keys = [], []
        for r, c in zip(rows, cols):
            shards.append(WorkerShard(r.data, c.data))
            keys.append(gen_keys(r, self.rng, F, transposed=c, repeats=self.cfg.verify_repeats)
                        if coded else None)
        return _Encoding(scheme, points, shards, keys)

    def _install(self, scheme: CodingScheme, workers: list) -> float:
        """Encode (or fetch from the ladder) and ship shards; returns seconds spent."""
        t0 = time.perf_counter()
        key = (scheme.N, scheme.K)
        enc = self._ladder.get(key) or self._build(scheme)
        enc.scheme = scheme
        self.enc = enc
        self.workers = list(workers)
        self.column_of = {wid: j for j, wid in enumerate(self.workers)}
        for wid, shard in zip(self.workers, enc.shards):
            self.transport.load(wid, shard)
        self.scheme = scheme
        return time.perf_counter() - t0

    # --- rounds -------------------------------------------------------------

    def _round(self, rnd: int, operand, mt: IterationMetrics, iteration: int):
        """Collect, verify and decode one round. Returns (blocks, stragglers, rejected)."""
        scheme = self.scheme
        coded = self.cfg.mode != UNCODED
        need = scheme.threshold if coded else scheme.K
        live = [w for w in self.workers if w not in self.quarantined]
        behaviors = {w: self.cfg.behaviors.get(w, HONEST_BEHAVIOR) for w in live}
        t0 = time.perf_counter()
        stream = self.transport.run_round(iteration, rnd, operand, behaviors)
        t_sent = time.perf_counter()
        mt.comm_s += t_sent - t0
        verify_s = 0.0
        accepted, rejected, seen = [], [], {}
        check = check_round1 if rnd == 1 else check_round2
        for res in stream:
            seen[res.worker_id] = res.latency
            if coded:
                tv = time.perf_counter()
                ok = check(self.enc.keys[self.column_of[res.worker_id]], operand, res.payload).accepted
                verify_s += time.perf_counter() - tv
                if not ok:
                    rejected.append(res.worker_id)
                    self.quarantined.add(res.worker_id)
                    continue
            accepted.append(res)
            if len(accepted) >= need:
                break
        t_done = time.perf_counter()
        mt.verify_s += verify_s
        mt.compute_s += (t_done - t_sent) - verify_s
        pending = stream.pending(self._cutoff(list(seen.values())))
        stream.close()
        mt.comm_s += time.perf_counter() - t_done
        if len(accepted) < need:
            raise InsufficientVerifiedResults(
                f"iteration {iteration} round {rnd}: {len(accepted)} verified results, need {need}")
        stragglers = self._classify_stragglers(seen, pending, rejected)

        td = time.perf_counter()
        if coded:
            results = [(self.enc.points.alphas[self.column_of[r.worker_id]], r.payload) for r in accepted]
            blocks = decode(results, scheme, self.enc.points, self.field)
        else:
            by_col = {self.column_of[r.worker_id]: r.payload for r in accepted}
            blocks = [by_col[j] for j in range(scheme.K)]
        mt.decode_s += time.perf_counter() - td
        return np.concatenate(blocks), stragglers, rejected

    def _cutoff(self, latencies) -> float:
        known = [v for v in latencies if v is not None]
        if not known:
            return self.cfg.straggler_floor
        return max(self.cfg.timeout_multiplier * float(np.median(known)), self.cfg.straggler_floor)

    def _classify_stragglers(self, seen: dict, pending: dict, rejected: list) -> set:
        """Late relative to the round: latency above ``max(timeout_multiplier *
        median, straggler_floor)``, or not arrived at all by then."""
        if not seen and not pending:
            return set()
        cutoff = self._cutoff(list(seen.values()) + list(pending.values()))
        late = {w for w, lat in seen.items() if lat > cutoff and w not in rejected}
        late |= {w for w, lat in pending.items() if lat is None or lat > cutoff}
        return late

    # --- training -------------------------------------------------------------

    def round1(self, w, mt: IterationMetrics, iteration: int):
        """Verified, decoded ``z = X w``; returns ``(z, stragglers, rejected)``."""
        F, qp = self.field, self.state.quant
        wq = quantize(w, qp, F)
        self._check_headroom(self._row_l1 * int(np.max(np.abs(F.lift(wq)), initial=0)), "X w")
        z, late, rejected = self._round(1, wq, mt, iteration)
        return dequantize(z[:self.train.m], self.qx.l + qp.l, F), late, rejected

    def round2(self, e, mt: IterationMetrics, iteration: int):
        """Verified, decoded ``g = X^T e``; returns ``(g, stragglers, rejected)``."""
        F, qp = self.field, self.state.quant
        eq = quantize(e, qp, F)
        self._check_headroom(self._col_l1 * int(np.max(np.abs(F.lift(eq)), initial=0)), "X^T e")
        g, late, rejected = self._round(2, eq, mt, iteration)
        return dequantize(g[:self.train.d], self.qx.l + qp.l, F), late, rejected

    def _check_headroom(self, bound: int, what: str):
        if bound > self.field.half:
            raise AccumulationOverflow(
                f"{what}: worst-case |result| {bound} exceeds (q-1)/2 = {self.field.half}")

    def step(self) -> IterationMetrics:
        st, cfg = self.state, self.cfg
        t_start = time.perf_counter()
        st.iteration += 1
        it = st.iteration
        mt = IterationMetrics(it, scheme_N=self.scheme.N, scheme_K=self.scheme.K)
        m = self.train.m

        z, s1, rej1 = self.round1(st.w, mt, it)
        e = sigmoid(z) - self.train.y
        g, s2, rej2 = self.round2(e, mt, it)

        st.w = st.w - (st.eta / m) * g
        self.weights.append(st.w.copy())
        rejected = set(rej1) | set(rej2)
        stragglers = (s1 | s2) - rejected
        mt.rejected = len(rejected)
        mt.stragglers = len(stragglers)
        mt.accuracy = evaluate_accuracy(st.w, self.test)
        mt.loss = cross_entropy(st.w, self.train)

        if cfg.mode == AVCC:
            obs = adapt.EpochObservation(self.scheme.N, self.scheme.K, len(stragglers),
                                         len(rejected), self.scheme.T)
            tr = adapt.next_scheme(self.scheme, obs, self.adapt_mode)
            if tr.re_encode_required:
                # N_new = N - M_t: every worker not quarantined stays
                survivors = [w for w in self.workers if w not in self.quarantined][:tr.new.N]
                mt.comm_s += self._install(tr.new, survivors)
                self.transitions.append(TransitionRecord(it + 1, tr))
                log.info("iteration %d: (%d,%d) -> (%d,%d), slack %d", it + 1,
                         tr.old.N, tr.old.K, tr.new.N, tr.new.K, tr.slack)
        mt.total_s = time.perf_counter() - t_start
        self.metrics.append(mt)
        return mt

    def run(self, iterations: int | None = None):
        try:
            for _ in range(self.cfg.iterations if iterations is None else iterations):
                self.step()
        finally:
            if self._owns_transport:
                self.transport.close()
        return self.state, self.metrics


def train_epoch(train: Dataset, test: Dataset, config: TrainConfig, transport=None):
    """Run ``config.iterations`` iterations; returns ``(state, metrics, trainer)``."""
    trainer = Trainer(train, test, config, transport)
    state, metrics = trainer.run()
    return state, metrics, trainer
