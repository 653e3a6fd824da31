"""Simulated worker pool: honest, straggling and Byzantine workers.

Workers speak a small message protocol. The in-process transport hands
:class:`Message` objects to :class:`Worker` directly; the socket transport
frames the same messages over TCP::

    type:u8 | length:u32 BE | payload

Payloads are little-endian 8-byte field elements. A shard-load payload
starts with ``rows:u32 BE, cols:u32 BE``. Within those fixed frames:

* operand payload: ``[seq, round, *vector]``
* result payload:  ``[seq, *vector]``
* control payload: ``[opcode, *args]`` (see the ``OP_*`` constants)
"""
from __future__ import annotations

import logging
import selectors
import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ShapeMismatch
from .field import PrimeField

log = logging.getLogger(__name__)

SHARD_LOAD = 0x01
OPERAND = 0x02
RESULT = 0x03
CONTROL = 0x04

OP_SHUTDOWN = 0
OP_SLOT = 1       # [1, round]: the next shard-load fills that round's matrix
OP_BEHAVE = 2     # [2, kind, delay_us, attack, param]
OP_FIELD = 3      # [3, q]
OP_PING = 4       # [4]: echoed back at once; used as a load barrier

HONEST = "honest"
STRAGGLER = "straggler"
BYZANTINE = "byzantine"
_KIND_CODES = {HONEST: 0, STRAGGLER: 1, BYZANTINE: 2}
_ATTACK_CODES = {None: 0, "reverse": 1, "constant": 2}


@dataclass(frozen=True)
class ReverseValue:
    """Send ``-c * z`` instead of ``z``."""

    c: int = 1
    name = "reverse"

    def apply(self, payload, field: PrimeField):
        k = -self.c % field.q
        if field.small:
            return np.mod(k * payload, field.q)
        return field.array(payload.astype(object) * k)

    @property
    def param(self):
        return self.c


@dataclass(frozen=True)
class Constant:
    """Send a constant vector of the right length."""

    value: int = 1
    name = "constant"

    def apply(self, payload, field: PrimeField):
        out = field.zeros(payload.shape)
        out[...] = self.value % field.q
        return out

    @property
    def param(self):
        return self.value


def make_attack(name, param):
    if name == "reverse":
        return ReverseValue(int(param))
    if name == "constant":
        return Constant(int(param))
    raise ValueError(f"unknown attack {name!r}")


@dataclass(frozen=True)
class WorkerBehavior:
    """What a worker does, and for which iterations (``end`` inclusive).

    Stragglers add ``delay`` seconds plus ``multiplier`` times their nominal
    compute time; with ``stochastic`` the delay is exponential with mean
    ``delay``. Byzantine workers answer at honest speed.
    """

    kind: str = HONEST
    delay: float = 0.0
    multiplier: float = 0.0
    stochastic: bool = False
    attack: ReverseValue | Constant | None = None
    start: int = 1
    end: int | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown behavior kind {self.kind!r}")
        if self.kind == BYZANTINE and self.attack is None:
            raise ValueError("a Byzantine behavior needs an attack")

    def active(self, iteration: int) -> bool:
        return self.start <= iteration and (self.end is None or iteration <= self.end)

    def at(self, iteration: int) -> WorkerBehavior:
        return self if self.active(iteration) else HONEST_BEHAVIOR


HONEST_BEHAVIOR = WorkerBehavior()


@dataclass
class WorkerShard:
    """What one worker stores: the round-1 matrix and optionally a separate
    round-2 matrix (otherwise round 2 multiplies by ``row.T``)."""

    row: np.ndarray
    col: np.ndarray | None = None

    def matrix(self, round: int) -> np.ndarray:
        if round == 1:
            return self.row
        if self.col is None:
            self.col = np.ascontiguousarray(self.row.T)
        return self.col

    @property
    def nbytes(self) -> int:
        return self.row.nbytes + (0 if self.col is None else self.col.nbytes)


@dataclass
class WorkerResult:
    worker_id: int
    iteration: int
    round: int
    payload: np.ndarray
    latency: float
    compute_s: float = 0.0


def worker_compute(shard: WorkerShard, operand, round: int, behavior: WorkerBehavior,
                   field: PrimeField, worker_id: int = 0, iteration: int = 0) -> WorkerResult:
    """One worker's answer for one round, without any injected delay.

    ``latency`` is left at the measured compute time; transports add the
    straggler delay.
    """
    A = shard.matrix(round)
    operand = np.asarray(operand)
    if operand.ndim != 1 or operand.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"round {round} operand {operand.shape} vs matrix {A.shape}")
    t0 = time.perf_counter()
    out = field.matmul(A, operand)
    elapsed = time.perf_counter() - t0
    if behavior.kind == BYZANTINE:
        out = behavior.attack.apply(out, field)
    return WorkerResult(worker_id, iteration, round, out, elapsed, elapsed)


def injected_delay(behavior: WorkerBehavior, nominal: float, rng=None) -> float:
    if behavior.kind != STRAGGLER:
        return 0.0
    base = behavior.delay
    if behavior.stochastic:
        base = float((rng or np.random.default_rng()).exponential(behavior.delay)) if behavior.delay else 0.0
    return base + behavior.multiplier * nominal


# --- message layer -------------------------------------------------------------

@dataclass
class Message:
    type: int
    payload: np.ndarray = dc_field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rows: int = 0
    cols: int = 0


def _elements(values) -> bytes:
    return np.asarray([int(v) for v in np.ravel(values)], dtype="<u8").tobytes() \
        if np.asarray(values).dtype == object else np.asarray(values).astype("<u8").tobytes()


def pack(msg: Message) -> bytes:
    body = _elements(msg.payload)
    if msg.type == SHARD_LOAD:
        body = struct.pack(">II", msg.rows, msg.cols) + body
    return struct.pack(">BI", msg.type, len(body)) + body


def unpack(frame: bytes) -> Message:
    mtype, length = struct.unpack(">BI", frame[:5])
    body = frame[5:5 + length]
    if len(body) != length:
        raise ValueError("truncated frame")
    rows = cols = 0
    if mtype == SHARD_LOAD:
        rows, cols = struct.unpack(">II", body[:8])
        body = body[8:]
    if len(body) % 8:
        raise ValueError("payload is not a whole number of 8-byte elements")
    payload = np.frombuffer(body, dtype="<u8").astype(np.int64)
    return Message(mtype, payload, rows, cols)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = bytearray()
    while len(chunks) < n:
        chunk = sock.recv(n - len(chunks))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        chunks.extend(chunk)
    return bytes(chunks)


def read_message(sock: socket.socket) -> Message:
    head = _recv_exact(sock, 5)
    _, length = struct.unpack(">BI", head)
    return unpack(head + _recv_exact(sock, length))


def behavior_message(behavior: WorkerBehavior, delay: float) -> Message:
    attack = behavior.attack if behavior.kind == BYZANTINE else None
    code = _ATTACK_CODES[attack.name if attack else None]
    param = attack.param if attack else 0
    return Message(CONTROL, np.array([OP_BEHAVE, _KIND_CODES[behavior.kind],
                                      int(round(delay * 1e6)), code, param], dtype=np.int64))


def shard_messages(shard: WorkerShard, field: PrimeField):
    yield Message(CONTROL, np.array([OP_FIELD, field.q], dtype=np.int64))
    for rnd, mat in ((1, shard.row), (2, shard.col)):
        if mat is None:
            continue
        yield Message(CONTROL, np.array([OP_SLOT, rnd], dtype=np.int64))
        yield Message(SHARD_LOAD, mat.ravel(), mat.shape[0], mat.shape[1])


class Worker:
    """Worker-side state machine shared by both transports."""

    def __init__(self, worker_id: int, field: PrimeField | None = None):
        self.worker_id = worker_id
        self.field = field
        self.shard: WorkerShard | None = None
        self.behavior = HONEST_BEHAVIOR
        self.delay = 0.0
        self._slot = 1
        self.running = True
        self.lock = threading.Lock()

    def handle(self, msg: Message) -> Message | None:
        if msg.type == CONTROL:
            op = int(msg.payload[0])
            if op == OP_SHUTDOWN:
                self.running = False
            elif op == OP_SLOT:
                self._slot = int(msg.payload[1])
            elif op == OP_PING:
                return Message(CONTROL, np.array([OP_PING], dtype=np.int64))
            elif op == OP_FIELD:
                self.field = PrimeField(int(msg.payload[1]))
            elif op == OP_BEHAVE:
                kind, delay_us, attack, param = (int(v) for v in msg.payload[1:5])
                name = {v: k for k, v in _ATTACK_CODES.items()}[attack]
                self.behavior = WorkerBehavior(
                    kind={v: k for k, v in _KIND_CODES.items()}[kind],
                    attack=make_attack(name, param) if name else None)
                self.delay = delay_us / 1e6
            else:
                raise ValueError(f"unknown control opcode {op}")
            return None
        if msg.type == SHARD_LOAD:
            mat = self.field.array(msg.payload.reshape(msg.rows, msg.cols))
            if self._slot == 1 or self.shard is None:
                self.shard = WorkerShard(mat)
            else:
                self.shard.col = mat
            self._slot = 1
            return None
        if msg.type == OPERAND:
            seq, rnd = int(msg.payload[0]), int(msg.payload[1])
            res = worker_compute(self.shard, msg.payload[2:], rnd, self.behavior, self.field,
                                 self.worker_id)
            payload = np.concatenate([np.array([seq], dtype=np.int64), res.payload.astype(np.int64)])
            return Message(RESULT, payload)
        raise ValueError(f"unexpected message type {msg.type:#x}")


# --- transports ----------------------------------------------------------------

class RoundStream:
    """Iterator over one round's results in completion order.

    After the consumer stops early, :meth:`pending` reports the latency of
    every unconsumed worker if it is known, ``None`` otherwise. ``until``
    lets a live transport keep listening up to that latency first.
    """

    def __iter__(self):
        return self

    def __next__(self) -> WorkerResult:
        raise NotImplementedError

    def pending(self, until: float = 0.0) -> dict:
        return {}

    def close(self):
        pass


class _InProcStream(RoundStream):
    def __init__(self, order, futures, latencies, start, realtime, iteration, rnd, cancel):
        self._order = list(order)
        self._futures = futures
        self._latencies = latencies
        self._start = start
        self._realtime = realtime
        self._iteration = iteration
        self._round = rnd
        self._cancel = cancel
        self._pos = 0

    def __next__(self):
        if self._pos >= len(self._order):
            raise StopIteration
        wid = self._order[self._pos]
        self._pos += 1
        msg, compute_s = self._futures[wid].result()
        lat = self._latencies[wid]
        if self._realtime:
            wait = self._start + lat - time.perf_counter()
            if wait > 0:
                self._cancel.wait(wait)
        return WorkerResult(wid, self._iteration, self._round, msg.payload[1:], lat, compute_s)

    def pending(self, until: float = 0.0):
        return {wid: self._latencies[wid] for wid in self._order[self._pos:]}

    def close(self):
        self._cancel.set()
        for wid in self._order[self._pos:]:
            self._futures[wid].cancel()


class InProcTransport:
    """Deterministic in-process pool.

    Every worker really computes its product (concurrently, in a thread
    pool), but arrival order and latency come from a model: ``op_cost``
    seconds per multiply-add plus the injected straggler delay, ties broken
    by worker id. With ``realtime`` the stream also sleeps until each
    modelled arrival, so stragglers cost wall-clock time when waited on.
    """

    name = "inproc"

    def __init__(self, field: PrimeField, op_cost: float = 1e-9, realtime: bool = True,
                 seed: int = 0, max_threads: int = 4):
        self.field = field
        self.op_cost = op_cost
        self.realtime = realtime
        self.workers: dict[int, Worker] = {}
        self._pool = ThreadPoolExecutor(max_workers=max_threads)
        self._rng = np.random.default_rng(seed)

    def load(self, worker_id: int, shard: WorkerShard) -> int:
        worker = self.workers.setdefault(worker_id, Worker(worker_id, self.field))
        moved = 0
        for msg in shard_messages(shard, self.field):
            moved += msg.payload.nbytes
            worker.handle(msg)
        return moved

    def _run(self, worker: Worker, behave: Message, operand: Message):
        with worker.lock:
            worker.handle(behave)
            t0 = time.perf_counter()
            out = worker.handle(operand)
        return out, time.perf_counter() - t0

    def run_round(self, iteration: int, rnd: int, operand, behaviors: dict) -> RoundStream:
        operand = np.asarray(operand, dtype=np.int64)
        futures, latencies = {}, {}
        cancel = threading.Event()
        start = time.perf_counter()
        payload = np.concatenate([np.array([0, rnd], dtype=np.int64), operand])
        for wid in sorted(behaviors):
            worker = self.workers[wid]
            beh = behaviors[wid].at(iteration)
            rows, cols = worker.shard.matrix(rnd).shape
            nominal = rows * cols * self.op_cost
            delay = injected_delay(beh, nominal, self._rng)
            latencies[wid] = nominal + delay
            futures[wid] = self._pool.submit(self._run, worker, behavior_message(beh, delay),
                                             Message(OPERAND, payload))
        order = sorted(latencies, key=lambda w: (latencies[w], w))
        return _InProcStream(order, futures, latencies, start, self.realtime, iteration, rnd, cancel)

    def close(self):
        self._pool.shutdown(wait=True, cancel_futures=True)


class WorkerServer:
    """A worker listening on a TCP port; one thread per connection."""

    def __init__(self, worker_id: int, host: str = "127.0.0.1", port: int = 0):
        self.worker = Worker(worker_id)
        self._sock = socket.create_server((host, port))
        self.address = self._sock.getsockname()
        self._send_lock = threading.Lock()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self):
        try:
            conn, _ = self._sock.accept()
        except OSError:
            return
        with conn:
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            while self.worker.running:
                try:
                    msg = read_message(conn)
                except (ConnectionError, OSError):
                    break
                reply = self.worker.handle(msg)
                if reply is not None:
                    self._reply_later(conn, reply, self.worker.delay if reply.type == RESULT else 0.0)
        self._sock.close()

    def _reply_later(self, conn, reply: Message, delay: float):
        frame = pack(reply)

        def send():
            with self._send_lock:
                try:
                    conn.sendall(frame)
                except OSError:
                    pass

        if delay > 0:
            timer = threading.Timer(delay, send)
            timer.daemon = True
            timer.start()
        else:
            send()

    def close(self):
        self._sock.close()


class _SocketStream(RoundStream):
    def __init__(self, transport, seq, wids, start, iteration, rnd, timeout):
        self._t = transport
        self._seq = seq
        self._waiting = set(wids)
        self._start = start
        self._iteration = iteration
        self._round = rnd
        self._deadline = start + timeout
        self._buffer = []

    def _poll(self, timeout):
        sel = self._t.selector
        for key, _ in sel.select(timeout):
            wid = key.data
            msg = read_message(key.fileobj)
            if msg.type != RESULT or int(msg.payload[0]) != self._seq or wid not in self._waiting:
                continue  # stale answer from an earlier round
            self._waiting.discard(wid)
            lat = time.perf_counter() - self._start
            self._buffer.append(WorkerResult(wid, self._iteration, self._round,
                                             msg.payload[1:], lat, lat))

    def __next__(self):
        while not self._buffer:
            if not self._waiting:
                raise StopIteration
            left = self._deadline - time.perf_counter()
            if left <= 0:
                raise StopIteration
            self._poll(left)
        return self._buffer.pop(0)

    def pending(self, until: float = 0.0):
        self._poll(0)
        stop = min(self._start + until, self._deadline)
        while self._waiting and time.perf_counter() < stop:
            self._poll(stop - time.perf_counter())
        known = {r.worker_id: r.latency for r in self._buffer}
        known.update({wid: None for wid in self._waiting})
        return known


class SocketTransport:
    """Workers behind TCP sockets; spawns local :class:`WorkerServer` s."""

    name = "socket"

    def __init__(self, field: PrimeField, timeout: float = 60.0, seed: int = 0):
        self.field = field
        self.timeout = timeout
        self.servers: dict[int, WorkerServer] = {}
        self.conns: dict[int, socket.socket] = {}
        self.selector = selectors.DefaultSelector()
        self._seq = 0
        self._rng = np.random.default_rng(seed)

    def _connect(self, wid: int) -> socket.socket:
        if wid not in self.conns:
            server = WorkerServer(wid)
            self.servers[wid] = server
            conn = socket.create_connection(server.address)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self.conns[wid] = conn
            self.selector.register(conn, selectors.EVENT_READ, wid)
        return self.conns[wid]

    def load(self, worker_id: int, shard: WorkerShard) -> int:
        conn = self._connect(worker_id)
        moved = 0
        for msg in shard_messages(shard, self.field):
            frame = pack(msg)
            moved += len(frame)
            conn.sendall(frame)
        conn.sendall(pack(Message(CONTROL, np.array([OP_PING], dtype=np.int64))))
        conn.settimeout(self.timeout)
        try:
            while True:
                # late results from earlier rounds may still be queued ahead
                msg = read_message(conn)
                if msg.type == CONTROL and int(msg.payload[0]) == OP_PING:
                    break
        finally:
            conn.settimeout(None)
        return moved

    def run_round(self, iteration: int, rnd: int, operand, behaviors: dict) -> RoundStream:
        self._seq += 1
        operand = np.asarray(operand, dtype=np.int64)
        payload = np.concatenate([np.array([self._seq, rnd], dtype=np.int64), operand])
        start = time.perf_counter()
        for wid in sorted(behaviors):
            beh = behaviors[wid].at(iteration)
            delay = injected_delay(beh, 0.0, self._rng)
            conn = self.conns[wid]
            conn.sendall(pack(behavior_message(beh, delay)))
            conn.sendall(pack(Message(OPERAND, payload)))
        return _SocketStream(self, self._seq, behaviors.keys(), start, iteration, rnd, self.timeout)

    def close(self):
        for wid, conn in self.conns.items():
            try:
                conn.sendall(pack(Message(CONTROL, np.array([OP_SHUTDOWN], dtype=np.int64))))
            except OSError:
                pass
            self.selector.unregister(conn)
            conn.close()
        for server in self.servers.values():
            server.close()
        self.conns.clear()
        self.servers.clear()
        self.selector.close()


def run_pool(shards: dict, operand, rnd: int, behaviors: dict, transport, iteration: int = 1) -> RoundStream:
    """Load ``shards`` (worker id -> :class:`WorkerShard`) and start a round."""
    for wid, shard in shards.items():
        transport.load(wid, shard)
    return transport.run_round(iteration, rnd, operand, behaviors)
