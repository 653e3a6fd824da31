import socket
import struct

import numpy as np
import pytest

from avcc.field import PrimeField
from avcc.sim import (
    CONTROL,
    OPERAND,
    RESULT,
    SHARD_LOAD,
    Constant,
    InProcTransport,
    Message,
    ReverseValue,
    SocketTransport,
    Worker,
    WorkerBehavior,
    WorkerShard,
    make_attack,
    pack,
    read_message,
    run_pool,
    unpack,
    worker_compute,
)

F7 = PrimeField(7)
FQ = PrimeField()
X = np.array([[1, 2], [3, 4]])


def test_honest_and_attacked_results():
    honest = worker_compute(WorkerShard(X), [1, 1], 1, WorkerBehavior(), F7)
    assert honest.payload.tolist() == [3, 0]
    rev = WorkerBehavior("byzantine", attack=ReverseValue(1))
    assert worker_compute(WorkerShard(X), [1, 1], 1, rev, F7).payload.tolist() == [4, 0]
    const = WorkerBehavior("byzantine", attack=Constant(2))
    A = np.ones((2, 3), dtype=np.int64)
    assert worker_compute(WorkerShard(A), [1, 1], 2, const, F7).payload.tolist() == [2, 2, 2]


def test_behavior_window():
    b = WorkerBehavior("straggler", delay=1.0, start=2, end=3)
    assert [b.at(t).kind for t in range(1, 5)] == ["honest", "straggler", "straggler", "honest"]
    with pytest.raises(ValueError):
        WorkerBehavior("byzantine")
    assert make_attack("constant", 5) == Constant(5)


def test_frame_layout_is_bit_exact():
    frame = pack(Message(RESULT, np.array([1, 258], dtype=np.int64)))
    assert frame == bytes([0x03, 0, 0, 0, 16]) + (1).to_bytes(8, "little") + (258).to_bytes(8, "little")
    load = pack(Message(SHARD_LOAD, np.array([5, 6], dtype=np.int64), 1, 2))
    assert load[:5] == bytes([0x01, 0, 0, 0, 24])
    assert struct.unpack(">II", load[5:13]) == (1, 2)
    assert int.from_bytes(load[13:21], "little") == 5


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    for mtype in (OPERAND, RESULT, CONTROL):
        payload = FQ.random(rng, 17)
        back = unpack(pack(Message(mtype, payload)))
        assert back.type == mtype and np.array_equal(back.payload, payload)
    big = PrimeField(2**61 - 1)
    payload = big.random(rng, 5)
    assert np.array_equal(unpack(pack(Message(RESULT, payload))).payload, payload.astype(np.int64))
    with pytest.raises(ValueError):
        unpack(pack(Message(RESULT, payload))[:-1])


def test_read_message_over_socket():
    a, b = socket.socketpair()
    with a, b:
        msg = Message(SHARD_LOAD, np.arange(6, dtype=np.int64), 2, 3)
        a.sendall(pack(msg))
        got = read_message(b)
        assert (got.rows, got.cols) == (2, 3) and got.payload.tolist() == list(range(6))


def test_worker_state_machine():
    w = Worker(3, FQ)
    for msg in [Message(SHARD_LOAD, X.ravel(), 2, 2)]:
        assert w.handle(msg) is None
    out = w.handle(Message(OPERAND, np.array([9, 1, 1, 1])))
    assert out.type == RESULT and out.payload.tolist() == [9, 3, 7]
    out = w.handle(Message(OPERAND, np.array([10, 2, 1, 1])))
    assert out.payload.tolist() == [10, 4, 6]


def shards_for(n, rng):
    return {j: WorkerShard(FQ.random(rng, (4, 3)), FQ.random(rng, (2, 5))) for j in range(n)}


def test_stragglers_arrive_last():
    rng = np.random.default_rng(1)
    shards = shards_for(4, rng)
    tp = InProcTransport(FQ, realtime=False)
    beh = {j: WorkerBehavior() for j in range(4)}
    beh[1] = WorkerBehavior("straggler", delay=5.0)
    stream = run_pool(shards, FQ.random(rng, 3), 1, beh, tp)
    order = [r.worker_id for r in stream]
    assert order[-1] == 1 and sorted(order) == [0, 1, 2, 3]
    tp.close()


def test_early_close_reports_pending():
    rng = np.random.default_rng(2)
    shards = shards_for(3, rng)
    tp = InProcTransport(FQ, realtime=True)
    beh = {0: WorkerBehavior(), 1: WorkerBehavior(), 2: WorkerBehavior("straggler", delay=30.0)}
    stream = run_pool(shards, FQ.random(rng, 3), 1, beh, tp)
    got = [next(stream).worker_id, next(stream).worker_id]
    pending = stream.pending()
    stream.close()
    assert got == [0, 1] and pending[2] > 30.0
    tp.close()


def collect(transport, shards, operand, rnd, beh):
    stream = run_pool(shards, operand, rnd, beh, transport)
    return {r.worker_id: r.payload.tolist() for r in stream}


def test_socket_and_inproc_agree():
    rng = np.random.default_rng(3)
    shards = shards_for(4, rng)
    beh = {j: WorkerBehavior() for j in range(4)}
    beh[2] = WorkerBehavior("byzantine", attack=ReverseValue(3))
    beh[3] = WorkerBehavior("straggler", delay=0.05)
    w, e = FQ.random(rng, 3), FQ.random(rng, 5)
    inproc, sock = InProcTransport(FQ), SocketTransport(FQ, timeout=10)
    try:
        for rnd, op in ((1, w), (2, e)):
            assert collect(inproc, shards, op, rnd, beh) == collect(sock, shards, op, rnd, beh)
    finally:
        inproc.close()
        sock.close()


def test_inproc_is_deterministic():
    rng = np.random.default_rng(4)
    shards = shards_for(5, rng)
    op = FQ.random(rng, 3)
    beh = {j: WorkerBehavior("straggler", delay=0.1, stochastic=True) for j in range(5)}
    runs = []
    for _ in range(2):
        tp = InProcTransport(FQ, realtime=False, seed=7)
        runs.append([(r.worker_id, r.latency) for r in run_pool(shards, op, 1, beh, tp)])
        tp.close()
    assert runs[0] == runs[1]
