"""Wire a resolved config into a training run and persist its metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields

from .coding import check_feasible
from .config import ExperimentConfig
from .data import load_csv, synthetic_blobs, train_test_split
from .errors import MismatchedRuns
from .field import PrimeField, QuantParams
from .sim import InProcTransport, SocketTransport, WorkerBehavior, make_attack
from .train import IterationMetrics, Trainer, TrainConfig

COLUMNS = ("iteration", "compute_s", "comm_s", "verify_s", "decode_s", "accuracy",
           "rejected", "stragglers", "scheme_N", "scheme_K", "loss", "total_s")
TIME_COLUMNS = ("compute_s", "comm_s", "verify_s", "decode_s", "total_s")


def build_dataset(cfg: ExperimentConfig):
    """``(train, test)`` with the bias column appended."""
    if cfg["data.path"]:
        data = load_csv(cfg["data.path"], header=cfg["data.header"])
        train, test = train_test_split(data, cfg["data.test_fraction"], cfg["seed"])
    else:
        train, test = synthetic_blobs(cfg["data.m"], cfg["data.d"], cfg["seed"],
                                      cfg["data.separation"], cfg["data.test_m"])
    return train.with_bias(), test.with_bias()


def build_behaviors(cfg: ExperimentConfig) -> dict:
    out = {}
    for wid in cfg["straggler.workers"]:
        out[wid] = WorkerBehavior("straggler", delay=cfg["straggler.delay"],
                                  multiplier=cfg["straggler.multiplier"],
                                  stochastic=cfg["straggler.stochastic"],
                                  start=cfg["straggler.start"], end=cfg["straggler.end"])
    kind = cfg["attack.kind"]
    if kind != "none":
        attack = make_attack(kind, cfg["attack.value"] if kind == "constant" else cfg["attack.c"])
        for wid in cfg["attack.workers"]:
            out[wid] = WorkerBehavior("byzantine", attack=attack,
                                      start=cfg["attack.start"], end=cfg["attack.end"])
    return out


def build_transport(cfg: ExperimentConfig, field: PrimeField):
    if cfg["transport"] == "socket":
        return SocketTransport(field, timeout=cfg["transport.timeout"], seed=cfg["seed"])
    return InProcTransport(field, op_cost=cfg["transport.op_cost"],
                           realtime=cfg["transport.realtime"], seed=cfg["seed"])


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        scheme=cfg.scheme,
        field=PrimeField(cfg["field.q"]),
        quant=QuantParams(cfg["quant.l"]),
        quant_x=QuantParams(cfg["quant.lx"]),
        eta=cfg["train.eta"],
        iterations=cfg["train.iterations"],
        mode=cfg["mode"],
        behaviors=build_behaviors(cfg),
        adapt_mode=cfg["adapt.mode"],
        timeout_multiplier=cfg["straggler.timeout_multiplier"],
        straggler_floor=cfg["straggler.floor"],
        seed=cfg["seed"],
        verify_repeats=cfg["verify.repeats"],
        precompute=cfg["adapt.precompute"],
    )


def write_metrics(path, cfg: ExperimentConfig, metrics, transitions, status="ok"):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {cfg.hash}\n")
        fh.write(f"# seed: {cfg['seed']}\n")
        fh.write(f"# q: {cfg['field.q']}\n")
        fh.write(f"# mode: {cfg['mode']}\n")
        fh.write(f"# transport: {cfg['transport']}\n")
        fh.write(f"# scheme: {cfg.scheme.N},{cfg.scheme.K},{cfg.scheme.S},{cfg.scheme.M},{cfg.scheme.T}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for m in metrics:
            writer.writerow([getattr(m, c) for c in COLUMNS])
        for rec in transitions:
            tr = rec.transition
            fh.write(f"# transition iteration={rec.iteration} ({tr.old.N},{tr.old.K})->"
                     f"({tr.new.N},{tr.new.K}) slack={tr.slack} S_t={tr.S_t} M_t={tr.M_t}\n")
        fh.write(f"# status: {status}\n")


@dataclass
class RunResult:
    metrics: list
    transitions: list
    weights: list
    final_accuracy: float
    total_s: float


def summarize(cfg: ExperimentConfig, result: RunResult) -> str:
    rep = check_feasible(cfg.scheme)
    totals = {c: sum(getattr(m, c) for m in result.metrics) for c in TIME_COLUMNS}
    lines = [
        f"mode={cfg['mode']} iterations={len(result.metrics)} config_hash={cfg.hash}",
        f"final accuracy {result.final_accuracy:.4f}  total time {result.total_s:.3f}s",
        "buckets " + " ".join(f"{c}={totals[c]:.3f}" for c in TIME_COLUMNS[:-1]),
        f"bounds: verified decoding needs N>={rep.bound} (slack {rep.slack}), "
        f"LCC needs N>={rep.lcc_bound} (slack {rep.lcc_slack})",
    ]
    for rec in result.transitions:
        tr = rec.transition
        lines.append(f"transition at iteration {rec.iteration}: "
                     f"({tr.old.N},{tr.old.K}) -> ({tr.new.N},{tr.new.K})")
    return "\n".join(lines)


def run_experiment(cfg: ExperimentConfig, output=None, out=None) -> RunResult:
    """Train per ``cfg`` and write the metrics CSV (partial rows survive a failure).

    A summary is printed to ``out`` when given.
    """
    cfg.validate()
    output = output if output is not None else cfg["output"]
    train, test = build_dataset(cfg)
    tc = train_config(cfg)
    transport = build_transport(cfg, tc.field)
    trainer = None
    status = "ok"
    try:
        trainer = Trainer(train, test, tc, transport)
        trainer.run()
    except Exception as exc:
        status = f"aborted: {type(exc).__name__}: {exc}"
        raise
    finally:
        transport.close()
        if output:
            write_metrics(output, cfg, trainer.metrics if trainer else [],
                          trainer.transitions if trainer else [], status)
    ms = trainer.metrics
    result = RunResult(ms, trainer.transitions, trainer.weights,
                       ms[-1].accuracy if ms else float("nan"),
                       sum(m.total_s for m in ms))
    if out is not None:
        print(summarize(cfg, result), file=out)
    return result


def read_metrics(path):
    """Return ``(header, rows)``: provenance comments and typed metric rows."""
    header, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if ": " in text:
                    k, v = text.split(": ", 1)
                    header[k] = v
                elif text.startswith("transition"):
                    header.setdefault("transitions", []).append(text)
            elif line.strip():
                body.append(line)
    reader = csv.DictReader(body)
    kinds = {f.name: f.type for f in fields(IterationMetrics)}
    rows = []
    for r in reader:
        rows.append({k: (int(v) if kinds.get(k) in ("int", int) else float(v)) for k, v in r.items()})
    return header, rows


def compare_runs(paths) -> list[dict]:
    """Per-file totals; savings and speedups are relative to the first file.

    ``speedup`` is other time over reference time, so above 1 means the
    reference run was faster; ``acc_delta`` is reference minus other.
    """
    if len(paths) < 2:
        raise MismatchedRuns("need at least two metric files")
    runs = [read_metrics(p) for p in paths]
    lengths = {len(rows) for _, rows in runs}
    if len(lengths) != 1:
        raise MismatchedRuns(f"iteration counts differ: {[len(r) for _, r in runs]}")
    if not lengths.pop():
        raise MismatchedRuns("metric files have no rows")
    table = []
    for path, (header, rows) in zip(paths, runs):
        table.append({
            "file": str(path),
            "mode": header.get("mode", "?"),
            "iterations": len(rows),
            "total_s": sum(r["total_s"] for r in rows),
            "final_accuracy": rows[-1]["accuracy"],
        })
    ref = table[0]
    for row in table:
        row["time_saving_s"] = row["total_s"] - ref["total_s"]
        row["speedup"] = row["total_s"] / ref["total_s"] if ref["total_s"] > 0 else float("nan")
        row["acc_delta"] = ref["final_accuracy"] - row["final_accuracy"]
    return table


def format_table(table) -> str:
    cols = ("mode", "total_s", "final_accuracy", "speedup", "time_saving_s", "acc_delta", "file")
    rows = [[f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in table]
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    out = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    out += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(out)
