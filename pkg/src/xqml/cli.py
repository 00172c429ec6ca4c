"""Command-line front end: ``xqml synth|train|eval|transpile|cost``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cost import cost_report
from .dataio import DataError, flip_labels, load_csv, save_csv, synthesize
from .devices import DeviceSpecError, load_device_spec
from .layers import ANSATZE, ENCODINGS, build_ansatz
from .metrics import metrics_report, records_from, reports_to_csv
from .model import ExecutionConfig, ModelFileError, forward, init_model, load_model, save_model
from .sim import Circuit, Gate
from .training import OPTIMIZERS, PHASES, TrainConfig, TrainingError, train
from .transpile import TranspileError, circuit_metadata, compact, from_text, to_qasm3, to_text, transpile

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    v = float(text)
    if not math.isfinite(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not math.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _layout(text):
    try:
        return tuple(int(q) for q in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"layout must be comma-separated qubit indices, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default .)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="xqml", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"xqml {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a two-cluster dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--dims", type=int, required=True)
    s.add_argument("--sep", type=_nonneg_float, required=True)
    s.add_argument("--output", default="synth.csv", help="file name inside --out-dir")

    t = sub.add_parser("train", parents=[common], help="train a hybrid model")
    t.add_argument("--data", required=True)
    t.add_argument("--phase", choices=PHASES, default="noiseless")
    t.add_argument("--device", help="bundled device name or JSON path")
    t.add_argument("--layout", type=_layout)
    t.add_argument("--optimizer", choices=OPTIMIZERS, default="adam")
    t.add_argument("--lr", type=_nonneg_float, default=0.01)
    t.add_argument("--epochs", type=_positive_int, default=10)
    t.add_argument("--batch-size", type=_positive_int, default=32)
    t.add_argument("--patience", type=_positive_int)
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--n-qubits", type=_positive_int, default=8)
    t.add_argument("--encoding", choices=ENCODINGS, default="AmplitudeEmbedding")
    t.add_argument("--ansatz", choices=ANSATZE, default="SimplifiedTwoDesign")
    t.add_argument("--layers", type=_positive_int, default=3)
    t.add_argument("--measured-qubit", type=int, default=0)
    t.add_argument("--init", help="start from this model file instead of a fresh one")
    t.add_argument("--model-out", default="model.json")

    e = sub.add_parser("eval", parents=[common], help="accuracy and explainability metrics per backend")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--backend", action="append", choices=("noiseless", "topology", "noisy"))
    e.add_argument("--device")
    e.add_argument("--layout", type=_layout)
    e.add_argument("--shots", type=_positive_int)
    e.add_argument("--flip-labels", action="store_true")

    x = sub.add_parser("transpile", parents=[common], help="route and lower to native gates")
    src = x.add_mutually_exclusive_group()
    src.add_argument("--model", help="transpile this model's ansatz")
    src.add_argument("--circuit", help="transpile a circuit text file")
    x.add_argument("--device", default="heavy-hex-127")
    x.add_argument("--layout", type=_layout)

    c = sub.add_parser("cost", parents=[common], help="QPU cost accounting")
    c.add_argument("--rate", type=_positive_float, required=True, help="USD per minute")
    c.add_argument("--minutes", type=_nonneg_float)
    c.add_argument("--samples", type=_positive_int)
    c.add_argument("--per-sample-s", type=_positive_float)
    c.add_argument("--total-samples", type=_positive_int)
    c.add_argument("--quoted-usd", type=_positive_float, help="stated figure to check the estimate against")
    return p


def _header(args, config):
    return {"tool": "xqml", "version": __version__, "command": args.command, "config": config,
            "seeds": {"seed": args.seed}}


def _write_json(path, payload):
    # insertion order is deterministic and keeps metadata columns in order
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _config(args, *skip):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())
            if k not in ("quiet", "command") + skip}


def cmd_synth(args, out, log):
    ds = synthesize(args.n, args.dims, args.sep, seed=args.seed)
    path = out / args.output
    save_csv(ds, path)
    log(f"wrote {len(ds)} rows to {path}")
    return {"path": str(path)}


def _device(args, needed):
    if args.device is None:
        if needed:
            raise UsageError("--device is required here")
        return None
    return load_device_spec(args.device)


def cmd_train(args, out, log):
    device = _device(args, args.phase != "noiseless")
    data = load_csv(args.data)
    if args.init:
        model = load_model(args.init)
    else:
        model = init_model(data.n_features, args.n_qubits, args.encoding, args.ansatz, args.layers,
                           args.measured_qubit, seed=args.seed)
    cfg = TrainConfig(phase=args.phase, optimizer=args.optimizer, lr=args.lr, epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed, patience=args.patience,
                      val_fraction=args.val_fraction, device=device, layout=args.layout,
                      route_seed=args.seed)
    best, history = train(model, data, cfg, log=log)
    model_path = out / args.model_out
    save_model(best, model_path)
    history.to_csv(out / "history.csv")
    exec_cfg = cfg.execution()
    outputs = np.atleast_1d(forward(best, data.features, exec_cfg))
    preds = (outputs >= 0.5).astype(int)
    report = metrics_report(records_from(outputs, preds, data.labels, exec_cfg.tag))
    summary = _header(args, _config(args))
    summary.update({
        "model": {**best.config(), "n_params": best.n_params, "path": str(model_path)},
        "best_epoch": history.best_epoch,
        "epochs_run": len(history),
        "final": {"train_loss": history.loss[-1], "train_accuracy": history.accuracy[-1]},
        "metrics": report.as_dict(),
    })
    _write_json(out / "train_summary.json", summary)
    log(f"accuracy {report.accuracy:.4f} on {report.n_samples} samples; model saved to {model_path}")
    return summary


def _backends(args):
    names = args.backend or ["noiseless"]
    device = _device(args, any(b != "noiseless" for b in names))
    cfgs = []
    for name in names:
        if args.shots:
            if name == "topology":
                raise UsageError("--shots is supported for the noiseless and noisy backends only")
            cfgs.append(ExecutionConfig.sampled(args.shots, args.seed, device if name == "noisy" else None,
                                                args.layout))
        elif name == "noiseless":
            cfgs.append(ExecutionConfig.noiseless())
        else:
            cfgs.append(ExecutionConfig(name, device, args.layout, route_seed=args.seed))
    return cfgs


def cmd_eval(args, out, log):
    cfgs = _backends(args)
    model = load_model(args.model)
    data = load_csv(args.data)
    if args.flip_labels:
        data = flip_labels(data)
    reports = []
    for cfg in cfgs:
        outputs = np.atleast_1d(forward(model, data.features, cfg))
        preds = (outputs >= 0.5).astype(int)
        rep = metrics_report(records_from(outputs, preds, data.labels, cfg.tag))
        reports.append(rep)
        log(f"{rep.backend}: accuracy {rep.accuracy:.4f} sureness {rep.sureness:.4f} "
            f"confidence {rep.confidence_mean:.4f}+-{rep.confidence_spread:.4f} "
            f"n0 {rep.n0} n1 {rep.n1} imbalance {rep.imbalance}")
    payload = _header(args, _config(args))
    payload["reports"] = [r.as_dict() for r in reports]
    _write_json(out / "metrics.json", payload)
    (out / "metrics.csv").write_text(reports_to_csv(reports))
    return payload


def _expand(circuit, physical, width):
    return Circuit(width, [Gate(g.name, tuple(physical[q] for q in g.qubits), g.params) for g in circuit.gates])


def cmd_transpile(args, out, log):
    device = load_device_spec(args.device)
    layout = args.layout
    if args.circuit:
        circ = from_text(Path(args.circuit).read_text())
        used = sorted({q for g in circ.gates for q in g.qubits})
        on_device = circ.n_qubits <= device.n_qubits and all(
            len(g.qubits) == 1 or device.coupled(*g.qubits) for g in circ.gates
        )
        if layout is None and on_device and used:
            # already placed on device indices: keep the placement
            circ, layout = compact(circ, used), tuple(used)
    else:
        model = load_model(args.model) if args.model else init_model(seed=args.seed)
        circ = build_ansatz(model.ansatz, model.quantum_weights)
    t = transpile(circ, device, layout, seed=args.seed)
    native = _expand(t.circuit, t.physical, device.n_qubits)
    (out / "circuit.txt").write_text(to_text(native))
    (out / "circuit.qasm").write_text(to_qasm3(native, device.native_gates))
    meta = circuit_metadata(t.circuit)
    payload = _header(args, _config(args))
    payload.update({
        "device": device.name,
        "metadata": meta.row(),
        "n_swaps": t.n_swaps,
        "layout": {"initial": list(t.layout.initial), "final": list(t.layout.final)},
    })
    _write_json(out / "transpile.json", payload)
    log(json.dumps(meta.row()))
    return payload


def cmd_cost(args, out, log):
    if args.minutes is None and (args.samples is None or args.per_sample_s is None):
        raise UsageError("give --minutes, or --samples together with --per-sample-s")
    rep = cost_report(args.rate, args.minutes, args.samples, args.per_sample_s, args.total_samples,
                      args.quoted_usd)
    payload = _header(args, _config(args))
    payload["cost"] = rep
    _write_json(out / "cost.json", payload)
    log(json.dumps(rep, sort_keys=True))
    return payload


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "transpile": cmd_transpile, "cost": cmd_cost}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", 0), ("out_dir", "."), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)

    def log(msg):
        if not args.quiet:
            print(msg)

    try:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out, log)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"xqml {args.command}: error: {exc}\n")
    except TrainingError as exc:
        print(f"xqml {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"xqml {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelFileError, DeviceSpecError, TranspileError, OSError, ValueError) as exc:
        print(f"xqml {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
