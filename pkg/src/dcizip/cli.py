"""Command-line front end: ``dcizip {gen,train,eval,fer,inspect}``.

Parameters come from built-in defaults, then an optional ``--config`` file
of ``key value`` lines, then command-line flags.  Exit status is 0 on
success, 1 on a runtime or verification failure and 2 on a configuration
error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DciZipError
from .schema import DciSchema, default_schema, load_schema

log = logging.getLogger("dcizip")

METHOD_ORDER = ("identity", "huffman", "adaptive", "rnn", "transformer", "joint")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # trace generation
    num_ues: int = 3
    num_rbgs: int = 13
    tti_count: int = 20000
    # training
    test_fraction: float = 0.03
    order: str = "descending"
    models: str = "transformer,rnn"
    epochs: int = 30
    patience: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    L: int = 4
    rnn_L: int = 4
    # evaluation
    methods: str = "identity,huffman,adaptive,rnn,transformer,joint"
    # FER sweep
    snr_db: str = "-5,-4,-3,-2,-1"
    max_frames: int = 20000
    min_errors: int = 100
    list_size: int = 8

    @classmethod
    def from_text(cls, text: str) -> dict:
        known = {f.name: f.type for f in fields(cls)}
        out = {}
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition(" ")
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"config line {no}: unknown key {key!r}")
            out[key] = _coerce(key, known[key], value.strip())
        return out

    def method_list(self) -> list[str]:
        methods = [m.strip() for m in self.methods.split(",") if m.strip()]
        bad = [m for m in methods if m not in METHOD_ORDER]
        if bad or not methods:
            raise ConfigError(f"unknown or empty method list: {self.methods!r}")
        return methods

    def snr_grid(self) -> tuple[float, ...]:
        try:
            grid = tuple(float(s) for s in self.snr_db.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"bad SNR grid {self.snr_db!r}") from None
        if not grid:
            raise ConfigError("empty SNR grid")
        return grid


def _coerce(key, typ, value):
    typ = {"int": int, "float": float, "str": str}.get(typ, typ) if isinstance(typ, str) else typ
    try:
        return typ(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


# -- helpers -----------------------------------------------------------------

def _schema(args) -> DciSchema:
    return load_schema(args.schema) if args.schema else default_schema()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _trace_path(args) -> Path:
    return Path(args.trace) if getattr(args, "trace", None) else Path(args.out) / "trace.dcit"


def _load_trace(args, schema):
    from .tracegen import load_trace

    path = _trace_path(args)
    if not path.exists():
        raise ConfigError(f"trace file {path} not found (run `dcizip gen` first)")
    return load_trace(path, schema)


def _model_dir(args) -> Path:
    return Path(args.models) if getattr(args, "models", None) else Path(args.out) / "models"


# -- subcommands ---------------------------------------------------------------

def cmd_gen(cfg: RunConfig, args) -> int:
    from .tracegen import SimConfig, save_trace, simulate

    schema = _schema(args)
    trace = simulate(SimConfig(num_ues=cfg.num_ues, num_rbgs=cfg.num_rbgs, tti_count=cfg.tti_count, seed=cfg.seed),
                     schema)
    path = _trace_path(args)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, path)
    counts = ", ".join(f"UE{u.ue}={len(u)}" for u in trace.ues)
    print(f"wrote {path}: {len(trace.ues)} UEs, T={trace.tti_count}, N={schema.N}, messages {counts}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    from .coders import HuffmanCoder
    from .models import RnnConfig, TrainConfig, TransformerConfig, save_model, train_rnn, train_transformer
    from .pipeline import field_entropies, sort_fields
    from .tracegen import split_train_test

    if cfg.order not in ("descending", "ascending"):
        raise ConfigError("order must be 'descending' or 'ascending'")
    kinds = [k.strip() for k in cfg.models.split(",") if k.strip()]
    if not set(kinds) <= {"transformer", "rnn"}:
        raise ConfigError(f"unknown model kinds in {cfg.models!r}")
    schema = _schema(args)
    train, _ = split_train_test(_load_trace(args, schema), cfg.test_fraction)
    mdir = _model_dir(args)
    mdir.mkdir(parents=True, exist_ok=True)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs, patience=cfg.patience, seed=cfg.seed)
    curve_rows = []
    for u in train.ues:
        HuffmanCoder.fit(schema, u.bits).save(mdir / f"ue{u.ue}.huffman.txt")
        order = sort_fields(field_entropies(u.bits, schema), descending=cfg.order == "descending").order
        for kind in kinds:
            t0 = time.time()
            progress = lambda c, kind=kind, ue=u.ue: log.info("UE %d %s epoch %d val %.4f", ue, kind, c["epoch"],
                                                               c["val_bce"])
            if kind == "transformer":
                model = train_transformer(schema, u.bits, TransformerConfig(L=cfg.L), tcfg, order, progress=progress)
            else:
                model = train_rnn(schema, u.bits, RnnConfig(L=cfg.rnn_L), tcfg, progress=progress)
            save_model(model, mdir / f"ue{u.ue}.{kind}.dcim")
            for c in model.metadata["curve"]:
                curve_rows.append((u.ue, kind, c["epoch"], c["train_bce"], c["val_bce"]))
            print(f"UE {u.ue} {kind}: best val BCE {model.best_val_bce:.4f} bits/bit at epoch "
                  f"{model.metadata['best_epoch']} ({time.time() - t0:.0f} s)")
    with open(mdir / "training_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue", "model", "epoch", "train_bce", "val_bce"])
        for r in curve_rows:
            w.writerow([r[0], r[1], r[2], f"{r[3]:.6f}", f"{r[4]:.6f}"])
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    from .coders import HuffmanCoder
    from .models import load_model
    from .pipeline import bitmap_matrix, build_codecs, concat_context, evaluate, save_frames
    from .tracegen import split_train_test

    schema = _schema(args)
    methods = cfg.method_list()
    train, test = split_train_test(_load_trace(args, schema), cfg.test_fraction)
    mdir = _model_dir(args)
    codecs = []
    for u in train.ues:
        def artifact(kind, u=u):
            path = mdir / f"ue{u.ue}.{kind}.dcim"
            if not path.exists():
                raise ConfigError(f"model file {path} not found (run `dcizip train` first)")
            return load_model(path, schema)

        hc_path = mdir / f"ue{u.ue}.huffman.txt"
        hc = HuffmanCoder.load(hc_path, schema) if hc_path.exists() else None
        need_tr = "transformer" in methods or "joint" in methods
        all_codecs = build_codecs(schema, u.bits, artifact("transformer") if need_tr else None,
                                  artifact("rnn") if "rnn" in methods else None, hc)
        codecs.append({m: all_codecs[m] for m in methods})
    frames = {}
    report = evaluate(concat_context(train, test), codecs, schema.N, frames)
    out = _out(args)
    report.write_csv(out / "report.csv")
    report.write_summary_csv(out / "summary.csv")
    records = []
    for m in methods:
        rows = []
        for u in test.ues:
            fr = frames[(u.ue, m)]
            rows.append(bitmap_matrix(fr, schema.N))
            records.extend((u.ue, int(t), f) for t, f in zip(u.tti, fr))
        np.savetxt(out / f"bitmap_{m}.csv", np.concatenate(rows), fmt="%d", delimiter=",",
                   header=f"0/1 payload bit, 2 null space; columns 0..{schema.N - 1}")
    save_frames(records, out / "frames.dcif")
    for m, r in report.summary().items():
        print(f"{m:12s} mean ratio {r:.4f}")
    return 0


def cmd_fer(cfg: RunConfig, args) -> int:
    from .pdcch import LengthSource, PdcchConfig, fer_sweep, snr_at_fer, write_fer_csv

    pcfg = PdcchConfig.load(args.pdcch_config) if args.pdcch_config else PdcchConfig(
        list_size=cfg.list_size, max_frames=cfg.max_frames, min_errors=cfg.min_errors, seed=cfg.seed)
    pcfg = replace(pcfg, snr_db=cfg.snr_grid()) if not args.pdcch_config else pcfg
    if not pcfg.snr_db:
        raise ConfigError("empty SNR grid")
    report = Path(args.report) if args.report else Path(args.out) / "report.csv"
    if not report.exists():
        raise ConfigError(f"report {report} not found (run `dcizip eval` first)")
    lengths: dict[str, list[int]] = {}
    N = None
    with open(report, newline="") as fh:
        for row in csv.DictReader(fh):
            lengths.setdefault(row["method"], []).append(int(row["compressed_bits"]))
            N = int(row["original_bits"])
    sources = [LengthSource.fixed(f"uncompressed-{N}", N)]
    for m, label in (("huffman", "HC"), ("joint", "Joint")):
        if m in lengths:
            sources.append(LengthSource.from_lengths(label, lengths[m], pcfg.resolution))
    if len(sources) == 1:
        raise ConfigError("report holds neither huffman nor joint lengths")
    curves = fer_sweep(pcfg, sources, progress=lambda lab, p: log.info("%s %.2f dB: %d/%d", lab, p.snr_db,
                                                                       p.errors, p.frames))
    out = _out(args)
    write_fer_csv(curves, out / "fer.csv")
    base = snr_at_fer(curves[0])
    for c in curves:
        s = snr_at_fer(c)
        print(f"{c.label:16s} SNR@FER=1e-2 {s:7.3f} dB  gain {base - s:+.3f} dB  candidates {c.candidates}")
    return 0


def cmd_inspect(cfg: RunConfig, args) -> int:
    schema = _schema(args)
    plan = schema.plan
    print(f"schema hash {schema.hash.hex()}  D={schema.D} N={schema.N} eta={schema.eta} "
          f"R={plan.R} dictionary={plan.dictionary_size}")
    print(f"{'field':12s} {'width':>5s} {'segments':>8s} {'start':>5s}")
    for k, f in enumerate(schema.fields):
        print(f"{f.name:12s} {f.width:5d} {plan.field_nseg[k]:8d} {plan.field_start[k]:5d}")
    path = _trace_path(args)
    if getattr(args, "trace", None) or path.exists():
        from .pipeline import field_entropies, sort_fields

        trace = _load_trace(args, schema)
        for u in trace.ues:
            ent = field_entropies(u.bits, schema)
            order = sort_fields(ent).order
            print(f"UE {u.ue} ({len(u)} messages) entropies: "
                  + " ".join(f"{schema.fields[k].name}={ent[k]:.3f}" for k in range(schema.D)))
            print(f"  descending order: {[schema.fields[k].name for k in order]}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "fer": cmd_fer, "inspect": cmd_inspect}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcizip", description="Lossless compression of DCI messages.")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--config", help="file of 'key value' lines overriding defaults")
    p.add_argument("--out", default="dcizip-out", help="output directory (default ./dcizip-out)")
    p.add_argument("--schema", help="schema file (default: built-in 39-bit layout)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="simulate a scheduler and write a DCI trace")
    g.add_argument("--trace", help="trace file (default OUT/trace.dcit)")
    g.add_argument("--tti-count", type=int)
    g.add_argument("--num-ues", type=int)

    t = sub.add_parser("train", help="train per-UE models and Huffman codebooks")
    t.add_argument("--trace")
    t.add_argument("--models", help="model directory (default OUT/models)")
    t.add_argument("--order", choices=("descending", "ascending"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--kinds", dest="model_kinds", help="comma list of transformer,rnn")

    e = sub.add_parser("eval", help="compress the test split with every method")
    e.add_argument("--trace")
    e.add_argument("--models")
    e.add_argument("--methods")

    f = sub.add_parser("fer", help="FER sweep of the polar-coded channel")
    f.add_argument("--report", help="per-message report CSV (default OUT/report.csv)")
    f.add_argument("--pdcch-config", help="PDCCH config file")
    f.add_argument("--snr-db", help="comma-separated SNR grid (Es/N0, dB)")
    f.add_argument("--max-frames", type=int)

    i = sub.add_parser("inspect", help="print schema, segment plan and field entropies")
    i.add_argument("--trace")
    return p


def _resolve(args) -> RunConfig:
    overrides = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        overrides.update(RunConfig.from_text(text))
    flag_map = {"seed": "seed", "tti_count": "tti_count", "num_ues": "num_ues", "order": "order",
                "epochs": "epochs", "model_kinds": "models", "methods": "methods", "snr_db": "snr_db",
                "max_frames": "max_frames"}
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            overrides[key] = v
    try:
        return RunConfig(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"dcizip: configuration error: {exc}", file=sys.stderr)
        return 2
    except DciZipError as exc:
        print(f"dcizip: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
