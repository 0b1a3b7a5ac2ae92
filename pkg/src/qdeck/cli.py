"""Command-line surface tying the workbench together.

Subcommands: codegen, sample, bp, train, sagu, eval, sweep.  Each prints
a short human-readable report (or writes the requested artifact) and
exits 0 on success, 1 with a one-line diagnostic on failure, 2 on usage
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import codes, harness, noise, quba, sagu
from .bp import BpConfig


def _load_registry(path: str | None):
    if path in (None, "", "default"):
        return codes.load_default_registry()
    return codes.load_code_registry(path)


def _build(registry, name: str):
    return codes.build_code(codes.get_spec(registry, name))


def _cmd_codegen(args) -> int:
    registry = _load_registry(args.registry)
    code = _build(registry, args.name)
    spec = code.spec
    print(f"{code.name}: n={code.n} k={code.k} distance_label={spec.distance_label}")
    print(f"  family={spec.family} lx={spec.lx} ly={spec.ly} "
          f"checks: hx {code.hx.rows}x{code.hx.cols}, hz {code.hz.rows}x{code.hz.cols}")
    print(f"  row weight: {len(spec.poly_a) + len(spec.poly_b)}; "
          f"css and logical-pairing invariants verified")
    return 0


def _cmd_sample(args) -> int:
    registry = _load_registry(args.registry)
    code = _build(registry, args.name)
    noise.generate_dataset(code, args.count, args.pmax, args.seed, args.out,
                           fixed_p=args.fixed_p)
    mode = f"fixed p={args.fixed_p}" if args.fixed_p is not None else \
        f"p ~ U[0, {args.pmax}]"
    print(f"wrote {args.count} records for {code.name} ({mode}) to {args.out}")
    return 0


def _cmd_bp(args) -> int:
    registry = _load_registry(args.registry)
    code = _build(registry, args.name)
    cfg = BpConfig(max_iters=args.iters, method=args.method,
                   ms_scaling=args.ms_scaling, schedule=args.schedule)
    decoder = harness.make_decoder(code, "bp_osd" if args.osd else "bp", bp_cfg=cfg)
    for est in harness.evaluate_ler(code, decoder, args.p, args.trials, args.seed):
        print(f"{decoder.name} {code.name} p={est.p}: ler={est.ler:.6f} "
              f"[{est.wilson_lo:.6f}, {est.wilson_hi:.6f}] "
              f"({est.failures}/{est.trials})")
    return 0


def _cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    registry = _load_registry(args.registry)
    code = _build(registry, args.name)
    workdir = cfg.get("workdir", ".")
    os.makedirs(workdir, exist_ok=True)
    seed = int(cfg.get("seed", 0))
    p_max = float(cfg.get("p_max", 0.15))

    def dataset(split, default_size):
        path = cfg.get(f"{split}_path")
        if path is None:
            size = int(cfg.get(f"{split}_size", default_size))
            path = os.path.join(workdir, f"{split}_{seed}.ds")
            if not os.path.exists(path):
                noise.generate_dataset(code, size, p_max,
                                       seed + (0 if split == "train" else 1), path)
        return noise.load_dataset(path, code)

    train_ds = dataset("train", 3000)
    val_ds = dataset("val", 300)
    arch = {"d_h": 32, "msg_hidden": 256, "heads": 4, "n_iters": 40,
            "dropout": 0.1, **cfg.get("arch", {})}
    model = quba.QubaModel.from_arch(arch, seed=seed)
    tc = quba.TrainConfig(
        epochs=int(cfg.get("epochs", 10)),
        batch_size=int(cfg.get("batch_size", 16)),
        lr=float(cfg.get("lr", 5e-4)),
        lr_step=cfg.get("lr_step"),
        patience=int(cfg.get("patience", 20)),
        val_mc_passes=int(cfg.get("val_mc_passes", 10)),
        seed=seed,
    )
    model, history = quba.train_quba(model, code, train_ds, val_ds, tc)
    out = cfg.get("out", os.path.join(workdir, "quba_model.ckpt"))
    quba.save_model(out, model, extra={"code": code.name})
    if cfg.get("history"):
        quba.write_history_csv(cfg["history"], history)
    best = min((h.val_ler_mean for h in history), default=float("nan"))
    print(f"trained {code.name} for {len(history)} epochs; "
          f"best val LER {best:.6f}; model -> {out}")
    return 0


def _cmd_sagu(args) -> int:
    registry = _load_registry(args.registry)
    if args.emit_default:
        plan = sagu.build_default_plan(registry)
        plan.to_json(args.emit_default)
        print(f"wrote default plan to {args.emit_default}")
        return 0
    if not args.plan:
        print("error: --plan or --emit-default required", file=sys.stderr)
        return 2
    plan = sagu.SaguPlan.from_json(args.plan)
    model, history = sagu.run_sagu(plan, registry, args.workdir)
    quba.save_model(args.out, model, extra={"plan": os.path.basename(args.plan)})
    if args.history:
        quba.write_history_csv(args.history, history)
    print(f"sagu finished ({len(history)} epoch records); model -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    registry = _load_registry(args.registry)
    code = _build(registry, args.code)
    model = quba.load_model(args.model)
    decoder = harness.make_decoder(code, args.decoder, model=model,
                                   mc_passes=args.mc_passes, seed=args.seed)
    for p in args.p_list:
        for est in harness.evaluate_ler(code, decoder, p, args.trials, args.seed):
            print(f"{decoder.name} {code.name} p={est.p} [{est.bound_variant}]: "
                  f"ler={est.ler:.6f} wilson=[{est.wilson_lo:.6f}, "
                  f"{est.wilson_hi:.6f}] ({est.failures}/{est.trials})")
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.SweepConfig.from_json(args.config)
    registry = _load_registry(args.registry)
    code = _build(registry, cfg.code)
    rows = harness.sweep(cfg, code, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qdeck",
        description="quantum-LDPC decoding workbench (BB codes, BP/OSD, "
                    "Bayesian attention GNN, cross-code training)",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codegen", help="build a code and print its stats")
    p.add_argument("registry", help="registry JSON path, or 'default'")
    p.add_argument("name", help="code name, e.g. '[[72,12,6]]'")
    p.set_defaults(fn=_cmd_codegen)

    p = sub.add_parser("sample", help="generate a dataset file")
    p.add_argument("name")
    p.add_argument("--registry", default=None)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--pmax", type=float, default=0.15)
    p.add_argument("--fixed-p", type=float, default=None, dest="fixed_p")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("bp", help="estimate BP / BP-OSD logical error rate")
    p.add_argument("name")
    p.add_argument("--registry", default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--iters", type=int, default=32)
    p.add_argument("--method", choices=("min_sum", "sum_product"),
                   default="min_sum")
    p.add_argument("--ms-scaling", type=float, default=0.725, dest="ms_scaling")
    p.add_argument("--schedule", choices=("serial", "parallel"), default="serial")
    p.add_argument("--osd", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_bp)

    p = sub.add_parser("train", help="train a QuBA model on one code")
    p.add_argument("name")
    p.add_argument("--registry", default=None)
    p.add_argument("--config", required=True, help="training config JSON")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sagu", help="run a three-phase cross-code plan")
    p.add_argument("--registry", default=None)
    p.add_argument("--plan")
    p.add_argument("--emit-default", dest="emit_default",
                   help="write the published default plan JSON and exit")
    p.add_argument("--workdir", default="sagu_work")
    p.add_argument("--out", default="sagu_model.ckpt")
    p.add_argument("--history", default=None)
    p.set_defaults(fn=_cmd_sagu)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--registry", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--code", required=True)
    p.add_argument("--p-list", dest="p_list", type=float, nargs="+",
                   required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--M", dest="mc_passes", type=int, default=10)
    p.add_argument("--decoder", choices=("quba", "quba_osd"), default="quba")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep", help="decoder sweep over p values -> CSV")
    p.add_argument("--registry", default=None)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
