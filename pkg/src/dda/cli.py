"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import logging
import os
import sys

from . import config as config_mod
from . import data, evaluate, gradcheck, network, trainer
from .config import ConfigError

log = logging.getLogger("dda")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(p):
    p.add_argument("--config", help="key = value config file with [section] headers")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="dda", description="Deep discriminant analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="materialize a synthetic dataset")
    _common(p)
    p.add_argument("--kind", choices=("blades", "xor", "rings"))
    p.add_argument("--count", type=int, help="total image count (blades), split 6:1:1")
    p.add_argument("--n", type=int, help="points per cluster (xor) or ring (rings) in the train split")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--out", help="dataset root directory")

    for name, helptext in (("train", "train one model"), ("sweep", "lambda_p sweep (Table-1 layout CSV)")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--dataset")
        p.add_argument("--loss", choices=trainer.LOSS_KINDS)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if name == "sweep":
            p.add_argument("--values", help="comma-separated lambda_p values")
            p.add_argument("--baselines", action="store_true",
                           help="also run LDA, DDA-only and focal-only reference rows")

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--out", help="directory for eval.jsonl")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _common(p)
    p.add_argument("--component", choices=gradcheck.COMPONENTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--batches", type=int)
    p.add_argument("--tolerance", type=float)
    return parser


def _load_config(args, flag_map):
    cfg = config_mod.defaults()
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file {args.config} not found")
        config_mod.load(args.config, cfg)
    config_mod.apply_overrides(cfg, args.overrides)
    for attr, dotted in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            section, key = dotted.split(".")
            cfg.values[section][key] = value
    for key, value in sorted(cfg.flat().items()):
        log.info("config %s = %r", key, value)
    return cfg


def _train_config(cfg, **extra):
    d = config_mod.train_config_dict(cfg)
    d.update({k: v for k, v in extra.items() if v is not None})
    try:
        return trainer.TrainConfig.from_dict(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _summary(rec):
    m = rec.test_metrics
    gap = "nan" if m["mu_gap"] is None else f"{m['mu_gap']:.4f}"
    return f"loss={rec.config['loss']} test_f1={m['f1']:.4f} test_miou={m['miou']:.4f} mu_gap={gap}"


def cmd_generate(args):
    cfg = _load_config(args, {"kind": "data.kind", "count": "data.count", "n": "data.n",
                              "seed": "data.seed", "size": "data.size", "out": "data.root"})
    d = cfg["data"]
    if d["root"] is None:
        raise UsageError("generate needs an output directory (--out or data.root)")
    kind = d["kind"]
    if kind == "blades":
        if d["count"] is not None:
            if d["count"] < 3:
                raise UsageError("--count must be at least 3 (one image per split)")
            val = test = max(1, round(d["count"] / 8))
            counts = {"train": d["count"] - val - test, "val": val, "test": test}
        else:
            counts = {s: d[s] for s in data.SPLITS}
        params = {"size": d["size"]}
    elif kind in ("xor", "rings"):
        n = d["n"] if d["n"] is not None else d["train"]
        if n < 1:
            raise UsageError("--n must be at least 1")
        counts = {"train": n, "val": max(1, n // 4), "test": max(1, n // 4)}
        params = {"noise_sd": d["noise_sd"] if d["noise_sd"] is not None else (0.15 if kind == "xor" else 0.1)}
        if kind == "rings":
            params["radii"] = list(d["radii"])
    else:
        raise UsageError(f"unknown dataset kind {kind!r}")
    if min(counts.values()) < 1:
        raise UsageError("every split needs at least one example")
    splits = data.generate_splits(kind, d["seed"], counts, **params)
    manifest = {"seed": d["seed"], "counts": counts, "params": params,
                "split_seeds": {s: data.split_seed(d["seed"], s) for s in data.SPLITS},
                "config": config_mod.dump(cfg)}
    data.write_dataset(d["root"], kind, splits, manifest)
    print(f"wrote {kind} dataset to {d['root']} ({counts['train']}/{counts['val']}/{counts['test']})")
    return EXIT_OK


_TRAIN_FLAGS = {"dataset": "trainer.dataset", "loss": "losses.loss", "seed": "trainer.seed",
                "out": "trainer.output_dir"}


def cmd_train(args):
    cfg = _load_config(args, _TRAIN_FLAGS)
    tcfg = _train_config(cfg)
    rec = trainer.train(tcfg)
    print(_summary(rec))
    return EXIT_OK


def cmd_sweep(args):
    flags = dict(_TRAIN_FLAGS, values="sweep.values", baselines="sweep.baselines")
    if args.values is not None:
        try:
            args.values = tuple(float(v) for v in args.values.split(",") if v.strip())
        except ValueError:
            raise UsageError(f"--values: not a list of numbers: {args.values!r}") from None
    if not args.baselines:
        args.baselines = None
    cfg = _load_config(args, flags)
    base = _train_config(cfg)
    if not base.loss.startswith("pdda"):
        raise UsageError(f"sweep needs a pdda loss kind, got {base.loss!r}")
    out = base.output_dir
    if out is None:
        raise UsageError("sweep needs an output directory (--out or trainer.output_dir)")
    os.makedirs(out, exist_ok=True)
    records = []
    if cfg["sweep"]["baselines"]:
        for kind in ("lda-baseline", "dda_delta", "dda_log", "focal_only"):
            d = base.to_dict()
            d.update(loss=kind, dda_kind=None, lambda_f=None, lambda_p=None,
                     output_dir=os.path.join(out, kind))
            records.append(trainer.train(trainer.TrainConfig.from_dict(d)))
    records += trainer.sweep_lambda_p(base, cfg["sweep"]["values"], jobs=cfg["sweep"]["jobs"])
    trainer.write_sweep_csv(os.path.join(out, "sweep.csv"), records)
    evaluate.write_records(os.path.join(out, "sweep.jsonl"),
                           [dict(r.to_dict(), method=r.method) for r in records])
    for rec in records:
        print(_summary(rec))
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_config(args, {"checkpoint": "eval.checkpoint", "dataset": "trainer.dataset",
                              "out": "trainer.output_dir"})
    ckpt = cfg["eval"]["checkpoint"]
    if ckpt is None:
        raise UsageError("eval needs --checkpoint")
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"checkpoint {ckpt} not found")
    # training settings travel with the checkpoint when a run record sits beside it
    run_json = os.path.join(os.path.dirname(ckpt), "run.json")
    extra = {}
    if os.path.exists(run_json):
        extra = trainer.load_record(run_json).config
        for key in ("dataset", "output_dir"):
            extra.pop(key)
    tcfg = _train_config(cfg, **extra)
    thr, val_m, test_m = trainer.evaluate_checkpoint(ckpt, tcfg)
    record = {"checkpoint": ckpt, "threshold": thr.__dict__, "val": val_m.to_dict(),
              "test": test_m.to_dict(), "config": tcfg.to_dict()}
    if tcfg.output_dir:
        os.makedirs(tcfg.output_dir, exist_ok=True)
        evaluate.write_records(os.path.join(tcfg.output_dir, "eval.jsonl"), [record])
    gap = "nan" if test_m.mu_gap is None else f"{test_m.mu_gap:.4f}"
    print(f"loss={tcfg.loss} test_f1={test_m.f1:.4f} test_miou={test_m.miou:.4f} mu_gap={gap}")
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _load_config(args, {"component": "gradcheck.component", "seed": "gradcheck.seed",
                              "batches": "gradcheck.batches", "tolerance": "gradcheck.tolerance"})
    g = cfg["gradcheck"]
    comps = gradcheck.COMPONENTS if g["component"] is None else (g["component"],)
    if any(c not in gradcheck.COMPONENTS for c in comps):
        raise UsageError(f"unknown component {g['component']!r}")
    results = gradcheck.run(comps, seed=g["seed"], n_batches=g["batches"], min_size=g["min_size"],
                            max_size=g["max_size"], network_instances=g["network_instances"])
    worst = max(results, key=lambda r: r.max_rel_error)
    for r in results:
        print(f"{r.component:10s} max_rel_error={r.max_rel_error:.3e} instances={r.instances}")
    if worst.max_rel_error > g["tolerance"]:
        print(f"FAIL: {worst.component} exceeds tolerance {g['tolerance']:.1e} "
              f"({worst.max_rel_error:.3e} at {worst.worst})", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "sweep": cmd_sweep,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers = [handler]
    log.propagate = False
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"dda {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (network.CheckpointError, trainer.NonFiniteLossError, trainer.DatasetError,
            data.PnmFormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"dda {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
