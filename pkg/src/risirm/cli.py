"""Command-line entry point: ``risirm <subcommand> [flags]``.

Each subcommand writes its tables into ``--out`` together with a
``manifest.json`` holding the resolved config, seeds, default constants,
input and output hashes.  ``risirm replay <manifest>`` re-runs it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from . import experiment as X
from .causal import save_scenarios
from .channel import SPEED_OF_LIGHT, PropagationCfg
from .dataset import Dataset, load_jsonl, save_jsonl
from .evaluation import write_rows
from .optimizer import MAX_ENUMERATION_K
from .plotting import render_csv
from .predictor import load_checkpoint, save_checkpoint

log = logging.getLogger("risirm")

MANIFEST = "manifest.json"


class CliError(RuntimeError):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def constants() -> dict:
    p = PropagationCfg()
    return {
        "package": __version__,
        "numpy": np.__version__,
        "speed_of_light": SPEED_OF_LIGHT,
        "pattern_q": p.pattern_q,
        "path_loss": p.path_loss,
        "max_enumeration_k": MAX_ENUMERATION_K,
        "defaults_hash": C.config_hash(C.DEFAULTS),
    }


# -- inputs -------------------------------------------------------------------

def _load_data(args, cfg) -> dict[str, Dataset]:
    if args.data is None:
        log.info("no --data given; generating environments from the config")
        return X.generate_all(cfg)
    root = Path(args.data)
    out = {}
    for name in cfg["environments"]:
        path = root / f"{name}.jsonl"
        if not path.exists():
            raise CliError(f"{path}: missing dataset file for environment {name!r}")
        out[name] = load_jsonl(path)
    return out


def _inputs(args) -> list[Path]:
    paths = []
    if getattr(args, "data", None):
        paths += sorted(Path(args.data).glob("*.jsonl"))
    for key in ("erm", "irm", "checkpoint", "scenarios"):
        if getattr(args, key, None):
            paths.append(Path(getattr(args, key)))
    paths += [Path(p) for p in getattr(args, "csv", None) or []]
    return paths


def _run_seed(args, cfg) -> int:
    return int(cfg["seed"] if args.seed is None else args.seed)


def _write_table(rows: list[dict], fields: list[str], path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return Path(path)


def _plot(path: Path, args) -> list[Path]:
    if args.no_plots:
        return [path]
    return [path, render_csv(path)]


# -- subcommands --------------------------------------------------------------

def cmd_gen_data(args, cfg) -> list[Path]:
    data = X.generate_all(cfg)
    out = []
    for name, d in data.items():
        path = args.out / f"{name}.jsonl"
        save_jsonl(d, path)
        out.append(path)
        log.info("%s: %d samples -> %s", name, len(d), path)
    return out


def cmd_train(args, cfg) -> list[Path]:
    seed = _run_seed(args, cfg)
    data = _load_data(args, cfg)
    train = X.training_mix(cfg, data, seed)
    tracked = X.tracked_sets(cfg, data, train, seed)
    params, report = X.fit(args.method, train, cfg, seed, tracked)
    ckpt = args.out / f"{args.method}.json"
    save_checkpoint(params, ckpt)
    table = args.out / f"{args.method}_report.csv"
    report.to_csv(table)
    log.info("%s: %d params, final accuracies %s", args.method, params.arch.n_params,
             {k: round(v[-1], 4) for k, v in report.accuracy.items()})
    return [ckpt, *_plot(table, args)]


def _models(args) -> dict:
    missing = [k for k in ("erm", "irm") if not getattr(args, k)]
    if missing:
        raise CliError(f"--{missing[0]} checkpoint is required")
    return {"ERM": load_checkpoint(args.erm), "IRM": load_checkpoint(args.irm)}


def cmd_eval(args, cfg) -> list[Path]:
    seed = _run_seed(args, cfg)
    rows = X.evaluate(cfg, _load_data(args, cfg), _models(args), seed)
    table = args.out / "eval.csv"
    write_rows(rows, table)
    for r in rows:
        log.info("%-4s accuracy %.4f  SE %.4f", r.method, r.accuracy, r.se_mean)
    return _plot(table, args)


def cmd_sweep_ood(args, cfg) -> list[Path]:
    seed = _run_seed(args, cfg)
    rows = X.sweep_ood(cfg, _load_data(args, cfg), _models(args), seed)
    table = args.out / "sweep_ood.csv"
    write_rows(rows, table)
    return _plot(table, args)


def cmd_sweep_samples(args, cfg) -> list[Path]:
    seed = _run_seed(args, cfg)
    rows = X.sweep_samples(cfg, _load_data(args, cfg), seed)
    table = args.out / "sweep_samples.csv"
    write_rows(rows, table)
    return _plot(table, args)


def cmd_intervene(args, cfg) -> list[Path]:
    seed = _run_seed(args, cfg)
    irm = load_checkpoint(args.checkpoint) if args.checkpoint else None
    model, rows = X.intervene(cfg, seed, irm)
    out = []
    if irm is None:
        out.append(args.out / "irm_intervention.json")
        save_checkpoint(model, out[-1])
    scen = args.out / "scenarios.json"
    save_scenarios(X.intervention_scenarios(cfg), scen)
    table = _write_table(rows, ["scenario", "n", "predicted", "simulated", "deviation"], args.out / "intervene.csv")
    for r in rows:
        log.info("%-18s predicted %.4f  simulated %.4f  |dev| %.4f", r["scenario"], r["predicted"],
                 r["simulated"], r["deviation"])
    return out + [scen, *_plot(table, args)]


def cmd_plot(args, cfg) -> list[Path]:
    if not args.csv:
        raise CliError("plot needs at least one CSV file")
    return [render_csv(p, args.out / (Path(p).stem + ".svg")) for p in args.csv]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-ood": cmd_sweep_ood,
    "sweep-samples": cmd_sweep_samples,
    "intervene": cmd_intervene,
    "plot": cmd_plot,
}


# -- parsing and manifests ----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="risirm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config (defaults apply to omitted keys)")
    common.add_argument("--seed", type=int, help="run seed (gen-data: master environment seed)")
    common.add_argument("--out", required=True, type=Path, help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip SVG rendering")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--data", help="directory of <env>.jsonl files from gen-data")
    training.add_argument("--alpha-e", type=float, help="share of training samples from the first environment")
    training.add_argument("--alpha-c", type=float, help="share of first-environment samples with CLASS#1")
    training.add_argument("--lambda", dest="lam", type=float, help="IRM penalty weight")
    training.add_argument("--penalty-mode", choices=["per_sample", "per_environment"])

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--erm", help="ERM checkpoint JSON")
    models.add_argument("--irm", help="IRM checkpoint JSON")

    sub.add_parser("gen-data", parents=[common], help="generate per-environment datasets")
    p = sub.add_parser("train", parents=[common, training], help="train one predictor")
    p.add_argument("--method", required=True, choices=["erm", "irm"])
    sub.add_parser("eval", parents=[common, training, models], help="score BEST/IRM/ERM/RAND on the test env")
    sub.add_parser("sweep-ood", parents=[common, training, models], help="accuracy over the mixing grid")
    sub.add_parser("sweep-samples", parents=[common, training], help="retrain at several training sizes")
    p = sub.add_parser("intervene", parents=[common, training], help="do-calculus scenarios versus simulation")
    p.add_argument("--checkpoint", help="IRM checkpoint (trained on the observational data if omitted)")
    p.add_argument("--scenarios", help="scenario JSON (defaults to the five built-in shapes)")
    p = sub.add_parser("plot", parents=[common], help="render SVG figures from CSV tables")
    p.add_argument("csv", nargs="+")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: the manifest's)")
    return ap


def _overrides(args) -> dict:
    o = {
        "train.alpha_e": getattr(args, "alpha_e", None),
        "train.alpha_c": getattr(args, "alpha_c", None),
        "train.lam": getattr(args, "lam", None),
        "train.penalty_mode": getattr(args, "penalty_mode", None),
        "intervene.scenarios": getattr(args, "scenarios", None),
    }
    if args.command == "gen-data":
        o["seed"] = args.seed
    return o


def _absolute(args) -> None:
    for key in ("data", "erm", "irm", "checkpoint", "scenarios"):
        if getattr(args, key, None):
            setattr(args, key, str(Path(getattr(args, key)).resolve()))
    if getattr(args, "csv", None):
        args.csv = [str(Path(p).resolve()) for p in args.csv]
    args.out = Path(args.out).resolve()


def run(args, cfg: dict) -> dict:
    """Execute one subcommand and write its manifest; return the manifest."""
    args.out.mkdir(parents=True, exist_ok=True)
    inputs = {str(p): sha256(p) for p in _inputs(args)}
    started = time.time()
    outputs = COMMANDS[args.command](args, cfg)
    record = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    manifest = {
        "command": args.command,
        "args": record,
        "config": cfg,
        "config_hash": C.config_hash(cfg),
        "master_seed": cfg["seed"],
        "run_seed": _run_seed(args, cfg) if args.command != "gen-data" else cfg["seed"],
        "constants": constants(),
        "threads": os.environ.get("RIS_IRM_THREADS"),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "elapsed_s": round(time.time() - started, 3),
        "inputs": inputs,
        "outputs": {p.name: sha256(p) for p in outputs},
    }
    (args.out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def replay(path: Path, out: Path | None = None) -> dict:
    m = json.loads(Path(path).read_text())
    args = argparse.Namespace(**m["args"])
    args.command = m["command"]
    args.out = Path(out or args.out).resolve()
    for p, digest in m["inputs"].items():
        if not Path(p).exists() or sha256(p) != digest:
            raise CliError(f"{p}: input changed or missing since the manifest was written")
    cfg = C.validate(m["config"])
    fresh = run(args, cfg)
    differ = [k for k, v in m["outputs"].items() if fresh["outputs"].get(k) != v]
    if differ:
        raise CliError(f"replay produced different outputs: {', '.join(differ)}")
    return fresh


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.command == "replay":
            replay(args.manifest, args.out)
            log.info("replay matched every recorded output")
            return 0
        _absolute(args)
        cfg = C.load(args.config, _overrides(args))
        manifest = run(args, cfg)
        log.info("wrote %s", ", ".join(manifest["outputs"]))
        return 0
    except (C.ConfigError, CliError, FileNotFoundError, ValueError) as exc:
        print(f"risirm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
