"""Command line entry point: ``rxattack {gen-data,train,attack,uap} --config run.yaml``.

Every subcommand reads one YAML document; anything missing falls back to
``DEFAULT_CONFIG``.  Failures exit nonzero and print a single line
``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

log = logging.getLogger("rxattack")

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "train_ebn0": [float(e) for e in range(9)],
        "test_ebn0": [e / 2 for e in range(17)],
        "train_per_ebn0": 20000,
        "test_per_ebn0": 10000,
        "train_path": "out/train.aird",
        "test_path": "out/test.aird",
    },
    "model": {"architecture": "compact-conv", "width": 1.0, "hidden": 128, "checkpoint": "out/compact-conv.airm"},
    "surrogate": {"architecture": "resnet-like", "width": 1.0, "hidden": 128, "checkpoint": "out/resnet-like.airm"},
    "train": {"batch_size": 256, "epochs": 8, "initial_lr": 0.001, "decay_every": 2, "decay_factor": 0.1,
              "loss_csv": None},
    "attack": {
        "scenario": "A",
        "methods": ["awgn", "fgsm", "mifgsm", "pgd"],
        "psr_db": [-5.0],
        "papr_db": [2.0],
        "iterations": [3],
        "ebn0": None,
        "max_per_ebn0": None,
        "out": "out/ber.csv",
        "dump": None,
        "uap_path": "out/uap.airu",
    },
    "uap": {"subset_fraction": 0.25, "desired_ber": 0.3, "inner_step": 0.1, "max_epochs": 10, "psr_db": -5.0,
            "papr_db": 2.0, "seed": 0, "out": "out/uap.airu"},
}

SCENARIO_METHODS = {
    "A": {"none", "awgn", "fgsm", "mifgsm", "pgd"},
    "B": {"none", "awgn", "fgsm", "mifgsm", "pgd"},
    "C": {"none", "awgn", "uap"},
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        self.category = category
        super().__init__(message)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc}") from exc
    try:
        user = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise CliError("config", f"{path}: {exc}".replace("\n", " ")) from exc
    if not isinstance(user, dict):
        raise CliError("config", f"{path}: top level must be a mapping")
    return _merge(DEFAULT_CONFIG, user)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _record_config(cfg: dict, out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(cfg, config_hash=config_hash(cfg))
    Path(f"{out}.config.yaml").write_text(yaml.safe_dump(doc, sort_keys=True))


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError("missing-input", f"{what} not found: {p}")
    return p


def cmd_gen_data(cfg: dict, split: str = "both") -> None:
    from .signal_chain import generate_dataset
    from .storage import save_dataset

    d = cfg["data"]
    splits = ("train", "test") if split == "both" else (split,)
    for i, name in enumerate(splits):
        grid = d[f"{name}_ebn0"]
        count = int(d[f"{name}_per_ebn0"])
        if not grid or count <= 0:
            raise CliError("config", f"{name}: Eb/N0 grid must be non-empty and count positive")
        seed = int(cfg["seed"]) * 2 + (0 if name == "train" else 1)
        ds = generate_dataset([float(e) for e in grid], count, seed)
        out = Path(d[f"{name}_path"])
        try:
            save_dataset(ds, out)
        except OSError as exc:
            raise CliError("io", f"cannot write {out}: {exc}") from exc
        _record_config(cfg, out)
        print(f"{name}: {len(ds)} records -> {out}")
        for e in ds.ebn0_values():
            print(f"  Eb/N0 {e:5.1f} dB: {len(ds.bucket(e))}")


def _load_model(section: dict):
    from .receiver import CheckpointError, load_checkpoint

    path = _require(section["checkpoint"], "checkpoint")
    try:
        return load_checkpoint(path, expect_architecture=section["architecture"])
    except CheckpointError as exc:
        raise CliError("checkpoint", str(exc)) from exc


def _load_data(path):
    from .storage import FormatError, load_dataset

    try:
        return load_dataset(_require(path, "dataset"))
    except FormatError as exc:
        raise CliError("format", f"{path}: {exc}") from exc


def cmd_train(cfg: dict, surrogate: bool = False) -> None:
    from .receiver import TrainConfig, build_receiver, save_checkpoint, train

    section = cfg["surrogate" if surrogate else "model"]
    ds = _load_data(cfg["data"]["train_path"])
    t = cfg["train"]
    tc = TrainConfig(int(t["batch_size"]), int(t["epochs"]), float(t["initial_lr"]), int(t["decay_every"]),
                     float(t["decay_factor"]), int(cfg["seed"]))
    try:
        model = build_receiver(section["architecture"], int(cfg["seed"]), float(section["width"]),
                               int(section["hidden"]))
    except ValueError as exc:
        raise CliError("config", str(exc)) from exc
    model, history = train(model, ds, tc)
    out = Path(section["checkpoint"])
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = save_checkpoint(model, out)
    loss_csv = Path(t["loss_csv"] or f"{out}.loss.csv")
    with open(loss_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "loss"])
        for i, v in enumerate(history):
            w.writerow([i + 1, f"{tc.lr_at(i):.10g}", f"{v:.10g}"])
    _record_config(cfg, out)
    print(f"{section['architecture']}: {model.n_params()} parameters, final loss {history[-1]:.4f}")
    print(f"checkpoint -> {out} (sha256 {digest[:16]})")


def cmd_attack(cfg: dict) -> None:
    from .attacks import AttackBudget
    from .metrics import evaluate_attack, write_csv
    from .signal_chain import SignalDataset
    from .storage import FormatError, load_uap, save_dataset

    a = cfg["attack"]
    scenario = str(a["scenario"]).upper()
    if scenario not in SCENARIO_METHODS:
        raise CliError("scenario", f"unknown scenario {scenario!r}")
    methods = list(a["methods"])
    bad = [m for m in methods if m not in SCENARIO_METHODS[scenario]]
    if bad:
        raise CliError("scenario", f"methods {bad} not valid for scenario {scenario}")
    if not methods or not a["psr_db"] or not a["papr_db"] or not a["iterations"]:
        raise CliError("config", "method list and budget grids must be non-empty")
    target = _load_model(cfg["model"])
    grad_model = _load_model(cfg["surrogate"]) if scenario == "B" else target
    uap = None
    if scenario == "C" and "uap" in methods:
        try:
            uap, _ = load_uap(_require(a["uap_path"], "universal perturbation"))
        except FormatError as exc:
            raise CliError("format", str(exc)) from exc
    ds = _load_data(cfg["data"]["test_path"])
    if a["ebn0"] is not None:
        keep = np.isin(np.round(ds.ebn0_db, 3), np.round(np.asarray(a["ebn0"], dtype=np.float32), 3))
        ds = ds[np.flatnonzero(keep)]
    if a["max_per_ebn0"]:
        ds = SignalDataset.concat([ds.bucket(e)[: int(a["max_per_ebn0"])] for e in ds.ebn0_values()])
    if len(ds) == 0:
        raise CliError("config", "no test samples selected")
    out = Path(a["out"])
    prefix = f"{cfg['surrogate']['architecture']}+" if scenario == "B" else ""
    dumps = []
    written = 0
    for method in methods:
        budgets = [None] if method == "none" else [
            AttackBudget.from_db(float(p), float(q), int(t))
            for p in a["psr_db"] for q in (a["papr_db"] if method not in ("awgn", "fgsm") else a["papr_db"][:1])
            for t in (a["iterations"] if method in ("mifgsm", "pgd") else [1])]
        for budget in budgets:
            label = method if method in ("none", "awgn") else prefix + method
            curve = evaluate_attack(target, grad_model, ds, method, budget, seed=int(cfg["seed"]), uap=uap,
                                    label=label)
            written += write_csv(out, curve)
            for row in curve:
                print(f"{row.method:>20} Eb/N0 {row.ebn0_db:4.1f} dB  BER {row.ber:.5f} +- {row.stderr:.5f}")
            if a["dump"] and method != "none":
                from .metrics import adversarial_signals
                adv, _ = adversarial_signals(method, ds, budget, grad_model, uap, int(cfg["seed"]))
                dumps.append(SignalDataset(ds.bits, adv, ds.ebn0_db, ds.clean))
    if dumps:
        save_dataset(SignalDataset.concat(dumps), a["dump"])
    _record_config(cfg, out)
    print(f"{written} new row(s) -> {out}")


def cmd_uap(cfg: dict) -> None:
    from .attacks import AttackBudget
    from .storage import UapMetadata, save_uap
    from .uap import UapConfig, build_uap, select_subset

    u = cfg["uap"]
    try:
        ucfg = UapConfig(AttackBudget.from_db(float(u["psr_db"]), float(u["papr_db"])), float(u["subset_fraction"]),
                         float(u["desired_ber"]), float(u["inner_step"]), int(u["max_epochs"]), int(u["seed"]))
    except ValueError as exc:
        raise CliError("config", str(exc)) from exc
    model = _load_model(cfg["model"])
    subset = select_subset(_load_data(cfg["data"]["train_path"]), ucfg)
    delta, report = build_uap(model, subset, ucfg)
    out = Path(u["out"])
    save_uap(delta, UapMetadata(ucfg.subset_fraction, ucfg.desired_ber, ucfg.budget.beta, report.epochs_used,
                                report.reached_target, report.final_ber, ucfg.seed), out)
    Path(f"{out}.report.json").write_text(json.dumps({
        "subset_size": len(subset), "epochs_used": report.epochs_used, "final_subset_ber": report.final_ber,
        "terminated_by": report.terminated_by, "updates": report.updates, "ber_history": report.ber_history,
    }, indent=2) + "\n")
    _record_config(cfg, out)
    print(f"uap: {len(subset)} samples, {report.epochs_used} epoch(s), subset BER {report.final_ber:.4f} "
          f"({report.terminated_by}) -> {out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rxattack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output path override")
        return sp

    g = common(sub.add_parser("gen-data", help="generate train/test datasets"))
    g.add_argument("--split", choices=("train", "test", "both"), default="both")
    t = common(sub.add_parser("train", help="train a receiver"))
    t.add_argument("--surrogate", action="store_true", help="train the surrogate model section instead")
    a = common(sub.add_parser("attack", help="run an attack sweep and append BER rows"))
    a.add_argument("--scenario", choices=("A", "B", "C"))
    a.add_argument("--method", action="append", help="repeatable; replaces the method list")
    a.add_argument("--psr-db", type=float, action="append")
    a.add_argument("--papr-db", type=float, action="append")
    a.add_argument("--iters", type=int, action="append")
    a.add_argument("--surrogate", help="surrogate checkpoint (implies scenario B)")
    common(sub.add_parser("uap", help="build a universal perturbation"))
    return p


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg["uap"]["seed"] = args.seed
    cmd = args.command
    if cmd == "gen-data" and args.out:
        if args.split == "both":
            raise CliError("invalid-argument", "--out needs --split train or --split test")
        cfg["data"][f"{args.split}_path"] = args.out
    elif cmd == "train" and args.out:
        cfg["surrogate" if args.surrogate else "model"]["checkpoint"] = args.out
    elif cmd == "uap" and args.out:
        cfg["uap"]["out"] = args.out
    elif cmd == "attack":
        a = cfg["attack"]
        if args.out:
            a["out"] = args.out
        if args.surrogate:
            cfg["surrogate"]["checkpoint"] = args.surrogate
            a["scenario"] = "B"
        if args.scenario:
            a["scenario"] = args.scenario
        for name, key in (("method", "methods"), ("psr_db", "psr_db"), ("papr_db", "papr_db"),
                          ("iters", "iterations")):
            if getattr(args, name):
                a[key] = getattr(args, name)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    threads = os.environ.get("AIR_THREADS")
    try:
        if threads:
            import torch

            torch.set_num_threads(max(1, int(threads)))
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "gen-data":
            cmd_gen_data(cfg, args.split)
        elif args.command == "train":
            cmd_train(cfg, args.surrogate)
        elif args.command == "attack":
            cmd_attack(cfg)
        else:
            cmd_uap(cfg)
    except CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: invalid-argument: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
