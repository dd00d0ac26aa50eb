"""Command line entry points: convert, split, train, eval, predict, ablate.

Every run writes ``manifest.json`` into ``--out`` holding the subcommand, the
resolved configuration, the seed, sha256 hashes of every input file and the
artifact version.  Configuration precedence is defaults < ``--config`` < flags.
"""
from __future__ import annotations

import argparse
import hashlib
import importlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import RunConfig
from .data import (FIVE_DOMAINS, CorpusError, SlotCatalog, domain_of, dump_corpus, load_corpus,
                   load_slot_catalog, make_examples, split_single_domain, split_zero_shot)
from .trainer import (CheckpointError, evaluate, load_checkpoint, predict_examples, read_checkpoint_meta,
                      save_checkpoint, train)

log = logging.getLogger("madst")

ABLATION_FLAGS = {
    "disable_word_xattn": "word_xattn",
    "disable_high_xattn": "high_xattn",
    "disable_self_attn": "self_attn",
    "use_mean_slot_pool": "slot_summarizer",
}


class CliError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def artifact_version() -> str:
    """Package version plus a short content hash of the package sources."""
    h = hashlib.sha1()
    root = resources.files("madst")
    for name in sorted(p.name for p in root.iterdir() if p.name.endswith(".py")):
        h.update(name.encode())
        h.update(root.joinpath(name).read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, subcommand: str, run: Optional[RunConfig], seed: Optional[int],
                   inputs: dict, extra: Optional[dict] = None) -> dict:
    manifest = {
        "subcommand": subcommand,
        "config": run.to_json() if run else None,
        "seed": seed,
        "corpus_hashes": {k: sha256(v) for k, v in sorted(inputs.items()) if v},
        "version": artifact_version(),
    }
    manifest.update(extra or {})
    write_json(out / "manifest.json", manifest)
    return manifest


def resolve_config(args) -> RunConfig:
    run = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    model, train_cfg = {}, {}
    for flag, field_name in ABLATION_FLAGS.items():
        if getattr(args, flag, False):
            model[field_name] = False
    for flag in ("hidden", "ctx_dim"):
        if getattr(args, flag, None) is not None:
            model[flag] = getattr(args, flag)
    for flag in ("lr", "max_epochs", "patience"):
        if getattr(args, flag, None) is not None:
            train_cfg[flag] = getattr(args, flag)
    if getattr(args, "seed", None) is not None:
        train_cfg["seed"] = args.seed
    return run.override(model, train_cfg)


def _catalog(args) -> SlotCatalog:
    return load_slot_catalog(args.slot_catalog)


def _restrict(dialogs, args, side: str):
    """Apply --zero-shot / --single-domain; ``side`` is 'train' or 'test'."""
    if args.zero_shot:
        tr, te = split_zero_shot(dialogs, args.zero_shot)
        return tr if side == "train" else te
    if args.single_domain:
        return split_single_domain(dialogs, args.single_domain)
    return dialogs


def _eval_slots(args, catalog: SlotCatalog) -> Optional[list[str]]:
    domain = args.zero_shot or args.single_domain
    if not domain:
        return None
    return [s for s in catalog if domain_of(s) == domain]


def load_provider(spec: Optional[str], n_layers: int, dim: int):
    """``module:factory`` -> ``factory(n_layers, dim)``; None keeps the built-in hash provider."""
    if not spec:
        return None
    module, sep, attr = spec.partition(":")
    if not sep or not module or not attr:
        raise CliError(f"--provider must look like module:factory, got {spec!r}")
    try:
        factory = getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise CliError(f"cannot load provider {spec!r}: {exc}") from exc
    return factory(n_layers, dim)


def _require_nonempty(dialogs, what: str) -> None:
    if not dialogs:
        raise CliError(f"{what} is empty after filtering")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- subcommands

def _multiwoz_turns(entry: dict) -> list[dict]:
    logs = entry["log"]
    turns = []
    for i in range(0, len(logs) - 1, 2):
        state = {}
        for domain, parts in logs[i + 1].get("metadata", {}).items():
            for key, value in parts.get("semi", {}).items():
                state[f"{domain}-{key.lower()}"] = value
            for key, value in parts.get("book", {}).items():
                if key != "booked":
                    state[f"{domain}-book {key.lower()}"] = value
        state = {k: v for k, v in state.items() if isinstance(v, str) and v.strip() not in ("", "not mentioned")}
        turns.append({"agent": logs[i - 1]["text"] if i else "", "user": logs[i]["text"], "state": state})
    return turns


def convert_multiwoz(raw: dict, catalog: SlotCatalog) -> list[dict]:
    """Raw MultiWOZ 2.1 ``data.json`` (id -> dialog) into the corpus schema."""
    out = []
    for did in sorted(raw):
        entry = raw[did]
        goal = entry.get("goal", {})
        domains = [d for d in goal if d not in ("message", "topic") and goal[d]]
        turns = _multiwoz_turns(entry)
        if not turns:
            continue
        for t in turns:
            t["state"] = {k: v for k, v in t["state"].items() if k in catalog}
        out.append({"dialogue_id": did, "domains": domains, "turns": turns})
    return out


def cmd_convert(args) -> int:
    out = _out(args)
    catalog = _catalog(args)
    raw = json.loads(Path(args.data).read_text())
    corpus = convert_multiwoz(raw, catalog)
    lists = {}
    for name, path in (("dev", args.val_list), ("test", args.test_list)):
        if path:
            lists[name] = {line.strip() for line in Path(path).read_text().splitlines() if line.strip()}
    held = set().union(*lists.values()) if lists else set()
    parts = {"train": [d for d in corpus if d["dialogue_id"] not in held]}
    for name, ids in lists.items():
        parts[name] = [d for d in corpus if d["dialogue_id"] in ids]
    for name, dialogs in parts.items():
        write_json(out / f"{name}.json", dialogs)
    write_manifest(out, "convert", None, None, {"data": args.data, "val_list": args.val_list,
                                                "test_list": args.test_list},
                   {"counts": {k: len(v) for k, v in parts.items()}})
    return 0


def cmd_split(args) -> int:
    out = _out(args)
    dialogs = load_corpus(args.data, _catalog(args))
    if args.zero_shot:
        tr, te = split_zero_shot(dialogs, args.zero_shot)
        dump_corpus(tr, out / "train.json")
        dump_corpus(te, out / "test.json")
        counts = {"train": len(tr), "test": len(te)}
    else:
        kept = split_single_domain(dialogs, args.single_domain)
        dump_corpus(kept, out / "data.json")
        counts = {"data": len(kept)}
    write_manifest(out, "split", None, None, {"data": args.data},
                   {"zero_shot": args.zero_shot, "single_domain": args.single_domain, "counts": counts})
    return 0


def _train_run(args, run: RunConfig, out: Path, subcommand: str) -> dict:
    catalog = _catalog(args)
    train_d = _restrict(load_corpus(args.data, catalog), args, "train")
    dev_d = _restrict(load_corpus(args.dev or args.data, catalog), args, "train")
    _require_nonempty(train_d, "training corpus")
    _require_nonempty(dev_d, "dev corpus")
    if args.single_domain:
        catalog = catalog.for_domain(args.single_domain)
    provider = load_provider(args.provider, run.model.ctx_layers, run.model.ctx_dim)
    result = train(run, train_d, dev_d, catalog, log_path=out / "train_log.jsonl",
                   static_vectors_path=args.static_vectors, provider=provider)
    save_checkpoint(out / "model.ckpt", result.model, run, result.best_epoch, result.best_dev)
    report, preds = evaluate(result.model, make_examples(dev_d, catalog), run.train.eval_batch_turns)
    report.save(out / "dev_metrics.json")
    manifest = write_manifest(out, subcommand, run, run.train.seed,
                              {"data": args.data, "dev": args.dev, "slot_catalog": args.slot_catalog,
                               "static_vectors": args.static_vectors},
                              {"ablations": run.model.ablations, "provider": args.provider or "hash",
                               "zero_shot": args.zero_shot,
                               "single_domain": args.single_domain, "best_epoch": result.best_epoch,
                               "best_dev_joint": result.best_dev})
    return manifest


def cmd_train(args) -> int:
    _train_run(args, resolve_config(args), _out(args), "train")
    return 0


def cmd_ablate(args) -> int:
    """With disable flags: train that variant.  Without: the full model plus each single ablation."""
    out = _out(args)
    base = resolve_config(args)
    if base.model.ablations:
        _train_run(args, base, out, "ablate")
        return 0
    summary = {}
    for variant in ["full"] + list(ABLATION_FLAGS.values()):
        run = base if variant == "full" else base.override({variant: False})
        sub = out / variant
        sub.mkdir(exist_ok=True)
        manifest = _train_run(args, run, sub, "ablate")
        losses = [json.loads(line)["loss"] for line in (sub / "train_log.jsonl").read_text().splitlines()]
        summary[variant] = {"best_dev_joint": manifest["best_dev_joint"], "final_train_loss": losses[-1]}
    write_json(out / "ablation_summary.json", summary)
    write_manifest(out, "ablate", base, base.train.seed,
                   {"data": args.data, "dev": args.dev, "slot_catalog": args.slot_catalog},
                   {"variants": list(summary)})
    return 0


def _load(args):
    if not Path(args.checkpoint).is_file():
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    provider = None
    if args.provider:
        cfg = RunConfig.from_json(read_checkpoint_meta(args.checkpoint)["config"]).model
        provider = load_provider(args.provider, cfg.ctx_layers, cfg.ctx_dim)
    model, meta = load_checkpoint(args.checkpoint, provider)
    dialogs = _restrict(load_corpus(args.data, model.catalog), args, "test")
    _require_nonempty(dialogs, "evaluation corpus")
    return model, meta, dialogs


def _write_predictions(path: Path, preds) -> None:
    with open(path, "w") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_json(), sort_keys=True) + "\n")


def cmd_eval(args) -> int:
    out = _out(args)
    model, meta, dialogs = _load(args)
    run = RunConfig.from_json(meta["config"])
    report, preds = evaluate(model, make_examples(dialogs, model.catalog), run.train.eval_batch_turns,
                             _eval_slots(args, model.catalog))
    report.save(out / "metrics.json")
    report.save_per_slot_csv(out / "per_slot.csv")
    _write_predictions(out / "predictions.jsonl", preds)
    write_manifest(out, "eval", run, run.train.seed, {"data": args.data, "checkpoint": args.checkpoint},
                   {"zero_shot": args.zero_shot, "single_domain": args.single_domain,
                    "joint_goal": report.joint_goal, "checkpoint_dev_metric": meta["dev_metric"]})
    print(json.dumps({"joint_goal": report.joint_goal, "avg_slot": report.avg_slot}))
    return 0


def cmd_predict(args) -> int:
    out = _out(args)
    model, meta, dialogs = _load(args)
    run = RunConfig.from_json(meta["config"])
    preds = predict_examples(model, make_examples(dialogs, model.catalog), run.train.eval_batch_turns,
                             _eval_slots(args, model.catalog))
    _write_predictions(out / "predictions.jsonl", preds)
    write_manifest(out, "predict", run, run.train.seed, {"data": args.data, "checkpoint": args.checkpoint})
    return 0


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, domain_flags: bool = True, domain_required: bool = False) -> None:
    p.add_argument("--data", required=True, help="corpus JSON (raw MultiWOZ data.json for convert)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--slot-catalog", help="slot catalog JSON (default: bundled 30-slot catalog)")
    if domain_flags:
        g = p.add_mutually_exclusive_group(required=domain_required)
        g.add_argument("--zero-shot", choices=FIVE_DOMAINS, metavar="DOMAIN")
        g.add_argument("--single-domain", choices=FIVE_DOMAINS, metavar="DOMAIN")


def _provider_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", metavar="MODULE:FACTORY",
                   help="contextual embedder factory called as factory(n_layers, dim) (default: built-in hash)")


def _training(p: argparse.ArgumentParser) -> None:
    _provider_flag(p)
    p.add_argument("--dev", help="dev corpus JSON (default: --data)")
    p.add_argument("--config", help="RunConfig JSON with 'model' and 'train' sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--static-vectors", help="text file of 'word v1 .. vd' static vectors")
    p.add_argument("--hidden", type=int)
    p.add_argument("--ctx-dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    for flag in ABLATION_FLAGS:
        p.add_argument("--" + flag.replace("_", "-"), action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="madst", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="raw MultiWOZ 2.1 data.json -> corpus JSON")
    _common(p, domain_flags=False)
    p.add_argument("--val-list", help="file of dev dialog ids")
    p.add_argument("--test-list", help="file of test dialog ids")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("split", help="zero-shot or single-domain corpus split")
    _common(p, domain_required=True)
    p.set_defaults(func=cmd_split)

    for name, func in (("train", cmd_train), ("ablate", cmd_ablate)):
        p = sub.add_parser(name, help="train a model" if name == "train" else "train ablation variants")
        _common(p)
        _training(p)
        p.set_defaults(func=func)

    for name, func in (("eval", cmd_eval), ("predict", cmd_predict)):
        p = sub.add_parser(name, help=f"{name} with a checkpoint")
        _common(p)
        p.add_argument("--checkpoint", required=True)
        _provider_flag(p)
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, CorpusError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"madst {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
