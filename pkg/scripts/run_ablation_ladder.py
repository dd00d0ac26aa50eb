"""Full model versus each single ablation: same seed, same schedule, final train loss.

Defaults to the 20-dialog synthetic corpus; pass --data (corpus JSON) to use
another corpus with the bundled slot catalog.
"""
import argparse
import dataclasses
import json
from pathlib import Path

from madst.data import load_corpus, load_slot_catalog
from madst.experiments import ablation_ladder, ablation_run
from madst.synthetic import overfit_corpus


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data")
    p.add_argument("--slot-catalog")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--out", default="runs/ablation")
    args = p.parse_args()
    if args.data:
        catalog = load_slot_catalog(args.slot_catalog)
        dialogs = load_corpus(args.data, catalog)
    else:
        dialogs, _, catalog = overfit_corpus(20, seed=args.seed)
    run = ablation_run(args.seed)
    run = dataclasses.replace(run, train=dataclasses.replace(run.train, max_epochs=args.epochs))
    res = ablation_ladder(run, dialogs, catalog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(res, indent=2) + "\n")
    full = res["full"]["final_train_loss"]
    for variant, r in res.items():
        flag = "" if variant == "full" or r["final_train_loss"] >= full else "  <- below full model"
        print(f"{variant:16s} {r['final_train_loss']:.6f}{flag}")


if __name__ == "__main__":
    main()
