"""Train on dialogs whose gold hotel name never enters the vocabulary and check it is copied."""
import argparse
import json
from pathlib import Path

from madst.experiments import copy_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--n-train", type=int, default=10)
    p.add_argument("--out", default="runs/copy")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = copy_experiment(args.epochs, args.seed, args.n_train)
    for split in ("train", "held"):
        r = res[split]
        r["emitted"] = sum(p == g for p, g in zip(r["pred"], r["gold"]))
        print(f"{split}: {r['emitted']}/{len(r['gold'])} out-of-vocabulary names copied")
    (out / "result.json").write_text(json.dumps(res, indent=2) + "\n")


if __name__ == "__main__":
    main()
