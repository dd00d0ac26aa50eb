"""Overfit 20 synthetic dialogs (3 domains, 8 slots) and score a paraphrased clone."""
import argparse
import json
from pathlib import Path

from madst.experiments import overfit_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--out", default="runs/overfit")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = overfit_experiment(args.seed, args.max_epochs, log_path=str(out / "train_log.jsonl"))
    res.pop("history")
    (out / "result.json").write_text(json.dumps(res, indent=2) + "\n")
    print(json.dumps(res))


if __name__ == "__main__":
    main()
