"""Train the dispatch policy on the two-machine toy problem and save it.

Writes a policy file loadable by the `policy` scheduler entry of `bench run`,
then scores it against uniform-random play on held-out episodes.

Usage: python3 scripts/train_policy.py [--out policy.txt] [--episodes 500] [--seed 0]
"""

import argparse
import sys
from dataclasses import replace

from cloudsched.bench import default_config, run_training


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="policy.txt", help="where to save the weights")
    ap.add_argument("--episodes", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    config = default_config()
    config = replace(
        config, train=replace(config.train, episodes=args.episodes, seed=args.seed)
    )
    report = run_training(config, args.out)
    print(f"saved policy -> {args.out}")
    print(
        "trained return {trained_return:.3f} vs random {random_return:.3f} "
        "(improvement {improvement:+.1%})".format(**report)
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
