"""Cluster synthetic per-user demand series with DTW k-means.

Generates a mixed population (flat, daily-cycle and spike users), picks k by
inspecting the inertia elbow, then writes cluster and centroid CSVs.

Usage: python3 scripts/cluster_profiles.py [--out cluster_out] [--k 3] [--seed 0]
"""

import argparse
import sys
from pathlib import Path

from cloudsched.rewards import kmeans_cluster, kmeans_elbow, write_centroid_csv, write_cluster_csv
from cloudsched.workload import generate_profiles


def build_population(horizon: int, seed: int):
    # Three behavior groups, cpu series only; user ids stay globally unique.
    flat = generate_profiles(4, horizon, seed=seed, shape="flat", level=0.3, noise=0.05)
    cyclic = generate_profiles(4, horizon, seed=seed + 1, shape="diurnal", noise=0.05)
    spiky = generate_profiles(4, horizon, seed=seed + 2, shape="spike", noise=0.05)
    out = []
    for offset, group in ((0, flat), (100, cyclic), (200, spiky)):
        for p in group:
            if p.resource != "cpu":
                continue
            out.append(type(p)(p.user_id + offset, p.resource, p.series))
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="cluster_out", help="output directory")
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--horizon", type=int, default=48, help="slots per series")
    args = ap.parse_args()

    profiles = build_population(args.horizon, args.seed)
    print(f"{len(profiles)} profiles, {args.horizon} slots each")
    for k, inertia in kmeans_elbow(profiles, ks=range(1, 7), seed=args.seed):
        print(f"  k={k}: inertia {inertia:.4f}")

    model = kmeans_cluster(profiles, k=args.k, seed=args.seed)
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    write_cluster_csv(model, str(target / "clusters.csv"))
    write_centroid_csv(model, str(target / "centroids.csv"))
    sizes = {}
    for cid in model.assignments.values():
        sizes[cid] = sizes.get(cid, 0) + 1
    print(f"chose k={args.k}: sizes {sizes}, inertia {model.inertia:.4f} -> {target}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
