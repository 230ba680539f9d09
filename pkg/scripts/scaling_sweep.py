"""Descriptor value and runtime against sample size.

    python scripts/scaling_sweep.py --descriptor twonn_dimension --sizes 250,500,1000,2000
"""

import argparse
import time

import numpy as np

from uts.core import PointCloud, SampleSpec, normalize_rows, sample
from uts.signature import DescriptorConfig, compute_global_signature


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--descriptor", default="effective_rank")
    ap.add_argument("--sizes", default="250,500,1000,2000")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--dim", type=int, default=32)
    args = ap.parse_args()

    cloud = normalize_rows(PointCloud(np.random.default_rng(0).normal(size=(args.n, args.dim))))
    sizes = [int(s) for s in args.sizes.split(",")]
    cfg = DescriptorConfig(descriptors=(args.descriptor,))
    print("size,component,mean,sd,seconds")
    for size in sizes:
        values: dict[str, list[float]] = {}
        start = time.perf_counter()
        for seed in range(args.seeds):
            sub = sample(cloud, SampleSpec(size, seed))
            sig = compute_global_signature(sub, cfg.without_sampling(size), seed)
            for cid, v in sig.components.items():
                values.setdefault(cid, []).append(v)
        elapsed = (time.perf_counter() - start) / args.seeds
        for cid, vs in values.items():
            print(f"{size},{cid},{np.mean(vs):.6g},{np.std(vs):.3g},{elapsed:.3f}")


if __name__ == "__main__":
    main()
