"""Latent-dimension trade-off: debiased probe metrics for each latent width."""

import argparse
import json
import time
from pathlib import Path

from embdebias.benchmark import SWEEP_DIMS, bench_synth_config, bench_train_config
from embdebias.data import synth_generate
from embdebias.evaluation import latent_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--dims", default=",".join(map(str, SWEEP_DIMS)))
    ap.add_argument("--out-dir", default="results/latent_sweep")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ds = synth_generate(bench_synth_config(seed=args.seed))
    t0 = time.perf_counter()
    result = latent_sweep(ds, [int(d) for d in args.dims.split(",")], bench_train_config(seed=args.seed))
    print(f"sweep finished in {time.perf_counter() - t0:.1f}s")
    (out / "sweep.csv").write_text(result.to_csv())
    (out / "sweep.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    print(result.to_csv(), end="")


if __name__ == "__main__":
    main()
