"""Label-flipping sweep on original vs debiased embeddings.

Reads the datasets written by run_debiasing.py (or regenerates them) and
writes the EOD curve CSV plus one SVG chart per task and target group.
"""

import argparse
import time
from pathlib import Path

from embdebias.benchmark import bench_synth_config, bench_train_config
from embdebias.data import load_csv, synth_generate
from embdebias.poison import PoisonSweepConfig, run_poison_sweep
from embdebias.svg import line_chart
from embdebias.trainer import train, transform_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--data-dir", default="results/debiasing",
                    help="directory holding original.csv and debiased.csv; regenerated if missing")
    ap.add_argument("--out-dir", default="results/poisoning")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    src, out = Path(args.data_dir), Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if (src / "original.csv").exists() and (src / "debiased.csv").exists():
        original, debiased = load_csv(src / "original.csv"), load_csv(src / "debiased.csv")
    else:
        original = synth_generate(bench_synth_config(seed=args.seed))
        debiased = transform_dataset(train(original, bench_train_config(seed=args.seed)), original)

    t0 = time.perf_counter()
    cfg = PoisonSweepConfig(seed=args.seed)
    curve = run_poison_sweep(original, debiased, cfg)
    print(f"grid of {len(curve.rows)} cells in {time.perf_counter() - t0:.1f}s")
    (out / "poison_curve.csv").write_text(curve.to_csv())
    for task in cfg.tasks:
        for group in cfg.target_groups:
            series = {k: curve.series(k, task, group) for k in ("original", "debiased")}
            (out / f"poison_{task}_{group}.svg").write_text(
                line_chart(series, title=f"{task}: flipping {group} labels", x_label="flip fraction", y_label="EOD"))
            cells = "  ".join(f"{f:.2f}: {o:.3f}/{d:.3f}" for (f, o), (_, d) in zip(*series.values()))
            print(f"{task:<10} {group:<7} EOD original/debiased  {cells}")


if __name__ == "__main__":
    main()
