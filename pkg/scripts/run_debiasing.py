"""Before/after probe report on the default synthetic benchmark.

Generates the data, trains the debiaser, and writes the dataset, checkpoint,
debiased dataset and fairness report into OUT_DIR.
"""

import argparse
import json
import time
from pathlib import Path

from embdebias.benchmark import bench_synth_config, bench_train_config, relative_mse
from embdebias.data import synth_generate, write_csv
from embdebias.evaluation import fairness_report, reports_to_json
from embdebias.trainer import save_checkpoint, train, transform_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--out-dir", default="results/debiasing")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ds = synth_generate(bench_synth_config(seed=args.seed))
    cfg = bench_train_config(seed=args.seed)
    t0 = time.perf_counter()
    ckpt = train(ds, cfg)
    print(f"trained in {time.perf_counter() - t0:.1f}s")
    debiased = transform_dataset(ckpt, ds)

    write_csv(ds, out / "original.csv")
    write_csv(debiased, out / "debiased.csv")
    save_checkpoint(ckpt, out / "model.json")
    before, after = fairness_report(ds, debiased, config=cfg.to_dict())
    (out / "fairness.json").write_text(reports_to_json(before, after))

    print(f"relative reconstruction MSE: {relative_mse(ds, debiased):.3f}")
    print(f"{'metric':<22}{'original':>10}{'debiased':>10}")
    rows = [("sex AUC", before.probes["sex"]["auc"], after.probes["sex"]["auc"]),
            ("age MAE", before.probes["age"]["mae"], after.probes["age"]["mae"]),
            ("age MAE (mean pred.)", before.probes["age"]["mean_baseline_mae"], after.probes["age"]["mean_baseline_mae"])]
    for task in ("cancer_1y", "cancer_2y"):
        rows.append((f"{task} AUC", before.probes[task]["auc"], after.probes[task]["auc"]))
        for attr in ("sex", "age"):
            rows.append((f"{task} EOD {attr}", before.eod[task][attr], after.eod[task][attr]))
    for name, a, b in rows:
        fa = "n/a" if a is None else f"{a:.3f}"
        fb = "n/a" if b is None else f"{b:.3f}"
        print(f"{name:<22}{fa:>10}{fb:>10}")
    print(json.dumps({"out_dir": str(out)}))


if __name__ == "__main__":
    main()
