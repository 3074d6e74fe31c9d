#!/usr/bin/env python3
"""Desk-scale benchmark: score every measure on a synthetic world and sweep the knobs.

Builds a labeled hypersphere world with known ground truth, fits plain and
consistency-filtered mixtures, evaluates all seven measures against the three
uncertainty notions, and runs the three ablation sweeps (mixture size,
consistency threshold, number of views). Outputs land in --outdir:

    report.csv          measure x notion AUROC table
    sweep_<axis>.csv    ablation tables with mean/stddev summary rows
    plot_<axis>.json    plot-ready series (x = axis value, y = AUROC)
"""

import argparse
import sys
import time
from pathlib import Path

from embcert.cli import _write_sweep_csv
from embcert.core import Measure, Notion
from embcert.evaluation import DatasetInputs, SweepGrid, SweepInputs, evaluate, sweep, sweep_plot_data
from embcert.gmm import GmmFitConfig, fit_gmm
from embcert.io import atomic_write, dumps_exact, write_report
from embcert.neighbors import ConsistencyConfig, filter_consistent
from embcert.scorers import ScorerSpec
from embcert.synth import SynthConfig, generate_world

DENSITY = (Measure.P_EMB, Measure.P_EMB_ENS)
FILTERED = (Measure.P_EMB_KTAU, Measure.P_EMB_ENS_KTAU)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="benchmark_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--clusters", type=int, default=10)
    ap.add_argument("--per-cluster", type=int, default=400)
    ap.add_argument("--kappa", type=float, default=25.0)
    ap.add_argument("--n-comp", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    cfg = SynthConfig(
        m=args.m,
        n_clusters=args.clusters,
        per_cluster_n=args.per_cluster,
        kappa=args.kappa,
        label_noise=0.02,
        n_views=4,
        view_noise_sigma=0.05,
        per_cluster_test=80,
        n_ood=800,
        seed=args.seed,
    )
    world = generate_world(cfg)
    acc = sum(r.correct for r in world.downstream) / len(world.downstream)
    print(f"world: N={world.train.n}, m={world.train.m}, downstream accuracy {acc:.3f}")

    ccfg = ConsistencyConfig(k_spec=0.01, tau=0.5)
    gcfg = GmmFitConfig(n_comp=args.n_comp, seed=args.seed)
    plain = fit_gmm(world.train, gcfg)
    filtered_train = filter_consistent(world.train, ccfg)
    filtered = fit_gmm(filtered_train, gcfg)
    print(
        f"models: plain ll={plain.fit_meta.final_log_likelihood:.1f}, "
        f"filtered keeps {filtered_train.n}/{world.train.n} rows"
    )

    specs = [ScorerSpec(Measure.DELTA), ScorerSpec(Measure.ENTROPY), ScorerSpec(Measure.MAX_SCORE)]
    specs += [ScorerSpec(m, model=plain) for m in DENSITY]
    specs += [ScorerSpec(m, model=filtered) for m in FILTERED]
    in_ds = DatasetInputs("synth", batches=world.test_batches, downstream=world.downstream)
    out_ds = DatasetInputs("ood", batches=world.ood_batches, downstream=world.ood_downstream)
    instances = evaluate(specs, in_ds, [out_ds])
    write_report(instances, outdir / "report.csv")
    print(f"report: {len(instances)} cells -> {outdir / 'report.csv'}")
    for inst in sorted(instances, key=lambda i: (i.notion.value, -i.auroc)):
        print(f"  {inst.notion.value:<10} {inst.measure.value:<16} {inst.auroc:.3f}")

    base = SweepInputs(
        train=world.train,
        in_dist=in_ds,
        out_dists=(out_ds,),
        gmm_config=gcfg,
        measures=tuple(s.measure for s in specs),
        notions=(Notion.ALEATORIC, Notion.EPISTEMIC, Notion.OVERALL),
        consistency=ccfg,
    )
    grids = [
        SweepGrid("n_comp", (2, 5, 10, 20, 50), repeats=args.repeats),
        SweepGrid("tau", (0.0, 0.2, 0.4, 0.6, 0.8), repeats=args.repeats),
        SweepGrid("n_transforms", (2, 3, 4), repeats=args.repeats),
    ]
    for grid in grids:
        t = time.time()
        rows, summaries = sweep(grid, base)
        _write_sweep_csv(rows, summaries, outdir / f"sweep_{grid.axis}.csv")
        with atomic_write(outdir / f"plot_{grid.axis}.json", "w") as f:
            f.write(dumps_exact(sweep_plot_data(summaries)))
            f.write("\n")
        print(f"sweep {grid.axis}: {len(rows)} rows in {time.time() - t:.1f} s")

    print(f"done in {time.time() - t0:.1f} s -> {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
