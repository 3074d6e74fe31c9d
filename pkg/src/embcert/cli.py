"""Command-line pipeline: synth -> fit -> score -> eval / sweep.

Stages communicate only through declared files, so any stage can be re-run
independently. Every run resolves its configuration (file values overridden
by flags), echoes it to <outdir>/resolved_config.json before doing any work,
and appends a machine-readable line per stage to <outdir>/run.log.jsonl.

Exit codes: 0 success, 1 data/validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import Measure, Notion, ValidationError
from .evaluation import (
    ALL_NOTIONS,
    DatasetInputs,
    SweepGrid,
    SweepInputs,
    auroc,
    evaluate,
    sweep,
    sweep_plot_data,
)
from .gmm import GmmFitConfig, fit_gmm
from .io import (
    atomic_write,
    dumps_exact,
    read_augmented_batches,
    read_downstream,
    read_embeddings,
    read_model,
    write_augmented_batches,
    write_downstream,
    write_embeddings,
    write_model,
    write_report,
    write_scores_csv,
)
from .neighbors import ConsistencyConfig, consistency_scores, filter_consistent
from .scorers import ScorerSpec, score_dataset
from .synth import SynthConfig, generate_world

ALL_MEASURES = tuple(m.value for m in Measure)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _load_config(path: Optional[str], stage: str) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{p}: no such config file")
    raw = p.read_bytes()
    if p.suffix in (".toml", ".tml"):
        import tomli

        doc = tomli.loads(raw.decode())
    else:
        try:
            doc = json.loads(raw.decode())
        except json.JSONDecodeError:
            import tomli

            try:
                doc = tomli.loads(raw.decode())
            except tomli.TOMLDecodeError as e:
                raise ValidationError(f"{p}: neither valid JSON nor TOML: {e}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{p}: config root must be a table/object")
    section = doc.get(stage)
    return section if isinstance(section, dict) else doc


def _resolve(args: argparse.Namespace, config: dict, defaults: dict) -> dict:
    """flag > config file > built-in default, per knob."""
    resolved = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in config:
            resolved[key] = config[key]
        else:
            resolved[key] = default
    return resolved


def _echo_resolved(outdir: Path, stage: str, resolved: dict) -> None:
    doc = {"stage": stage, **resolved}
    with atomic_write(outdir / "resolved_config.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _log_stage(outdir: Path, stage: str, t0: float, inputs: Sequence, outputs: Sequence) -> None:
    entry = {
        "stage": stage,
        "wall_time_s": round(time.perf_counter() - t0, 6),
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).exists()},
        "outputs": [str(p) for p in outputs],
    }
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "run.log.jsonl", "a") as f:
        f.write(json.dumps(entry) + "\n")


def _outdir_for(args: argparse.Namespace, primary_out: str) -> Path:
    if getattr(args, "outdir", None):
        return Path(args.outdir)
    return Path(primary_out).resolve().parent


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "m": 8,
    "n_clusters": 5,
    "per_cluster_n": 200,
    "kappa": 15.0,
    "label_noise": 0.02,
    "n_views": 4,
    "view_noise_sigma": 0.05,
    "ood_mode": "uniform_sphere",
    "ood_angle_deg": 45.0,
    "per_cluster_test": 100,
    "n_ood": 500,
    "seed": 0,
}


def cmd_synth(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    outdir = Path(args.outdir)
    resolved = _resolve(args, _load_config(args.config, "synth"), SYNTH_DEFAULTS)
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_resolved(outdir, "synth", resolved)
    cfg = SynthConfig(
        m=int(resolved["m"]),
        n_clusters=int(resolved["n_clusters"]),
        per_cluster_n=int(resolved["per_cluster_n"]),
        kappa=float(resolved["kappa"]),
        label_noise=float(resolved["label_noise"]),
        n_views=int(resolved["n_views"]),
        view_noise_sigma=float(resolved["view_noise_sigma"]),
        ood_mode=str(resolved["ood_mode"]),
        ood_angle_deg=float(resolved["ood_angle_deg"]),
        per_cluster_test=int(resolved["per_cluster_test"]),
        n_ood=int(resolved["n_ood"]),
        seed=int(resolved["seed"]),
    )
    world = generate_world(cfg)
    outputs = {
        "train": outdir / "train.emb",
        "test_batches": outdir / "test_batches.jsonl",
        "ood": outdir / "ood.emb",
        "ood_batches": outdir / "ood_batches.jsonl",
        "downstream": outdir / "downstream.jsonl",
        "ood_downstream": outdir / "ood_downstream.jsonl",
        "truth": outdir / "world_truth.json",
    }
    write_embeddings(world.train, outputs["train"])
    write_augmented_batches(world.test_batches, outputs["test_batches"])
    write_embeddings(world.ood, outputs["ood"])
    write_augmented_batches(world.ood_batches, outputs["ood_batches"])
    write_downstream(world.downstream, outputs["downstream"])
    write_downstream(world.ood_downstream, outputs["ood_downstream"])
    with atomic_write(outputs["truth"], "w") as f:
        f.write(dumps_exact(world.truth))
        f.write("\n")
    _log_stage(outdir, "synth", t0, [], list(outputs.values()))
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

FIT_DEFAULTS = {
    "n_comp": 20,
    "cov_structure": "full",
    "ridge_eps": 1e-6,
    "max_iters": 200,
    "rel_tol": 1e-6,
    "n_restarts": 1,
    "seed": 0,
    "knn_frac": None,
    "knn_abs": None,
    "tau": None,
    "renormalize": False,
}


def _consistency_from(resolved: dict) -> Optional[ConsistencyConfig]:
    if resolved["tau"] is None:
        return None
    if resolved["knn_abs"] is not None:
        k_spec: int | float = int(resolved["knn_abs"])
    elif resolved["knn_frac"] is not None:
        k_spec = float(resolved["knn_frac"])
    else:
        k_spec = 0.01
    return ConsistencyConfig(k_spec=k_spec, tau=float(resolved["tau"]))


def cmd_fit(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    resolved = _resolve(args, _load_config(args.config, "fit"), FIT_DEFAULTS)
    outdir = _outdir_for(args, args.model_out)
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_resolved(outdir, "fit", {**resolved, "train": args.train, "model_out": args.model_out})
    train = read_embeddings(args.train, renormalize=bool(resolved["renormalize"]))
    ccfg = _consistency_from(resolved)
    if ccfg is not None:
        if args.consistency_csv:
            k = ccfg.resolve_k(train.n)
            scores = consistency_scores(train, k)
            with atomic_write(args.consistency_csv, "w") as f:
                f.write("index,label,consistency\n")
                for i, s in enumerate(scores):
                    f.write(f"{i},{int(train.labels[i])},{float(s)!r}\n")
        train = filter_consistent(train, ccfg)
    cfg = GmmFitConfig(
        n_comp=int(resolved["n_comp"]),
        cov_structure=str(resolved["cov_structure"]),
        ridge_eps=float(resolved["ridge_eps"]),
        max_iters=int(resolved["max_iters"]),
        rel_tol=float(resolved["rel_tol"]),
        n_restarts=int(resolved["n_restarts"]),
        seed=int(resolved["seed"]),
    )
    model = fit_gmm(train, cfg)
    write_model(model, args.model_out)
    _log_stage(outdir, "fit", t0, [args.train], [args.model_out])
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

SCORE_DEFAULTS = {"renormalize": False}


def cmd_score(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    resolved = _resolve(args, _load_config(args.config, "score"), SCORE_DEFAULTS)
    outdir = _outdir_for(args, args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _echo_resolved(
        outdir,
        "score",
        {
            **resolved,
            "measure": args.measure,
            "model": args.model,
            "embeddings": args.embeddings,
            "batches": args.batches,
            "downstream": args.downstream,
            "out": args.out,
        },
    )
    measure = Measure(args.measure)
    renorm = bool(resolved["renormalize"])
    model = read_model(args.model) if args.model else None
    spec = ScorerSpec(measure, model=model)
    inputs = [p for p in (args.embeddings, args.batches, args.downstream) if p]
    sv = score_dataset(
        spec,
        embeddings=read_embeddings(args.embeddings, renormalize=renorm) if args.embeddings else None,
        batches=read_augmented_batches(args.batches, renormalize=renorm) if args.batches else None,
        downstream=read_downstream(args.downstream) if args.downstream else None,
    )
    write_scores_csv(sv, args.out)
    if args.model:
        inputs.append(args.model)
    _log_stage(outdir, "score", t0, inputs, [args.out])
    return 0


# ---------------------------------------------------------------------------
# eval and sweep share dataset loading
# ---------------------------------------------------------------------------


def _parse_named(pairs: Optional[Sequence[str]], flag: str) -> list[tuple[str, str]]:
    out = []
    for item in pairs or []:
        if isinstance(item, (list, tuple)) and len(item) == 2:
            out.append((str(item[0]), str(item[1])))
            continue
        name, sep, path = str(item).partition("=")
        if not sep or not name or not path:
            raise ValidationError(f"{flag} expects NAME=PATH, got {item!r}")
        out.append((name, path))
    return out


def _load_dataset(
    dataset_id: str,
    path: Optional[str],
    downstream_path: Optional[str],
    renormalize: bool,
) -> DatasetInputs:
    embeddings = batches = None
    if path:
        if str(path).endswith(".jsonl"):
            batches = read_augmented_batches(path, renormalize=renormalize)
        else:
            embeddings = read_embeddings(path, renormalize=renormalize, dataset_id=dataset_id)
    downstream = read_downstream(downstream_path) if downstream_path else None
    return DatasetInputs(
        dataset_id=dataset_id,
        embeddings=embeddings,
        batches=tuple(batches) if batches else None,
        downstream=tuple(downstream) if downstream else None,
    )


def _parse_measures(raw) -> list[Measure]:
    if raw is None:
        names = list(ALL_MEASURES)
    elif isinstance(raw, str):
        names = [s.strip() for s in raw.split(",") if s.strip()]
    else:
        names = [str(s) for s in raw]
    try:
        return [Measure(n) for n in names]
    except ValueError as e:
        raise ValidationError(f"unknown measure: {e}") from None


def _parse_notions(raw) -> list[Notion]:
    if raw is None:
        return list(ALL_NOTIONS)
    names = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else [str(s) for s in raw]
    try:
        return [Notion(n) for n in names if n]
    except ValueError as e:
        raise ValidationError(f"unknown notion: {e}") from None


EVAL_DEFAULTS = {
    "measures": None,
    "notions": None,
    "format": "csv",
    "renormalize": False,
}


def _eval_input_paths(args: argparse.Namespace) -> list[str]:
    paths = [args.test_batches or args.test_embeddings, args.downstream]
    for _, p in _parse_named(args.ood, "--ood"):
        paths.append(p)
    for _, p in _parse_named(args.ood_downstream, "--ood-downstream"):
        paths.append(p)
    return [p for p in paths if p]


def _load_eval_datasets(args: argparse.Namespace, renorm: bool) -> tuple[DatasetInputs, list[DatasetInputs]]:
    in_path = args.test_batches or args.test_embeddings
    if not in_path:
        raise ValidationError("provide --test-batches or --test-embeddings for the in-dist set")
    in_dist = _load_dataset(args.in_dist_id, in_path, args.downstream, renorm)
    ood_down = dict(_parse_named(args.ood_downstream, "--ood-downstream"))
    out_dists = []
    for name, path in _parse_named(args.ood, "--ood"):
        out_dists.append(_load_dataset(name, path, ood_down.get(name), renorm))
    return in_dist, out_dists


def cmd_eval(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    resolved = _resolve(args, _load_config(args.config, "eval"), EVAL_DEFAULTS)
    outdir = _outdir_for(args, args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    measures = _parse_measures(resolved["measures"])
    notions = _parse_notions(resolved["notions"])
    _echo_resolved(
        outdir,
        "eval",
        {
            "measures": [m.value for m in measures],
            "notions": [n.value for n in notions],
            "format": resolved["format"],
            "renormalize": resolved["renormalize"],
            "in_dist_id": args.in_dist_id,
            "test_batches": args.test_batches,
            "test_embeddings": args.test_embeddings,
            "downstream": args.downstream,
            "ood": args.ood,
            "ood_downstream": args.ood_downstream,
            "model": args.model,
            "model_ktau": args.model_ktau,
            "out": args.out,
        },
    )
    renorm = bool(resolved["renormalize"])
    in_dist, out_dists = _load_eval_datasets(args, renorm)
    plain = read_model(args.model) if args.model else None
    filtered = read_model(args.model_ktau) if args.model_ktau else None
    specs = []
    for m in measures:
        if m in (Measure.P_EMB, Measure.P_EMB_ENS):
            if plain is None:
                raise ValidationError(f"measure {m.value} needs --model")
            specs.append(ScorerSpec(m, model=plain))
        elif m in (Measure.P_EMB_KTAU, Measure.P_EMB_ENS_KTAU):
            if filtered is None:
                raise ValidationError(f"measure {m.value} needs --model-ktau")
            specs.append(ScorerSpec(m, model=filtered))
        else:
            specs.append(ScorerSpec(m))
    instances = evaluate(specs, in_dist, out_dists, notions=notions)
    write_report(instances, args.out, format=str(resolved["format"]))
    inputs = _eval_input_paths(args) + [p for p in (args.model, args.model_ktau) if p]
    _log_stage(outdir, "eval", t0, inputs, [args.out])
    return 0


SWEEP_DEFAULTS = {
    **EVAL_DEFAULTS,
    "repeats": 1,
    "n_comp": 20,
    "cov_structure": "full",
    "ridge_eps": 1e-6,
    "max_iters": 200,
    "rel_tol": 1e-6,
    "n_restarts": 1,
    "seed": 0,
    "knn_frac": None,
    "knn_abs": None,
    "tau": None,
}


def _parse_axis_values(axis: str, raw) -> tuple:
    vals = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else list(raw)
    if axis in ("n_comp", "n_transforms"):
        return tuple(int(v) for v in vals)
    return tuple(float(v) for v in vals)


def _write_sweep_csv(rows, summaries, path) -> None:
    with atomic_write(path, "w") as f:
        f.write("axis,value,repeat,measure,notion,in_dist,out_dist,auroc\n")
        for r in rows:
            f.write(
                f"{r.axis},{r.value!r},{r.repeat},{r.measure},{r.notion},"
                f"{r.in_dist},{r.out_dist},{r.auroc!r}\n"
            )
        for s in summaries:
            f.write(
                f"{s.axis},{s.value!r},mean,{s.measure},{s.notion},"
                f"{s.in_dist},{s.out_dist},{s.mean!r}\n"
            )
            f.write(
                f"{s.axis},{s.value!r},stddev,{s.measure},{s.notion},"
                f"{s.in_dist},{s.out_dist},{s.stddev!r}\n"
            )


def cmd_sweep(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    resolved = _resolve(args, _load_config(args.config, "sweep"), SWEEP_DEFAULTS)
    outdir = _outdir_for(args, args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    measures = _parse_measures(resolved["measures"])
    notions = _parse_notions(resolved["notions"])
    values = _parse_axis_values(args.axis, args.values)
    _echo_resolved(
        outdir,
        "sweep",
        {
            **{k: resolved[k] for k in SWEEP_DEFAULTS},
            "measures": [m.value for m in measures],
            "notions": [n.value for n in notions],
            "axis": args.axis,
            "values": list(values),
            "train": args.train,
            "in_dist_id": args.in_dist_id,
            "test_batches": args.test_batches,
            "test_embeddings": args.test_embeddings,
            "downstream": args.downstream,
            "ood": args.ood,
            "ood_downstream": args.ood_downstream,
            "out": args.out,
            "plot_data": args.plot_data,
        },
    )
    renorm = bool(resolved["renormalize"])
    train = read_embeddings(args.train, renormalize=renorm)
    in_dist, out_dists = _load_eval_datasets(args, renorm)
    ccfg = _consistency_from(resolved)
    if ccfg is None and (
        args.axis in ("tau", "k_frac")
        or any(m in (Measure.P_EMB_KTAU, Measure.P_EMB_ENS_KTAU) for m in measures)
    ):
        # paper-default neighborhood: top 1% of N at 50% agreement
        ccfg = ConsistencyConfig(
            k_spec=float(resolved["knn_frac"]) if resolved["knn_frac"] is not None else 0.01,
            tau=0.5,
        )
    grid = SweepGrid(axis=args.axis, values=values, repeats=int(resolved["repeats"]))
    inputs = SweepInputs(
        train=train,
        in_dist=in_dist,
        out_dists=tuple(out_dists),
        gmm_config=GmmFitConfig(
            n_comp=int(resolved["n_comp"]),
            cov_structure=str(resolved["cov_structure"]),
            ridge_eps=float(resolved["ridge_eps"]),
            max_iters=int(resolved["max_iters"]),
            rel_tol=float(resolved["rel_tol"]),
            n_restarts=int(resolved["n_restarts"]),
            seed=int(resolved["seed"]),
        ),
        measures=tuple(measures),
        notions=tuple(notions),
        consistency=ccfg,
    )
    rows, summaries = sweep(grid, inputs)
    _write_sweep_csv(rows, summaries, args.out)
    outputs = [args.out]
    if args.plot_data:
        with atomic_write(args.plot_data, "w") as f:
            f.write(dumps_exact(sweep_plot_data(summaries)))
            f.write("\n")
        outputs.append(args.plot_data)
    _log_stage(outdir, "sweep", t0, [args.train] + _eval_input_paths(args), outputs)
    return 0


# ---------------------------------------------------------------------------
# auroc utility (scores CSV with header score,label)
# ---------------------------------------------------------------------------


def cmd_auroc(args: argparse.Namespace) -> int:
    path = Path(args.scores)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    scores, labels = [], []
    import csv as _csv

    with open(path, "r", newline="") as f:
        reader = _csv.DictReader(f)
        if reader.fieldnames is None or not {"score", "label"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: expected CSV header with score,label columns")
        for lineno, row in enumerate(reader, start=2):
            try:
                scores.append(float(row["score"]))
                labels.append(int(row["label"]))
            except (TypeError, ValueError) as e:
                raise ValidationError(f"{path}: line {lineno}: {e}") from None
    value = auroc(np.asarray(scores), np.asarray(labels))
    print(repr(value))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embcert", description=__doc__)
    parser.add_argument("--version", action="version", version=f"embcert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML or JSON config file; flags override its values")
        p.add_argument("--outdir", help="directory for resolved_config.json and the run log")

    p = sub.add_parser("synth", help="generate a synthetic hypersphere world")
    p.add_argument("--out", dest="outdir", required=True, help="output directory")
    p.add_argument("--config")
    for key in ("m", "n-clusters", "per-cluster-n", "n-views", "per-cluster-test", "n-ood", "seed"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=int)
    for key in ("kappa", "label-noise", "view-noise-sigma", "ood-angle-deg"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=float)
    p.add_argument("--ood-mode", choices=("uniform_sphere", "shifted_clusters"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a Gaussian mixture to training embeddings")
    add_common(p)
    p.add_argument("--train", required=True, help="EMB1 or CSV embedding file")
    p.add_argument("--model-out", required=True, help="output model JSON path")
    p.add_argument("--n-comp", type=int)
    p.add_argument("--cov", dest="cov_structure", choices=("full", "diagonal"))
    p.add_argument("--ridge-eps", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--restarts", dest="n_restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--knn-frac", type=float, help="neighbor count as a fraction of N")
    p.add_argument("--knn-abs", type=int, help="absolute neighbor count")
    p.add_argument("--tau", type=float, help="consistency threshold; enables filtering")
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--consistency-csv", help="also export per-row consistency scores")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score a dataset with one measure")
    add_common(p)
    p.add_argument("--measure", required=True, choices=ALL_MEASURES)
    p.add_argument("--model", help="model JSON (density measures)")
    p.add_argument("--embeddings", help="EMB1/CSV file of single-view embeddings")
    p.add_argument("--batches", help="augmented batch manifest (.jsonl)")
    p.add_argument("--downstream", help="downstream records JSONL (entropy/max_score)")
    p.add_argument("--out", required=True, help="output scores CSV")
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_score)

    def add_eval_inputs(p):
        p.add_argument("--in-dist-id", default="in_dist")
        p.add_argument("--test-batches", help="in-dist augmented batch manifest (.jsonl)")
        p.add_argument("--test-embeddings", help="in-dist single-view embedding file")
        p.add_argument("--downstream", help="in-dist downstream records JSONL")
        p.add_argument("--ood", action="append", metavar="NAME=PATH", help="out-of-distribution dataset (repeatable)")
        p.add_argument("--ood-downstream", action="append", metavar="NAME=PATH")
        p.add_argument("--measures", help="comma-separated measure list (default: all)")
        p.add_argument("--notions", help="comma-separated notion list (default: all)")
        p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("eval", help="AUROC of measures against the three uncertainty notions")
    add_common(p)
    add_eval_inputs(p)
    p.add_argument("--model", help="unfiltered model JSON")
    p.add_argument("--model-ktau", help="consistency-filtered model JSON")
    p.add_argument("--out", required=True, help="report path")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="ablation sweep over one axis, refitting per cell")
    add_common(p)
    add_eval_inputs(p)
    p.add_argument("--train", required=True)
    p.add_argument("--axis", required=True, choices=("n_comp", "tau", "k_frac", "n_transforms"))
    p.add_argument("--values", required=True, help="comma-separated axis values, increasing")
    p.add_argument("--repeats", type=int)
    p.add_argument("--n-comp", type=int)
    p.add_argument("--cov", dest="cov_structure", choices=("full", "diagonal"))
    p.add_argument("--ridge-eps", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--restarts", dest="n_restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--knn-frac", type=float)
    p.add_argument("--knn-abs", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--out", required=True, help="sweep table CSV")
    p.add_argument("--plot-data", help="also emit plot-ready JSON series")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("auroc", help="AUROC of a score,label CSV (utility)")
    p.add_argument("--scores", required=True)
    p.set_defaults(func=cmd_auroc)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"embcert: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"embcert: i/o error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
