"""Ground-truth label construction, AUROC, full evaluation runs, and ablation sweeps.

Label semantics (1 = should be flagged uncertain):

    aleatoric  -> in-distribution misclassified = 1, correct = 0, OOD excluded
    epistemic  -> OOD = 1, all in-distribution = 0
    overall    -> OOD = 1, in-distribution misclassified = 1, correct = 0

Certainty-oriented scores are negated before ranking so a higher score always
argues for label 1; AUROC is the Mann-Whitney statistic with midrank ties.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    DENSITY_MEASURES,
    DOWNSTREAM_MEASURES,
    ENSEMBLED_MEASURES,
    FILTERED_MEASURES,
    AugmentedBatch,
    DownstreamRecord,
    EmbeddingSet,
    EvalInstance,
    Measure,
    Notion,
    ScoreVector,
    ValidationError,
)
from .gmm import GmmFitConfig, fit_gmm
from .neighbors import ConsistencyConfig, filter_consistent
from .scorers import ScorerSpec, score_dataset

ALL_NOTIONS = (Notion.ALEATORIC, Notion.EPISTEMIC, Notion.OVERALL)

SWEEP_AXES = ("n_comp", "tau", "k_frac", "n_transforms")


# ---------------------------------------------------------------------------
# labels and AUROC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalSetup:
    """Scores plus exactly the extra resources one uncertainty notion needs."""

    notion: Notion
    in_dist_scores: ScoreVector
    out_dist_scores: Optional[ScoreVector] = None
    in_dist_correct: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        notion = Notion(self.notion)
        object.__setattr__(self, "notion", notion)
        if notion is Notion.ALEATORIC:
            if self.out_dist_scores is not None:
                raise ValidationError("aleatoric evaluation takes no out-of-distribution scores")
        elif self.out_dist_scores is None:
            raise ValidationError(f"{notion.value} evaluation requires out-of-distribution scores")
        if self.out_dist_scores is not None:
            if self.out_dist_scores.measure is not self.in_dist_scores.measure:
                raise ValidationError(
                    "in- and out-of-distribution scores must come from the same measure, got "
                    f"{self.in_dist_scores.measure.value} vs {self.out_dist_scores.measure.value}"
                )
        if notion in (Notion.ALEATORIC, Notion.OVERALL):
            if self.in_dist_correct is None:
                raise ValidationError(f"{notion.value} evaluation requires in-dist correctness")
            correct = np.asarray(self.in_dist_correct, dtype=bool)
            if correct.shape != (self.in_dist_scores.n,):
                raise ValidationError(
                    f"correctness vector has shape {correct.shape}, expected "
                    f"({self.in_dist_scores.n},)"
                )
            object.__setattr__(self, "in_dist_correct", correct)


def build_labels(setup: EvalSetup) -> tuple[np.ndarray, np.ndarray]:
    """Binary ground truth plus uncertainty-oriented scores for one notion."""
    in_unc = setup.in_dist_scores.uncertainty_values()
    if setup.notion is Notion.ALEATORIC:
        labels = (~setup.in_dist_correct).astype(np.int8)
        scores = in_unc
    elif setup.notion is Notion.EPISTEMIC:
        out_unc = setup.out_dist_scores.uncertainty_values()
        labels = np.concatenate(
            [np.zeros(in_unc.shape[0], dtype=np.int8), np.ones(out_unc.shape[0], dtype=np.int8)]
        )
        scores = np.concatenate([in_unc, out_unc])
    else:
        out_unc = setup.out_dist_scores.uncertainty_values()
        labels = np.concatenate(
            [(~setup.in_dist_correct).astype(np.int8), np.ones(out_unc.shape[0], dtype=np.int8)]
        )
        scores = np.concatenate([in_unc, out_unc])
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos < 1 or n_neg < 1:
        raise ValidationError(
            f"{setup.notion.value} ground truth needs both classes, got n_pos={n_pos}, "
            f"n_neg={n_neg}"
        )
    return labels, scores


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midrank tie handling, via a single sort."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValidationError(f"scores {scores.shape} and labels {labels.shape} differ in length")
    pos = labels == 1
    n = scores.shape[0]
    n_pos = int(pos.sum())
    n_neg = n - n_pos
    if n_pos < 1 or n_neg < 1:
        raise ValidationError(
            f"AUROC needs at least one sample per class, got n_pos={n_pos}, n_neg={n_neg}"
        )
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    counts = np.diff(np.r_[starts, n])
    rank_sums = np.add.reduceat(np.arange(1, n + 1, dtype=np.float64), starts)
    ranks = np.empty(n)
    ranks[order] = np.repeat(rank_sums / counts, counts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# full evaluation runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetInputs:
    """Everything known about one dataset; measures pick what they need."""

    dataset_id: str
    embeddings: Optional[EmbeddingSet] = None
    batches: Optional[tuple[AugmentedBatch, ...]] = None
    downstream: Optional[tuple[DownstreamRecord, ...]] = None

    def __post_init__(self) -> None:
        if self.embeddings is None and self.batches is None and self.downstream is None:
            raise ValidationError(f"dataset {self.dataset_id!r} carries no inputs at all")
        if self.batches is not None:
            object.__setattr__(self, "batches", tuple(self.batches))
        if self.downstream is not None:
            object.__setattr__(self, "downstream", tuple(self.downstream))


def _score_for(spec: ScorerSpec, ds: DatasetInputs) -> ScoreVector:
    measure = spec.measure
    if spec.requires_batches:
        if ds.batches is None:
            raise ValidationError(f"{measure.value} needs augmented batches for {ds.dataset_id!r}")
        return score_dataset(spec, batches=ds.batches, dataset_id=ds.dataset_id)
    if spec.requires_downstream:
        if ds.downstream is None:
            raise ValidationError(f"{measure.value} needs downstream records for {ds.dataset_id!r}")
        return score_dataset(spec, downstream=ds.downstream, dataset_id=ds.dataset_id)
    if ds.batches is not None:
        return score_dataset(spec, batches=ds.batches, dataset_id=ds.dataset_id)
    if ds.embeddings is not None:
        return score_dataset(spec, embeddings=ds.embeddings, dataset_id=ds.dataset_id)
    raise ValidationError(f"{measure.value} needs embeddings or batches for {ds.dataset_id!r}")


def correctness_vector(
    sample_ids: Sequence[str], records: Sequence[DownstreamRecord]
) -> np.ndarray:
    """Downstream correctness aligned to the scored samples.

    Alignment is by sample_id when every scored id appears in the records,
    falling back to positional order when the counts match.
    """
    by_id = {r.sample_id: r.correct for r in records}
    if all(sid in by_id for sid in sample_ids):
        picked = [by_id[sid] for sid in sample_ids]
    elif len(records) == len(sample_ids):
        picked = [r.correct for r in records]
    else:
        raise ValidationError(
            f"cannot align {len(records)} downstream records with {len(sample_ids)} scored "
            "samples: ids do not match and counts differ"
        )
    if any(c is None for c in picked):
        raise ValidationError("downstream records lack true_label, so correctness is unknown")
    return np.array(picked, dtype=bool)


def evaluate(
    specs: Sequence[ScorerSpec],
    in_dist: DatasetInputs,
    out_dists: Sequence[DatasetInputs] = (),
    notions: Sequence[Notion] = ALL_NOTIONS,
) -> list[EvalInstance]:
    """One EvalInstance per (measure, notion, dataset pair).

    Aleatoric uses the in-distribution dataset only; epistemic and overall are
    computed once per out-of-distribution dataset.
    """
    notions = tuple(Notion(n) for n in notions)
    if any(n in (Notion.EPISTEMIC, Notion.OVERALL) for n in notions) and not out_dists:
        raise ValidationError("epistemic/overall evaluation requires out-of-distribution datasets")
    instances: list[EvalInstance] = []
    for spec in specs:
        measure = spec.measure.value

        def _cell(notion: str, out_id: str = "") -> str:
            pair = f", out_dist={out_id}" if out_id else ""
            return f"cell (measure={measure}, notion={notion}, in_dist={in_dist.dataset_id}{pair})"

        try:
            sv_in = _score_for(spec, in_dist)
        except ValidationError as e:
            raise ValidationError(f"{_cell('*')}: {e}") from None
        correct = None
        if Notion.ALEATORIC in notions or Notion.OVERALL in notions:
            if in_dist.downstream is None:
                raise ValidationError(
                    f"{_cell('aleatoric/overall')}: in-dist downstream records required "
                    "to derive correctness"
                )
            correct = correctness_vector(sv_in.sample_ids, in_dist.downstream)

        if Notion.ALEATORIC in notions:
            try:
                setup = EvalSetup(Notion.ALEATORIC, sv_in, in_dist_correct=correct)
                labels, unc = build_labels(setup)
                value = auroc(unc, labels)
            except ValidationError as e:
                raise ValidationError(f"{_cell('aleatoric')}: {e}") from None
            n_pos = int(labels.sum())
            instances.append(
                EvalInstance(
                    measure=spec.measure,
                    notion=Notion.ALEATORIC,
                    in_dist_id=in_dist.dataset_id,
                    out_dist_id="",
                    gt_labels=labels,
                    auroc=value,
                    n_pos=n_pos,
                    n_neg=labels.shape[0] - n_pos,
                )
            )

        remaining = [n for n in (Notion.EPISTEMIC, Notion.OVERALL) if n in notions]
        if not remaining:
            continue
        for out_ds in out_dists:
            try:
                sv_out = _score_for(spec, out_ds)
            except ValidationError as e:
                raise ValidationError(f"{_cell('epistemic/overall', out_ds.dataset_id)}: {e}") from None
            for notion in remaining:
                try:
                    setup = EvalSetup(
                        notion,
                        sv_in,
                        out_dist_scores=sv_out,
                        in_dist_correct=correct if notion is Notion.OVERALL else None,
                    )
                    labels, unc = build_labels(setup)
                    value = auroc(unc, labels)
                except ValidationError as e:
                    raise ValidationError(f"{_cell(notion.value, out_ds.dataset_id)}: {e}") from None
                n_pos = int(labels.sum())
                instances.append(
                    EvalInstance(
                        measure=spec.measure,
                        notion=notion,
                        in_dist_id=in_dist.dataset_id,
                        out_dist_id=out_ds.dataset_id,
                        gt_labels=labels,
                        auroc=value,
                        n_pos=n_pos,
                        n_neg=labels.shape[0] - n_pos,
                    )
                )
    return instances


# ---------------------------------------------------------------------------
# ablation sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    """One swept axis, the values to visit, and how many repeated fits per value."""

    axis: str
    values: tuple
    repeats: int = 1

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ValidationError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        values = tuple(self.values)
        if not values:
            raise ValidationError("sweep needs at least one axis value")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValidationError(f"axis values must be strictly increasing, got {values}")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SweepInputs:
    """Everything held fixed across sweep cells."""

    train: EmbeddingSet
    in_dist: DatasetInputs
    gmm_config: GmmFitConfig
    measures: tuple[Measure, ...]
    out_dists: tuple[DatasetInputs, ...] = ()
    notions: tuple[Notion, ...] = ALL_NOTIONS
    consistency: Optional[ConsistencyConfig] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "measures", tuple(Measure(m) for m in self.measures))
        object.__setattr__(self, "notions", tuple(Notion(n) for n in self.notions))
        object.__setattr__(self, "out_dists", tuple(self.out_dists))


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: Union[int, float]
    repeat: int
    measure: str
    notion: str
    in_dist: str
    out_dist: str
    auroc: float


@dataclass(frozen=True)
class SweepSummary:
    axis: str
    value: Union[int, float]
    measure: str
    notion: str
    in_dist: str
    out_dist: str
    mean: float
    stddev: float


def _truncate_views(ds: DatasetInputs, t: int) -> DatasetInputs:
    if ds.batches is None:
        return ds
    trimmed = tuple(AugmentedBatch(b.sample_id, b.views[:t]) for b in ds.batches)
    return replace(ds, batches=trimmed)


def _validate_sweep(grid: SweepGrid, inputs: SweepInputs) -> None:
    if grid.axis == "n_comp":
        for v in grid.values:
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValidationError(f"n_comp values must be positive integers, got {v!r}")
            if v > inputs.train.n:
                raise ValidationError(f"n_comp={v} exceeds {inputs.train.n} training points")
    elif grid.axis == "tau":
        if any(not 0.0 <= float(v) <= 1.0 for v in grid.values):
            raise ValidationError("tau values must lie in [0, 1]")
    elif grid.axis == "k_frac":
        if any(not 0.0 < float(v) <= 1.0 for v in grid.values):
            raise ValidationError("k_frac values must lie in (0, 1]")
    else:  # n_transforms
        max_t = max(int(v) for v in grid.values)
        if Measure.DELTA in inputs.measures and min(int(v) for v in grid.values) < 2:
            raise ValidationError("delta needs at least 2 views; raise the n_transforms minimum")
        for ds in (inputs.in_dist, *inputs.out_dists):
            if ds.batches is not None:
                short = [b.sample_id for b in ds.batches if b.l < max_t]
                if short:
                    raise ValidationError(
                        f"dataset {ds.dataset_id!r}: {len(short)} batches have fewer than "
                        f"{max_t} views (first: {short[0]!r})"
                    )
    needs_filter = grid.axis in ("tau", "k_frac") or any(
        m in FILTERED_MEASURES for m in inputs.measures
    )
    if needs_filter:
        if inputs.consistency is None:
            raise ValidationError(f"axis {grid.axis!r} / filtered measures need a ConsistencyConfig")
        if inputs.train.labels is None:
            raise ValidationError("consistency filtering needs labeled training data")


def _run_cell(grid: SweepGrid, inputs: SweepInputs, value, repeat: int) -> list[EvalInstance]:
    cfg = replace(inputs.gmm_config, seed=inputs.gmm_config.seed + repeat)
    if grid.axis == "n_comp":
        cfg = replace(cfg, n_comp=int(value))
    ccfg = inputs.consistency
    if grid.axis == "tau":
        ccfg = replace(ccfg, tau=float(value))
    elif grid.axis == "k_frac":
        ccfg = replace(ccfg, k_spec=float(value))

    need_plain = any(m in DENSITY_MEASURES and m not in FILTERED_MEASURES for m in inputs.measures)
    need_filtered = any(m in FILTERED_MEASURES for m in inputs.measures)
    plain_model = fit_gmm(inputs.train, cfg) if need_plain else None
    filtered_model = (
        fit_gmm(filter_consistent(inputs.train, ccfg), cfg) if need_filtered else None
    )

    in_ds, out_ds = inputs.in_dist, inputs.out_dists
    if grid.axis == "n_transforms":
        in_ds = _truncate_views(in_ds, int(value))
        out_ds = tuple(_truncate_views(d, int(value)) for d in out_ds)

    specs = []
    for m in inputs.measures:
        if m in FILTERED_MEASURES:
            specs.append(ScorerSpec(m, model=filtered_model))
        elif m in DENSITY_MEASURES:
            specs.append(ScorerSpec(m, model=plain_model))
        else:
            specs.append(ScorerSpec(m))
    return evaluate(specs, in_ds, out_ds, notions=inputs.notions)


def _resolve_workers(max_workers: Optional[int], n_cells: int) -> int:
    if max_workers is None:
        env = os.environ.get("EMBCERT_THREADS", "").strip()
        max_workers = int(env) if env else 1
    if max_workers == 0:
        max_workers = os.cpu_count() or 1
    return max(1, min(max_workers, n_cells))


def sweep(
    grid: SweepGrid, inputs: SweepInputs, max_workers: Optional[int] = None
) -> tuple[list[SweepRow], list[SweepSummary]]:
    """Run every (value, repeat) cell and append per-value mean/stddev summaries.

    Repeat r refits with seed seed0 + r. Cells are independent and may run on a
    thread pool (EMBCERT_THREADS caps it, 0 = auto); results are assembled in
    grid order either way, so parallel and serial runs emit identical tables.
    """
    _validate_sweep(grid, inputs)
    cells = [(value, repeat) for value in grid.values for repeat in range(grid.repeats)]
    workers = _resolve_workers(max_workers, len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _run_cell(grid, inputs, *c), cells))
    else:
        results = [_run_cell(grid, inputs, *c) for c in cells]

    rows: list[SweepRow] = []
    for (value, repeat), instances in zip(cells, results):
        for inst in sorted(
            instances, key=lambda i: (i.measure.value, i.notion.value, i.in_dist_id, i.out_dist_id)
        ):
            rows.append(
                SweepRow(
                    axis=grid.axis,
                    value=value,
                    repeat=repeat,
                    measure=inst.measure.value,
                    notion=inst.notion.value,
                    in_dist=inst.in_dist_id,
                    out_dist=inst.out_dist_id,
                    auroc=inst.auroc,
                )
            )

    summaries: list[SweepSummary] = []
    for value in grid.values:
        groups: dict[tuple, list[float]] = {}
        for row in rows:
            if row.value == value:
                groups.setdefault((row.measure, row.notion, row.in_dist, row.out_dist), []).append(
                    row.auroc
                )
        for key in sorted(groups):
            vals = np.asarray(groups[key])
            stddev = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            summaries.append(
                SweepSummary(
                    axis=grid.axis,
                    value=value,
                    measure=key[0],
                    notion=key[1],
                    in_dist=key[2],
                    out_dist=key[3],
                    mean=float(vals.mean()),
                    stddev=stddev,
                )
            )
    return rows, summaries


def sweep_plot_data(summaries: Sequence[SweepSummary]) -> list[dict]:
    """Plot-ready series per (measure, notion, dataset pair): x, y_mean, y_std."""
    series: dict[tuple, dict] = {}
    for s in summaries:
        key = (s.measure, s.notion, s.in_dist, s.out_dist)
        entry = series.setdefault(
            key,
            {
                "measure": s.measure,
                "notion": s.notion,
                "in_dist": s.in_dist,
                "out_dist": s.out_dist,
                "axis": s.axis,
                "x": [],
                "y_mean": [],
                "y_std": [],
            },
        )
        entry["x"].append(s.value)
        entry["y_mean"].append(s.mean)
        entry["y_std"].append(s.stddev)
    return [series[k] for k in sorted(series)]
