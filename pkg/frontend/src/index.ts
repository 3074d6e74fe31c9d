/**
 * embcert-node: fit, score, and auroc over plain arrays.
 *
 * The heavy lifting happens in the embcert Python package; this wrapper
 * serializes array inputs into the documented file formats, drives the CLI,
 * and parses the outputs back into typed arrays. Results are therefore
 * value-identical to running the CLI by hand on the same data.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { runCli } from "./cli";
import { readScoresCsv, tempDir, writeBatches, writeDownstream, writeEmb1 } from "./emb1";
import { BoundModel } from "./model";
import {
  BATCH_MEASURES,
  DENSITY_MEASURES,
  DOWNSTREAM_MEASURES,
  FitConfig,
  MatrixInput,
  MeasureName,
  toMatrix,
} from "./types";

export { BoundModel } from "./model";
export { FitConfig, FitMeta, MatrixInput, MeasureName } from "./types";
export { readEmb1, writeEmb1 } from "./emb1";

function fitArgs(config: FitConfig): string[] {
  const args: string[] = [];
  const flag = (name: string, v: number | string | undefined) => {
    if (v !== undefined) args.push(name, String(v));
  };
  flag("--n-comp", config.nComp);
  flag("--cov", config.covStructure);
  flag("--ridge-eps", config.ridgeEps);
  flag("--max-iters", config.maxIters);
  flag("--rel-tol", config.relTol);
  flag("--restarts", config.nRestarts);
  flag("--seed", config.seed);
  flag("--knn-frac", config.knnFrac);
  flag("--knn-abs", config.knnAbs);
  flag("--tau", config.tau);
  return args;
}

/**
 * Fit a mixture to training embeddings (rows must be unit-norm).
 *
 * With `tau` set (plus `knnFrac`/`knnAbs`), the training set is first
 * restricted to rows whose neighbor labels agree at least tau-often, which
 * requires `labels`. The result is identical to `embcert fit` on the same
 * data and configuration.
 */
export function fit(
  train: MatrixInput,
  labels?: ArrayLike<number> | null,
  config: FitConfig = {}
): BoundModel {
  const mat = toMatrix(train, "train");
  const dir = tempDir("embcert-fit-");
  const trainFile = path.join(dir, "train.emb");
  const modelFile = path.join(dir, "model.json");
  writeEmb1(trainFile, mat, labels ?? null);
  runCli(["fit", "--train", trainFile, "--model-out", modelFile, ...fitArgs(config)]);
  fs.rmSync(trainFile, { force: true });
  return new BoundModel(modelFile);
}

/**
 * Score samples with one measure; output order matches input order.
 *
 * Input shape depends on the measure: density measures accept either a
 * points matrix (one embedding per row) or an array of per-sample view
 * matrices; `delta` and the ensembled densities need the view matrices;
 * `entropy`/`max_score` take a class-probability matrix.
 */
export function score(
  model: BoundModel | null,
  data: MatrixInput | MatrixInput[],
  measure: MeasureName
): Float64Array {
  const needsModel = DENSITY_MEASURES.has(measure);
  if (needsModel && !model) throw new Error(`measure ${measure} needs a fitted model`);
  if (!needsModel && model) throw new Error(`measure ${measure} takes no model`);
  const isBatchList = Array.isArray(data) && (data.length === 0 || !isNumberRow((data as unknown[])[0]));
  if (BATCH_MEASURES.has(measure) && !isBatchList) {
    throw new Error(`measure ${measure} needs per-sample view matrices`);
  }

  const dir = tempDir("embcert-score-");
  try {
    const out = path.join(dir, "scores.csv");
    const args = ["score", "--measure", measure, "--out", out];
    if (model) args.push("--model", model.path);
    if (DOWNSTREAM_MEASURES.has(measure)) {
      const file = path.join(dir, "downstream.jsonl");
      writeDownstream(file, toMatrix(data as MatrixInput, "class_probs"));
      args.push("--downstream", file);
    } else if (isBatchList) {
      const file = path.join(dir, "batches.jsonl");
      writeBatches(file, (data as MatrixInput[]).map((b, i) => toMatrix(b, `batch ${i}`)));
      args.push("--batches", file);
    } else {
      const file = path.join(dir, "points.emb");
      writeEmb1(file, toMatrix(data as MatrixInput, "points"));
      args.push("--embeddings", file);
    }
    runCli(args);
    return readScoresCsv(out);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

function isNumberRow(row: unknown): boolean {
  return Array.isArray(row) && (row.length === 0 || typeof row[0] === "number");
}

/** Mann-Whitney AUROC (midrank ties) of scores against binary labels. */
export function auroc(scores: ArrayLike<number>, labels: ArrayLike<number>): number {
  if (scores.length !== labels.length) {
    throw new Error(`scores length ${scores.length} != labels length ${labels.length}`);
  }
  const dir = tempDir("embcert-auroc-");
  try {
    const file = path.join(dir, "scores.csv");
    const lines = ["score,label"];
    for (let i = 0; i < scores.length; i++) lines.push(`${scores[i]},${labels[i]}`);
    fs.writeFileSync(file, lines.join("\n") + "\n");
    const { stdout } = runCli(["auroc", "--scores", file]);
    return Number(stdout.trim());
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}
