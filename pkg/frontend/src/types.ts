/** Dense row-major matrix input: nested arrays or a typed-array view. */
export type MatrixInput =
  | number[][]
  | { data: Float64Array | Float32Array; rows: number; cols: number };

export interface Matrix {
  data: Float64Array;
  rows: number;
  cols: number;
}

export type MeasureName =
  | "delta"
  | "p_emb"
  | "p_emb_ens"
  | "p_emb_ktau"
  | "p_emb_ens_ktau"
  | "entropy"
  | "max_score";

export const DENSITY_MEASURES: ReadonlySet<MeasureName> = new Set([
  "p_emb",
  "p_emb_ens",
  "p_emb_ktau",
  "p_emb_ens_ktau",
]);

export const BATCH_MEASURES: ReadonlySet<MeasureName> = new Set([
  "delta",
  "p_emb_ens",
  "p_emb_ens_ktau",
]);

export const DOWNSTREAM_MEASURES: ReadonlySet<MeasureName> = new Set([
  "entropy",
  "max_score",
]);

/** Knobs of the fit stage; camelCase mirror of the CLI flags. */
export interface FitConfig {
  nComp?: number;
  covStructure?: "full" | "diagonal";
  ridgeEps?: number;
  maxIters?: number;
  relTol?: number;
  nRestarts?: number;
  seed?: number;
  /** Neighbor count as a fraction of N; enables consistency filtering with tau. */
  knnFrac?: number;
  /** Absolute neighbor count alternative to knnFrac. */
  knnAbs?: number;
  /** Consistency threshold; when set, the fit filters the training set first. */
  tau?: number;
}

/** Fit provenance as persisted in the model file. */
export interface FitMeta {
  seed: number;
  iterations: number;
  final_log_likelihood: number;
  ridge_eps: number;
  n_train: number;
  k: number | null;
  tau: number | null;
  n_restarts: number;
  restart_index: number;
  collapse_reseeds: number;
  converged: boolean;
  log_likelihoods: number[];
}

/** Normalize any accepted input into a contiguous float64 matrix (copying). */
export function toMatrix(input: MatrixInput, what = "matrix"): Matrix {
  if (Array.isArray(input)) {
    const rows = input.length;
    if (rows === 0) throw new Error(`${what} must have at least one row`);
    const cols = input[0].length;
    const data = new Float64Array(rows * cols);
    for (let i = 0; i < rows; i++) {
      if (input[i].length !== cols) {
        throw new Error(`${what} row ${i} has ${input[i].length} entries, expected ${cols}`);
      }
      for (let j = 0; j < cols; j++) data[i * cols + j] = input[i][j];
    }
    return { data, rows, cols };
  }
  const { data, rows, cols } = input;
  if (rows * cols !== data.length) {
    throw new Error(`${what}: rows*cols = ${rows * cols} does not match data length ${data.length}`);
  }
  return { data: Float64Array.from(data), rows, cols };
}
