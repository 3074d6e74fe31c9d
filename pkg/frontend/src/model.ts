import * as fs from "node:fs";

import { FitMeta } from "./types";

/**
 * Opaque handle over a fitted mixture model file.
 *
 * The wrapped model is immutable; every method is read-only and the handle
 * stays valid for the process lifetime (the backing file lives in a private
 * temp directory until dispose() is called).
 */
export class BoundModel {
  readonly path: string;
  readonly nComp: number;
  readonly m: number;
  readonly covStructure: "full" | "diagonal";
  readonly fitMeta: Readonly<FitMeta>;

  constructor(modelPath: string) {
    const doc = JSON.parse(fs.readFileSync(modelPath, "utf8"));
    if (doc.schema_version !== 1) {
      throw new Error(`${modelPath}: unsupported model schema_version ${doc.schema_version}`);
    }
    this.path = modelPath;
    this.nComp = doc.n_comp;
    this.m = doc.m;
    this.covStructure = doc.cov_structure;
    this.fitMeta = Object.freeze(doc.fit_meta as FitMeta);
  }

  /** True when the model was fit to a consistency-filtered training set. */
  isFiltered(): boolean {
    return this.fitMeta.k !== null && this.fitMeta.tau !== null;
  }

  /** Delete the backing file (the handle must not be used afterwards). */
  dispose(): void {
    fs.rmSync(this.path, { force: true });
  }
}
