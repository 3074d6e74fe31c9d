/**
 * EMB1 binary embedding files and the batch/downstream containers.
 *
 * Layout (little-endian): 4-byte magic "EMB1", u32 count, u32 dim, u32 flags
 * (bit 0 labels present, bit 1 float32 payload), count*dim floats, then
 * count i32 labels iff flagged (-1 = unlabeled row).
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Matrix } from "./types";

const MAGIC = "EMB1";
const FLAG_LABELS = 1;
const FLAG_F32 = 2;

export function writeEmb1(file: string, mat: Matrix, labels?: ArrayLike<number> | null): void {
  const { data, rows, cols } = mat;
  const hasLabels = labels != null;
  if (hasLabels && labels!.length !== rows) {
    throw new Error(`labels length ${labels!.length} does not match ${rows} rows`);
  }
  const size = 16 + rows * cols * 8 + (hasLabels ? rows * 4 : 0);
  const buf = Buffer.alloc(size);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(rows, 4);
  buf.writeUInt32LE(cols, 8);
  buf.writeUInt32LE(hasLabels ? FLAG_LABELS : 0, 12);
  for (let i = 0; i < rows * cols; i++) buf.writeDoubleLE(data[i], 16 + i * 8);
  if (hasLabels) {
    const base = 16 + rows * cols * 8;
    for (let i = 0; i < rows; i++) buf.writeInt32LE(labels![i], base + i * 4);
  }
  fs.writeFileSync(file, buf);
}

export function readEmb1(file: string): { matrix: Matrix; labels: Int32Array | null } {
  const buf = fs.readFileSync(file);
  if (buf.length < 16 || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${file}: not an EMB1 file`);
  }
  const rows = buf.readUInt32LE(4);
  const cols = buf.readUInt32LE(8);
  const flags = buf.readUInt32LE(12);
  const width = flags & FLAG_F32 ? 4 : 8;
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < rows * cols; i++) {
    data[i] = width === 4 ? buf.readFloatLE(16 + i * 4) : buf.readDoubleLE(16 + i * 8);
  }
  let labels: Int32Array | null = null;
  if (flags & FLAG_LABELS) {
    labels = new Int32Array(rows);
    const base = 16 + rows * cols * width;
    for (let i = 0; i < rows; i++) labels[i] = buf.readInt32LE(base + i * 4);
    if (labels.every((v) => v === -1)) labels = null;
  }
  return { matrix: { data, rows, cols }, labels };
}

/** Manifest (.jsonl) + payload (.emb) pair holding per-sample view matrices. */
export function writeBatches(manifestFile: string, batches: Matrix[]): void {
  if (batches.length === 0) throw new Error("need at least one batch");
  const cols = batches[0].cols;
  let total = 0;
  for (const b of batches) {
    if (b.cols !== cols) throw new Error("all batches must share the embedding dimension");
    total += b.rows;
  }
  const payload = new Float64Array(total * cols);
  const lines: string[] = [];
  let offset = 0;
  batches.forEach((b, i) => {
    payload.set(b.data, offset * cols);
    lines.push(JSON.stringify({ sample_id: `sample-${i}`, l: b.rows, offset }));
    offset += b.rows;
  });
  const payloadFile = manifestFile.endsWith(".jsonl")
    ? manifestFile.slice(0, -".jsonl".length) + ".emb"
    : manifestFile + ".emb";
  writeEmb1(payloadFile, { data: payload, rows: total, cols });
  fs.writeFileSync(manifestFile, lines.join("\n") + "\n");
}

/** JSONL of downstream classifier outputs, one class-probability row each. */
export function writeDownstream(file: string, probs: Matrix): void {
  const lines: string[] = [];
  for (let i = 0; i < probs.rows; i++) {
    const row = Array.from(probs.data.subarray(i * probs.cols, (i + 1) * probs.cols));
    lines.push(JSON.stringify({ sample_id: `sample-${i}`, class_probs: row }));
  }
  fs.writeFileSync(file, lines.join("\n") + "\n");
}

export function readScoresCsv(file: string): Float64Array {
  const text = fs.readFileSync(file, "utf8").trim();
  const lines = text.split("\n");
  const header = lines[0].split(",");
  const valueCol = header.indexOf("value");
  if (valueCol < 0) throw new Error(`${file}: no value column in scores CSV`);
  const out = new Float64Array(lines.length - 1);
  for (let i = 1; i < lines.length; i++) {
    out[i - 1] = Number(lines[i].split(",")[valueCol]);
  }
  return out;
}

export function tempDir(prefix: string): string {
  return fs.mkdtempSync(path.join(require("node:os").tmpdir(), prefix));
}
