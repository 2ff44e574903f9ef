/**
 * Writers for the latentperm response-set file formats.
 *
 * CSV: header `id,group,<name:kind>,...`, one sample per line, `.` decimal
 * separator; a bare column name means kind `feature`. BIN (`LRS1`): magic,
 * little-endian u32 row/column counts, length-prefixed UTF-8 strings (set
 * name, column descriptors, sample ids, group labels), then the float64
 * row-major payload.
 */

import * as fs from "fs";

export type ColumnKind =
  | "feature"
  | "logit"
  | "belief"
  | "image"
  | "reconstruction"
  | "iterate-x"
  | "iterate-z"
  | "iterate-y"
  | "metric";

export interface Column {
  name: string;
  kind: ColumnKind;
}

export interface ResponseSet {
  name: string;
  columns: Column[];
  ids: string[];
  groups: string[];
  /** Row-major N x C values. */
  values: Float64Array;
}

export function columnToken(col: Column): string {
  return col.kind === "feature" ? col.name : `${col.name}:${col.kind}`;
}

function checkSet(set: ResponseSet): void {
  const n = set.ids.length;
  const c = set.columns.length;
  if (set.groups.length !== n) {
    throw new Error(`set ${set.name}: ${n} ids but ${set.groups.length} groups`);
  }
  if (set.values.length !== n * c) {
    throw new Error(`set ${set.name}: ${set.values.length} values, expected ${n * c}`);
  }
  for (const v of set.values) {
    if (!Number.isFinite(v)) {
      throw new Error(`set ${set.name}: non-finite value in payload`);
    }
  }
}

export function writeCsv(set: ResponseSet, path: string): void {
  checkSet(set);
  const c = set.columns.length;
  const parts: string[] = [];
  parts.push(["id", "group", ...set.columns.map(columnToken)].join(","));
  for (let i = 0; i < set.ids.length; i++) {
    const row = new Array<string>(c + 2);
    row[0] = set.ids[i];
    row[1] = set.groups[i];
    for (let j = 0; j < c; j++) {
      // String(double) is the shortest representation that round-trips
      row[j + 2] = String(set.values[i * c + j]);
    }
    parts.push(row.join(","));
  }
  fs.writeFileSync(path, parts.join("\n") + "\n", "utf-8");
}

export function writeBin(set: ResponseSet, path: string): void {
  checkSet(set);
  const n = set.ids.length;
  const c = set.columns.length;
  const strings = [set.name, ...set.columns.map(columnToken), ...set.ids, ...set.groups];
  const encoded = strings.map((s) => Buffer.from(s, "utf-8"));
  let size = 4 + 8 + encoded.reduce((acc, b) => acc + 4 + b.length, 0) + n * c * 8;
  const out = Buffer.alloc(size);
  let offset = 0;
  offset += out.write("LRS1", offset, "ascii");
  offset = out.writeUInt32LE(n, offset);
  offset = out.writeUInt32LE(c, offset);
  for (const b of encoded) {
    offset = out.writeUInt32LE(b.length, offset);
    offset += b.copy(out, offset);
  }
  // float64 little-endian payload; Buffer.from on the typed array's memory
  const payload = Buffer.from(set.values.buffer, set.values.byteOffset, n * c * 8);
  payload.copy(out, offset);
  fs.writeFileSync(path, out);
}

export function writeResponseSet(set: ResponseSet, path: string, format: "csv" | "bin"): void {
  if (format === "bin") {
    writeBin(set, path);
  } else {
    writeCsv(set, path);
  }
}

/** Minimal reader used by the extractor's own tests (round-trip checks). */
export function readBin(path: string): ResponseSet {
  const buf = fs.readFileSync(path);
  if (buf.toString("ascii", 0, 4) !== "LRS1") {
    throw new Error(`${path}: bad magic`);
  }
  const n = buf.readUInt32LE(4);
  const c = buf.readUInt32LE(8);
  let offset = 12;
  const takeString = (): string => {
    const len = buf.readUInt32LE(offset);
    offset += 4;
    const s = buf.toString("utf-8", offset, offset + len);
    offset += len;
    return s;
  };
  const name = takeString();
  const columns: Column[] = [];
  for (let j = 0; j < c; j++) {
    const token = takeString();
    const sep = token.indexOf(":");
    columns.push(
      sep < 0
        ? { name: token, kind: "feature" }
        : { name: token.slice(0, sep), kind: token.slice(sep + 1) as ColumnKind }
    );
  }
  const ids: string[] = [];
  for (let i = 0; i < n; i++) ids.push(takeString());
  const groups: string[] = [];
  for (let i = 0; i < n; i++) groups.push(takeString());
  const values = new Float64Array(n * c);
  for (let k = 0; k < n * c; k++) {
    values[k] = buf.readDoubleLE(offset + k * 8);
  }
  return { name, columns, ids, groups, values };
}
