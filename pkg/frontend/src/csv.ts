/**
 * CSV readers for the benchmark outputs. Each reader validates the header
 * and reports schema mismatches by column name.
 */
import { readFileSync } from "node:fs";
import { basename } from "node:path";

export interface Table {
  path: string;
  columns: string[];
  rows: number[][];
  raw: string[][];
}

export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf-8");
  const lines = text.split(/\r?\n/).filter((ln) => ln.length > 0);
  if (lines.length === 0) {
    throw new Error(`${path}: empty CSV`);
  }
  const columns = lines[0].split(",");
  const raw = lines.slice(1).map((ln) => ln.split(","));
  for (const [i, r] of raw.entries()) {
    if (r.length !== columns.length) {
      throw new Error(
        `${path}: row ${i + 2} has ${r.length} fields, expected ${columns.length}`);
    }
  }
  const rows = raw.map((r) => r.map((v) => Number(v)));
  return { path, columns, rows, raw };
}

export function requireColumns(table: Table, names: string[]): number[] {
  return names.map((name) => {
    const k = table.columns.indexOf(name);
    if (k < 0) {
      throw new Error(
        `${table.path}: missing column '${name}' (found: ${table.columns.join(", ")})`);
    }
    return k;
  });
}

/** Technique name encoded in a run-file name like TINE_1.5_2_minima.csv. */
export function techniqueFromFilename(path: string): string {
  const base = basename(path).replace(/\.csv$/, "");
  if (base.startsWith("lmax_")) {
    return base.slice(5);
  }
  return base.split("_")[0];
}

export interface Series {
  name: string;
  x: number[];
  y: number[];
}

export function seriesFrom(table: Table, xcol: string, ycol: string,
                           name?: string): Series {
  const [xi, yi] = requireColumns(table, [xcol, ycol]);
  return {
    name: name ?? techniqueFromFilename(table.path),
    x: table.rows.map((r) => r[xi]),
    y: table.rows.map((r) => r[yi]),
  };
}
