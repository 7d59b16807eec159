/**
 * Typed readers for the experiment harness's CSV outputs.
 *
 * Every reader validates the header and each cell, so schema drift in the
 * producing pipeline fails loudly here instead of rendering garbage.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export class SchemaError extends Error {
  override name = "SchemaError";
}

export interface LearningCurveRow {
  seed: number;
  iter: number;
  n_labeled: number;
  test_accuracy: number;
}

export interface GoalCurveRow {
  seed: number;
  iter: number;
  goal_value: number;
}

export interface UtilityRow {
  seed: number;
  id: number;
  utility: number;
}

export type ScatterMode = "serial" | "batch";

export interface ScatterRow {
  mode: ScatterMode;
  resolver: string;
  id_or_window_start: number;
  exact: number;
  approx: number;
}

export interface HistRow {
  goal: string;
  resolver: string;
  b: number;
  value: number;
}

export interface QueryRow {
  seed: number;
  iter: number;
  id: number;
  x1: number;
  x2: number;
  cluster: string;
  in_dev: boolean;
}

type RawRow = Record<string, string>;

function parseTable(path: string, required: string[]): RawRow[] {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<RawRow>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0]!;
    throw new SchemaError(`${path}: ${first.message} (row ${first.row})`);
  }
  const fields = parsed.meta.fields ?? [];
  for (const col of required) {
    if (!fields.includes(col)) {
      throw new SchemaError(
        `${path}: missing column '${col}' (found: ${fields.join(", ")})`,
      );
    }
  }
  return parsed.data;
}

function num(row: RawRow, col: string, path: string, line: number): number {
  const raw = row[col];
  const value = Number(raw);
  if (raw === undefined || raw === "" || !Number.isFinite(value)) {
    throw new SchemaError(`${path}: row ${line}: bad number '${raw}' in '${col}'`);
  }
  return value;
}

function int(row: RawRow, col: string, path: string, line: number): number {
  const value = num(row, col, path, line);
  if (!Number.isInteger(value)) {
    throw new SchemaError(`${path}: row ${line}: '${col}' must be an integer`);
  }
  return value;
}

function str(row: RawRow, col: string, path: string, line: number): string {
  const raw = row[col];
  if (raw === undefined || raw === "") {
    throw new SchemaError(`${path}: row ${line}: empty '${col}'`);
  }
  return raw;
}

export function readLearningCurve(path: string): LearningCurveRow[] {
  return parseTable(path, ["seed", "iter", "n_labeled", "test_accuracy"]).map(
    (row, i) => ({
      seed: int(row, "seed", path, i + 2),
      iter: int(row, "iter", path, i + 2),
      n_labeled: int(row, "n_labeled", path, i + 2),
      test_accuracy: num(row, "test_accuracy", path, i + 2),
    }),
  );
}

export function readGoalCurve(path: string): GoalCurveRow[] {
  return parseTable(path, ["seed", "iter", "goal_value"]).map((row, i) => ({
    seed: int(row, "seed", path, i + 2),
    iter: int(row, "iter", path, i + 2),
    goal_value: num(row, "goal_value", path, i + 2),
  }));
}

export function readUtilities(path: string): UtilityRow[] {
  return parseTable(path, ["seed", "id", "utility"]).map((row, i) => ({
    seed: int(row, "seed", path, i + 2),
    id: int(row, "id", path, i + 2),
    utility: num(row, "utility", path, i + 2),
  }));
}

export function readScatter(path: string): ScatterRow[] {
  return parseTable(path, [
    "mode",
    "resolver",
    "id_or_window_start",
    "exact",
    "approx",
  ]).map((row, i) => {
    const mode = str(row, "mode", path, i + 2);
    if (mode !== "serial" && mode !== "batch") {
      throw new SchemaError(`${path}: row ${i + 2}: unknown mode '${mode}'`);
    }
    return {
      mode,
      resolver: str(row, "resolver", path, i + 2),
      id_or_window_start: int(row, "id_or_window_start", path, i + 2),
      exact: num(row, "exact", path, i + 2),
      approx: num(row, "approx", path, i + 2),
    };
  });
}

export function readHistograms(path: string): HistRow[] {
  return parseTable(path, ["goal", "resolver", "b", "value"]).map((row, i) => ({
    goal: str(row, "goal", path, i + 2),
    resolver: str(row, "resolver", path, i + 2),
    b: int(row, "b", path, i + 2),
    value: num(row, "value", path, i + 2),
  }));
}

export function readQueries(path: string): QueryRow[] {
  return parseTable(path, [
    "seed",
    "iter",
    "id",
    "x1",
    "x2",
    "cluster",
    "in_dev",
  ]).map((row, i) => {
    const flag = str(row, "in_dev", path, i + 2);
    if (flag !== "true" && flag !== "false") {
      throw new SchemaError(`${path}: row ${i + 2}: in_dev must be true/false`);
    }
    return {
      seed: int(row, "seed", path, i + 2),
      iter: int(row, "iter", path, i + 2),
      id: int(row, "id", path, i + 2),
      x1: num(row, "x1", path, i + 2),
      x2: num(row, "x2", path, i + 2),
      cluster: str(row, "cluster", path, i + 2),
      in_dev: flag === "true",
    };
  });
}
