/**
 * Learning-curve / goal-curve figure: stacked panels (test accuracy above,
 * goal value below when available), one line per run with mean +- one
 * standard deviation over seeds.
 */

import { extent, mean, deviation } from "d3-array";

import type { GoalCurveRow, LearningCurveRow } from "../csv.js";
import { Panel, categoryColor, document, legend, padDomain } from "../svg.js";

export interface CurvesInput {
  /** Legend label, e.g. the strategy spec or run directory name. */
  label: string;
  learning: LearningCurveRow[];
  goal?: GoalCurveRow[];
}

export interface CurvesOptions {
  width?: number;
  panelHeight?: number;
}

interface SeriesPoint {
  x: number;
  mean: number;
  sd: number;
  seeds: number;
}

function aggregate(
  rows: Array<{ iter: number; value: number }>,
): SeriesPoint[] {
  const byIter = new Map<number, number[]>();
  for (const row of rows) {
    const bucket = byIter.get(row.iter) ?? [];
    bucket.push(row.value);
    byIter.set(row.iter, bucket);
  }
  return [...byIter.entries()]
    .sort(([a], [b]) => a - b)
    .map(([iter, values]) => ({
      x: iter,
      mean: mean(values) ?? NaN,
      sd: values.length > 1 ? (deviation(values) ?? 0) : 0,
      seeds: values.length,
    }));
}

function drawSeries(
  panel: Panel,
  series: SeriesPoint[],
  color: string,
): void {
  const multiSeed = series.some((p) => p.seeds > 1);
  if (multiSeed) {
    panel.add(
      panel.bandFrom(
        series.map((p) => [p.x, p.mean + p.sd]),
        series.map((p) => [p.x, p.mean - p.sd]),
        { class: "band", fill: color, "fill-opacity": 0.18, stroke: "none" },
      ),
    );
  }
  panel.add(
    panel.pathFrom(
      series.map((p) => [p.x, p.mean]),
      {
        class: "mean-line",
        fill: "none",
        stroke: color,
        "stroke-width": 1.8,
      },
    ),
  );
}

export function plotCurves(
  inputs: CurvesInput[],
  options: CurvesOptions = {},
): string {
  if (inputs.length === 0) throw new Error("no curve inputs given");
  const width = options.width ?? 560;
  const panelHeight = options.panelHeight ?? 240;

  const accSeries = inputs.map((input) =>
    aggregate(input.learning.map((r) => ({ iter: r.iter, value: r.test_accuracy }))),
  );
  const goalSeries = inputs.map((input) =>
    input.goal && input.goal.length > 0
      ? aggregate(input.goal.map((r) => ({ iter: r.iter, value: r.goal_value })))
      : null,
  );
  const anyGoal = goalSeries.some((s) => s !== null);

  const allIters = accSeries.flat().map((p) => p.x);
  const [xLo, xHi] = extent(allIters) as [number, number];
  const accValues = accSeries
    .flat()
    .flatMap((p) => [p.mean - p.sd, p.mean + p.sd]);
  const panels: string[] = [];

  const accPanel = new Panel({
    x: 0,
    y: 0,
    width,
    height: panelHeight,
    xDomain: [xLo, xHi],
    yDomain: padDomain(Math.min(...accValues), Math.max(...accValues)),
    title: "test accuracy",
    xLabel: anyGoal ? undefined : "iteration",
    yLabel: "accuracy",
  });
  accSeries.forEach((series, i) => drawSeries(accPanel, series, categoryColor(i)));
  panels.push(accPanel.render());

  if (anyGoal) {
    const goalValues = goalSeries
      .filter((s): s is SeriesPoint[] => s !== null)
      .flat()
      .flatMap((p) => [p.mean - p.sd, p.mean + p.sd]);
    const goalPanel = new Panel({
      x: 0,
      y: panelHeight,
      width,
      height: panelHeight,
      xDomain: [xLo, xHi],
      yDomain: padDomain(Math.min(...goalValues), Math.max(...goalValues)),
      title: "goal value",
      xLabel: "iteration",
      yLabel: "goal",
    });
    goalSeries.forEach((series, i) => {
      if (series) drawSeries(goalPanel, series, categoryColor(i));
    });
    panels.push(goalPanel.render());
  }

  const height = panelHeight * (anyGoal ? 2 : 1) + 8;
  panels.push(
    legend(
      inputs.map((input, i) => ({ label: input.label, color: categoryColor(i) })),
      width - 170,
      12,
    ),
  );
  return document(width, height, ...panels);
}
