/**
 * Exact-vs-approximate utility scatter: one square panel per
 * (mode, resolver), equal-scaled axes, a grey y=x reference line, points
 * colored by the exact oracle-utility rank.  A constant approximate column
 * (the model-expectation case) renders as a marked vertical strip.
 */

import { extent } from "d3-array";
import { interpolateViridis } from "d3-scale-chromatic";

import type { ScatterMode, ScatterRow } from "../csv.js";
import { Panel, document, el, padDomain, text } from "../svg.js";

export interface ScatterOptions {
  /** Render only these resolvers (default: every resolver in the data). */
  resolvers?: string[];
  panelSize?: number;
  warn?: (message: string) => void;
}

const MODES: ScatterMode[] = ["serial", "batch"];

function isConstant(values: number[]): boolean {
  const [lo, hi] = extent(values) as [number, number];
  return hi - lo <= 1e-12 * Math.max(1, Math.abs(hi), Math.abs(lo));
}

/** Rank in [0, 1] of each point id by the exact oracle utility, per mode. */
function oracleRanks(rows: ScatterRow[], mode: ScatterMode): Map<number, number> {
  const oracle = rows.filter((r) => r.mode === mode && r.resolver === "oracle");
  const sorted = [...oracle].sort((a, b) => a.exact - b.exact);
  const ranks = new Map<number, number>();
  sorted.forEach((row, i) => {
    ranks.set(row.id_or_window_start, sorted.length > 1 ? i / (sorted.length - 1) : 0.5);
  });
  return ranks;
}

export function plotScatter(
  rows: ScatterRow[],
  options: ScatterOptions = {},
): string {
  if (rows.length === 0) throw new Error("no scatter rows given");
  const warn = options.warn ?? ((message: string) => console.warn(message));
  const size = options.panelSize ?? 240;
  const dataResolvers = [...new Set(rows.map((r) => r.resolver))];
  const resolvers = options.resolvers ?? dataResolvers;

  const panels: string[] = [];
  let col = 0;
  const presentModes = MODES.filter((m) => rows.some((r) => r.mode === m));
  for (const resolver of resolvers) {
    const anyRow = rows.some((r) => r.resolver === resolver);
    if (!anyRow) {
      warn(`scatter: no rows for resolver '${resolver}', skipping`);
      continue;
    }
    presentModes.forEach((mode, rowIdx) => {
      const subset = rows.filter(
        (r) => r.mode === mode && r.resolver === resolver,
      );
      if (subset.length === 0) {
        warn(`scatter: no ${mode} rows for resolver '${resolver}', skipping`);
        return;
      }
      const ranks = oracleRanks(rows, mode);
      const exactValues = subset.map((r) => r.exact);
      const approxValues = subset.map((r) => r.approx);
      const degenerate = isConstant(approxValues);

      // Equal axis scaling: both axes share one data span. For a degenerate
      // approx column, borrow the exact span so the strip stays visible.
      let xDomain: [number, number];
      let yDomain: [number, number];
      if (degenerate) {
        const c = approxValues[0]!;
        yDomain = padDomain(...(extent(exactValues) as [number, number]));
        const half = (yDomain[1] - yDomain[0]) / 2;
        xDomain = [c - half, c + half];
      } else {
        const [lo, hi] = extent([...approxValues, ...exactValues]) as [
          number,
          number,
        ];
        xDomain = padDomain(lo, hi);
        yDomain = xDomain;
      }

      const panel = new Panel({
        x: col * size,
        y: rowIdx * size,
        width: size,
        height: size,
        xDomain,
        yDomain,
        title: `${mode} · ${resolver}`,
        xLabel: "approx utility",
        yLabel: "exact utility",
        margin: { top: 26, right: 10, bottom: 36, left: 48 },
        extraAttrs: {
          "data-mode": mode,
          "data-resolver": resolver,
          "data-xspan": (xDomain[1] - xDomain[0]).toPrecision(12),
          "data-yspan": (yDomain[1] - yDomain[0]).toPrecision(12),
        },
      });

      // grey y = x reference across the drawable area
      const lo = Math.max(xDomain[0], yDomain[0]);
      const hi = Math.min(xDomain[1], yDomain[1]);
      panel.add(
        panel.pathFrom(
          [
            [lo, lo],
            [hi, hi],
          ],
          {
            class: "identity",
            stroke: "#aaa",
            "stroke-width": 1,
            fill: "none",
          },
        ),
      );
      if (degenerate) {
        const c = approxValues[0]!;
        panel.add(
          el("rect", {
            class: "degenerate-strip",
            x: panel.sx(c) - 3,
            y: 0,
            width: 6,
            height: panel.innerHeight(),
            fill: "#e15759",
            "fill-opacity": 0.15,
          }),
          text("constant approx", {
            x: panel.sx(c) + 8,
            y: 14,
            "font-size": 9,
            fill: "#b04040",
          }),
        );
      }
      for (const r of subset) {
        const rank = ranks.get(r.id_or_window_start);
        panel.circle(r.approx, r.exact, 2.4, {
          class: "point",
          fill: rank === undefined ? "#4e79a7" : interpolateViridis(rank),
          "fill-opacity": 0.85,
        });
      }
      panels.push(panel.render());
    });
    col += 1;
  }
  if (panels.length === 0) throw new Error("no scatter panels to draw");
  const width = col * size;
  const height = presentModes.length * size;
  return document(width, height, ...panels);
}
