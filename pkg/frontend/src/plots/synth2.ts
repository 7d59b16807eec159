/**
 * Query-audit snapshot for the adversarial 2-D study: queried points in
 * feature space, colored by cluster tag, sized down with query order, and
 * outlined when the point belongs to the dev set.  One panel per seed.
 */

import { extent } from "d3-array";

import type { QueryRow } from "../csv.js";
import { Panel, document, legend, padDomain, text } from "../svg.js";

export interface Synth2Options {
  panelSize?: number;
}

export const CLUSTER_COLORS: Record<string, string> = {
  central: "#4e79a7",
  definitive: "#59a14f",
  distracting: "#e15759",
};

export function plotSynth2(
  rows: QueryRow[],
  options: Synth2Options = {},
): string {
  if (rows.length === 0) throw new Error("no query rows given");
  const size = options.panelSize ?? 320;
  const seeds = [...new Set(rows.map((r) => r.seed))].sort((a, b) => a - b);

  const xDomain = padDomain(...(extent(rows, (r) => r.x1) as [number, number]));
  const yDomain = padDomain(...(extent(rows, (r) => r.x2) as [number, number]));
  const maxIter = Math.max(...rows.map((r) => r.iter));

  const panels = seeds.map((seed, i) => {
    const subset = rows
      .filter((r) => r.seed === seed)
      .sort((a, b) => a.iter - b.iter);
    const panel = new Panel({
      x: i * size,
      y: 0,
      width: size,
      height: size,
      xDomain,
      yDomain,
      title: `seed ${seed}`,
      xLabel: "x1",
      yLabel: "x2",
      extraAttrs: { "data-seed": seed },
    });
    subset.forEach((row, order) => {
      const late = maxIter > 1 ? (row.iter - 1) / (maxIter - 1) : 0;
      panel.circle(row.x1, row.x2, 4.5 - 2 * late, {
        class: "query-point",
        "data-cluster": row.cluster,
        "data-iter": row.iter,
        fill: CLUSTER_COLORS[row.cluster] ?? "#888",
        "fill-opacity": 0.9,
        stroke: row.in_dev ? "#111" : "none",
        "stroke-width": row.in_dev ? 1.2 : 0,
      });
      if (order < 10) {
        panel.add(
          text(String(order + 1), {
            x: panel.sx(row.x1) + 5,
            y: panel.sy(row.x2) - 4,
            "font-size": 8,
            fill: "#333",
            class: "query-order",
          }),
        );
      }
    });
    return panel.render();
  });

  const entries = Object.entries(CLUSTER_COLORS).map(([label, color]) => ({
    label,
    color,
    shape: "dot" as const,
  }));
  entries.push({ label: "in dev set (outlined)", color: "#111", shape: "dot" });
  panels.push(legend(entries, seeds.length * size - 180, 10));
  return document(seeds.length * size, size + 6, ...panels);
}
