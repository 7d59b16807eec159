/**
 * Small SVG assembly layer: element strings, panels with linear scales,
 * axes and legends.  Output is a standalone SVG document string.
 */

import { scaleLinear, type ScaleLinear } from "d3-scale";

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 28, right: 16, bottom: 40, left: 54 };

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmtAttr(value: string | number | boolean): string {
  return typeof value === "number" ? String(+value.toFixed(3)) : String(value);
}

/** One SVG element as a string; children are pre-rendered strings. */
export function el(
  name: string,
  attrs: Record<string, string | number | boolean>,
  ...children: string[]
): string {
  const parts = Object.entries(attrs).map(
    ([k, v]) => `${k}="${esc(fmtAttr(v))}"`,
  );
  const open = parts.length > 0 ? `<${name} ${parts.join(" ")}` : `<${name}`;
  if (children.length === 0) return `${open}/>`;
  return `${open}>${children.join("")}</${name}>`;
}

export function text(
  content: string,
  attrs: Record<string, string | number | boolean>,
): string {
  return el("text", { "font-family": "sans-serif", ...attrs }, esc(content));
}

export function document(
  width: number,
  height: number,
  ...children: string[]
): string {
  return el(
    "svg",
    {
      xmlns: "http://www.w3.org/2000/svg",
      width,
      height,
      viewBox: `0 0 ${width} ${height}`,
    },
    el("rect", { width, height, fill: "white" }),
    ...children,
  );
}

/** Pad a [lo, hi] domain by a fraction; expands degenerate domains. */
export function padDomain(
  lo: number,
  hi: number,
  frac = 0.05,
): [number, number] {
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) return [0, 1];
  if (hi - lo < Number.EPSILON * Math.max(1, Math.abs(hi))) {
    const pad = Math.max(Math.abs(hi) * 0.05, 0.5);
    return [lo - pad, hi + pad];
  }
  const pad = (hi - lo) * frac;
  return [lo - pad, hi + pad];
}

export interface PanelOptions {
  x: number;
  y: number;
  width: number;
  height: number;
  xDomain: [number, number];
  yDomain: [number, number];
  title?: string;
  xLabel?: string;
  yLabel?: string;
  margin?: Margin;
  extraAttrs?: Record<string, string | number>;
}

/** A plotting area with linear scales and framed axes. */
export class Panel {
  readonly sx: ScaleLinear<number, number>;
  readonly sy: ScaleLinear<number, number>;
  readonly opts: PanelOptions;
  private readonly margin: Margin;
  private readonly body: string[] = [];

  constructor(opts: PanelOptions) {
    this.opts = opts;
    this.margin = opts.margin ?? DEFAULT_MARGIN;
    this.sx = scaleLinear()
      .domain(opts.xDomain)
      .range([0, this.innerWidth()]);
    this.sy = scaleLinear()
      .domain(opts.yDomain)
      .range([this.innerHeight(), 0]);
  }

  innerWidth(): number {
    return this.opts.width - this.margin.left - this.margin.right;
  }

  innerHeight(): number {
    return this.opts.height - this.margin.top - this.margin.bottom;
  }

  add(...elements: string[]): void {
    this.body.push(...elements);
  }

  circle(
    x: number,
    y: number,
    r: number,
    attrs: Record<string, string | number>,
  ): void {
    this.add(el("circle", { cx: this.sx(x), cy: this.sy(y), r, ...attrs }));
  }

  /** Polyline through data-space points. */
  pathFrom(
    points: Array<[number, number]>,
    attrs: Record<string, string | number>,
  ): string {
    const d = points
      .map(([x, y], i) => `${i === 0 ? "M" : "L"}${+this.sx(x).toFixed(3)},${+this.sy(y).toFixed(3)}`)
      .join("");
    return el("path", { d, ...attrs });
  }

  /** Closed band between an upper and a (reversed) lower sequence. */
  bandFrom(
    upper: Array<[number, number]>,
    lower: Array<[number, number]>,
    attrs: Record<string, string | number>,
  ): string {
    const pts = [...upper, ...[...lower].reverse()];
    const d =
      pts
        .map(([x, y], i) => `${i === 0 ? "M" : "L"}${+this.sx(x).toFixed(3)},${+this.sy(y).toFixed(3)}`)
        .join("") + "Z";
    return el("path", { d, ...attrs });
  }

  private axes(): string[] {
    const w = this.innerWidth();
    const h = this.innerHeight();
    const out: string[] = [
      el("rect", {
        width: w,
        height: h,
        fill: "none",
        stroke: "#999",
        "stroke-width": 1,
      }),
    ];
    for (const t of this.sx.ticks(5)) {
      const px = this.sx(t);
      out.push(
        el("line", { x1: px, y1: h, x2: px, y2: h + 4, stroke: "#333" }),
        text(this.sx.tickFormat(5)(t), {
          x: px,
          y: h + 16,
          "font-size": 10,
          "text-anchor": "middle",
          fill: "#333",
        }),
      );
    }
    for (const t of this.sy.ticks(5)) {
      const py = this.sy(t);
      out.push(
        el("line", { x1: -4, y1: py, x2: 0, y2: py, stroke: "#333" }),
        text(this.sy.tickFormat(5)(t), {
          x: -7,
          y: py + 3,
          "font-size": 10,
          "text-anchor": "end",
          fill: "#333",
        }),
      );
    }
    if (this.opts.title) {
      out.push(
        text(this.opts.title, {
          x: w / 2,
          y: -9,
          "font-size": 12,
          "text-anchor": "middle",
          fill: "#111",
          class: "panel-title",
        }),
      );
    }
    if (this.opts.xLabel) {
      out.push(
        text(this.opts.xLabel, {
          x: w / 2,
          y: h + 32,
          "font-size": 11,
          "text-anchor": "middle",
          fill: "#333",
        }),
      );
    }
    if (this.opts.yLabel) {
      out.push(
        el(
          "g",
          { transform: `translate(${-this.margin.left + 14},${h / 2}) rotate(-90)` },
          text(this.opts.yLabel, {
            x: 0,
            y: 0,
            "font-size": 11,
            "text-anchor": "middle",
            fill: "#333",
          }),
        ),
      );
    }
    return out;
  }

  render(): string {
    return el(
      "g",
      {
        class: "panel",
        transform: `translate(${this.opts.x + this.margin.left},${this.opts.y + this.margin.top})`,
        ...(this.opts.extraAttrs ?? {}),
      },
      ...this.axes(),
      ...this.body,
    );
  }
}

export interface LegendEntry {
  label: string;
  color: string;
  shape?: "line" | "dot";
}

export function legend(entries: LegendEntry[], x: number, y: number): string {
  const items = entries.map((entry, i) => {
    const marker =
      (entry.shape ?? "line") === "line"
        ? el("line", {
            x1: 0,
            y1: i * 16 + 5,
            x2: 16,
            y2: i * 16 + 5,
            stroke: entry.color,
            "stroke-width": 2,
          })
        : el("circle", { cx: 8, cy: i * 16 + 5, r: 4, fill: entry.color });
    return (
      marker +
      text(entry.label, {
        x: 22,
        y: i * 16 + 9,
        "font-size": 11,
        fill: "#111",
      })
    );
  });
  return el("g", { class: "legend", transform: `translate(${x},${y})` }, ...items);
}

export const CATEGORY_COLORS = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#76b7b2",
  "#edc948",
  "#b07aa1",
  "#ff9da7",
  "#9c755f",
  "#bab0ac",
];

export function categoryColor(i: number): string {
  return CATEGORY_COLORS[i % CATEGORY_COLORS.length]!;
}
