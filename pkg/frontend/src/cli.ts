#!/usr/bin/env node
/**
 * Render experiment CSVs to SVG.
 *
 *   goralab-plots curves --in <run-dir-or-learning_curve.csv>... --out fig.svg
 *   goralab-plots scatter --in <scatter.csv> --out fig.svg [--resolvers ...]
 *   goralab-plots hist --in <histograms.csv> --out fig.svg
 *   goralab-plots synth2-snapshots --in <queries_*.csv>... --out fig.svg
 *
 * For `curves`, each --in entry may be a run directory (its
 * learning_curve.csv / goal_curve.csv are picked up) or a learning-curve
 * file (a sibling goal_curve.csv is used when present).
 */

import { existsSync, statSync, writeFileSync } from "node:fs";
import { basename, dirname, join } from "node:path";
import { pathToFileURL } from "node:url";
import yargs from "yargs";

import {
  readGoalCurve,
  readHistograms,
  readLearningCurve,
  readQueries,
  readScatter,
} from "./csv.js";
import { plotCurves, type CurvesInput } from "./plots/curves.js";
import { plotHist } from "./plots/hist.js";
import { plotScatter } from "./plots/scatter.js";
import { plotSynth2 } from "./plots/synth2.js";

interface CommonArgs {
  in: string[];
  out: string;
  labels?: string[];
  resolvers?: string[];
}

function curvesInput(path: string, label?: string): CurvesInput {
  let learningPath = path;
  if (existsSync(path) && statSync(path).isDirectory()) {
    learningPath = join(path, "learning_curve.csv");
  }
  const goalPath = join(dirname(learningPath), "goal_curve.csv");
  return {
    label: label ?? basename(dirname(learningPath)) ?? learningPath,
    learning: readLearningCurve(learningPath),
    goal: existsSync(goalPath) ? readGoalCurve(goalPath) : undefined,
  };
}

function render(kind: string, args: CommonArgs): string {
  switch (kind) {
    case "curves":
      return plotCurves(
        args.in.map((path, i) => curvesInput(path, args.labels?.[i])),
      );
    case "scatter":
      return plotScatter(args.in.flatMap(readScatter), {
        resolvers: args.resolvers,
      });
    case "hist":
      return plotHist(args.in.flatMap(readHistograms));
    case "synth2-snapshots":
      return plotSynth2(args.in.flatMap(readQueries));
    default:
      throw new Error(`unknown plot kind '${kind}'`);
  }
}

export async function main(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .scriptName("goralab-plots")
    .strict()
    .demandCommand(1, "pick a plot kind")
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    });
  for (const kind of ["curves", "scatter", "hist", "synth2-snapshots"]) {
    parser.command(kind, `render a ${kind} figure`, (cmd) =>
      cmd
        .option("in", {
          type: "string",
          array: true,
          demandOption: true,
          describe: "input CSV file(s) (or run directories for `curves`)",
        })
        .option("out", {
          type: "string",
          demandOption: true,
          describe: "output .svg path",
        })
        .option("labels", {
          type: "string",
          array: true,
          describe: "legend labels (curves; defaults to directory names)",
        })
        .option("resolvers", {
          type: "string",
          array: true,
          describe: "resolver subset to draw (scatter)",
        }),
    );
  }
  const parsed = await parser.parse();
  const kind = String(parsed._[0]);
  const svg = render(kind, parsed as unknown as CommonArgs);
  writeFileSync((parsed as unknown as CommonArgs).out, svg, "utf-8");
  console.log(`${kind}: wrote ${(parsed as unknown as CommonArgs).out}`);
  return 0;
}

const invokedDirectly =
  typeof process.argv[1] === "string" &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(String(err instanceof Error ? err.message : err));
      process.exit(1);
    },
  );
}
