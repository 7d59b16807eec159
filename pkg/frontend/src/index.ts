export {
  SchemaError,
  readGoalCurve,
  readHistograms,
  readLearningCurve,
  readQueries,
  readScatter,
  readUtilities,
} from "./csv.js";
export type {
  GoalCurveRow,
  HistRow,
  LearningCurveRow,
  QueryRow,
  ScatterMode,
  ScatterRow,
  UtilityRow,
} from "./csv.js";
export { kdeCurve, silvermanBandwidth } from "./kde.js";
export { plotCurves, type CurvesInput, type CurvesOptions } from "./plots/curves.js";
export { plotHist, type HistOptions } from "./plots/hist.js";
export { plotScatter, type ScatterOptions } from "./plots/scatter.js";
export { plotSynth2, type Synth2Options, CLUSTER_COLORS } from "./plots/synth2.js";
export { main as cliMain } from "./cli.js";
