/** Figure specifications: what to plot from which CSV. */

import { readFileSync } from "node:fs";
import { SchemaError } from "./csv.js";

export interface FigureSpec {
  /** results CSV produced by the simulation harness */
  input: string;
  xColumn: string;
  yColumn: string;
  groupBy: string;
  /** output path without extension; .svg/.png are appended */
  output: string;
  xLabel?: string;
  yLabel?: string;
  title?: string;
  logX?: boolean;
  logY?: boolean;
  errorBars?: boolean;
}

const DEFAULTS = {
  xColumn: "sweep_value",
  yColumn: "mean_latency_s",
  groupBy: "scheme",
  errorBars: true,
  logX: false,
  logY: false,
};

export function loadFigureSpec(path: string): FigureSpec {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  if (typeof raw !== "object" || raw === null) {
    throw new SchemaError(`${path}: expected a JSON object`);
  }
  if (!raw.input || !raw.output) {
    throw new SchemaError(`${path}: figure spec needs "input" and "output"`);
  }
  return { ...DEFAULTS, ...raw } as FigureSpec;
}

/** Built-in figure shapes matching the harness presets (CSV name -> axes). */
export function presetFigure(name: string, csvPath: string, outBase: string): FigureSpec {
  const base: FigureSpec = {
    input: csvPath,
    output: outBase,
    ...DEFAULTS,
    yLabel: "average execution latency (s)",
  };
  switch (name) {
    case "fig6_bandwidth":
      return { ...base, xLabel: "signal bandwidth (Hz)", title: "latency vs bandwidth" };
    case "fig7_beta":
      return { ...base, xLabel: "task computation intensity (cycles/bit)", title: "latency vs task intensity" };
    case "fig8_fE_rf":
      return { ...base, xLabel: "edge CPU share (cycles/s)", title: "latency vs edge CPU share" };
    case "fig9_energy_fL":
      return {
        ...base,
        yColumn: "mean_energy_J",
        xLabel: "terminal CPU frequency (cycles/s)",
        yLabel: "average energy (J)",
        title: "energy vs terminal CPU frequency",
      };
    case "fig10_scale":
      return { ...base, xLabel: "number of terminals", title: "latency at larger scale" };
    case "fig11_Pth_M":
      return { ...base, xLabel: "power budget (dBm)", title: "latency vs power budget" };
    case "fig12_gamma":
      return { ...base, xLabel: "echo SINR threshold (dB)", title: "latency vs sensing threshold" };
    default:
      throw new SchemaError(`unknown preset figure ${name}`);
  }
}

export const PRESET_NAMES = [
  "fig6_bandwidth",
  "fig7_beta",
  "fig8_fE_rf",
  "fig9_energy_fL",
  "fig10_scale",
  "fig11_Pth_M",
  "fig12_gamma",
];
