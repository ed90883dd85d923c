/** End-to-end render: CSV file -> aggregated series -> SVG + PNG files. */

import { readFileSync, writeFileSync } from "node:fs";
import { aggregate, parseResults } from "./csv.js";
import { FigureSpec } from "./figure.js";
import { buildScene } from "./scene.js";
import { renderPng } from "./png.js";
import { renderSvg } from "./svg.js";

export interface RenderOutput {
  svgPath: string;
  pngPath: string;
  curves: number;
}

export function render(spec: FigureSpec,
                       formats: string[] = ["svg", "png"]): RenderOutput {
  const text = readFileSync(spec.input, "utf-8");
  const { rows } = parseResults(text);
  const series = aggregate(rows, spec.xColumn, spec.yColumn, spec.groupBy);
  const scene = buildScene(series, spec);
  const svgPath = `${spec.output}.svg`;
  const pngPath = `${spec.output}.png`;
  if (formats.includes("svg")) {
    writeFileSync(svgPath, renderSvg(scene), "utf-8");
  }
  if (formats.includes("png")) {
    writeFileSync(pngPath, renderPng(scene));
  }
  return { svgPath, pngPath, curves: series.length };
}
