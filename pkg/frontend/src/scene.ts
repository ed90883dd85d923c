/**
 * Figure geometry shared by the SVG and PNG backends.
 *
 * All coordinates are computed deterministically from the data; no clocks,
 * randomness or locale-dependent formatting enter the scene.
 */

import { Series } from "./csv.js";
import { FigureSpec } from "./figure.js";

export const WIDTH = 640;
export const HEIGHT = 440;
export const MARGIN = { left: 72, right: 24, top: 36, bottom: 52 };

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
];

export interface Tick {
  pos: number;
  label: string;
}

export interface ScenePoint {
  x: number;
  y: number;
  lo: number;
  hi: number;
}

export interface SceneSeries {
  label: string;
  color: string;
  points: ScenePoint[];
}

export interface Scene {
  width: number;
  height: number;
  plot: { x0: number; y0: number; x1: number; y1: number };
  xTicks: Tick[];
  yTicks: Tick[];
  series: SceneSeries[];
  title: string;
  xLabel: string;
  yLabel: string;
  errorBars: boolean;
}

export function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  let s: string;
  if (a >= 1e5 || a < 1e-3) {
    s = v.toExponential(2).replace("e+", "e").replace(/e(-?)0*(\d)/, "e$1$2");
  } else {
    s = Number(v.toPrecision(6)).toString();
  }
  return s;
}

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.05 : 0.5;
    lo -= pad;
    hi += pad;
  }
  const span = hi - lo;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 2.5, 5, 10]) {
    if (step0 <= m * mag) {
      step = m * mag;
      break;
    }
  }
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let t = start; t <= hi + 1e-12 * span; t += step) {
    ticks.push(Number(t.toPrecision(12)));
  }
  return ticks;
}

export function buildScene(series: Series[], spec: FigureSpec): Scene {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const s of series) {
    for (const p of s.points) {
      xs.push(p.x);
      const ci = spec.errorBars ? p.ci95 : 0;
      ys.push(p.mean - ci, p.mean + ci);
    }
  }
  if (xs.length === 0) {
    xs.push(0, 1);
    ys.push(0, 1);
  }
  const tx = (v: number) => (spec.logX ? Math.log10(v) : v);
  const ty = (v: number) => (spec.logY ? Math.log10(Math.max(v, 1e-300)) : v);

  let xLo = Math.min(...xs.map(tx));
  let xHi = Math.max(...xs.map(tx));
  let yLo = Math.min(...ys.map(ty));
  let yHi = Math.max(...ys.map(ty));
  if (xHi === xLo) {
    xLo -= 0.5;
    xHi += 0.5;
  }
  const yPad = yHi > yLo ? 0.08 * (yHi - yLo) : Math.max(Math.abs(yHi) * 0.1, 0.5);
  yLo -= yPad;
  yHi += yPad;

  const plot = {
    x0: MARGIN.left,
    y0: MARGIN.top,
    x1: WIDTH - MARGIN.right,
    y1: HEIGHT - MARGIN.bottom,
  };
  const sx = (v: number) =>
    plot.x0 + ((tx(v) - xLo) / (xHi - xLo)) * (plot.x1 - plot.x0);
  const sy = (v: number) =>
    plot.y1 - ((ty(v) - yLo) / (yHi - yLo)) * (plot.y1 - plot.y0);

  const xTicks = niceTicks(xLo, xHi).map((t) => ({
    pos: plot.x0 + ((t - xLo) / (xHi - xLo)) * (plot.x1 - plot.x0),
    label: fmt(spec.logX ? Math.pow(10, t) : t),
  }));
  const yTicks = niceTicks(yLo, yHi).map((t) => ({
    pos: plot.y1 - ((t - yLo) / (yHi - yLo)) * (plot.y1 - plot.y0),
    label: fmt(spec.logY ? Math.pow(10, t) : t),
  }));

  const sceneSeries: SceneSeries[] = series.map((s, i) => ({
    label: s.group,
    color: PALETTE[i % PALETTE.length],
    points: s.points.map((p) => ({
      x: sx(p.x),
      y: sy(p.mean),
      lo: sy(p.mean - (spec.errorBars ? p.ci95 : 0)),
      hi: sy(p.mean + (spec.errorBars ? p.ci95 : 0)),
    })),
  }));

  return {
    width: WIDTH,
    height: HEIGHT,
    plot,
    xTicks,
    yTicks,
    series: sceneSeries,
    title: spec.title ?? "",
    xLabel: spec.xLabel ?? spec.xColumn,
    yLabel: spec.yLabel ?? spec.yColumn,
    errorBars: spec.errorBars ?? true,
  };
}
