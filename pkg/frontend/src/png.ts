/**
 * Minimal deterministic PNG backend: RGBA raster, zlib-deflated scanlines.
 *
 * Curves, markers, error bars, axes and tick labels are rasterized with a
 * small built-in 5x7 glyph set (digits, lowercase letters and the handful of
 * symbols used in labels); anything else is left to the SVG output.
 */

import { deflateSync } from "node:zlib";
import { Scene } from "./scene.js";

type RGB = [number, number, number];

function hex(color: string): RGB {
  return [
    parseInt(color.slice(1, 3), 16),
    parseInt(color.slice(3, 5), 16),
    parseInt(color.slice(5, 7), 16),
  ];
}

class Raster {
  data: Uint8Array;
  constructor(
    public width: number,
    public height: number,
  ) {
    this.data = new Uint8Array(width * height * 4).fill(255);
  }

  set(x: number, y: number, c: RGB) {
    x = Math.round(x);
    y = Math.round(y);
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const i = (y * this.width + x) * 4;
    this.data[i] = c[0];
    this.data[i + 1] = c[1];
    this.data[i + 2] = c[2];
    this.data[i + 3] = 255;
  }

  line(x0: number, y0: number, x1: number, y1: number, c: RGB, thick = 1) {
    let ax = Math.round(x0);
    let ay = Math.round(y0);
    const bx = Math.round(x1);
    const by = Math.round(y1);
    const dx = Math.abs(bx - ax);
    const dy = -Math.abs(by - ay);
    const sx = ax < bx ? 1 : -1;
    const sy = ay < by ? 1 : -1;
    let err = dx + dy;
    for (;;) {
      for (let ox = 0; ox < thick; ox++) {
        for (let oy = 0; oy < thick; oy++) {
          this.set(ax + ox, ay + oy, c);
        }
      }
      if (ax === bx && ay === by) break;
      const e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        ax += sx;
      }
      if (e2 <= dx) {
        err += dx;
        ay += sy;
      }
    }
  }

  disc(cx: number, cy: number, r: number, c: RGB) {
    for (let y = -r; y <= r; y++) {
      for (let x = -r; x <= r; x++) {
        if (x * x + y * y <= r * r) this.set(cx + x, cy + y, c);
      }
    }
  }
}

// 5x7 glyphs, rows top to bottom, 5 bits each (MSB = leftmost column)
const FONT: Record<string, number[]> = {
  "0": [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
  "1": [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
  "2": [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
  "3": [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
  "4": [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
  "5": [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
  "6": [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
  "7": [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
  "8": [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
  "9": [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
  ".": [0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c],
  "-": [0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00],
  "+": [0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00],
  e: [0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e],
  a: [0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f],
  b: [0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1e],
  c: [0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e],
  d: [0x01, 0x01, 0x0d, 0x13, 0x11, 0x11, 0x0f],
  f: [0x06, 0x09, 0x08, 0x1c, 0x08, 0x08, 0x08],
  g: [0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x0e],
  h: [0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11],
  i: [0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e],
  j: [0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0c],
  k: [0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12],
  l: [0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e],
  m: [0x00, 0x00, 0x1a, 0x15, 0x15, 0x11, 0x11],
  n: [0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11],
  o: [0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e],
  p: [0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10],
  q: [0x00, 0x00, 0x0d, 0x13, 0x0f, 0x01, 0x01],
  r: [0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10],
  s: [0x00, 0x00, 0x0e, 0x10, 0x0e, 0x01, 0x1e],
  t: [0x08, 0x08, 0x1c, 0x08, 0x08, 0x09, 0x06],
  u: [0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d],
  v: [0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04],
  w: [0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0a],
  x: [0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11],
  y: [0x00, 0x00, 0x11, 0x11, 0x0f, 0x01, 0x0e],
  z: [0x00, 0x00, 0x1f, 0x02, 0x04, 0x08, 0x1f],
  " ": [0, 0, 0, 0, 0, 0, 0],
};

function drawText(r: Raster, x: number, y: number, text: string, c: RGB,
                  anchor: "start" | "middle" | "end" = "start") {
  const w = text.length * 6;
  let ox = Math.round(x);
  if (anchor === "middle") ox -= Math.round(w / 2);
  if (anchor === "end") ox -= w;
  for (const ch of text.toLowerCase()) {
    const glyph = FONT[ch];
    if (glyph) {
      for (let row = 0; row < 7; row++) {
        for (let col = 0; col < 5; col++) {
          if ((glyph[row] >> (4 - col)) & 1) r.set(ox + col, y + row, c);
        }
      }
    }
    ox += 6;
  }
}

const CRC_TABLE = (() => {
  const t = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    t[n] = c >>> 0;
  }
  return t;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + data.length);
  const dv = new DataView(out.buffer);
  dv.setUint32(0, data.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(data, 8);
  dv.setUint32(8 + data.length, crc32(out.subarray(4, 8 + data.length)));
  return out;
}

function encodePng(r: Raster): Buffer {
  const sig = Uint8Array.from([137, 80, 78, 71, 13, 10, 26, 10]);
  const ihdr = new Uint8Array(13);
  const dv = new DataView(ihdr.buffer);
  dv.setUint32(0, r.width);
  dv.setUint32(4, r.height);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 6; // RGBA
  const raw = new Uint8Array(r.height * (1 + r.width * 4));
  for (let y = 0; y < r.height; y++) {
    raw[y * (1 + r.width * 4)] = 0; // filter none
    raw.set(
      r.data.subarray(y * r.width * 4, (y + 1) * r.width * 4),
      y * (1 + r.width * 4) + 1,
    );
  }
  const idat = deflateSync(raw, { level: 6 });
  return Buffer.concat([
    sig,
    chunk("IHDR", ihdr),
    chunk("IDAT", new Uint8Array(idat)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

const BLACK: RGB = [40, 40, 40];
const GRID: RGB = [221, 221, 221];

export function renderPng(scene: Scene): Buffer {
  const r = new Raster(scene.width, scene.height);
  const p = scene.plot;

  for (const t of scene.xTicks) {
    r.line(t.pos, p.y0, t.pos, p.y1, GRID);
    r.line(t.pos, p.y1, t.pos, p.y1 + 5, BLACK);
    drawText(r, t.pos, p.y1 + 9, t.label, BLACK, "middle");
  }
  for (const t of scene.yTicks) {
    r.line(p.x0, t.pos, p.x1, t.pos, GRID);
    r.line(p.x0 - 5, t.pos, p.x0, t.pos, BLACK);
    drawText(r, p.x0 - 8, t.pos - 3, t.label, BLACK, "end");
  }
  // frame after the grid so it stays crisp
  r.line(p.x0, p.y0, p.x1, p.y0, BLACK);
  r.line(p.x0, p.y1, p.x1, p.y1, BLACK);
  r.line(p.x0, p.y0, p.x0, p.y1, BLACK);
  r.line(p.x1, p.y0, p.x1, p.y1, BLACK);

  for (const s of scene.series) {
    const c = hex(s.color);
    if (scene.errorBars) {
      for (const pt of s.points) {
        if (pt.hi !== pt.lo) {
          r.line(pt.x, pt.lo, pt.x, pt.hi, c);
          r.line(pt.x - 4, pt.lo, pt.x + 4, pt.lo, c);
          r.line(pt.x - 4, pt.hi, pt.x + 4, pt.hi, c);
        }
      }
    }
    for (let i = 1; i < s.points.length; i++) {
      r.line(s.points[i - 1].x, s.points[i - 1].y, s.points[i].x, s.points[i].y, c, 2);
    }
    for (const pt of s.points) {
      r.disc(Math.round(pt.x), Math.round(pt.y), 3, c);
    }
  }

  const lx = p.x0 + 10;
  let ly = p.y0 + 10;
  for (const s of scene.series) {
    const c = hex(s.color);
    r.line(lx, ly, lx + 22, ly, c, 2);
    drawText(r, lx + 28, ly - 3, s.label, BLACK);
    ly += 14;
  }

  drawText(r, (p.x0 + p.x1) / 2, p.y0 - 20, scene.title, BLACK, "middle");
  drawText(r, (p.x0 + p.x1) / 2, scene.height - 18, scene.xLabel, BLACK, "middle");
  drawText(r, 10, p.y0 - 20, scene.yLabel, BLACK);
  return encodePng(r);
}
