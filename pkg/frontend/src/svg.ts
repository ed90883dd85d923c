/** Deterministic SVG backend: same scene in, same bytes out. */

import { Scene } from "./scene.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function r2(v: number): string {
  return (Math.round(v * 100) / 100).toString();
}

export function renderSvg(scene: Scene): string {
  const out: string[] = [];
  const p = scene.plot;
  out.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" height="${scene.height}" viewBox="0 0 ${scene.width} ${scene.height}">`,
  );
  out.push(`<rect width="${scene.width}" height="${scene.height}" fill="#ffffff"/>`);
  out.push(
    `<rect x="${p.x0}" y="${p.y0}" width="${p.x1 - p.x0}" height="${p.y1 - p.y0}" fill="none" stroke="#333333"/>`,
  );

  for (const t of scene.xTicks) {
    out.push(
      `<line x1="${r2(t.pos)}" y1="${p.y0}" x2="${r2(t.pos)}" y2="${p.y1}" stroke="#dddddd"/>`,
      `<line x1="${r2(t.pos)}" y1="${p.y1}" x2="${r2(t.pos)}" y2="${p.y1 + 5}" stroke="#333333"/>`,
      `<text x="${r2(t.pos)}" y="${p.y1 + 18}" font-family="sans-serif" font-size="11" text-anchor="middle">${esc(t.label)}</text>`,
    );
  }
  for (const t of scene.yTicks) {
    out.push(
      `<line x1="${p.x0}" y1="${r2(t.pos)}" x2="${p.x1}" y2="${r2(t.pos)}" stroke="#dddddd"/>`,
      `<line x1="${p.x0 - 5}" y1="${r2(t.pos)}" x2="${p.x0}" y2="${r2(t.pos)}" stroke="#333333"/>`,
      `<text x="${p.x0 - 8}" y="${r2(t.pos + 4)}" font-family="sans-serif" font-size="11" text-anchor="end">${esc(t.label)}</text>`,
    );
  }

  for (const s of scene.series) {
    if (scene.errorBars) {
      for (const pt of s.points) {
        if (pt.hi !== pt.lo) {
          out.push(
            `<line x1="${r2(pt.x)}" y1="${r2(pt.lo)}" x2="${r2(pt.x)}" y2="${r2(pt.hi)}" stroke="${s.color}"/>`,
            `<line x1="${r2(pt.x - 4)}" y1="${r2(pt.lo)}" x2="${r2(pt.x + 4)}" y2="${r2(pt.lo)}" stroke="${s.color}"/>`,
            `<line x1="${r2(pt.x - 4)}" y1="${r2(pt.hi)}" x2="${r2(pt.x + 4)}" y2="${r2(pt.hi)}" stroke="${s.color}"/>`,
          );
        }
      }
    }
    const path = s.points
      .map((pt, i) => `${i === 0 ? "M" : "L"}${r2(pt.x)},${r2(pt.y)}`)
      .join(" ");
    out.push(
      `<path d="${path}" fill="none" stroke="${s.color}" stroke-width="1.8"/>`,
    );
    for (const pt of s.points) {
      out.push(
        `<circle cx="${r2(pt.x)}" cy="${r2(pt.y)}" r="3" fill="${s.color}"/>`,
      );
    }
  }

  // legend, alphabetical by construction of the series list
  const lx = p.x0 + 10;
  let ly = p.y0 + 14;
  for (const s of scene.series) {
    out.push(
      `<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${s.color}" stroke-width="2"/>`,
      `<circle cx="${lx + 11}" cy="${ly - 4}" r="3" fill="${s.color}"/>`,
      `<text x="${lx + 28}" y="${ly}" font-family="sans-serif" font-size="11">${esc(s.label)}</text>`,
    );
    ly += 16;
  }

  out.push(
    `<text x="${(p.x0 + p.x1) / 2}" y="${p.y0 - 12}" font-family="sans-serif" font-size="13" text-anchor="middle">${esc(scene.title)}</text>`,
    `<text x="${(p.x0 + p.x1) / 2}" y="${scene.height - 14}" font-family="sans-serif" font-size="12" text-anchor="middle">${esc(scene.xLabel)}</text>`,
    `<text x="16" y="${(p.y0 + p.y1) / 2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 ${(p.y0 + p.y1) / 2})">${esc(scene.yLabel)}</text>`,
  );
  out.push("</svg>");
  return out.join("\n") + "\n";
}
