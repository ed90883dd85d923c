import { describe, expect, it } from "vitest";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { CSV_COLUMNS, parseResults, SchemaError } from "../src/csv.js";
import { presetFigure, PRESET_NAMES } from "../src/figure.js";
import { render } from "../src/render.js";

const FIXTURES = join(__dirname, "fixtures");

function outBase(name: string): string {
  return join(mkdtempSync(join(tmpdir(), "isccsim-plot-")), name);
}

describe("preset rendering", () => {
  for (const name of PRESET_NAMES) {
    it(`renders ${name} with one curve per scheme`, () => {
      const csv = join(FIXTURES, `${name}.csv`);
      expect(existsSync(csv), `fixture ${name}.csv`).toBe(true);
      const spec = presetFigure(name, csv, outBase(name));
      const out = render(spec);
      const schemes = new Set(
        parseResults(readFileSync(csv, "utf-8")).rows.map((r) => r.scheme),
      );
      expect(out.curves).toBe(schemes.size);
      const svg = readFileSync(out.svgPath, "utf-8");
      const paths = svg.match(/<path d="M/g) ?? [];
      expect(paths).toHaveLength(schemes.size);
      for (const scheme of schemes) {
        expect(svg).toContain(`>${scheme}</text>`);
      }
      const png = readFileSync(out.pngPath);
      expect(png.subarray(0, 8)).toEqual(
        Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]),
      );
    });
  }

  it("rerendering is byte-deterministic", () => {
    const csv = join(FIXTURES, "fig12_gamma.csv");
    const spec1 = presetFigure("fig12_gamma", csv, outBase("a"));
    const spec2 = presetFigure("fig12_gamma", csv, outBase("b"));
    const o1 = render(spec1);
    const o2 = render(spec2);
    expect(readFileSync(o1.svgPath, "utf-8")).toBe(
      readFileSync(o2.svgPath, "utf-8"),
    );
    expect(readFileSync(o1.pngPath).equals(readFileSync(o2.pngPath))).toBe(true);
  });
});

describe("edge cases", () => {
  it("renders a single-row CSV as a single-point plot", () => {
    const dir = mkdtempSync(join(tmpdir(), "isccsim-plot-"));
    const csv = join(dir, "one.csv");
    const row = [
      "dcet-iscc", "B", "10000000.0", "0", "1", "0.116", "0.01", "9.5",
      "0.1", "0.2", "0.3", "2", "50", "10", "true",
    ].join(",");
    writeFileSync(csv, CSV_COLUMNS.join(",") + "\n" + row + "\n");
    const out = render({
      input: csv, output: join(dir, "one"),
      xColumn: "sweep_value", yColumn: "mean_latency_s", groupBy: "scheme",
      errorBars: true,
    });
    expect(out.curves).toBe(1);
    expect(existsSync(out.svgPath)).toBe(true);
    expect(existsSync(out.pngPath)).toBe(true);
  });

  it("missing columns raise a schema error naming the expectation", () => {
    const dir = mkdtempSync(join(tmpdir(), "isccsim-plot-"));
    const csv = join(dir, "bad.csv");
    writeFileSync(csv, "x,y\n1,2\n");
    expect(() =>
      render({
        input: csv, output: join(dir, "bad"),
        xColumn: "sweep_value", yColumn: "mean_latency_s", groupBy: "scheme",
      }),
    ).toThrowError(SchemaError);
  });
});
