import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import {
  CSV_COLUMNS,
  aggregate,
  parseResults,
  SchemaError,
  splitRecord,
} from "../src/csv.js";

const FIXTURES = join(__dirname, "fixtures");

function minimalCsv(rows: string[]): string {
  return [CSV_COLUMNS.join(","), ...rows].join("\n") + "\n";
}

function row(scheme: string, value: number, trial: number, latency: number): string {
  return [
    scheme, "B", String(value), String(trial), "12345",
    String(latency), "0.01", "10.0", "0.1", "0.2", "0.3", "2", "50", "10", "true",
  ].join(",");
}

describe("splitRecord", () => {
  it("splits plain fields", () => {
    expect(splitRecord("a,b,c")).toEqual(["a", "b", "c"]);
  });

  it("honors quoted fields with commas and escaped quotes", () => {
    expect(splitRecord('a,"b,c","d""e"')).toEqual(["a", "b,c", 'd"e']);
  });

  it("keeps empty fields", () => {
    expect(splitRecord("a,,c")).toEqual(["a", "", "c"]);
  });
});

describe("parseResults", () => {
  it("rejects foreign headers with the expected column list", () => {
    expect(() => parseResults("a,b,c\n1,2,3\n")).toThrowError(SchemaError);
    try {
      parseResults("a,b,c\n1,2,3\n");
    } catch (err) {
      expect(String(err)).toContain("mean_latency_s");
    }
  });

  it("skips comment lines and reads the spec", () => {
    const text = '# isccsim-results v1\n# spec: {"name": "x"}\n' +
      minimalCsv([row("dcet-iscc", 1e7, 0, 0.116)]);
    const parsed = parseResults(text);
    expect(parsed.rows).toHaveLength(1);
    expect((parsed.spec as { name: string }).name).toBe("x");
  });

  it("parses a real harness fixture", () => {
    const text = readFileSync(join(FIXTURES, "fig12_gamma.csv"), "utf-8");
    const parsed = parseResults(text);
    expect(parsed.rows.length).toBeGreaterThan(0);
    expect(parsed.rows[0].scheme).toBe("dcet-iscc");
  });
});

describe("aggregate", () => {
  it("computes per-group means and confidence widths", () => {
    const text = minimalCsv([
      row("a", 1, 0, 2.0),
      row("a", 1, 1, 4.0),
      row("b", 1, 0, 1.0),
    ]);
    const { rows } = parseResults(text);
    const series = aggregate(rows, "sweep_value", "mean_latency_s", "scheme");
    expect(series.map((s) => s.group)).toEqual(["a", "b"]);
    expect(series[0].points[0].mean).toBeCloseTo(3.0, 12);
    expect(series[0].points[0].ci95).toBeGreaterThan(0);
    expect(series[1].points[0].ci95).toBe(0);
  });

  it("handles a single row without trouble", () => {
    const { rows } = parseResults(minimalCsv([row("a", 2, 0, 0.5)]));
    const series = aggregate(rows, "sweep_value", "mean_latency_s", "scheme");
    expect(series).toHaveLength(1);
    expect(series[0].points).toEqual([{ x: 2, mean: 0.5, ci95: 0, n: 1 }]);
  });

  it("rejects unknown columns by name", () => {
    const { rows } = parseResults(minimalCsv([row("a", 1, 0, 1)]));
    expect(() => aggregate(rows, "nope", "mean_latency_s", "scheme"))
      .toThrowError(SchemaError);
  });
});
