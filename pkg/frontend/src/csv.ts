/**
 * Reader for isccsim result CSVs.
 *
 * Format: UTF-8, `#`-prefixed provenance/summary lines, one fixed header row,
 * RFC-4180 quoting. The column set is pinned; readers fail loudly when the
 * schema drifts.
 */

export const CSV_COLUMNS = [
  "scheme",
  "sweep_variable",
  "sweep_value",
  "trial",
  "seed",
  "mean_latency_s",
  "mean_energy_J",
  "mean_sensing_sinr_dB",
  "wall_clock_offload_s",
  "wall_clock_beamform_s",
  "wall_clock_total_s",
  "bcd_rounds",
  "admm_iterations",
  "beamform_iterations",
  "feasible",
] as const;

export type ResultRow = Record<(typeof CSV_COLUMNS)[number], string>;

export class SchemaError extends Error {}

/** Split one RFC-4180 record, honoring quoted fields and escaped quotes. */
export function splitRecord(line: string): string[] {
  const out: string[] = [];
  let field = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      out.push(field);
      field = "";
    } else {
      field += ch;
    }
  }
  out.push(field);
  return out;
}

export interface ResultsFile {
  spec: unknown | null;
  rows: ResultRow[];
}

export function parseResults(text: string): ResultsFile {
  let spec: unknown | null = null;
  const dataLines: string[] = [];
  for (const raw of text.split(/\r?\n/)) {
    if (raw.length === 0) continue;
    if (raw.startsWith("#")) {
      if (raw.startsWith("# spec: ")) {
        spec = JSON.parse(raw.slice("# spec: ".length));
      }
      continue;
    }
    dataLines.push(raw);
  }
  if (dataLines.length === 0) {
    throw new SchemaError("no header row found");
  }
  const header = splitRecord(dataLines[0]);
  const expected = [...CSV_COLUMNS];
  if (
    header.length !== expected.length ||
    header.some((h, i) => h !== expected[i])
  ) {
    throw new SchemaError(
      `expected columns ${expected.join(",")}; found ${header.join(",")}`,
    );
  }
  const rows: ResultRow[] = [];
  for (const line of dataLines.slice(1)) {
    const fields = splitRecord(line);
    if (fields.length !== expected.length) {
      throw new SchemaError(`row has ${fields.length} fields: ${line}`);
    }
    const row = {} as ResultRow;
    expected.forEach((name, i) => {
      row[name] = fields[i];
    });
    rows.push(row);
  }
  return { spec, rows };
}

export interface SeriesPoint {
  x: number;
  mean: number;
  ci95: number;
  n: number;
}

export interface Series {
  group: string;
  points: SeriesPoint[];
}

/** Aggregate rows into one (mean, 95% CI) series per group value. */
export function aggregate(
  rows: ResultRow[],
  xColumn: string,
  yColumn: string,
  groupBy: string,
): Series[] {
  for (const col of [xColumn, yColumn, groupBy]) {
    if (!(CSV_COLUMNS as readonly string[]).includes(col)) {
      throw new SchemaError(
        `unknown column ${col}; expected one of ${CSV_COLUMNS.join(",")}`,
      );
    }
  }
  const byGroup = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    const g = row[groupBy as keyof ResultRow];
    const x = Number(row[xColumn as keyof ResultRow]);
    const y = Number(row[yColumn as keyof ResultRow]);
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      throw new SchemaError(
        `non-numeric value in ${xColumn}/${yColumn}: ${row[xColumn as keyof ResultRow]}, ${row[yColumn as keyof ResultRow]}`,
      );
    }
    if (!byGroup.has(g)) byGroup.set(g, new Map());
    const byX = byGroup.get(g)!;
    if (!byX.has(x)) byX.set(x, []);
    byX.get(x)!.push(y);
  }
  const series: Series[] = [];
  for (const group of [...byGroup.keys()].sort()) {
    const byX = byGroup.get(group)!;
    const points: SeriesPoint[] = [];
    for (const x of [...byX.keys()].sort((a, b) => a - b)) {
      const ys = byX.get(x)!;
      const n = ys.length;
      const mean = ys.reduce((a, b) => a + b, 0) / n;
      let ci = 0;
      if (n > 1) {
        const v = ys.reduce((a, b) => a + (b - mean) * (b - mean), 0) / (n - 1);
        ci = (1.96 * Math.sqrt(v)) / Math.sqrt(n);
      }
      points.push({ x, mean, ci95: ci, n });
    }
    series.push({ group, points });
  }
  return series;
}
