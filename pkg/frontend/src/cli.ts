/**
 * plot <figure-spec.json | preset-name> [--csv path] [--out dir] [--formats svg,png]
 *
 * A preset name selects the axes matching one of the simulation harness's
 * builtin sweeps; --csv points at the results file (defaults to
 * <preset>.csv in the current directory).
 */

import { existsSync } from "node:fs";
import { basename, join } from "node:path";
import process from "node:process";
import { SchemaError } from "./csv.js";
import { loadFigureSpec, presetFigure, PRESET_NAMES } from "./figure.js";
import { render } from "./render.js";

function parseArgs(argv: string[]) {
  const positional: string[] = [];
  const flags: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a.startsWith("--")) {
      flags[a.slice(2)] = argv[++i] ?? "";
    } else {
      positional.push(a);
    }
  }
  return { positional, flags };
}

export function main(argv: string[]): number {
  const { positional, flags } = parseArgs(argv);
  if (positional[0] !== "plot" || positional.length !== 2) {
    console.error(
      "usage: plot <figure-spec.json | preset-name> [--csv path] [--out dir] [--formats svg,png]",
    );
    console.error(`presets: ${PRESET_NAMES.join(", ")}`);
    return 2;
  }
  const target = positional[1];
  const outDir = flags.out ?? ".";
  const formats = (flags.formats ?? "svg,png").split(",");
  try {
    let spec;
    if (PRESET_NAMES.includes(target)) {
      const csv = flags.csv ?? `${target}.csv`;
      spec = presetFigure(target, csv, join(outDir, target));
    } else {
      spec = loadFigureSpec(target);
      if (flags.csv) spec.input = flags.csv;
      spec.output = join(outDir, basename(spec.output));
    }
    if (!existsSync(spec.input)) {
      console.error(`error: input CSV not found: ${spec.input}`);
      return 2;
    }
    const out = render(spec, formats);
    console.log(`${out.svgPath} ${out.pngPath} (${out.curves} curves)`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

main(process.argv.slice(2));
