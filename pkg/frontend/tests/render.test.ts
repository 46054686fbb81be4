/**
 * Renderer acceptance suite.
 *
 * Covers: every experiment kind renders from its prebuilt fixture manifest,
 * the Wigner snapshot limit-cycle circle lands at the radius the manifest
 * rates imply (pixel-coordinate probe, one-cell tolerance), invalid tile
 * shading, the MissingInput error contract, unsupported kind/format
 * messages, and byte-level determinism of re-renders.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, test } from "vitest";

import { ManifestError, MissingInput, UnsupportedFormat, UnsupportedKind } from "../src/errors.js";
import { render } from "../src/render.js";

const FIXTURES = fileURLToPath(new URL("./fixtures", import.meta.url));

const KINDS = [
  "steady_tiles",
  "wigner_cuts",
  "evolution_snapshots",
  "coherence_tiles",
  "negativity_traces",
  "gap_tiles",
  "tss_tiles",
  "tss_slices",
];

function fixture(kind: string): string {
  return path.join(FIXTURES, kind, "manifest.json");
}

describe("all eight experiment kinds render", () => {
  for (const kind of KINDS) {
    test(`${kind} renders without error`, () => {
      const files = render({ manifestPath: fixture(kind) });
      expect(files).toHaveLength(1);
      expect(files[0].name).toBe(`${kind}.svg`);
      expect(files[0].content.startsWith("<svg")).toBe(true);
      expect(files[0].content).toContain("</svg>");
      expect(files[0].content).not.toContain("NaN");
      expect(files[0].content).not.toContain("undefined");
    });
  }
});

describe("wigner snapshot overlay circle", () => {
  test("circle radius equals sqrt((kappa1 - gamma1) / gamma2) from the manifest, within one cell", () => {
    const manifestPath = fixture("evolution_snapshots");
    const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf8"));
    const case0 = manifest.meta.cases[0];
    const rData = Math.sqrt((case0.kappa1 - case0.gamma1) / case0.gamma2);

    // Grid geometry from the snapshot CSV itself, independent of the renderer.
    const entry = manifest.files.find(
      (f: { role: string; case?: string; time?: number }) =>
        f.role === "wigner_snapshot" && f.case === "case0" && f.time === case0.times[0],
    );
    expect(entry).toBeDefined();
    const csv = fs.readFileSync(path.join(FIXTURES, "evolution_snapshots", entry.path), "utf8");
    const xs = new Set<number>();
    for (const line of csv.trim().split("\n").slice(1)) {
      xs.add(Number(line.split(",")[0]));
    }
    const sorted = [...xs].sort((a, b) => a - b);
    const xMin = sorted[0];
    const xMax = sorted[sorted.length - 1];
    const dx = (xMax - xMin) / (sorted.length - 1);

    const svg = render({ manifestPath })[0].content;
    // First snapshot panel is drawn first: its circle precedes its frame,
    // and both precede every later panel's elements.
    const circle = /<circle class="limit-cycle" cx="([\d.eE+-]+)" cy="([\d.eE+-]+)" r="([\d.eE+-]+)"/.exec(svg);
    const frame = /<rect class="frame snap-frame" x="([\d.eE+-]+)" y="([\d.eE+-]+)" width="([\d.eE+-]+)" height="([\d.eE+-]+)"/.exec(svg);
    expect(circle).not.toBeNull();
    expect(frame).not.toBeNull();

    const frameX = Number(frame![1]);
    const frameW = Number(frame![3]);
    // Panel maps [xMin - dx/2, xMax + dx/2] onto the frame width.
    const pxPerUnit = frameW / (xMax - xMin + dx);
    const expectedR = rData * pxPerUnit;
    const cellPx = dx * pxPerUnit;

    expect(Math.abs(Number(circle![3]) - expectedR)).toBeLessThanOrEqual(cellPx);
    // Circle is centered on the origin, which sits at the frame center for
    // this symmetric grid.
    expect(Math.abs(Number(circle![1]) - (frameX + frameW / 2))).toBeLessThanOrEqual(cellPx);
  });
});

/** Minimal steady_tiles run written into a temp directory. */
function writeSteadyFixture(
  dir: string,
  opts: { csv?: string | null; files?: unknown[] } = {},
): string {
  const files = opts.files ?? [
    { path: "tiles.csv", role: "tiles", rows: 4, columns: ["A", "B", "C", "value", "valid_flag"] },
  ];
  const manifest = {
    kind: "steady_tiles",
    schema: 1,
    config: {
      kind: "steady_tiles",
      out: dir,
      schema: 1,
      workers: 1,
      steady_tiles: {
        basis_kappa1: 1.0,
        grid_a: { lo: 1, hi: 10, points: 2, spacing: "log" },
        grid_b: { lo: 1, hi: 10, points: 2, spacing: "log" },
      },
    },
    config_hash: "sha256:0",
    failures: [],
    files,
    meta: { value: "steady-state energy over the classical B/2" },
  };
  fs.writeFileSync(path.join(dir, "manifest.json"), JSON.stringify(manifest));
  if (opts.csv !== null) {
    const csv =
      opts.csv ??
      "A,B,C,value,valid_flag\n1.0,1.0,1.0,2.0,1\n1.0,10.0,0.1,3.0,1\n10.0,1.0,10.0,4.0,1\n10.0,10.0,1.0,nan,0\n";
    fs.writeFileSync(path.join(dir, "tiles.csv"), csv);
  }
  return path.join(dir, "manifest.json");
}

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "figtest-"));
}

describe("invalid tile shading", () => {
  test("cells with valid_flag = 0 are blacked out", () => {
    const manifestPath = writeSteadyFixture(tmpdir());
    const svg = render({ manifestPath })[0].content;
    expect(svg).toContain('fill="#000000"');
  });
});

describe("error contract", () => {
  test("absent manifest raises MissingInput naming the path", () => {
    const missing = path.join(tmpdir(), "manifest.json");
    expect(() => render({ manifestPath: missing })).toThrowError(MissingInput);
    expect(() => render({ manifestPath: missing })).toThrowError(missing);
  });

  test("manifest listing no files raises MissingInput", () => {
    const manifestPath = writeSteadyFixture(tmpdir(), { files: [], csv: null });
    expect(() => render({ manifestPath })).toThrowError(MissingInput);
    expect(() => render({ manifestPath })).toThrowError(/lists no files/);
  });

  test("listed file absent on disk raises MissingInput naming the file", () => {
    const manifestPath = writeSteadyFixture(tmpdir(), { csv: null });
    expect(() => render({ manifestPath })).toThrowError(MissingInput);
    expect(() => render({ manifestPath })).toThrowError(/tiles\.csv/);
  });

  test("missing required column raises MissingInput naming column and file", () => {
    const csv = "A,B,C,val,valid_flag\n1.0,1.0,1.0,2.0,1\n";
    const manifestPath = writeSteadyFixture(tmpdir(), { csv });
    expect(() => render({ manifestPath })).toThrowError(MissingInput);
    expect(() => render({ manifestPath })).toThrowError(/column "value" missing from tiles\.csv/);
  });

  test("text-only derivation kind raises UnsupportedKind", () => {
    const manifestPath = fixture("derive_eom");
    expect(() => render({ manifestPath })).toThrowError(UnsupportedKind);
    expect(() => render({ manifestPath })).toThrowError(/derive_eom/);
  });

  test("png format raises UnsupportedFormat pointing at svg", () => {
    const manifestPath = fixture("steady_tiles");
    expect(() => render({ manifestPath, format: "png" })).toThrowError(UnsupportedFormat);
    expect(() => render({ manifestPath, format: "png" })).toThrowError(/svg/);
  });

  test("malformed manifest JSON raises ManifestError", () => {
    const dir = tmpdir();
    const manifestPath = path.join(dir, "manifest.json");
    fs.writeFileSync(manifestPath, "{not json");
    expect(() => render({ manifestPath })).toThrowError(ManifestError);
  });
});

describe("determinism", () => {
  for (const kind of KINDS) {
    test(`${kind} re-render is byte-identical`, () => {
      const first = render({ manifestPath: fixture(kind) })[0].content;
      const second = render({ manifestPath: fixture(kind) })[0].content;
      expect(first === second).toBe(true);
    });
  }
});

const CLI = fileURLToPath(new URL("../dist/cli.js", import.meta.url));
const hasCli = fs.existsSync(CLI);

describe("command line", () => {
  test.skipIf(!hasCli)("render --manifest --out writes the figure file", () => {
    const out = tmpdir();
    const stdout = execFileSync(
      process.execPath,
      [CLI, "render", "--manifest", fixture("steady_tiles"), "--out", out],
      { encoding: "utf8" },
    );
    expect(stdout).toContain("steady_tiles.svg");
    expect(fs.existsSync(path.join(out, "steady_tiles.svg"))).toBe(true);
  });

  test.skipIf(!hasCli)("--format png fails with a clear unsupported message", () => {
    const out = tmpdir();
    let code = 0;
    let stderr = "";
    try {
      execFileSync(
        process.execPath,
        [CLI, "render", "--manifest", fixture("steady_tiles"), "--out", out, "--format", "png"],
        { encoding: "utf8" },
      );
    } catch (err) {
      const e = err as { status?: number; stderr?: string };
      code = e.status ?? 0;
      stderr = e.stderr ?? "";
    }
    expect(code).toBe(1);
    expect(stderr).toContain("png output is not supported");
  });
});
