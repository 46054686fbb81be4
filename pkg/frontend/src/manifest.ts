/**
 * Manifest loading and validation, plus typed access to the CSV tables a
 * figure kind needs. The renderer consumes exactly the schema the
 * experiment runner emits: a manifest.json listing every file with its
 * role and columns, next to the CSV files themselves.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import Papa from "papaparse";
import { z } from "zod";

import { ManifestError, MissingInput } from "./errors.js";

// rows/columns are absent on non-tabular outputs (text renderings), so
// they stay optional here; table loading checks real CSV headers anyway.
const fileEntrySchema = z.looseObject({
  path: z.string(),
  role: z.string(),
  rows: z.number().int().nonnegative().optional(),
  columns: z.array(z.string()).min(1).optional(),
});

const manifestSchema = z.looseObject({
  kind: z.string(),
  schema: z.number(),
  config: z.looseObject({ kind: z.string() }),
  config_hash: z.string(),
  files: z.array(fileEntrySchema),
  failures: z.array(z.unknown()),
  meta: z.record(z.string(), z.unknown()),
});

export type FileEntry = z.infer<typeof fileEntrySchema>;
export type Manifest = z.infer<typeof manifestSchema>;

export interface ManifestDir {
  manifest: Manifest;
  dir: string;
}

export function loadManifest(manifestPath: string): ManifestDir {
  let raw: string;
  try {
    raw = fs.readFileSync(manifestPath, "utf8");
  } catch {
    throw new MissingInput(`manifest not found: ${manifestPath}`);
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    throw new ManifestError(`manifest is not valid JSON: ${manifestPath} (${(err as Error).message})`);
  }
  const res = manifestSchema.safeParse(parsed);
  if (!res.success) {
    const issue = res.error.issues[0];
    throw new ManifestError(
      `manifest has an unexpected shape: ${manifestPath} (${issue.path.join(".")}: ${issue.message})`,
    );
  }
  if (res.data.files.length === 0) {
    throw new MissingInput(`manifest lists no files: ${manifestPath}`);
  }
  return { manifest: res.data, dir: path.dirname(manifestPath) };
}

/** The per-kind options table inside the resolved config. */
export function kindConfig(m: Manifest): Record<string, unknown> {
  const section = (m.config as Record<string, unknown>)[m.kind];
  if (section === undefined || typeof section !== "object" || section === null) {
    throw new ManifestError(`manifest config has no "${m.kind}" section`);
  }
  return section as Record<string, unknown>;
}

export function filesByRole(m: Manifest, role: string): FileEntry[] {
  return m.files.filter((f) => f.role === role);
}

export function requireFile(
  m: Manifest,
  role: string,
  match?: (f: FileEntry) => boolean,
  detail?: string,
): FileEntry {
  const hits = filesByRole(m, role).filter((f) => !match || match(f));
  if (hits.length === 0) {
    const suffix = detail ? ` (${detail})` : "";
    throw new MissingInput(`manifest has no file with role "${role}"${suffix}`);
  }
  return hits[0];
}

// ── CSV tables ──────────────────────────────────────────

export class Table {
  constructor(
    readonly name: string,
    readonly fields: string[],
    readonly rows: Record<string, string>[],
  ) {}

  /** Column as numbers; "nan"/"inf" map onto NaN/Infinity. */
  col(name: string): number[] {
    this.requireColumns([name]);
    return this.rows.map((r) => parseNumber(r[name]));
  }

  /** Column as raw strings (state labels and the like). */
  strCol(name: string): string[] {
    this.requireColumns([name]);
    return this.rows.map((r) => r[name]);
  }

  requireColumns(names: string[]): void {
    for (const n of names) {
      if (!this.fields.includes(n)) {
        throw new MissingInput(`column "${n}" missing from ${this.name}`);
      }
    }
  }
}

function parseNumber(s: string): number {
  const t = s.trim();
  if (t === "nan" || t === "-nan") return NaN;
  if (t === "inf") return Infinity;
  if (t === "-inf") return -Infinity;
  return Number(t);
}

export function loadTable(md: ManifestDir, entry: FileEntry, required: string[]): Table {
  const full = path.join(md.dir, entry.path);
  let raw: string;
  try {
    raw = fs.readFileSync(full, "utf8");
  } catch {
    throw new MissingInput(`listed file missing on disk: ${entry.path} (expected at ${full})`);
  }
  const parsed = Papa.parse<Record<string, string>>(raw, {
    header: true,
    skipEmptyLines: true,
  });
  const fields = parsed.meta.fields ?? [];
  const table = new Table(entry.path, fields, parsed.data);
  table.requireColumns(required);
  return table;
}

/** Load the one file with this role (and optional extra match). */
export function loadRole(
  md: ManifestDir,
  role: string,
  required: string[],
  match?: (f: FileEntry) => boolean,
  detail?: string,
): Table {
  return loadTable(md, requireFile(md.manifest, role, match, detail), required);
}

/** Extra per-entry manifest fields (case labels, snapshot times, dims). */
export function entryField(f: FileEntry, key: string): unknown {
  return (f as Record<string, unknown>)[key];
}
