/**
 * Error types for the figure renderer.
 *
 * MissingInput covers every "the data I was pointed at is not there" case:
 * absent manifest, manifest listing no files, a file entry the figure kind
 * needs that the manifest lacks, a listed file missing on disk, or a CSV
 * whose header lacks a required column. The message always names the thing
 * that is missing.
 */

export class MissingInput extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MissingInput";
  }
}

/** Manifest exists but cannot be understood (bad JSON, wrong shape). */
export class ManifestError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ManifestError";
  }
}

/** Requested an output format this build does not produce. */
export class UnsupportedFormat extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UnsupportedFormat";
  }
}

/** Manifest kind has no figure (e.g. a text-only derivation run). */
export class UnsupportedKind extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UnsupportedKind";
  }
}
