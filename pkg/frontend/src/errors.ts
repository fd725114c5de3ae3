/** Typed errors so callers can distinguish I/O problems from bad data. */

export class MissingFileError extends Error {
  constructor(public readonly path: string) {
    super(`file not found: ${path}`);
    this.name = "MissingFileError";
  }
}

export class FormatError extends Error {
  constructor(public readonly path: string, detail: string) {
    super(`${path}: ${detail}`);
    this.name = "FormatError";
  }
}
