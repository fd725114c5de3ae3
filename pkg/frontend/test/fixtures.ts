import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export function tmpDir(): string {
  return mkdtempSync(join(tmpdir(), "figures-"));
}

/** Write a valid grid CSV with density f(i, j) on an r x r window. */
export function writeGrid(dir: string, name: string, k: number, r: number,
                          f: (i: number, j: number) => number): string {
  const lines = [
    `# window x1=[-3.0,3.0] x2=[-3.0,3.0] resolution=${r} k=${k}`,
    "x1,x2,density",
  ];
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < r; j++) {
      const x1 = -3 + (6 * i) / (r - 1);
      const x2 = -3 + (6 * j) / (r - 1);
      lines.push(`${x1},${x2},${f(i, j)}`);
    }
  }
  const path = join(dir, name);
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

export function writeMetrics(dir: string, name: string,
                             lls: number[]): string {
  const lines = ["k,log_likelihood,mass_residual,wall_time"];
  lls.forEach((ll, k) => lines.push(`${k},${ll},1e-12,0.01`));
  const path = join(dir, name);
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}
