/** Small perceptually-ordered colormap (viridis control points, lerped). */

const STOPS: [number, number, number][] = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

/** Map t in [0,1] to a CSS rgb() string. Values outside [0,1] are clamped. */
export function viridis(t: number): string {
  const x = Math.min(1, Math.max(0, t)) * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(x));
  const f = x - i;
  const c = STOPS[i].map((a, ch) => Math.round(a + f * (STOPS[i + 1][ch] - a)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}
