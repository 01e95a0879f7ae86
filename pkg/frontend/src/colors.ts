/** Stable code-index coloring: the same index gets the same hue everywhere,
 * so transferred or repeated codes are visually traceable across sessions. */

export function codeHue(index: number): number {
  // golden-angle spacing decorrelates neighboring indices
  return Math.round((index * 137.508) % 360);
}

export function codeColor(index: number, level: "top" | "bottom"): string {
  const sat = level === "top" ? 72 : 55;
  const light = level === "top" ? 52 : 62;
  return `hsl(${codeHue(index)}, ${sat}%, ${light}%)`;
}
