/**
 * Minimal deterministic SVG assembly: fixed canvas, fixed fonts, plain
 * string output. Pixel coordinates are formatted with a fixed precision so
 * identical inputs always produce identical bytes.
 */

export const FONT = "11px Helvetica, Arial, sans-serif";

/** Fixed-precision pixel formatting shared by every emitter. */
export function px(v: number): string {
  if (!Number.isFinite(v)) throw new Error(`non-finite pixel value ${v}`);
  const s = v.toFixed(3);
  return s === "-0.000" ? "0.000" : s;
}

export function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

export class SvgDoc {
  private parts: string[] = [];

  constructor(
    readonly width: number,
    readonly height: number,
  ) {}

  add(el: string): void {
    this.parts.push(el);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string,
       width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.add(
      `<line x1="${px(x1)}" y1="${px(y1)}" x2="${px(x2)}" y2="${px(y2)}" ` +
        `stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.3,
           dash = ""): void {
    if (pts.length === 0) return;
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    const coords = pts.map(([x, y]) => `${px(x)},${px(y)}`).join(" ");
    this.add(
      `<polyline points="${coords}" fill="none" stroke="${stroke}" ` +
        `stroke-width="${width}"${d}/>`,
    );
  }

  text(x: number, y: number, s: string, anchor = "middle",
       rotate = 0): void {
    const r = rotate
      ? ` transform="rotate(${rotate} ${px(x)} ${px(y)})"`
      : "";
    this.add(
      `<text x="${px(x)}" y="${px(y)}" text-anchor="${anchor}" ` +
        `font-size="11"${r}>${esc(s)}</text>`,
    );
  }

  marker(kind: "circle" | "cross" | "star", x: number, y: number,
         color: string, r = 3): void {
    if (kind === "circle") {
      this.add(
        `<circle cx="${px(x)}" cy="${px(y)}" r="${r}" fill="none" ` +
          `stroke="${color}" stroke-width="1"/>`,
      );
      return;
    }
    if (kind === "cross") {
      this.line(x - r, y - r, x + r, y + r, color);
      this.line(x - r, y + r, x + r, y - r, color);
      return;
    }
    // star: cross plus upright bars
    this.line(x - r, y - r, x + r, y + r, color);
    this.line(x - r, y + r, x + r, y - r, color);
    this.line(x, y - r, x, y + r, color);
    this.line(x - r, y, x + r, y, color);
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" ` +
      `height="${this.height}" viewBox="0 0 ${this.width} ${this.height}" ` +
      `font-family="Helvetica, Arial, sans-serif">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

/** Axis label formatting: stable shortest-ish decimal. */
export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(Number(v.toPrecision(6)));
}
