/**
 * Tiny deterministic raster canvas: filled rectangles, anti-alias-free
 * lines, markers and bitmap text onto an RGBA buffer.
 */
import { GLYPH_H, GLYPH_W, glyphFor } from "./font.js";
import { encodePng } from "./png.js";

export type Color = [number, number, number];

export class Canvas {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number, background: Color = [255, 255, 255]) {
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height * 4);
    this.fillRect(0, 0, width, height, background);
  }

  set(x: number, y: number, c: Color): void {
    x = Math.round(x);
    y = Math.round(y);
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const i = (y * this.width + x) * 4;
    this.data[i] = c[0];
    this.data[i + 1] = c[1];
    this.data[i + 2] = c[2];
    this.data[i + 3] = 255;
  }

  fillRect(x0: number, y0: number, w: number, h: number, c: Color): void {
    const xa = Math.max(0, Math.round(x0));
    const ya = Math.max(0, Math.round(y0));
    const xb = Math.min(this.width, Math.round(x0 + w));
    const yb = Math.min(this.height, Math.round(y0 + h));
    for (let y = ya; y < yb; y++) {
      for (let x = xa; x < xb; x++) {
        const i = (y * this.width + x) * 4;
        this.data[i] = c[0];
        this.data[i + 1] = c[1];
        this.data[i + 2] = c[2];
        this.data[i + 3] = 255;
      }
    }
  }

  line(x0: number, y0: number, x1: number, y1: number, c: Color, thick = 1): void {
    // Bresenham with optional square pen
    let xa = Math.round(x0), ya = Math.round(y0);
    const xb = Math.round(x1), yb = Math.round(y1);
    const dx = Math.abs(xb - xa), dy = -Math.abs(yb - ya);
    const sx = xa < xb ? 1 : -1, sy = ya < yb ? 1 : -1;
    let err = dx + dy;
    for (;;) {
      if (thick <= 1) {
        this.set(xa, ya, c);
      } else {
        const r = Math.floor(thick / 2);
        this.fillRect(xa - r, ya - r, thick, thick, c);
      }
      if (xa === xb && ya === yb) break;
      const e2 = 2 * err;
      if (e2 >= dy) { err += dy; xa += sx; }
      if (e2 <= dx) { err += dx; ya += sy; }
    }
  }

  marker(x: number, y: number, c: Color, size = 5): void {
    const r = Math.floor(size / 2);
    this.fillRect(x - r, y - r, size, size, c);
  }

  text(x: number, y: number, s: string, c: Color, scale = 1): void {
    let cx = Math.round(x);
    for (const ch of s) {
      const rows = glyphFor(ch);
      for (let ry = 0; ry < GLYPH_H; ry++) {
        for (let rx = 0; rx < GLYPH_W; rx++) {
          if ((rows[ry] >> (GLYPH_W - 1 - rx)) & 1) {
            this.fillRect(cx + rx * scale, y + ry * scale, scale, scale, c);
          }
        }
      }
      cx += (GLYPH_W + 1) * scale;
    }
  }

  /** Text rotated 90 degrees counterclockwise (for y-axis labels). */
  textVertical(x: number, y: number, s: string, c: Color, scale = 1): void {
    let cy = Math.round(y);
    for (const ch of s) {
      const rows = glyphFor(ch);
      for (let ry = 0; ry < GLYPH_H; ry++) {
        for (let rx = 0; rx < GLYPH_W; rx++) {
          if ((rows[ry] >> (GLYPH_W - 1 - rx)) & 1) {
            this.fillRect(x + ry * scale, cy - rx * scale, scale, scale, c);
          }
        }
      }
      cy -= (GLYPH_W + 1) * scale;
    }
  }

  toPng(): Buffer {
    return encodePng(this.width, this.height, this.data);
  }
}

export const PALETTE: Color[] = [
  [31, 119, 180],   // blue
  [255, 127, 14],   // orange
  [44, 160, 44],    // green
  [214, 39, 40],    // red
  [148, 103, 189],  // purple
  [140, 86, 75],    // brown
  [23, 190, 207],   // cyan
  [127, 127, 127],  // gray
];

export const BLACK: Color = [0, 0, 0];
export const GRAY: Color = [200, 200, 200];
