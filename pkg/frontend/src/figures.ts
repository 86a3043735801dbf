/**
 * The five benchmark figures, rendered deterministically from CSVs:
 * robustness curves, ALE-norm time series, end-of-period minima trends,
 * stacked timing bars and completed-portion bars.
 */
import { readCsv, requireColumns, Series, seriesFrom, techniqueFromFilename } from "./csv.js";
import { BLACK, Canvas, Color, GRAY, PALETTE } from "./raster.js";
import { textWidth } from "./font.js";

export const WIDTH = 800;
export const HEIGHT = 500;
const M = { left: 80, right: 170, top: 40, bottom: 60 };

export type FigureKind =
  | "lmax-curves" | "norm-series" | "minima-trend"
  | "timing-bars" | "completion-bars";

export const FIGURE_KINDS: FigureKind[] = [
  "lmax-curves", "norm-series", "minima-trend", "timing-bars",
  "completion-bars"];

function niceStep(span: number): number {
  if (!(span > 0)) return 1;
  const raw = span / 5;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (raw <= m * mag) return m * mag;
  }
  return 10 * mag;
}

function fmt(v: number): string {
  const s = Number(v.toPrecision(6));
  return String(s);
}

class Frame {
  constructor(
    readonly canvas: Canvas,
    readonly x0: number, readonly x1: number,
    readonly y0: number, readonly y1: number,
  ) {}

  px(x: number): number {
    const span = this.x1 - this.x0 || 1;
    return M.left + ((x - this.x0) / span) * (WIDTH - M.left - M.right);
  }

  py(y: number): number {
    const span = this.y1 - this.y0 || 1;
    return HEIGHT - M.bottom - ((y - this.y0) / span) * (HEIGHT - M.top - M.bottom);
  }

  axes(xlabel: string, ylabel: string, title: string): void {
    const c = this.canvas;
    c.fillRect(M.left, M.top, WIDTH - M.left - M.right, 1, GRAY);
    c.fillRect(M.left, HEIGHT - M.bottom, WIDTH - M.left - M.right, 1, BLACK);
    c.fillRect(M.left, M.top, 1, HEIGHT - M.top - M.bottom, BLACK);
    c.fillRect(WIDTH - M.right, M.top, 1, HEIGHT - M.top - M.bottom, GRAY);
    const xs = niceStep(this.x1 - this.x0);
    for (let v = Math.ceil(this.x0 / xs) * xs; v <= this.x1 + 1e-12; v += xs) {
      const x = this.px(v);
      c.fillRect(x, HEIGHT - M.bottom, 1, 4, BLACK);
      const label = fmt(v);
      c.text(x - textWidth(label) / 2, HEIGHT - M.bottom + 8, label, BLACK);
    }
    const ys = niceStep(this.y1 - this.y0);
    for (let v = Math.ceil(this.y0 / ys) * ys; v <= this.y1 + 1e-12; v += ys) {
      const y = this.py(v);
      c.fillRect(M.left - 4, y, 4, 1, BLACK);
      const label = fmt(v);
      c.text(M.left - 8 - textWidth(label), y - 3, label, BLACK);
    }
    c.text((WIDTH - M.right + M.left) / 2 - textWidth(xlabel) / 2,
           HEIGHT - M.bottom + 28, xlabel, BLACK);
    c.textVertical(12, (HEIGHT - M.bottom + M.top) / 2 + textWidth(ylabel) / 2,
                   ylabel, BLACK);
    c.text(M.left, M.top - 20, title, BLACK);
  }

  polyline(s: Series, color: Color, markers = false): void {
    for (let i = 1; i < s.x.length; i++) {
      this.canvas.line(this.px(s.x[i - 1]), this.py(s.y[i - 1]),
                       this.px(s.x[i]), this.py(s.y[i]), color, 2);
    }
    if (markers || s.x.length === 1) {
      for (let i = 0; i < s.x.length; i++) {
        this.canvas.marker(this.px(s.x[i]), this.py(s.y[i]), color);
      }
    }
  }

  legend(entries: { name: string; color: Color | null }[]): void {
    const x = WIDTH - M.right + 14;
    let y = M.top + 6;
    for (const e of entries) {
      if (e.color) {
        this.canvas.fillRect(x, y + 2, 14, 3, e.color);
      }
      this.canvas.text(x + 20, y, e.name, BLACK);
      y += 16;
    }
  }
}

function dataRange(all: Series[]): { x0: number; x1: number; y0: number; y1: number } {
  const xs = all.flatMap((s) => s.x);
  const ys = all.flatMap((s) => s.y);
  if (xs.length === 0) {
    return { x0: 0, x1: 1, y0: 0, y1: 1 };
  }
  let x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(0, ...ys), y1 = Math.max(...ys);
  if (x0 === x1) { x0 -= 0.5; x1 += 0.5; }
  if (y0 === y1) { y1 = y0 + 1; }
  y1 += 0.05 * (y1 - y0);
  return { x0, x1, y0, y1 };
}

function colorFor(i: number): Color {
  return PALETTE[i % PALETTE.length];
}

function lineFigure(inputs: string[], xcol: string, ycol: string,
                    xlabel: string, ylabel: string, title: string,
                    markers: boolean): Canvas {
  const series = inputs
    .map((p) => seriesFrom(readCsv(p), xcol, ycol))
    .sort((a, b) => a.name.localeCompare(b.name));
  const canvas = new Canvas(WIDTH, HEIGHT);
  const nonEmpty = series.filter((s) => s.x.length > 0);
  const r = dataRange(nonEmpty);
  const frame = new Frame(canvas, r.x0, r.x1, r.y0, r.y1);
  frame.axes(xlabel, ylabel, title);
  const entries: { name: string; color: Color | null }[] = [];
  series.forEach((s, i) => {
    if (s.x.length === 0) {
      entries.push({ name: `${s.name} (no data)`, color: null });
    } else {
      frame.polyline(s, colorFor(i), markers);
      entries.push({ name: s.name, color: colorFor(i) });
    }
  });
  if (nonEmpty.length === 0) {
    canvas.text(WIDTH / 2 - textWidth("NO DATA"), HEIGHT / 2, "NO DATA", BLACK, 2);
  }
  frame.legend(entries);
  return canvas;
}

export function lmaxCurves(inputs: string[]): Canvas {
  return lineFigure(inputs, "chi", "l_max", "STIFFENING DEGREE CHI",
                    "MAX LOADING L", "ROBUSTNESS: L MAX VS CHI", true);
}

export function normSeries(inputs: string[]): Canvas {
  return lineFigure(inputs, "t", "ale_norm", "TIME (S)", "ALE NORM",
                    "ALE DISPLACEMENT NORM OVER TIME", false);
}

export function minimaTrend(inputs: string[]): Canvas {
  return lineFigure(inputs, "t", "ale_norm", "TIME (S)", "NORM AT PERIOD END",
                    "END-OF-PERIOD ALE NORM", true);
}

interface Bar {
  name: string;
  parts: { value: number; color: Color; label: string }[];
}

function barFigure(bars: Bar[], ylabel: string, title: string,
                   legendEntries: { name: string; color: Color | null }[]): Canvas {
  const canvas = new Canvas(WIDTH, HEIGHT);
  const total = (b: Bar) => b.parts.reduce((acc, p) => acc + p.value, 0);
  const ymax = Math.max(1e-12, ...bars.map(total)) * 1.05;
  const frame = new Frame(canvas, 0, Math.max(1, bars.length), 0, ymax);
  frame.axes("", ylabel, title);
  const span = WIDTH - M.left - M.right;
  const slot = span / Math.max(1, bars.length);
  bars.forEach((bar, i) => {
    const x = M.left + i * slot + slot * 0.2;
    const w = slot * 0.6;
    let base = 0;
    for (const part of bar.parts) {
      const y0 = frame.py(base);
      const y1 = frame.py(base + part.value);
      canvas.fillRect(x, y1, w, Math.max(1, y0 - y1), part.color);
      base += part.value;
    }
    canvas.text(x + w / 2 - textWidth(bar.name) / 2, HEIGHT - M.bottom + 8,
                bar.name, BLACK);
  });
  frame.legend(legendEntries);
  return canvas;
}

const PHASE_COLORS: [string, Color][] = [
  ["ASSEMBLY", PALETTE[0]], ["SOLVE", PALETTE[1]], ["CHECK", PALETTE[2]]];

export function timingBars(inputs: string[]): Canvas {
  const bars: Bar[] = inputs.map((p) => {
    const t = readCsv(p);
    const [tech, asm, slv, chk] = requireColumns(
      t, ["technique", "assembly_s", "solve_s", "check_s"]);
    if (t.rows.length === 0) {
      return { name: `${techniqueFromFilename(p)}`, parts: [] };
    }
    const row = t.rows[0];
    return {
      name: t.raw[0][tech],
      parts: PHASE_COLORS.map(([label, color], k) => ({
        label, color, value: row[[asm, slv, chk][k]] })),
    };
  }).sort((a, b) => a.name.localeCompare(b.name));
  const legend = PHASE_COLORS.map(([name, color]) => ({ name, color }));
  for (const b of bars.filter((b) => b.parts.length === 0)) {
    legend.push({ name: `${b.name} (no data)`, color: null as unknown as Color });
  }
  return barFigure(bars, "WALL TIME (S)", "TIMING SPLIT PER TECHNIQUE", legend);
}

export function completionBars(inputs: string[]): Canvas {
  const bars: Bar[] = inputs.map((p) => {
    const t = readCsv(p);
    const [tech, status, tEnd, tLast] = requireColumns(
      t, ["technique", "status", "t_end", "t_last"]);
    if (t.rows.length === 0) {
      return { name: techniqueFromFilename(p), parts: [] };
    }
    const frac = t.rows[0][tLast] / Math.max(1e-12, t.rows[0][tEnd]);
    const completed = t.raw[0][status] === "COMPLETED";
    return {
      name: t.raw[0][tech],
      parts: [{ value: Math.min(1, frac), label: "",
                color: completed ? PALETTE[2] : PALETTE[3] }],
    };
  }).sort((a, b) => a.name.localeCompare(b.name));
  const legend = [{ name: "COMPLETED", color: PALETTE[2] },
                  { name: "FAILED", color: PALETTE[3] }];
  for (const b of bars.filter((b) => b.parts.length === 0)) {
    legend.push({ name: `${b.name} (no data)`, color: null as unknown as Color });
  }
  return barFigure(bars, "COMPLETED FRACTION", "PORTION OF RUN COMPLETED", legend);
}

export function render(kind: FigureKind, inputs: string[]): Canvas {
  if (inputs.length === 0) {
    throw new Error("at least one input CSV is required");
  }
  switch (kind) {
    case "lmax-curves": return lmaxCurves(inputs);
    case "norm-series": return normSeries(inputs);
    case "minima-trend": return minimaTrend(inputs);
    case "timing-bars": return timingBars(inputs);
    case "completion-bars": return completionBars(inputs);
    default:
      throw new Error(`unknown figure kind '${kind}'`);
  }
}
