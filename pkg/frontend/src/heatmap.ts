// Tactile field heatmaps rendered into raw RGBA buffers so they can be
// tested without a DOM. The force scale is fixed at [0, 50] kPa so that
// colours are comparable across presets and sessions; deformation uses a
// fixed [0, 5] mm scale for the same reason.

import { GRID_W, GRID_H } from "./protocol.js";

export const FORCE_SCALE_KPA: [number, number] = [0, 50];
export const DEFORM_SCALE_MM: [number, number] = [0, 5];

export interface Heatmap {
  width: number;
  height: number;
  rgba: Uint8ClampedArray; // width * height * 4
}

// Piecewise-linear black -> blue -> red -> yellow ramp.
const STOPS: Array<[number, [number, number, number]]> = [
  [0.0, [0, 0, 16]],
  [0.33, [32, 64, 192]],
  [0.66, [208, 64, 32]],
  [1.0, [255, 224, 64]],
];

export function colorFor(value: number, lo: number, hi: number): [number, number, number] {
  const t = Math.min(1, Math.max(0, (value - lo) / (hi - lo)));
  for (let i = 1; i < STOPS.length; i++) {
    const [t1, c1] = STOPS[i];
    const [t0, c0] = STOPS[i - 1];
    if (t <= t1) {
      const f = (t - t0) / (t1 - t0);
      return [
        Math.round(c0[0] + f * (c1[0] - c0[0])),
        Math.round(c0[1] + f * (c1[1] - c0[1])),
        Math.round(c0[2] + f * (c1[2] - c0[2])),
      ];
    }
  }
  return STOPS[STOPS.length - 1][1];
}

function render(field: Float32Array, lo: number, hi: number): Heatmap {
  if (field.length !== GRID_W * GRID_H) {
    throw new Error(`field has ${field.length} cells, expected ${GRID_W * GRID_H}`);
  }
  const rgba = new Uint8ClampedArray(GRID_W * GRID_H * 4);
  for (let i = 0; i < field.length; i++) {
    const [r, g, b] = colorFor(field[i], lo, hi);
    rgba[4 * i] = r;
    rgba[4 * i + 1] = g;
    rgba[4 * i + 2] = b;
    rgba[4 * i + 3] = 255;
  }
  return { width: GRID_W, height: GRID_H, rgba };
}

export function forceHeatmap(forceKpa: Float32Array): Heatmap {
  return render(forceKpa, FORCE_SCALE_KPA[0], FORCE_SCALE_KPA[1]);
}

export function deformHeatmap(deformMm: Float32Array): Heatmap {
  return render(deformMm, DEFORM_SCALE_MM[0], DEFORM_SCALE_MM[1]);
}
