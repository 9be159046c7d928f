// Maps raw UI input events to 6-component relative pose commands.
// Pointer drag moves tangentially (x, y), scroll wheel and arrow keys adjust
// depth, and dragging with the modifier held rotates instead of translating.
// All outputs are pre-scaling: the service applies its own motion scale.

export const DRAG_GAIN_M_PER_PX = 0.0005;
export const SCROLL_GAIN_M = 0.0002;
export const KEY_DEPTH_STEP_M = 0.001;
export const ROTATE_GAIN_RAD_PER_PX = 0.005;

export interface DragEventLike {
  dx: number; // pixels
  dy: number;
  modifier: boolean; // orientation mode
}

export function dragToMotion(ev: DragEventLike): number[] {
  const rel = [0, 0, 0, 0, 0, 0];
  if (ev.modifier) {
    rel[3] = ev.dy * ROTATE_GAIN_RAD_PER_PX;
    rel[4] = -ev.dx * ROTATE_GAIN_RAD_PER_PX;
  } else {
    rel[0] = ev.dx * DRAG_GAIN_M_PER_PX;
    rel[1] = -ev.dy * DRAG_GAIN_M_PER_PX;
  }
  return rel;
}

export function scrollToMotion(deltaY: number): number[] {
  const rel = [0, 0, 0, 0, 0, 0];
  rel[2] = deltaY * SCROLL_GAIN_M;
  return rel;
}

// Returns a motion vector, the string "re_zero", or null when the key is
// unbound. Zero vectors never reach the wire: UiSessionState.sendMotion
// drops them.
export function keyToAction(key: string): number[] | "re_zero" | null {
  switch (key) {
    case "ArrowDown": {
      const rel = [0, 0, 0, 0, 0, 0];
      rel[2] = KEY_DEPTH_STEP_M;
      return rel;
    }
    case "ArrowUp": {
      const rel = [0, 0, 0, 0, 0, 0];
      rel[2] = -KEY_DEPTH_STEP_M;
      return rel;
    }
    case "z":
      return "re_zero";
    default:
      return null;
  }
}

export function isZeroMotion(rel: number[]): boolean {
  return rel.every((v) => v === 0);
}
