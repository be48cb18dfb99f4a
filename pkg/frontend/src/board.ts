import type { Vec3 } from "./math.js";

export interface BoardSpec {
  squares_x: number;
  squares_y: number;
  square_length: number;
}

export const DEFAULT_BOARD: BoardSpec = {
  squares_x: 8,
  squares_y: 5,
  square_length: 0.03,
};

export function boardWidth(spec: BoardSpec): number {
  return spec.squares_x * spec.square_length;
}

export function boardHeight(spec: BoardSpec): number {
  return spec.squares_y * spec.square_length;
}

export function boardCenter(spec: BoardSpec): Vec3 {
  return [boardWidth(spec) / 2, boardHeight(spec) / 2, 0];
}

/** Interior chessboard corners, id order row-major: corner (row i,
 * column j), both 1-based over the interior grid, sits at
 * (j * square_length, i * square_length, 0). Array index == corner id. */
export function cornerArray(spec: BoardSpec): Vec3[] {
  const out: Vec3[] = [];
  const s = spec.square_length;
  for (let i = 1; i < spec.squares_y; i++) {
    for (let j = 1; j < spec.squares_x; j++) {
      out.push([j * s, i * s, 0]);
    }
  }
  return out;
}
