/** Pinhole projection math matching the service's camera convention
 * (w2c row-major, pixel (i, j) sampled at (j + 0.5, i + 0.5)). */

import type { CameraInfo } from "./api.js";

export type Vec3 = [number, number, number];

export function worldToCamera(cam: CameraInfo, p: Vec3): Vec3 {
  const m = cam.w2c;
  return [
    m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3],
    m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
    m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11],
  ];
}

/** Pixel coordinates of a world point (pixel-index convention: the value
 * pairs with integer pixel indices, matching the server's /pick inverse). */
export function projectToPixel(cam: CameraInfo, p: Vec3): [number, number] | null {
  const c = worldToCamera(cam, p);
  if (c[2] <= 0) return null;
  return [
    (cam.fx * c[0]) / c[2] + cam.cx - 0.5,
    (cam.fy * c[1]) / c[2] + cam.cy - 0.5,
  ];
}

/** Screen-space radius of a world sphere of the given radius at point p. */
export function projectedRadiusPx(cam: CameraInfo, p: Vec3, radius: number): number {
  const z = worldToCamera(cam, p)[2];
  if (z <= 0) return 0;
  return (cam.fx * radius) / z;
}

export function pixelDistance(a: [number, number], b: [number, number]): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1]);
}
