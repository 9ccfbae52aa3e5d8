/** SVG marker overlay: handle = circle, target = triangle, drag = arrow,
 * plus the capture-radius circle around each handle. */

import type { CameraInfo } from "./api.js";
import { projectToPixel, projectedRadiusPx } from "./geometry.js";
import type { PointPair } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el(name: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function triangle(x: number, y: number, size: number, color: string): SVGElement {
  const pts = `${x},${y - size} ${x - size},${y + size} ${x + size},${y + size}`;
  return el("polygon", { points: pts, fill: color, stroke: "white", "stroke-width": "1" });
}

export function drawOverlay(svg: SVGSVGElement, cam: CameraInfo, pairs: PointPair[]): void {
  svg.replaceChildren();
  svg.setAttribute("viewBox", `0 0 ${cam.width} ${cam.height}`);
  for (const pair of pairs) {
    const h = projectToPixel(cam, pair.handle);
    if (!h) continue;
    const [hx, hy] = [h[0] + 0.5, h[1] + 0.5];
    const rPx = projectedRadiusPx(cam, pair.handle, pair.radius);
    svg.appendChild(
      el("circle", {
        cx: String(hx),
        cy: String(hy),
        r: String(rPx),
        fill: "none",
        stroke: "rgba(255, 80, 80, 0.6)",
        "stroke-dasharray": "3 2",
      }),
    );
    svg.appendChild(
      el("circle", {
        cx: String(hx),
        cy: String(hy),
        r: "3",
        fill: "#ff3b30",
        stroke: "white",
        "stroke-width": "1",
      }),
    );
    if (pair.target) {
      const t = projectToPixel(cam, pair.target);
      if (!t) continue;
      const [tx, ty] = [t[0] + 0.5, t[1] + 0.5];
      svg.appendChild(
        el("line", {
          x1: String(hx),
          y1: String(hy),
          x2: String(tx),
          y2: String(ty),
          stroke: "#ff3b30",
          "stroke-width": "1.5",
          "marker-end": "url(#arrowhead)",
        }),
      );
      svg.appendChild(triangle(tx, ty, 4, "#ff3b30"));
    }
  }
}

export function installArrowheadDefs(svg: SVGSVGElement): void {
  const defs = el("defs", {});
  const marker = el("marker", {
    id: "arrowhead",
    viewBox: "0 0 10 10",
    refX: "8",
    refY: "5",
    markerWidth: "6",
    markerHeight: "6",
    orient: "auto-start-reverse",
  });
  marker.appendChild(el("path", { d: "M 0 0 L 10 5 L 0 10 z", fill: "#ff3b30" }));
  defs.appendChild(marker);
  svg.appendChild(defs);
}
