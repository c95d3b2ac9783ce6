import { projectPoint } from "./camera";
import { pointColors } from "./colors";
import { ReviewOverlay } from "./review";
import { CloudData, PendingClick, ViewState, Viewport } from "./types";

/** Canvas2D point cloud renderer; enough for a desk-scale annotation tool. */
export class CloudRenderer {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("canvas 2d context unavailable");
    }
    this.ctx = ctx;
  }

  viewport(): Viewport {
    return { width: this.canvas.width, height: this.canvas.height };
  }

  render(
    cloud: CloudData | null,
    view: ViewState,
    pending: PendingClick[],
    review: ReviewOverlay | null,
  ): void {
    const { width, height } = this.viewport();
    this.ctx.fillStyle = "#101014";
    this.ctx.fillRect(0, 0, width, height);
    if (!cloud) {
      return;
    }
    const colors = pointColors(cloud, view.colorMode);
    const viewport = this.viewport();
    const order: { px: number; py: number; depth: number; i: number }[] = [];
    for (let i = 0; i < cloud.count; i++) {
      const p = projectPoint(view, viewport, [
        cloud.positions[3 * i],
        cloud.positions[3 * i + 1],
        cloud.positions[3 * i + 2],
      ]);
      if (p && p.x >= 0 && p.x < width && p.y >= 0 && p.y < height) {
        order.push({ px: p.x, py: p.y, depth: p.depth, i });
      }
    }
    order.sort((a, b) => b.depth - a.depth); // far points first
    const s = view.pointSizePx;
    for (const { px, py, i } of order) {
      this.ctx.fillStyle = `rgb(${colors[3 * i]},${colors[3 * i + 1]},${colors[3 * i + 2]})`;
      this.ctx.fillRect(px - s / 2, py - s / 2, s, s);
    }
    for (const click of pending) {
      this.drawMarker(view, viewport, click.position, "#c586ff");
    }
    if (review) {
      for (const scene of review.scenes) {
        for (const marker of scene.markers) {
          this.drawMarker(view, viewport, marker.position, marker.color === "green" ? "#3ad13a" : "#e03a3a");
        }
      }
    }
  }

  private drawMarker(view: ViewState, viewport: Viewport, position: [number, number, number], color: string): void {
    const p = projectPoint(view, viewport, position);
    if (!p) {
      return;
    }
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = 2;
    this.ctx.beginPath();
    this.ctx.arc(p.x, p.y, 7, 0, 2 * Math.PI);
    this.ctx.stroke();
  }
}
