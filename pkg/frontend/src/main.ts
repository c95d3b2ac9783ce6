import { createHttpApi } from "./api";
import { pickPoint } from "./picking";
import { CloudRenderer } from "./renderer";
import { buildReviewOverlay, ReviewOverlay } from "./review";
import { SessionFlow } from "./session";
import { defaultViewState } from "./types";

/**
 * Browser entry point. Wires the canvas viewer, orbit controls, click
 * placement, and the session flow together. Orbit and zoom only mutate
 * the view state; annotation state lives in the SessionFlow alone.
 */

function statusLine(text: string): void {
  const el = document.getElementById("status");
  if (el) {
    el.textContent = text;
  }
}

function describeResult(result: Record<string, unknown>): string {
  return Object.entries(result)
    .map(([k, v]) => `${k}=${v}`)
    .join("  ");
}

async function boot(): Promise<void> {
  const canvas = document.getElementById("viewer") as HTMLCanvasElement;
  const renderer = new CloudRenderer(canvas);
  const view = defaultViewState();
  const api = createHttpApi("");
  const flow = new SessionFlow(api, () => performance.now());
  let review: ReviewOverlay | null = null;

  function redraw(): void {
    renderer.render(flow.cloud, view, flow.pendingClicks, review);
    if (flow.cloud) {
      flow.markRendered(); // scene timer starts at first visible render
    }
  }

  async function advance(): Promise<void> {
    review = null;
    const scene = await flow.loadNextScene();
    statusLine(`scene ${scene.scene_id} (${scene.phase}, category ${scene.category})`);
    redraw();
  }

  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("mousedown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (!dragging) {
      return;
    }
    view.azimuthRad += (ev.clientX - lastX) * 0.005;
    view.elevationRad = Math.min(
      1.4,
      Math.max(-1.4, view.elevationRad + (ev.clientY - lastY) * 0.005),
    );
    lastX = ev.clientX;
    lastY = ev.clientY;
    redraw();
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    view.distance = Math.min(80, Math.max(2, view.distance * (ev.deltaY > 0 ? 1.1 : 0.9)));
    redraw();
  });
  canvas.addEventListener("click", (ev) => {
    if (!flow.cloud) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const click = pickPoint(
      ((ev.clientX - rect.left) / rect.width) * canvas.width,
      ((ev.clientY - rect.top) / rect.height) * canvas.height,
      view,
      renderer.viewport(),
      flow.cloud,
      performance.now(),
    );
    if (click) {
      flow.addClick(click);
      statusLine(`${flow.pendingClicks.length} click(s) placed`);
      redraw();
    }
  });

  document.getElementById("undo")?.addEventListener("click", () => {
    flow.undo();
    redraw();
  });
  document.getElementById("color-mode")?.addEventListener("change", (ev) => {
    view.colorMode = (ev.target as HTMLSelectElement).value as "intensity" | "height";
    redraw();
  });
  document.getElementById("submit")?.addEventListener("click", async () => {
    try {
      const result = await flow.submit();
      statusLine(describeResult(result as unknown as Record<string, unknown>));
      if (flow.reviewAvailable) {
        review = buildReviewOverlay(await flow.fetchReview());
        redraw();
        return; // show the review; the next scene loads on request
      }
      await advance();
    } catch (err) {
      statusLine(`submit failed, clicks preserved: ${err}`);
    }
  });
  document.getElementById("next")?.addEventListener("click", () => {
    advance().catch((err) => statusLine(String(err)));
  });

  const annotator = `annotator-${Math.floor(Math.random() * 1e6)}`;
  await flow.start(annotator, "car");
  statusLine(`session started for ${annotator}`);
  await advance();
}

boot().catch((err) => statusLine(`failed to start: ${err}`));
