import { ClickSubmission, SceneInfo, ServerApi, SubmitResult } from "./api";
import { parseCspc } from "./cspc";
import { CloudData, PendingClick } from "./types";

/**
 * Drives one annotator session: scene fetching, the scene timer, the
 * local click buffer with undo, submission, and automatic batch
 * progression. The review window is offered only during training;
 * during annotation the golden scene is indistinguishable from the rest.
 *
 * The timer starts at the first render of a scene and the submitted
 * elapsed time is exactly (submit time - first render time). A failed
 * submission keeps the click buffer intact so the UI can retry.
 */
export class SessionFlow {
  private api: ServerApi;
  private clock: () => number;
  token = "";
  state = "";
  scene: SceneInfo | null = null;
  cloud: CloudData | null = null;
  pendingClicks: PendingClick[] = [];
  lastResult: SubmitResult | null = null;
  private firstRenderAtMs: number | null = null;

  constructor(api: ServerApi, clock: () => number = () => Date.now()) {
    this.api = api;
    this.clock = clock;
  }

  async start(annotatorId: string, category: string): Promise<void> {
    const info = await this.api.createSession(annotatorId, category);
    this.token = info.token;
    this.state = info.state;
  }

  /** Fetch the next scene and its binary payload; resets the local buffer. */
  async loadNextScene(): Promise<SceneInfo> {
    const scene = await this.api.nextScene(this.token);
    const payload = await this.api.fetchPayload(scene.payload_url);
    this.scene = scene;
    this.cloud = parseCspc(payload);
    this.pendingClicks = [];
    this.firstRenderAtMs = null;
    return scene;
  }

  /** Called by the renderer when the scene first appears on screen. */
  markRendered(): void {
    if (this.firstRenderAtMs === null) {
      this.firstRenderAtMs = this.clock();
    }
  }

  addClick(click: PendingClick): void {
    this.pendingClicks.push(click);
  }

  /** Remove the most recent pending click (before submission only). */
  undo(): PendingClick | undefined {
    return this.pendingClicks.pop();
  }

  get elapsedMs(): number {
    if (this.firstRenderAtMs === null) {
      return 0;
    }
    return this.clock() - this.firstRenderAtMs;
  }

  /** True while the review window applies: only during training. */
  get reviewAvailable(): boolean {
    return this.state === "in_training" || this.scene?.phase === "training";
  }

  /**
   * Submit the buffered clicks with the measured elapsed time. On a
   * network failure the buffer survives untouched and the same call can
   * be retried.
   */
  async submit(): Promise<SubmitResult> {
    if (!this.scene) {
      throw new Error("no scene loaded");
    }
    if (this.firstRenderAtMs === null) {
      throw new Error("scene was never rendered; timer did not start");
    }
    const elapsedS = (this.clock() - this.firstRenderAtMs) / 1000;
    const submissions: ClickSubmission[] = this.pendingClicks.map((c) => ({
      x: c.position[0],
      y: c.position[1],
      z: c.position[2],
      timestamp_ms: c.placedAtMs,
    }));
    const result = await this.api.submitClicks(
      this.token,
      this.scene.scene_id,
      submissions,
      elapsedS,
    );
    // only a successful submission clears the local buffer
    this.pendingClicks = [];
    this.scene = null;
    this.cloud = null;
    this.firstRenderAtMs = null;
    this.state = result.state;
    this.lastResult = result;
    return result;
  }

  async fetchReview() {
    return this.api.review(this.token);
  }
}
