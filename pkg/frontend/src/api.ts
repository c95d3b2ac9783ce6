import { ReviewPayload } from "./types";

export interface SessionInfo {
  token: string;
  state: string;
  category: string;
  training_scenes: number;
  batch_size: number;
}

export interface SceneInfo {
  scene_id: string;
  phase: "training" | "annotation";
  category: string;
  payload_url: string;
}

export interface ClickSubmission {
  x: number;
  y: number;
  z: number;
  timestamp_ms: number;
}

export interface SubmitResult {
  phase: string;
  state: string;
  scene_passed?: boolean;
  recall?: number;
  precision?: number;
  elapsed?: number;
  time_budget?: number;
  scenes_completed?: number;
  batch_progress?: number;
  batch_size?: number;
  batch_committed?: boolean;
  records_appended?: number;
}

/** Everything the session flow needs from the backend; injectable in tests. */
export interface ServerApi {
  createSession(annotatorId: string, category: string): Promise<SessionInfo>;
  nextScene(token: string): Promise<SceneInfo>;
  fetchPayload(payloadUrl: string): Promise<ArrayBuffer>;
  submitClicks(
    token: string,
    sceneId: string,
    clicks: ClickSubmission[],
    elapsedS: number,
  ): Promise<SubmitResult>;
  review(token: string): Promise<ReviewPayload>;
}

export function createHttpApi(baseUrl: string): ServerApi {
  const base = baseUrl.replace(/\/$/, "");

  async function asJson(response: Response) {
    if (!response.ok) {
      throw new Error(`HTTP ${response.status}: ${await response.text()}`);
    }
    return response.json();
  }

  return {
    async createSession(annotatorId, category) {
      return asJson(
        await fetch(`${base}/session`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify({ annotator_id: annotatorId, category }),
        }),
      );
    },
    async nextScene(token) {
      return asJson(await fetch(`${base}/scene/next`, { headers: { "x-session-token": token } }));
    },
    async fetchPayload(payloadUrl) {
      const response = await fetch(`${base}${payloadUrl}`);
      if (!response.ok) {
        throw new Error(`HTTP ${response.status} fetching payload`);
      }
      return response.arrayBuffer();
    },
    async submitClicks(token, sceneId, clicks, elapsedS) {
      return asJson(
        await fetch(`${base}/scene/${encodeURIComponent(sceneId)}/clicks`, {
          method: "POST",
          headers: { "content-type": "application/json", "x-session-token": token },
          body: JSON.stringify({ clicks, elapsed_s: elapsedS }),
        }),
      );
    },
    async review(token) {
      return asJson(await fetch(`${base}/review`, { headers: { "x-session-token": token } }));
    },
  };
}
