import { describe, expect, it } from "vitest";

import { ClickSubmission, SceneInfo, ServerApi, SubmitResult } from "../src/api";
import { pointAt } from "../src/cspc";
import { SessionFlow } from "../src/session";
import { ReviewPayload } from "../src/types";

function scenePayload(points: number[][]): ArrayBuffer {
  const buffer = new ArrayBuffer(11 + points.length * 12);
  const view = new DataView(buffer);
  [..."CSPC"].forEach((ch, i) => view.setUint8(i, ch.charCodeAt(0)));
  view.setUint8(4, 1);
  view.setUint8(5, 1);
  view.setUint8(6, 0);
  view.setUint32(7, points.length, true);
  points.forEach((p, i) => {
    view.setFloat32(11 + 12 * i, p[0], true);
    view.setFloat32(15 + 12 * i, p[1], true);
    view.setFloat32(19 + 12 * i, p[2], true);
  });
  return buffer;
}

interface FakeState {
  submissions: { sceneId: string; clicks: ClickSubmission[]; elapsedS: number }[];
  scenesServed: number;
  trainingOutcome: "pass" | "fail";
  failNextSubmit: boolean;
}

function fakeApi(state: FakeState): ServerApi {
  let trainingDone = 0;
  return {
    async createSession(): Promise<any> {
      return { token: "tok", state: "in_training", category: "car", training_scenes: 5, batch_size: 20 };
    },
    async nextScene(): Promise<SceneInfo> {
      const phase = trainingDone < 5 ? "training" : "annotation";
      const id = `${phase}-${state.scenesServed++}`;
      return { scene_id: id, phase, category: "car", payload_url: `/scene/${id}/payload` };
    },
    async fetchPayload(): Promise<ArrayBuffer> {
      return scenePayload([
        [0.1, 0.2, 10.0],
        [1.0, -0.5, 12.0],
      ]);
    },
    async submitClicks(_t, sceneId, clicks, elapsedS): Promise<SubmitResult> {
      if (state.failNextSubmit) {
        state.failNextSubmit = false;
        throw new Error("network down");
      }
      state.submissions.push({ sceneId, clicks, elapsedS });
      if (sceneId.startsWith("training")) {
        trainingDone++;
        const finished = trainingDone >= 5;
        return {
          phase: "training",
          scene_passed: state.trainingOutcome === "pass",
          state: finished && state.trainingOutcome === "pass" ? "annotating" : "in_training",
          scenes_completed: trainingDone % 5,
        };
      }
      return { phase: "annotation", state: "annotating", batch_progress: 1, batch_size: 21 };
    },
    async review(): Promise<ReviewPayload> {
      return { scenes: [], scenes_completed: trainingDone, state: "in_training" };
    },
  };
}

function newFlow(state: FakeState, clock: { now: number }) {
  return new SessionFlow(fakeApi(state), () => clock.now);
}

function freshState(): FakeState {
  return { submissions: [], scenesServed: 0, trainingOutcome: "pass", failNextSubmit: false };
}

describe("SessionFlow", () => {
  it("transitions to annotation after a passing training sequence", async () => {
    const state = freshState();
    const clock = { now: 0 };
    const flow = newFlow(state, clock);
    await flow.start("ann", "car");
    expect(flow.state).toBe("in_training");
    for (let i = 0; i < 5; i++) {
      await flow.loadNextScene();
      flow.markRendered();
      clock.now += 4000;
      flow.addClick({ pointIndex: 0, position: [0.1, 0.2, 10.0], placedAtMs: clock.now });
      await flow.submit();
    }
    expect(flow.state).toBe("annotating");
    const scene = await flow.loadNextScene();
    expect(scene.phase).toBe("annotation");
    expect(flow.reviewAvailable).toBe(false); // review is a training-only affordance
  });

  it("submits the exact first-render-to-submit elapsed time", async () => {
    const state = freshState();
    const clock = { now: 1000 };
    const flow = newFlow(state, clock);
    await flow.start("ann", "car");
    await flow.loadNextScene();
    clock.now = 2500;
    flow.markRendered(); // timer starts here
    clock.now = 3000;
    flow.markRendered(); // later renders do not restart it
    clock.now = 14575;
    await flow.submit();
    const elapsed = state.submissions[0].elapsedS;
    expect(Math.abs(elapsed - (14575 - 2500) / 1000)).toBeLessThanOrEqual(0.05);
    expect(elapsed).toBe(12.075); // with an injected clock it is exact
  });

  it("undo removes the most recent pending click", async () => {
    const state = freshState();
    const clock = { now: 0 };
    const flow = newFlow(state, clock);
    await flow.start("ann", "car");
    await flow.loadNextScene();
    flow.markRendered();
    flow.addClick({ pointIndex: 0, position: [0.1, 0.2, 10.0], placedAtMs: 1 });
    flow.addClick({ pointIndex: 1, position: [1.0, -0.5, 12.0], placedAtMs: 2 });
    flow.undo();
    expect(flow.pendingClicks.length).toBe(1);
    expect(flow.pendingClicks[0].pointIndex).toBe(0);
    await flow.submit();
    expect(state.submissions[0].clicks.length).toBe(1);
  });

  it("keeps the click buffer across a failed submission and retries", async () => {
    const state = freshState();
    state.failNextSubmit = true;
    const clock = { now: 0 };
    const flow = newFlow(state, clock);
    await flow.start("ann", "car");
    await flow.loadNextScene();
    flow.markRendered();
    flow.addClick({ pointIndex: 0, position: [0.1, 0.2, 10.0], placedAtMs: 5 });
    await expect(flow.submit()).rejects.toThrow(/network/);
    expect(flow.pendingClicks.length).toBe(1); // preserved locally
    await flow.submit(); // retry succeeds with the same buffer
    expect(state.submissions.length).toBe(1);
    expect(state.submissions[0].clicks.length).toBe(1);
  });

  it("submits click positions bitwise equal to cloud points", async () => {
    const state = freshState();
    const clock = { now: 0 };
    const flow = newFlow(state, clock);
    await flow.start("ann", "car");
    await flow.loadNextScene();
    flow.markRendered();
    const cloud = flow.cloud!;
    for (let i = 0; i < cloud.count; i++) {
      flow.addClick({ pointIndex: i, position: pointAt(cloud, i), placedAtMs: i });
    }
    const expected = [pointAt(cloud, 0), pointAt(cloud, 1)];
    await flow.submit();
    state.submissions[0].clicks.forEach((c, i) => {
      expect(Object.is(c.x, expected[i][0])).toBe(true);
      expect(Object.is(c.y, expected[i][1])).toBe(true);
      expect(Object.is(c.z, expected[i][2])).toBe(true);
    });
  });

  it("requires a rendered scene before submitting", async () => {
    const state = freshState();
    const flow = newFlow(state, { now: 0 });
    await flow.start("ann", "car");
    await flow.loadNextScene();
    await expect(flow.submit()).rejects.toThrow(/rendered/);
  });
});
