import { describe, expect, it } from "vitest";

import type { AnnotationTask } from "../src/api.js";
import * as s from "../src/state.js";

const task: AnnotationTask = {
  task_id: "g0:0:1:JK",
  graph_id: "g0",
  pair: [0, 1],
  presentation_order: "JK",
  images: ["/api/image/g0/0.png", "/api/image/g0/1.png"],
};

function viewingState(): s.SessionState {
  let state = s.initialState("alice");
  state = s.taskLoaded(state, task);
  state = s.imageLoaded(state);
  state = s.imageLoaded(state);
  return state;
}

describe("session state machine", () => {
  it("starts at the id prompt without a stored participant", () => {
    expect(s.initialState(null).phase).toBe("enter-id");
    expect(s.initialState("bob").phase).toBe("loading");
  });

  it("rejects a blank participant id", () => {
    const state = s.setParticipant(s.initialState(null), "   ");
    expect(state.phase).toBe("enter-id");
    expect(state.message).toBeTruthy();
  });

  it("keeps interaction disabled until both images load", () => {
    let state = s.taskLoaded(s.initialState("alice"), task);
    expect(s.interactionEnabled(state)).toBe(false);
    expect(s.select(state, "left").selection).toBeNull();
    state = s.imageLoaded(state);
    expect(s.interactionEnabled(state)).toBe(false);
    state = s.imageLoaded(state);
    expect(s.interactionEnabled(state)).toBe(true);
    expect(s.select(state, "left").selection).toBe("left");
  });

  it("blocks submission without a selection", () => {
    const state = viewingState();
    expect(s.canSubmit(state)).toBe(false);
    const attempted = s.submitStarted(state);
    expect(attempted.phase).toBe("viewing");
    expect(attempted.message).toMatch(/pick/i);
  });

  it("clamps scores to integers in [0, 5]", () => {
    let state = viewingState();
    state = s.setScore(state, 4);
    expect(state.score).toBe(4);
    expect(s.setScore(state, 6).score).toBe(4);
    expect(s.setScore(state, -1).score).toBe(4);
    expect(s.setScore(state, 2.5).score).toBe(4);
    expect(s.initialState("x").score).toBe(0);
  });

  it("tracks a full submit cycle", () => {
    let state = viewingState();
    state = s.select(state, "right");
    state = s.setScore(state, 3);
    state = s.submitStarted(state);
    expect(state.phase).toBe("submitting");
    state = s.submitSucceeded(state);
    expect(state.phase).toBe("loading");
    expect(state.votesThisSession).toBe(1);
    expect(state.selection).toBeNull();
    expect(state.score).toBe(0);
  });

  it("keeps the selection after a transient failure", () => {
    let state = s.select(viewingState(), "left");
    state = s.submitStarted(state);
    state = s.submitFailed(state, "network down", false);
    expect(state.phase).toBe("viewing");
    expect(state.selection).toBe("left");
    expect(state.message).toMatch(/network/i);
  });

  it("goes to the error screen on a permanent failure", () => {
    let state = s.select(viewingState(), "left");
    state = s.submitStarted(state);
    state = s.submitFailed(state, "bad request", true);
    expect(state.phase).toBe("error");
  });

  it("reaches done with the server vote count", () => {
    const state = s.allDone(viewingState(), 17);
    expect(state.phase).toBe("done");
    expect(state.finalVoteCount).toBe(17);
  });
});
