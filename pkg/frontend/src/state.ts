// Session state machine. Pure reducers so every transition is unit-testable;
// the controller owns all I/O.
//
// Guards encoded here rather than in the DOM layer:
//   - no submission without a selected side,
//   - score always an integer in [0, 5] (defaults to 0),
//   - at most one in-flight submission,
//   - selection only once both images have loaded.

import type { AnnotationTask, Side } from "./api.js";

export type Phase = "enter-id" | "loading" | "viewing" | "submitting" | "done" | "error";

export interface SessionState {
  participantId: string | null;
  phase: Phase;
  task: AnnotationTask | null;
  imagesLoaded: number; // 0..2 for the current task
  selection: Side | null;
  score: number;
  votesThisSession: number;
  finalVoteCount: number | null;
  message: string | null;
}

export const SCORE_MIN = 0;
export const SCORE_MAX = 5;

export function initialState(participantId: string | null = null): SessionState {
  return {
    participantId,
    phase: participantId ? "loading" : "enter-id",
    task: null,
    imagesLoaded: 0,
    selection: null,
    score: SCORE_MIN,
    votesThisSession: 0,
    finalVoteCount: null,
    message: null,
  };
}

export function setParticipant(state: SessionState, id: string): SessionState {
  const trimmed = id.trim();
  if (!trimmed) {
    return { ...state, message: "Enter a participant id to begin." };
  }
  return { ...initialState(trimmed) };
}

export function taskLoaded(state: SessionState, task: AnnotationTask): SessionState {
  return {
    ...state,
    phase: "viewing",
    task,
    imagesLoaded: 0,
    selection: null,
    score: SCORE_MIN,
    message: null,
  };
}

export function allDone(state: SessionState, serverVoteCount: number): SessionState {
  return { ...state, phase: "done", task: null, finalVoteCount: serverVoteCount, message: null };
}

export function imageLoaded(state: SessionState): SessionState {
  return { ...state, imagesLoaded: Math.min(2, state.imagesLoaded + 1) };
}

export function interactionEnabled(state: SessionState): boolean {
  return state.phase === "viewing" && state.imagesLoaded >= 2;
}

export function select(state: SessionState, side: Side): SessionState {
  if (!interactionEnabled(state)) {
    return state;
  }
  return { ...state, selection: side, message: null };
}

export function setScore(state: SessionState, score: number): SessionState {
  if (!interactionEnabled(state)) {
    return state;
  }
  if (!Number.isInteger(score) || score < SCORE_MIN || score > SCORE_MAX) {
    return state;
  }
  return { ...state, score };
}

export function canSubmit(state: SessionState): boolean {
  return interactionEnabled(state) && state.selection !== null;
}

export function submitStarted(state: SessionState): SessionState {
  if (!canSubmit(state)) {
    return { ...state, message: "Pick the layout you prefer first." };
  }
  return { ...state, phase: "submitting", message: null };
}

export function submitSucceeded(state: SessionState): SessionState {
  return {
    ...state,
    phase: "loading",
    task: null,
    imagesLoaded: 0,
    selection: null,
    score: SCORE_MIN,
    votesThisSession: state.votesThisSession + 1,
  };
}

export function submitFailed(state: SessionState, message: string, permanent: boolean): SessionState {
  // network hiccups keep the selection so the participant can retry;
  // permanent (4xx) failures surface the message without silent retries
  return {
    ...state,
    phase: permanent ? "error" : "viewing",
    message,
  };
}

export function loadFailed(state: SessionState, message: string): SessionState {
  return { ...state, phase: "error", message };
}
