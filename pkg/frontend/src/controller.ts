// Controller: owns the API client and the state, exposes user intents, and
// notifies a render callback after every transition. Submission blocks until
// the server acks, so votes are ordered and double-clicks cannot fork.

import { ApiClient, ApiError, isDone, type Side } from "./api.js";
import * as s from "./state.js";

export type RenderFn = (state: s.SessionState) => void;

const STORAGE_KEY = "layoutpref.participant";

export class SessionController {
  state: s.SessionState;

  constructor(
    private readonly api: ApiClient,
    private readonly render: RenderFn,
    private readonly storage: Pick<Storage, "getItem" | "setItem"> | null = null,
  ) {
    const saved = storage?.getItem(STORAGE_KEY) ?? null;
    this.state = s.initialState(saved);
  }

  private update(next: s.SessionState): void {
    this.state = next;
    this.render(this.state);
  }

  async start(): Promise<void> {
    this.render(this.state);
    if (this.state.participantId) {
      await this.fetchNextTask();
    }
  }

  async enterParticipant(id: string): Promise<void> {
    const next = s.setParticipant(this.state, id);
    this.update(next);
    if (next.participantId) {
      this.storage?.setItem(STORAGE_KEY, next.participantId);
      await this.fetchNextTask();
    }
  }

  async fetchNextTask(): Promise<void> {
    try {
      const doc = await this.api.nextTask(this.state.participantId ?? "");
      if (isDone(doc)) {
        this.update(s.allDone(this.state, doc.votes));
      } else {
        this.update(s.taskLoaded(this.state, doc));
      }
    } catch (err) {
      this.update(s.loadFailed(this.state, describe(err)));
    }
  }

  noteImageLoaded(): void {
    this.update(s.imageLoaded(this.state));
  }

  select(side: Side): void {
    this.update(s.select(this.state, side));
  }

  setScore(score: number): void {
    this.update(s.setScore(this.state, score));
  }

  async submit(): Promise<void> {
    if (this.state.phase === "submitting") {
      return; // one in-flight submission at a time
    }
    const task = this.state.task;
    const selection = this.state.selection;
    const started = s.submitStarted(this.state);
    this.update(started);
    if (started.phase !== "submitting" || !task || !selection) {
      return;
    }
    try {
      await this.api.submitVote(task.task_id, selection, this.state.score, this.state.participantId ?? "");
      this.update(s.submitSucceeded(this.state));
      await this.fetchNextTask();
    } catch (err) {
      const permanent = err instanceof ApiError && err.status >= 400 && err.status < 500;
      this.update(s.submitFailed(this.state, describe(err), permanent));
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `Request failed (${err.status}): ${err.message}`;
  }
  return err instanceof Error ? `Network problem: ${err.message}. Your selection is kept; try again.` : String(err);
}
