// Typed client for the annotation service HTTP API.

export interface AnnotationTask {
  task_id: string;
  graph_id: string;
  pair: [number, number];
  presentation_order: string;
  /** [left, right] image URLs in presentation order. */
  images: [string, string];
}

export interface DoneSignal {
  done: true;
  votes: number;
}

export interface Progress {
  total_pairs: number;
  pairs_with_votes: number;
  votes_total: number;
  per_participant: Record<string, number>;
}

export type Side = "left" | "right";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson(resp: Response): Promise<unknown> {
  const body = await resp.text();
  let doc: unknown = null;
  try {
    doc = body ? JSON.parse(body) : null;
  } catch {
    doc = null;
  }
  if (!resp.ok) {
    const detail =
      doc && typeof doc === "object" && "error" in doc ? String((doc as { error: unknown }).error) : resp.statusText;
    throw new ApiError(resp.status, detail);
  }
  return doc;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  async nextTask(participant: string): Promise<AnnotationTask | DoneSignal> {
    const url = `${this.baseUrl}/api/task?participant=${encodeURIComponent(participant)}`;
    const doc = (await asJson(await fetch(url))) as AnnotationTask | DoneSignal;
    return doc;
  }

  async submitVote(taskId: string, side: Side, score: number, participant: string): Promise<number> {
    const resp = await fetch(`${this.baseUrl}/api/vote`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, side, score, participant }),
    });
    const doc = (await asJson(resp)) as { seq: number };
    return doc.seq;
  }

  async progress(): Promise<Progress> {
    return (await asJson(await fetch(`${this.baseUrl}/api/progress`))) as Progress;
  }

  imageUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }
}

export function isDone(doc: AnnotationTask | DoneSignal): doc is DoneSignal {
  return (doc as DoneSignal).done === true;
}
