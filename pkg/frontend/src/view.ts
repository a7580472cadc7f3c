// DOM rendering. The view shows only the service's left/right presentation;
// canonical pair order stays server-side.

import type { ApiClient } from "./api.js";
import type { SessionController } from "./controller.js";
import { SCORE_MAX, SCORE_MIN, canSubmit, interactionEnabled, type SessionState } from "./state.js";

/** Build the DOM, wire events to the controller, and return the render
 * callback the controller should invoke after every state change. */
export function mount(
  root: HTMLElement,
  controller: SessionController,
  api: ApiClient,
): (state: SessionState) => void {
  root.innerHTML = `
    <main class="app">
      <section data-view="enter-id" hidden>
        <h1>Layout preference study</h1>
        <p>Pick an identifier so your progress can resume later.</p>
        <form data-role="id-form">
          <input data-role="id-input" type="text" placeholder="participant id" autocomplete="off" />
          <button type="submit">Start</button>
        </form>
      </section>
      <section data-view="task" hidden>
        <h1>Which layout do you prefer?</h1>
        <div class="pair">
          <figure data-side="left" tabindex="0">
            <img data-role="img-left" alt="Left layout" />
            <figcaption>Left</figcaption>
          </figure>
          <figure data-side="right" tabindex="0">
            <img data-role="img-right" alt="Right layout" />
            <figcaption>Right</figcaption>
          </figure>
        </div>
        <label class="score">
          Preference strength (0 = none, 5 = strongest)
          <input data-role="score" type="range" min="${SCORE_MIN}" max="${SCORE_MAX}" step="1" value="0" />
          <output data-role="score-value">0</output>
        </label>
        <button data-role="submit" disabled>Submit</button>
        <p data-role="hint" class="hint" hidden></p>
      </section>
      <section data-view="done" hidden>
        <h1>All pairs annotated. Thank you!</h1>
        <p data-role="done-text"></p>
      </section>
      <section data-view="error" hidden>
        <h1>Something went wrong</h1>
        <p data-role="error-text"></p>
        <button data-role="retry">Retry</button>
      </section>
    </main>`;

  const q = <T extends HTMLElement>(sel: string): T => {
    const el = root.querySelector(sel);
    if (!el) throw new Error(`missing element ${sel}`);
    return el as T;
  };

  const views: Record<string, HTMLElement> = {
    "enter-id": q('[data-view="enter-id"]'),
    task: q('[data-view="task"]'),
    done: q('[data-view="done"]'),
    error: q('[data-view="error"]'),
  };
  const idForm = q<HTMLFormElement>('[data-role="id-form"]');
  const idInput = q<HTMLInputElement>('[data-role="id-input"]');
  const imgLeft = q<HTMLImageElement>('[data-role="img-left"]');
  const imgRight = q<HTMLImageElement>('[data-role="img-right"]');
  const figLeft = q<HTMLElement>('[data-side="left"]');
  const figRight = q<HTMLElement>('[data-side="right"]');
  const scoreInput = q<HTMLInputElement>('[data-role="score"]');
  const scoreValue = q<HTMLOutputElement>('[data-role="score-value"]');
  const submitBtn = q<HTMLButtonElement>('[data-role="submit"]');
  const hint = q<HTMLElement>('[data-role="hint"]');

  idForm.addEventListener("submit", (ev) => {
    ev.preventDefault();
    void controller.enterParticipant(idInput.value);
  });
  imgLeft.addEventListener("load", () => controller.noteImageLoaded());
  imgRight.addEventListener("load", () => controller.noteImageLoaded());
  figLeft.addEventListener("click", () => controller.select("left"));
  figRight.addEventListener("click", () => controller.select("right"));
  scoreInput.addEventListener("input", () => controller.setScore(Number(scoreInput.value)));
  submitBtn.addEventListener("click", () => void controller.submit());
  q<HTMLButtonElement>('[data-role="retry"]').addEventListener("click", () => void controller.fetchNextTask());

  // keyboard: arrows select, digits 0-5 set the score, Enter submits
  root.ownerDocument.addEventListener("keydown", (ev) => {
    if (controller.state.phase !== "viewing") return;
    if (ev.key === "ArrowLeft") controller.select("left");
    else if (ev.key === "ArrowRight") controller.select("right");
    else if (ev.key >= "0" && ev.key <= "5") controller.setScore(Number(ev.key));
    else if (ev.key === "Enter") void controller.submit();
  });

  let lastTaskId: string | null = null;

  const render = (state: SessionState): void => {
    const active =
      state.phase === "enter-id" ? "enter-id" : state.phase === "done" ? "done" : state.phase === "error" ? "error" : "task";
    for (const [name, el] of Object.entries(views)) {
      el.hidden = name !== active;
    }
    if (state.task && state.task.task_id !== lastTaskId) {
      lastTaskId = state.task.task_id;
      imgLeft.src = api.imageUrl(state.task.images[0]);
      imgRight.src = api.imageUrl(state.task.images[1]);
    }
    figLeft.classList.toggle("selected", state.selection === "left");
    figRight.classList.toggle("selected", state.selection === "right");
    const ready = interactionEnabled(state);
    scoreInput.disabled = !ready;
    scoreInput.value = String(state.score);
    scoreValue.value = String(state.score);
    submitBtn.disabled = !canSubmit(state) || state.phase === "submitting";
    submitBtn.textContent = state.phase === "submitting" ? "Submitting…" : "Submit";
    hint.hidden = !state.message;
    hint.textContent = state.message ?? "";
    if (state.phase === "done") {
      q('[data-role="done-text"]').textContent =
        `${state.finalVoteCount ?? state.votesThisSession} votes recorded under your id.`;
    }
    if (state.phase === "error") {
      q('[data-role="error-text"]').textContent = state.message ?? "Unknown error.";
    }
  };

  render(controller.state);
  return render;
}
