// Chat transcript state and DOM wiring. One in-flight question at a time;
// each answered turn carries a one-shot feedback prompt.

import { ApiError, askQuestion, submitFeedback, YesNo } from "./api";

export type FeedbackState = "pending" | "submitted";

export interface ChatTurn {
  question: string;
  answer: string;
  questionClass: string;
  k: number;
  snippets: string[];
  traceId: string;
  feedbackState: FeedbackState;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ChatController {
  readonly turns: ChatTurn[] = [];
  busy = false;

  private transcript: HTMLElement;
  private banner: HTMLElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;
  private lastFailedQuestion: string | null = null;

  constructor(
    root: HTMLElement,
    private baseUrl = "",
  ) {
    this.banner = el("div", "error-banner");
    this.banner.hidden = true;
    this.transcript = el("div", "transcript");

    const form = el("form", "ask-form");
    this.input = el("input", "ask-input");
    this.input.placeholder = "Ask me how I work…";
    this.input.setAttribute("aria-label", "question");
    this.sendButton = el("button", "ask-send", "Send");
    this.sendButton.type = "submit";
    this.sendButton.disabled = true;
    form.append(this.input, this.sendButton);

    this.input.addEventListener("input", () => this.syncControls());
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });

    root.append(this.banner, this.transcript, form);
  }

  private syncControls(): void {
    this.sendButton.disabled = this.busy || this.input.value.trim() === "";
  }

  private showBanner(message: string, retry?: () => void): void {
    this.banner.replaceChildren(el("span", "error-text", message));
    if (retry) {
      const button = el("button", "error-retry", "Retry");
      button.type = "button";
      button.addEventListener("click", () => {
        this.hideBanner();
        retry();
      });
      this.banner.append(button);
    }
    this.banner.hidden = false;
  }

  private hideBanner(): void {
    this.banner.hidden = true;
    this.banner.replaceChildren();
  }

  async send(question?: string): Promise<void> {
    const text = (question ?? this.input.value).trim();
    if (text === "" || this.busy) return;
    this.busy = true;
    this.syncControls();
    this.hideBanner();
    try {
      const reply = await askQuestion(text, this.baseUrl);
      const turn: ChatTurn = {
        question: text,
        answer: reply.answer,
        questionClass: reply.class,
        k: reply.k,
        snippets: reply.snippets,
        traceId: reply.trace_id,
        feedbackState: "pending",
      };
      this.turns.push(turn);
      this.renderTurn(turn);
      this.input.value = "";
      this.lastFailedQuestion = null;
    } catch (error) {
      // The turn is not appended; the banner offers a retry of the same text.
      this.lastFailedQuestion = text;
      const message =
        error instanceof ApiError
          ? error.message
          : "Something went wrong talking to the service.";
      this.showBanner(message, () => void this.send(text));
    } finally {
      this.busy = false;
      this.syncControls();
    }
  }

  private renderTurn(turn: ChatTurn): void {
    const block = el("section", "turn");
    block.dataset.traceId = turn.traceId;

    block.append(el("div", "bubble question", turn.question));
    const answer = el("div", "bubble answer");
    answer.append(el("p", "answer-text", turn.answer));
    const trace = el(
      "p",
      "trace",
      `class: ${turn.questionClass} · k: ${turn.k}` +
        (turn.snippets.length ? ` · used: ${turn.snippets.join(", ")}` : ""),
    );
    answer.append(trace);
    block.append(answer);
    block.append(this.renderFeedback(turn));
    this.transcript.append(block);
  }

  private renderFeedback(turn: ChatTurn): HTMLElement {
    const box = el("div", "feedback");
    box.append(
      el(
        "p",
        "feedback-question",
        "Was this answer clear and easy to understand, and did it improve " +
          "your understanding of how I work?",
      ),
    );

    const clearChoice = yesNoChoice("clear", "Clear?");
    const improvedChoice = yesNoChoice("improved", "Improved understanding?");
    const comment = el("input", "feedback-comment");
    comment.placeholder = "Optional comment";
    const submit = el("button", "feedback-submit", "Send feedback");
    submit.type = "button";

    submit.addEventListener("click", () => {
      void this.submitTurnFeedback(
        turn,
        clearChoice.value(),
        improvedChoice.value(),
        comment.value.trim() || undefined,
      );
    });

    box.append(clearChoice.element, improvedChoice.element, comment, submit);
    return box;
  }

  async submitTurnFeedback(
    turn: ChatTurn,
    clear: YesNo,
    improved: YesNo,
    comment?: string,
  ): Promise<void> {
    if (turn.feedbackState !== "pending") return;
    try {
      await submitFeedback(
        { trace_id: turn.traceId, clear, improved, comment },
        this.baseUrl,
      );
      this.markSubmitted(turn);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // The server already has feedback for this turn; reflect that.
        this.markSubmitted(turn);
        return;
      }
      const message =
        error instanceof ApiError
          ? error.message
          : "Could not submit feedback.";
      this.showBanner(message);
    }
  }

  private markSubmitted(turn: ChatTurn): void {
    turn.feedbackState = "submitted";
    const block = this.transcript.querySelector<HTMLElement>(
      `[data-trace-id="${turn.traceId}"]`,
    );
    if (!block) return;
    for (const control of block.querySelectorAll("button, input, select")) {
      (control as HTMLButtonElement).disabled = true;
    }
    const note = el("p", "feedback-thanks", "Feedback recorded. Thank you!");
    block.querySelector(".feedback")?.append(note);
  }

  get retryPending(): boolean {
    return this.lastFailedQuestion !== null;
  }
}

function yesNoChoice(name: string, label: string) {
  const wrapper = el("label", `choice choice-${name}`, label + " ");
  const select = el("select");
  select.name = name;
  for (const option of ["yes", "no"] as const) {
    const node = el("option", undefined, option);
    node.value = option;
    select.append(node);
  }
  wrapper.append(select);
  return {
    element: wrapper,
    value: () => select.value as YesNo,
  };
}
