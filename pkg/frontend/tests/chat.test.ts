// @vitest-environment jsdom
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ChatController } from "../src/chat";

const ASK_REPLY = {
  trace_id: "trace-1",
  answer: "I recommend classmates with shared interests.",
  class: "multimodel",
  k: 3,
  snippets: ["find-matches", "hobbies"],
};

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
});

afterEach(() => {
  vi.unstubAllGlobals();
});

function controllerWithFetch(fetchMock: ReturnType<typeof vi.fn>) {
  vi.stubGlobal("fetch", fetchMock);
  return new ChatController(root, "http://svc");
}

describe("sending questions", () => {
  it("appends a turn with answer, trace, and feedback prompt", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, ASK_REPLY));
    const controller = controllerWithFetch(fetchMock);

    const input = root.querySelector<HTMLInputElement>(".ask-input")!;
    input.value = "What does SAMI stand for?";
    input.dispatchEvent(new Event("input"));
    await controller.send();

    expect(controller.turns).toHaveLength(1);
    const turn = root.querySelector(".turn")!;
    expect(turn.querySelector(".question")!.textContent).toContain(
      "What does SAMI stand for?",
    );
    expect(turn.querySelector(".answer-text")!.textContent).toBe(ASK_REPLY.answer);
    const trace = turn.querySelector(".trace")!.textContent!;
    expect(trace).toContain("multimodel");
    expect(trace).toContain("k: 3");
    expect(trace).toContain("find-matches");
    expect(turn.querySelector(".feedback-submit")).not.toBeNull();
    expect(input.value).toBe("");
  });

  it("keeps send disabled for empty input", () => {
    controllerWithFetch(vi.fn());
    const input = root.querySelector<HTMLInputElement>(".ask-input")!;
    const send = root.querySelector<HTMLButtonElement>(".ask-send")!;
    expect(send.disabled).toBe(true);
    input.value = "   ";
    input.dispatchEvent(new Event("input"));
    expect(send.disabled).toBe(true);
    input.value = "A question";
    input.dispatchEvent(new Event("input"));
    expect(send.disabled).toBe(false);
  });

  it("disables send while a question is in flight", async () => {
    let release: (value: Response) => void;
    const gate = new Promise<Response>((resolve) => {
      release = resolve;
    });
    const fetchMock = vi.fn().mockReturnValue(gate);
    const controller = controllerWithFetch(fetchMock);
    const input = root.querySelector<HTMLInputElement>(".ask-input")!;
    const send = root.querySelector<HTMLButtonElement>(".ask-send")!;

    input.value = "Slow question?";
    input.dispatchEvent(new Event("input"));
    const pending = controller.send();
    expect(controller.busy).toBe(true);
    expect(send.disabled).toBe(true);
    release!(jsonResponse(200, ASK_REPLY));
    await pending;
    expect(controller.busy).toBe(false);
  });

  it("shows an error banner with retry when the backend is down", async () => {
    const fetchMock = vi
      .fn()
      .mockRejectedValueOnce(new TypeError("fetch failed"))
      .mockResolvedValueOnce(jsonResponse(200, ASK_REPLY));
    const controller = controllerWithFetch(fetchMock);

    await controller.send("Is anyone there?");
    expect(controller.turns).toHaveLength(0);
    const banner = root.querySelector<HTMLElement>(".error-banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("unreachable");

    banner.querySelector<HTMLButtonElement>(".error-retry")!.click();
    await vi.waitFor(() => expect(controller.turns).toHaveLength(1));
    expect(banner.hidden).toBe(true);
  });

  it("keeps turn order equal to send order", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValueOnce(jsonResponse(200, { ...ASK_REPLY, trace_id: "t-a" }))
      .mockResolvedValueOnce(jsonResponse(200, { ...ASK_REPLY, trace_id: "t-b" }));
    const controller = controllerWithFetch(fetchMock);
    await controller.send("First?");
    await controller.send("Second?");
    const questions = [...root.querySelectorAll(".question")].map(
      (node) => node.textContent,
    );
    expect(questions).toEqual(["First?", "Second?"]);
  });
});

describe("feedback", () => {
  async function controllerWithOneTurn(feedbackResponses: Response[]) {
    const fetchMock = vi.fn().mockResolvedValueOnce(jsonResponse(200, ASK_REPLY));
    for (const response of feedbackResponses) {
      fetchMock.mockResolvedValueOnce(response);
    }
    const controller = controllerWithFetch(fetchMock);
    await controller.send("What is a match?");
    return { controller, fetchMock };
  }

  it("submits once and disables the controls", async () => {
    const { controller, fetchMock } = await controllerWithOneTurn([
      jsonResponse(200, { accepted: true }),
    ]);
    const turn = controller.turns[0];
    await controller.submitTurnFeedback(turn, "yes", "yes", "nice");
    expect(turn.feedbackState).toBe("submitted");
    const body = JSON.parse(fetchMock.mock.calls[1][1].body as string);
    expect(body).toMatchObject({
      trace_id: "trace-1",
      clear: "yes",
      improved: "yes",
      comment: "nice",
    });
    const feedbackControls = root.querySelectorAll(
      ".feedback button, .feedback input, .feedback select",
    );
    for (const control of feedbackControls) {
      expect((control as HTMLButtonElement).disabled).toBe(true);
    }
    expect(root.querySelector(".feedback-thanks")).not.toBeNull();
  });

  it("second submission attempt sends no request", async () => {
    const { controller, fetchMock } = await controllerWithOneTurn([
      jsonResponse(200, { accepted: true }),
    ]);
    const turn = controller.turns[0];
    await controller.submitTurnFeedback(turn, "yes", "no");
    const calls = fetchMock.mock.calls.length;
    await controller.submitTurnFeedback(turn, "no", "no");
    expect(fetchMock.mock.calls.length).toBe(calls);
  });

  it("409 forces the submitted state", async () => {
    const { controller } = await controllerWithOneTurn([
      jsonResponse(409, { error: "already recorded" }),
    ]);
    const turn = controller.turns[0];
    await controller.submitTurnFeedback(turn, "yes", "yes");
    expect(turn.feedbackState).toBe("submitted");
    expect(root.querySelector<HTMLElement>(".error-banner")!.hidden).toBe(true);
  });

  it("404 shows a banner and stays pending", async () => {
    const { controller } = await controllerWithOneTurn([
      jsonResponse(404, { error: "unknown trace_id 'trace-1'" }),
    ]);
    const turn = controller.turns[0];
    await controller.submitTurnFeedback(turn, "yes", "yes");
    expect(turn.feedbackState).toBe("pending");
    const banner = root.querySelector<HTMLElement>(".error-banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("unknown trace_id");
  });

  it("clicking the feedback button drives the flow", async () => {
    const { controller } = await controllerWithOneTurn([
      jsonResponse(200, { accepted: true }),
    ]);
    root.querySelector<HTMLButtonElement>(".feedback-submit")!.click();
    await vi.waitFor(() =>
      expect(controller.turns[0].feedbackState).toBe("submitted"),
    );
  });
});
