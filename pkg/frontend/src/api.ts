// Typed client for the explanation service's /ask and /feedback endpoints.

export interface AskResponse {
  trace_id: string;
  answer: string;
  class: string;
  k: number;
  snippets: string[];
}

export type YesNo = "yes" | "no";

export interface FeedbackPayload {
  trace_id: string;
  clear: YesNo;
  improved: YesNo;
  comment?: string;
}

/** status 0 means the backend was unreachable (network error). */
export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

async function postJson(url: string, body: unknown): Promise<Response> {
  try {
    return await fetch(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  } catch {
    throw new ApiError("The explanation service is unreachable.", 0);
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body.error) return body.error;
  } catch {
    // fall through to the generic message
  }
  return `Request failed with status ${response.status}.`;
}

export async function askQuestion(
  question: string,
  baseUrl = "",
): Promise<AskResponse> {
  const response = await postJson(`${baseUrl}/ask`, { question });
  if (!response.ok) {
    throw new ApiError(await errorDetail(response), response.status);
  }
  return (await response.json()) as AskResponse;
}

export async function submitFeedback(
  payload: FeedbackPayload,
  baseUrl = "",
): Promise<void> {
  const response = await postJson(`${baseUrl}/feedback`, payload);
  if (!response.ok) {
    throw new ApiError(await errorDetail(response), response.status);
  }
}
