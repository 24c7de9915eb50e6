/** Typed client for the annotation backend. This module is the only
 * place the UI talks to the network; everything else works on the
 * returned values. */

export interface TaskDescription {
  slot: number;
  text: string;
}

export interface TaskView {
  video_id: string;
  video_url: string;
  duration_seconds: number;
  descriptions: TaskDescription[];
  is_qualification: boolean;
  completed: number;
  total: number;
  instructions_url: string;
}

export interface SubmitResult {
  accepted: boolean;
  is_qualification: boolean;
  qualification_passed: boolean | null;
  flagged_fast: boolean;
}

export interface Progress {
  rater_id: string;
  qualified: boolean;
  completed: number;
  total: number;
  flagged_fast: boolean;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly errorName: string,
    detail: string,
  ) {
    super(`${errorName}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let name = `HTTP${response.status}`;
  let detail = "";
  try {
    const body = await response.json();
    if (body && typeof body.detail === "object" && body.detail?.error) {
      name = body.detail.error;
      detail = body.detail.detail ?? "";
    } else {
      detail = JSON.stringify(body);
    }
  } catch {
    detail = await response.text().catch(() => "");
  }
  return new ApiError(response.status, name, detail);
}

export class AnnotationApi {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  async createSession(raterId: string): Promise<{ token: string; qualified: boolean }> {
    return this.request("/api/annotation/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ rater_id: raterId }),
    });
  }

  async nextTask(token: string): Promise<TaskView> {
    return this.request(`/api/annotation/tasks/next?token=${encodeURIComponent(token)}`);
  }

  async previousTask(token: string): Promise<TaskView> {
    return this.request(`/api/annotation/tasks/previous?token=${encodeURIComponent(token)}`);
  }

  async skip(token: string, videoId: string): Promise<void> {
    await this.request("/api/annotation/tasks/skip", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ token, video_id: videoId }),
    });
  }

  async submitRanking(
    token: string,
    videoId: string,
    order: number[],
    durationSeconds: number,
    activeDurationSeconds: number,
  ): Promise<SubmitResult> {
    return this.request("/api/annotation/rankings", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        token,
        video_id: videoId,
        order,
        duration_seconds: durationSeconds,
        active_duration_seconds: activeDurationSeconds,
      }),
    });
  }

  async progress(token: string): Promise<Progress> {
    return this.request(`/api/annotation/progress?token=${encodeURIComponent(token)}`);
  }

  async instructions(): Promise<string> {
    const response = await fetch(this.baseUrl + "/api/annotation/instructions");
    if (!response.ok) {
      throw await parseError(response);
    }
    return response.text();
  }
}
