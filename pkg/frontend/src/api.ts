/**
 * Typed client for the listening-session HTTP API.
 *
 * The server is the only backend this client talks to. Every JSON payload
 * that reaches the client flows through `onPayload`, so callers (and
 * tests) can observe exactly what the listener-facing side ever sees.
 */

export interface Progress {
  stage: string;
  completed: number;
  total: number;
}

export interface StimulusHandle {
  id: string;
  url: string;
}

export interface ActiveTrial {
  stage: string;
  trial_id: string;
  kind: 'pair' | 'multi';
  track_id: string;
  stimuli: StimulusHandle[];
  progress: Progress;
}

export interface DoneView {
  stage: 'done';
  progress: Progress;
  best_ranked_id: string | null;
}

export type TrialResponse = ActiveTrial | DoneView;

export interface SessionSummary {
  stage: string;
  progress: Progress;
  best_ranked_id?: string | null;
}

export interface CreatedSession {
  token: string;
  stage: string;
  progress: Progress;
}

export interface SubmitOutcome {
  stage: string;
  progress: Progress;
  /** False when the rating was recovered as already-applied after a retry. */
  direct: boolean;
}

export type RatingBody =
  | { trial_id: string; rating: number }
  | { trial_id: string; ratings: number[] };

export function isDone(trial: TrialResponse): trial is DoneView {
  return trial.stage === 'done';
}

/** The slice of the API the session screens depend on. */
export interface SessionApi {
  createSession(idempotencyKey?: string): Promise<CreatedSession>;
  trial(token: string): Promise<TrialResponse>;
  stimulus(handle: StimulusHandle): Promise<ArrayBuffer>;
  submitRating(token: string, body: RatingBody): Promise<SubmitOutcome>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

const SUBMIT_ATTEMPTS = 5;
const RETRY_DELAY_MS = 250;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
    /** Observes every JSON payload the client receives. */
    public onPayload: (payload: unknown) => void = () => {},
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json();
    this.onPayload(body);
    if (!response.ok) {
      const detail =
        typeof body === 'object' && body !== null && 'detail' in body
          ? JSON.stringify((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  createSession(idempotencyKey?: string): Promise<CreatedSession> {
    const body: Record<string, string> = {};
    if (idempotencyKey !== undefined) body.idempotency_key = idempotencyKey;
    return this.json('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  summary(token: string): Promise<SessionSummary> {
    return this.json(`/sessions/${token}`);
  }

  trial(token: string): Promise<TrialResponse> {
    return this.json(`/sessions/${token}/trial`);
  }

  async stimulus(handle: StimulusHandle): Promise<ArrayBuffer> {
    const response = await this.fetchImpl(this.baseUrl + handle.url);
    if (!response.ok) {
      throw new ApiError(response.status, `stimulus ${handle.id} unavailable`);
    }
    return response.arrayBuffer();
  }

  /**
   * Submit one rating, retrying across network failures.
   *
   * Resubmission is idempotent by construction: the server keys every
   * submission on the pending trial id, so a duplicate of a rating that
   * already landed conflicts instead of double-applying. On any failure we
   * therefore re-read the trial — if the pending trial moved past the one
   * we rated, the first attempt landed and the retry loop is done.
   */
  async submitRating(token: string, body: RatingBody): Promise<SubmitOutcome> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt < SUBMIT_ATTEMPTS; attempt++) {
      if (attempt > 0) await sleep(RETRY_DELAY_MS * attempt);
      try {
        const summary = await this.json<{ stage: string; progress: Progress }>(
          `/sessions/${token}/ratings`,
          {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(body),
          },
        );
        return { stage: summary.stage, progress: summary.progress, direct: true };
      } catch (error) {
        lastError = error;
        if (error instanceof ApiError && error.status !== 409) throw error;
        const applied = await this.ratingAlreadyApplied(token, body.trial_id);
        if (applied) return { ...applied, direct: false };
        if (error instanceof ApiError) throw error; // a real conflict, not ours
      }
    }
    throw lastError instanceof Error
      ? lastError
      : new Error('rating submission failed');
  }

  private async ratingAlreadyApplied(
    token: string,
    trialId: string,
  ): Promise<{ stage: string; progress: Progress } | null> {
    let trial: TrialResponse;
    try {
      trial = await this.trial(token);
    } catch {
      return null; // can't tell; let the caller retry the submission
    }
    if (isDone(trial) || trial.trial_id !== trialId) {
      return { stage: trial.stage, progress: trial.progress };
    }
    return null;
  }
}
