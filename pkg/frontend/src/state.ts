/**
 * Trial view-model and the session state machine.
 *
 * One submission is in flight at a time and the UI is never optimistic:
 * a rating only counts once the server confirmed it (directly or via the
 * retry path in the API client). The view-model never carries curve
 * gains, member identities, or reference/anchor labels — only what the
 * server's listener-facing payloads contain.
 */

import {
  ActiveTrial,
  Progress,
  RatingBody,
  SessionApi,
  TrialResponse,
  isDone,
} from './api.js';
import { StimulusPlayer } from './audio.js';

export interface SliderState {
  value: number;
  /** Becomes true on the first user adjustment. */
  touched: boolean;
}

export const PAIR_ANCHORS = ['A is better', 'Same', 'B is better'] as const;
export const EVALUATION_ANCHORS = ['Bad', 'Poor', 'Fair', 'Good', 'Excellent'] as const;
export const EVALUATION_RANGE = { min: 1, max: 5 } as const;

export interface TrialView {
  stage: string;
  trialId: string;
  kind: 'pair' | 'multi';
  trackId: string;
  stimuli: string[];
  /** One slider for pair trials, one per stimulus for evaluation trials. */
  sliders: SliderState[];
  progress: Progress;
}

/** Fresh sliders: bipolar at the midpoint, evaluation at mid-scale, untouched. */
export function buildTrialView(trial: ActiveTrial): TrialView {
  const sliderCount = trial.kind === 'pair' ? 1 : trial.stimuli.length;
  const midpoint =
    trial.kind === 'pair' ? 0 : (EVALUATION_RANGE.min + EVALUATION_RANGE.max) / 2;
  return {
    stage: trial.stage,
    trialId: trial.trial_id,
    kind: trial.kind,
    trackId: trial.track_id,
    stimuli: trial.stimuli.map((s) => s.id),
    sliders: Array.from({ length: sliderCount }, () => ({
      value: midpoint,
      touched: false,
    })),
    progress: trial.progress,
  };
}

/**
 * Submission gate: every stimulus must have been auditioned, and on
 * evaluation screens every slider must have been set. An untouched
 * bipolar slider is a deliberate "Same" (0), so it does not block.
 */
/** Listener-facing explanation of why submission is still blocked. */
export function gateReason(
  view: TrialView,
  auditioned: ReadonlySet<string>,
): string | null {
  if (!view.stimuli.every((id) => auditioned.has(id))) {
    return 'Play every stimulus before rating.';
  }
  if (view.kind === 'multi' && view.sliders.some((s) => !s.touched)) {
    return 'Set every slider to continue.';
  }
  return null;
}

export function canSubmit(view: TrialView, auditioned: ReadonlySet<string>): boolean {
  return gateReason(view, auditioned) === null;
}

export function ratingBody(view: TrialView): RatingBody {
  if (view.kind === 'pair') {
    return { trial_id: view.trialId, rating: view.sliders[0]!.value };
  }
  return { trial_id: view.trialId, ratings: view.sliders.map((s) => s.value) };
}

export function progressPercent(progress: Progress): number {
  if (progress.total <= 0) return 0;
  return Math.round((100 * progress.completed) / progress.total);
}

export type Screen =
  | { state: 'idle' }
  | { state: 'loading' }
  | { state: 'trial'; view: TrialView }
  | { state: 'done'; progress: Progress }
  | { state: 'error'; message: string };

export class SessionController {
  private screen: Screen = { state: 'idle' };
  private token: string | null = null;
  private submitting = false;
  private listeners: (() => void)[] = [];
  private pending: Promise<void> = Promise.resolve();

  constructor(
    private readonly api: SessionApi,
    readonly player: StimulusPlayer,
  ) {}

  get current(): Screen {
    return this.screen;
  }

  get sessionToken(): string | null {
    return this.token;
  }

  get isSubmitting(): boolean {
    return this.submitting;
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  /** Resolves once every queued operation has finished. */
  settled(): Promise<void> {
    return this.pending;
  }

  /** Create a session, or resume one when a token is supplied. */
  start(existingToken?: string): Promise<void> {
    return this.enqueue(async () => {
      this.setScreen({ state: 'loading' });
      if (existingToken) {
        this.token = existingToken;
      } else {
        const created = await this.api.createSession(crypto.randomUUID());
        this.token = created.token;
      }
      await this.loadTrial();
    });
  }

  /** Re-fetch the pending trial; any unsent slider values are discarded. */
  reload(): Promise<void> {
    return this.enqueue(() => this.loadTrial());
  }

  setSlider(index: number, value: number): void {
    if (this.screen.state !== 'trial') return;
    const slider = this.screen.view.sliders[index];
    if (!slider) return;
    slider.value = value;
    slider.touched = true;
    this.notify();
  }

  /** Make one stimulus audible (starting playback if necessary). */
  audition(stimulusId: string): void {
    if (this.screen.state !== 'trial') return;
    if (!this.player.isPlaying) {
      this.player.switchTo(stimulusId);
      this.player.play();
    } else {
      this.player.switchTo(stimulusId);
    }
    this.notify();
  }

  pausePlayback(): void {
    this.player.pause();
    this.notify();
  }

  submit(): Promise<void> {
    return this.enqueue(async () => {
      if (this.screen.state !== 'trial' || this.submitting) return;
      const view = this.screen.view;
      if (!canSubmit(view, this.player.auditioned)) return;
      this.submitting = true;
      this.notify();
      try {
        if (!this.token) throw new Error('no session');
        await this.api.submitRating(this.token, ratingBody(view));
        this.player.stop();
        await this.loadTrial();
      } finally {
        this.submitting = false;
        this.notify();
      }
    });
  }

  private async loadTrial(): Promise<void> {
    if (!this.token) throw new Error('no session');
    const trial: TrialResponse = await this.api.trial(this.token);
    if (isDone(trial)) {
      this.setScreen({ state: 'done', progress: trial.progress });
      return;
    }
    const buffers = await Promise.all(
      trial.stimuli.map(async (handle) => ({
        id: handle.id,
        data: await this.api.stimulus(handle),
      })),
    );
    await this.player.load(buffers);
    this.setScreen({ state: 'trial', view: buildTrialView(trial) });
  }

  private enqueue(task: () => Promise<void>): Promise<void> {
    const run = this.pending.then(task).catch((error) => {
      this.setScreen({
        state: 'error',
        message: error instanceof Error ? error.message : String(error),
      });
    });
    this.pending = run;
    return run;
  }

  private setScreen(screen: Screen): void {
    this.screen = screen;
    this.notify();
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }
}
