import { describe, expect, it } from 'vitest';

import {
  ActiveTrial,
  CreatedSession,
  RatingBody,
  SessionApi,
  StimulusHandle,
  SubmitOutcome,
  TrialResponse,
} from '../src/api.js';
import { StimulusPlayer } from '../src/audio.js';
import {
  SessionController,
  buildTrialView,
  canSubmit,
  gateReason,
  progressPercent,
  ratingBody,
} from '../src/state.js';
import { FakeAudioContext, toneWav } from './helpers/fake-audio.js';

function pairTrial(n: number, completed: number, total = 12): ActiveTrial {
  return {
    stage: 'comparison',
    trial_id: `c${n}`,
    kind: 'pair',
    track_id: 't0',
    stimuli: [
      { id: `c${n}-a`, url: `/stim/c${n}-a` },
      { id: `c${n}-b`, url: `/stim/c${n}-b` },
    ],
    progress: { stage: 'comparison', completed, total },
  };
}

function evalTrial(n: number, completed: number, total = 12): ActiveTrial {
  return {
    stage: 'evaluation',
    trial_id: `e${n}`,
    kind: 'multi',
    track_id: 't0',
    stimuli: Array.from({ length: 6 }, (_, i) => ({
      id: `e${n}-s${i}`,
      url: `/stim/e${n}-s${i}`,
    })),
    progress: { stage: 'evaluation', completed, total },
  };
}

/** Scripted backend: a queue of trials, consumed by accepted submissions. */
class FakeApi implements SessionApi {
  submissions: RatingBody[] = [];
  private cursor = 0;

  constructor(private readonly trials: TrialResponse[]) {}

  createSession(): Promise<CreatedSession> {
    return Promise.resolve({
      token: 'tok',
      stage: 'comparison',
      progress: { stage: 'comparison', completed: 0, total: 12 },
    });
  }

  trial(): Promise<TrialResponse> {
    return Promise.resolve(this.trials[this.cursor]!);
  }

  stimulus(handle: StimulusHandle): Promise<ArrayBuffer> {
    return Promise.resolve(toneWav(0.5, 200 + 10 * handle.id.length));
  }

  submitRating(_token: string, body: RatingBody): Promise<SubmitOutcome> {
    this.submissions.push(body);
    this.cursor += 1;
    const next = this.trials[this.cursor]!;
    return Promise.resolve({ stage: next.stage, progress: next.progress, direct: true });
  }
}

function controllerWith(trials: TrialResponse[]) {
  const api = new FakeApi(trials);
  const context = new FakeAudioContext();
  const controller = new SessionController(api, new StimulusPlayer(context));
  return { api, context, controller };
}

describe('trial view construction', () => {
  it('starts the bipolar slider at the midpoint, untouched', () => {
    const view = buildTrialView(pairTrial(1, 0));
    expect(view.sliders).toHaveLength(1);
    expect(view.sliders[0]).toEqual({ value: 0, touched: false });
  });

  it('gives evaluation screens one mid-scale slider per stimulus', () => {
    const view = buildTrialView(evalTrial(1, 10));
    expect(view.sliders).toHaveLength(6);
    for (const slider of view.sliders) {
      expect(slider).toEqual({ value: 3, touched: false });
    }
  });
});

describe('submission gating', () => {
  it('blocks a pair until both stimuli have been auditioned', () => {
    const view = buildTrialView(pairTrial(1, 0));
    expect(canSubmit(view, new Set())).toBe(false);
    expect(canSubmit(view, new Set(['c1-a']))).toBe(false);
    expect(canSubmit(view, new Set(['c1-a', 'c1-b']))).toBe(true);
  });

  it('does not require touching the bipolar slider (untouched means Same)', () => {
    const view = buildTrialView(pairTrial(1, 0));
    const heard = new Set(['c1-a', 'c1-b']);
    expect(view.sliders[0]!.touched).toBe(false);
    expect(canSubmit(view, heard)).toBe(true);
    expect(ratingBody(view)).toEqual({ trial_id: 'c1', rating: 0 });
  });

  it('blocks an evaluation until every stimulus is heard and every slider set', () => {
    const view = buildTrialView(evalTrial(1, 10));
    const heard = new Set(view.stimuli);
    expect(canSubmit(view, heard)).toBe(false);
    view.sliders.forEach((slider) => {
      slider.touched = true;
    });
    expect(canSubmit(view, heard)).toBe(true);
    expect(canSubmit(view, new Set(view.stimuli.slice(1)))).toBe(false);
  });

  it('explains what is missing, listening first', () => {
    const view = buildTrialView(evalTrial(1, 10));
    expect(gateReason(view, new Set())).toBe('Play every stimulus before rating.');
    const heard = new Set(view.stimuli);
    expect(gateReason(view, heard)).toBe('Set every slider to continue.');
    view.sliders.forEach((slider) => {
      slider.touched = true;
    });
    expect(gateReason(view, heard)).toBeNull();
  });
});

describe('rating payloads', () => {
  it('posts the slider position, full left being -1', () => {
    const view = buildTrialView(pairTrial(2, 3));
    view.sliders[0]!.value = -1;
    view.sliders[0]!.touched = true;
    expect(ratingBody(view)).toEqual({ trial_id: 'c2', rating: -1 });
  });

  it('posts evaluation ratings in server stimulus order', () => {
    const view = buildTrialView(evalTrial(2, 10));
    view.sliders.forEach((slider, i) => {
      slider.value = 1 + (i % 5);
      slider.touched = true;
    });
    expect(ratingBody(view)).toEqual({
      trial_id: 'e2',
      ratings: [1, 2, 3, 4, 5, 1],
    });
  });
});

describe('progress display', () => {
  it('maps 12 of 40 trials to 30 percent', () => {
    expect(progressPercent({ stage: 'comparison', completed: 12, total: 40 })).toBe(30);
  });

  it('clamps empty sessions to zero', () => {
    expect(progressPercent({ stage: 'comparison', completed: 0, total: 0 })).toBe(0);
  });
});

describe('session controller', () => {
  it('loads the first trial after starting', async () => {
    const { controller } = controllerWith([pairTrial(1, 0)]);
    await controller.start();
    const screen = controller.current;
    expect(screen.state).toBe('trial');
    if (screen.state === 'trial') {
      expect(screen.view.trialId).toBe('c1');
      expect(screen.view.stimuli).toHaveLength(2);
    }
  });

  it('refuses to submit before the gate opens, then advances', async () => {
    const { api, controller } = controllerWith([
      pairTrial(1, 0),
      pairTrial(2, 1),
    ]);
    await controller.start();
    await controller.submit();
    expect(api.submissions).toHaveLength(0); // nothing auditioned yet

    const screen = controller.current;
    if (screen.state !== 'trial') throw new Error('expected a trial');
    controller.audition(screen.view.stimuli[0]!);
    controller.audition(screen.view.stimuli[1]!);
    controller.setSlider(0, 0.75);
    await controller.submit();
    expect(api.submissions).toEqual([{ trial_id: 'c1', rating: 0.75 }]);
    const after = controller.current;
    expect(after.state).toBe('trial');
    if (after.state === 'trial') expect(after.view.trialId).toBe('c2');
  });

  it('clears unsent slider values when the trial is re-fetched', async () => {
    const { controller } = controllerWith([pairTrial(1, 0)]);
    await controller.start();
    controller.setSlider(0, -0.9);
    await controller.reload();
    const screen = controller.current;
    if (screen.state !== 'trial') throw new Error('expected a trial');
    expect(screen.view.sliders[0]).toEqual({ value: 0, touched: false });
  });

  it('shows the completion screen when the server reports done', async () => {
    const { controller } = controllerWith([
      {
        stage: 'done',
        progress: { stage: 'done', completed: 12, total: 12 },
        best_ranked_id: 'm1',
      },
    ]);
    await controller.start();
    expect(controller.current).toEqual({
      state: 'done',
      progress: { stage: 'done', completed: 12, total: 12 },
    });
  });

  it('surfaces failures as an error screen and recovers on reload', async () => {
    const api = new FakeApi([pairTrial(1, 0)]);
    const failingOnce = {
      calls: 0,
      trial(): Promise<TrialResponse> {
        this.calls += 1;
        if (this.calls === 1) return Promise.reject(new Error('network down'));
        return api.trial();
      },
    };
    const wrapped: SessionApi = {
      createSession: () => api.createSession(),
      trial: () => failingOnce.trial(),
      stimulus: (handle) => api.stimulus(handle),
      submitRating: (token, body) => api.submitRating(token, body),
    };
    const controller = new SessionController(
      wrapped,
      new StimulusPlayer(new FakeAudioContext()),
    );
    await controller.start();
    expect(controller.current).toEqual({ state: 'error', message: 'network down' });
    await controller.reload();
    expect(controller.current.state).toBe('trial');
  });
});
