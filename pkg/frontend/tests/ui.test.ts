// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from 'vitest';

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
import { SessionController } from '../src/state.js';
import { SessionUi } from '../src/ui.js';
import { FakeAudioContext, toneWav } from './helpers/fake-audio.js';

const FORBIDDEN_WORDS = [
  'curve',
  'gain',
  'reference',
  'anchor',
  'incumbent',
  'member',
  'challenger',
  'winner',
  'verdict',
  'population',
];

function pair(completed = 12, total = 40): ActiveTrial {
  return {
    stage: 'comparison',
    trial_id: 'c1',
    kind: 'pair',
    track_id: 't0',
    stimuli: [
      { id: 'sa', url: '/stim/sa' },
      { id: 'sb', url: '/stim/sb' },
    ],
    progress: { stage: 'comparison', completed, total },
  };
}

function evaluation(): ActiveTrial {
  return {
    stage: 'evaluation',
    trial_id: 'e1',
    kind: 'multi',
    track_id: 't0',
    stimuli: Array.from({ length: 6 }, (_, i) => ({
      id: `s${i}`,
      url: `/stim/s${i}`,
    })),
    progress: { stage: 'evaluation', completed: 40, total: 48 },
  };
}

class OneTrialApi implements SessionApi {
  submissions: RatingBody[] = [];

  constructor(private trials: TrialResponse[]) {}

  createSession(): Promise<CreatedSession> {
    return Promise.resolve({
      token: 'tok',
      stage: 'comparison',
      progress: { stage: 'comparison', completed: 0, total: 48 },
    });
  }

  trial(): Promise<TrialResponse> {
    return Promise.resolve(this.trials[Math.min(this.submissions.length, this.trials.length - 1)]!);
  }

  stimulus(handle: StimulusHandle): Promise<ArrayBuffer> {
    return Promise.resolve(toneWav(0.4, 180 + handle.id.length * 7));
  }

  submitRating(_token: string, body: RatingBody): Promise<SubmitOutcome> {
    this.submissions.push(body);
    const next = this.trials[Math.min(this.submissions.length, this.trials.length - 1)]!;
    return Promise.resolve({ stage: next.stage, progress: next.progress, direct: true });
  }
}

function mount(trials: TrialResponse[]) {
  const api = new OneTrialApi(trials);
  const context = new FakeAudioContext();
  const controller = new SessionController(api, new StimulusPlayer(context));
  const root = document.createElement('div');
  document.body.appendChild(root);
  new SessionUi(root, controller);
  return { api, context, controller, root };
}

function el<T extends HTMLElement>(root: HTMLElement, testId: string): T {
  const found = root.querySelector(`[data-testid="${testId}"]`);
  if (!found) throw new Error(`missing element ${testId}`);
  return found as T;
}

function setSlider(root: HTMLElement, index: number, value: number): void {
  const input = el<HTMLInputElement>(root, `slider-${index}`);
  input.value = String(value);
  input.dispatchEvent(new Event('input', { bubbles: true }));
}

beforeEach(() => {
  document.body.innerHTML = '';
});

describe('paired-comparison screen', () => {
  it('renders two play buttons, one midpoint slider with three anchors', async () => {
    const { controller, root } = mount([pair()]);
    await controller.start();
    expect(el(root, 'play-0').textContent).toBe('Play A');
    expect(el(root, 'play-1').textContent).toBe('Play B');
    const slider = el<HTMLInputElement>(root, 'slider-0');
    expect(slider.min).toBe('-1');
    expect(slider.max).toBe('1');
    expect(slider.value).toBe('0');
    const anchors = [...root.querySelectorAll('.anchors span')].map(
      (span) => span.textContent,
    );
    expect(anchors).toEqual(['A is better', 'Same', 'B is better']);
  });

  it('enables submission only after both stimuli were auditioned', async () => {
    const { api, controller, root } = mount([pair(), pair()]);
    await controller.start();
    const submit = el<HTMLButtonElement>(root, 'submit');
    expect(submit.disabled).toBe(true);
    submit.click();
    await controller.settled();
    expect(api.submissions).toHaveLength(0);

    el(root, 'play-0').click();
    expect(el<HTMLButtonElement>(root, 'submit').disabled).toBe(true);
    expect(el(root, 'gate-note').textContent).toBe('Play every stimulus before rating.');
    el(root, 'play-1').click();
    expect(el<HTMLButtonElement>(root, 'submit').disabled).toBe(false);
    expect(el(root, 'gate-note').textContent).toBe('');
  });

  it('submits 0 when the slider was never touched', async () => {
    const { api, controller, root } = mount([pair(), pair()]);
    await controller.start();
    el(root, 'play-0').click();
    el(root, 'play-1').click();
    el(root, 'submit').click();
    await controller.settled();
    expect(api.submissions).toEqual([{ trial_id: 'c1', rating: 0 }]);
  });

  it('submits the dragged slider position', async () => {
    const { api, controller, root } = mount([pair(), pair()]);
    await controller.start();
    el(root, 'play-0').click();
    el(root, 'play-1').click();
    setSlider(root, 0, -1);
    el(root, 'submit').click();
    await controller.settled();
    expect(api.submissions).toEqual([{ trial_id: 'c1', rating: -1 }]);
  });

  it('shows progress as a percentage bar', async () => {
    const { controller, root } = mount([pair(12, 40)]);
    await controller.start();
    expect(el(root, 'progress-bar').style.width).toBe('30%');
    expect(el(root, 'progress-label').textContent).toBe('12 / 40 trials');
  });
});

describe('evaluation screen', () => {
  it('renders six sliders with the five-point anchors', async () => {
    const { controller, root } = mount([evaluation()]);
    await controller.start();
    for (let i = 0; i < 6; i++) {
      const slider = el<HTMLInputElement>(root, `slider-${i}`);
      expect(slider.min).toBe('1');
      expect(slider.max).toBe('5');
      expect(slider.value).toBe('3');
    }
    const anchors = root.querySelectorAll('.anchors');
    expect(anchors).toHaveLength(6);
    expect([...anchors[0]!.querySelectorAll('span')].map((s) => s.textContent)).toEqual(
      ['Bad', 'Poor', 'Fair', 'Good', 'Excellent'],
    );
  });

  it('keeps submission blocked until every slider is set and all heard', async () => {
    const { api, controller, root } = mount([evaluation(), evaluation()]);
    await controller.start();
    for (let i = 0; i < 6; i++) el(root, `play-${i}`).click();
    expect(el<HTMLButtonElement>(root, 'submit').disabled).toBe(true);
    expect(el(root, 'gate-note').textContent).toBe('Set every slider to continue.');
    for (let i = 0; i < 5; i++) setSlider(root, i, 1 + i);
    expect(el<HTMLButtonElement>(root, 'submit').disabled).toBe(true);
    setSlider(root, 5, 5);
    expect(el<HTMLButtonElement>(root, 'submit').disabled).toBe(false);
    expect(el(root, 'gate-note').textContent).toBe('');
    el(root, 'submit').click();
    await controller.settled();
    expect(api.submissions).toEqual([
      { trial_id: 'e1', ratings: [1, 2, 3, 4, 5, 5] },
    ]);
  });
});

describe('listener-facing text', () => {
  it('never mentions what a stimulus is, on either screen kind', async () => {
    for (const trial of [pair(), evaluation()]) {
      const { controller, root } = mount([trial]);
      await controller.start();
      const text = (root.textContent ?? '').toLowerCase();
      for (const word of FORBIDDEN_WORDS) {
        expect(text).not.toContain(word);
      }
      root.remove();
    }
  });

  it('shows a completion screen when the session is done', async () => {
    const { controller, root } = mount([
      {
        stage: 'done',
        progress: { stage: 'done', completed: 48, total: 48 },
        best_ranked_id: 'm2',
      },
    ]);
    await controller.start();
    expect(el(root, 'completion').textContent).toContain('Session complete');
    expect(root.textContent).not.toContain('m2'); // outcome ids stay internal
  });
});
