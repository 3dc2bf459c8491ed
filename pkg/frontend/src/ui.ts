/**
 * DOM rendering for the listening-test screens.
 *
 * The screen skeleton is rebuilt when the trial (or state) changes;
 * within a trial only control attributes are updated, so sliders keep
 * their drag state. Labels are strictly listener-facing: stimulus
 * letters/numbers, anchors, and progress — nothing about what a
 * stimulus is.
 */

import { StimulusPlayer } from './audio.js';
import {
  EVALUATION_ANCHORS,
  EVALUATION_RANGE,
  PAIR_ANCHORS,
  Screen,
  SessionController,
  TrialView,
  canSubmit,
  gateReason,
  progressPercent,
} from './state.js';

const STIMULUS_LETTERS = 'ABCDEFGHIJ';

export function stimulusLabel(index: number): string {
  return STIMULUS_LETTERS[index] ?? `#${index + 1}`;
}

export class SessionUi {
  private renderedKey = '';

  constructor(
    private readonly root: HTMLElement,
    private readonly controller: SessionController,
    private readonly onBegin: () => void = () => void controller.start(),
    private readonly document: Document = root.ownerDocument,
  ) {
    controller.onChange(() => this.render());
    this.render();
  }

  render(): void {
    const screen = this.controller.current;
    const key = this.screenKey(screen);
    if (key !== this.renderedKey) {
      this.root.innerHTML = '';
      this.root.appendChild(this.build(screen));
      this.renderedKey = key;
    }
    this.update(screen);
  }

  private screenKey(screen: Screen): string {
    return screen.state === 'trial' ? `trial:${screen.view.trialId}` : screen.state;
  }

  // -- skeleton -----------------------------------------------------------

  private build(screen: Screen): HTMLElement {
    switch (screen.state) {
      case 'idle':
        return this.buildIdle();
      case 'loading':
        return this.note('Loading…', 'loading');
      case 'trial':
        return this.buildTrial(screen.view);
      case 'done':
        return this.buildDone();
      case 'error':
        return this.buildError(screen.message);
    }
  }

  private buildIdle(): HTMLElement {
    const panel = this.panel();
    const begin = this.button('Begin listening test', 'begin');
    begin.addEventListener('click', () => this.onBegin());
    panel.append(begin);
    return panel;
  }

  private buildDone(): HTMLElement {
    const panel = this.panel();
    panel.append(
      this.heading('All done'),
      this.note('Session complete — thank you for listening.', 'completion'),
    );
    return panel;
  }

  private buildError(message: string): HTMLElement {
    const panel = this.panel();
    const note = this.note(message, 'error');
    note.classList.add('error');
    const retry = this.button('Retry', 'retry');
    retry.addEventListener('click', () => void this.controller.reload());
    panel.append(note, retry);
    return panel;
  }

  private buildTrial(view: TrialView): HTMLElement {
    const panel = this.panel();
    panel.append(this.progressBar(), this.stageNote(view));
    const transport = this.div('transport');
    view.stimuli.forEach((_, i) => {
      const play = this.button(`Play ${stimulusLabel(i)}`, `play-${i}`);
      play.addEventListener('click', () => {
        const id = this.trialView()?.stimuli[i];
        if (id) this.controller.audition(id);
      });
      transport.append(play);
    });
    const pause = this.button('Pause', 'pause');
    pause.addEventListener('click', () => this.controller.pausePlayback());
    transport.append(pause);
    panel.append(transport);

    if (view.kind === 'pair') {
      panel.append(
        this.slider(0, -1, 1, [...PAIR_ANCHORS]),
      );
    } else {
      view.stimuli.forEach((_, i) => {
        const row = this.div('evaluation-row');
        row.append(
          this.note(`Stimulus ${stimulusLabel(i)}`, `eval-label-${i}`),
          this.slider(i, EVALUATION_RANGE.min, EVALUATION_RANGE.max, [
            ...EVALUATION_ANCHORS,
          ]),
        );
        panel.append(row);
      });
    }

    const submit = this.button('Submit rating', 'submit');
    submit.addEventListener('click', () => void this.controller.submit());
    const gate = this.note('', 'gate-note');
    gate.classList.add('gate-note');
    panel.append(submit, gate);
    return panel;
  }

  // -- per-change updates ---------------------------------------------------

  private update(screen: Screen): void {
    if (screen.state !== 'trial') return;
    const view = screen.view;
    const player = this.controller.player;

    const bar = this.byId('progress-bar');
    const label = this.byId('progress-label');
    if (bar) bar.style.width = `${progressPercent(view.progress)}%`;
    if (label) {
      label.textContent = `${view.progress.completed} / ${view.progress.total} trials`;
    }

    view.stimuli.forEach((id, i) => {
      const play = this.byId(`play-${i}`) as HTMLButtonElement | null;
      if (!play) return;
      const active = player.isPlaying && player.activeStimulus === id;
      play.setAttribute('aria-pressed', active ? 'true' : 'false');
      play.classList.toggle('active', active);
      play.classList.toggle('auditioned', player.auditioned.has(id));
    });

    view.sliders.forEach((slider, i) => {
      const input = this.byId(`slider-${i}`) as HTMLInputElement | null;
      if (input && this.document.activeElement !== input) {
        input.value = String(slider.value);
      }
    });

    const submit = this.byId('submit') as HTMLButtonElement | null;
    if (submit) {
      submit.disabled =
        this.controller.isSubmitting || !canSubmit(view, player.auditioned);
      submit.textContent = this.controller.isSubmitting
        ? 'Submitting…'
        : 'Submit rating';
    }
    const gate = this.byId('gate-note');
    if (gate) gate.textContent = gateReason(view, player.auditioned) ?? '';
  }

  // -- element helpers -------------------------------------------------------

  private trialView(): TrialView | null {
    const screen = this.controller.current;
    return screen.state === 'trial' ? screen.view : null;
  }

  private byId(testId: string): HTMLElement | null {
    return this.root.querySelector(`[data-testid="${testId}"]`);
  }

  private panel(): HTMLElement {
    return this.div('panel');
  }

  private div(className: string): HTMLElement {
    const el = this.document.createElement('div');
    el.className = className;
    return el;
  }

  private heading(text: string): HTMLElement {
    const el = this.document.createElement('h2');
    el.textContent = text;
    return el;
  }

  private note(text: string, testId: string): HTMLElement {
    const el = this.document.createElement('p');
    el.textContent = text;
    el.dataset.testid = testId;
    return el;
  }

  private button(label: string, testId: string): HTMLButtonElement {
    const el = this.document.createElement('button');
    el.type = 'button';
    el.textContent = label;
    el.dataset.testid = testId;
    return el;
  }

  private progressBar(): HTMLElement {
    const wrap = this.div('progress');
    const bar = this.div('progress-fill');
    bar.dataset.testid = 'progress-bar';
    const label = this.note('', 'progress-label');
    wrap.append(bar, label);
    return wrap;
  }

  private stageNote(view: TrialView): HTMLElement {
    const text =
      view.kind === 'pair'
        ? 'Listen to A and B, then rate which sounds better.'
        : 'Listen to every stimulus and rate each one.';
    return this.note(text, 'stage-note');
  }

  private slider(
    index: number,
    min: number,
    max: number,
    anchors: string[],
  ): HTMLElement {
    const wrap = this.div('slider');
    const input = this.document.createElement('input');
    input.type = 'range';
    input.min = String(min);
    input.max = String(max);
    input.step = '0.01';
    input.dataset.testid = `slider-${index}`;
    input.addEventListener('input', () => {
      this.controller.setSlider(index, Number(input.value));
    });
    const legend = this.div('anchors');
    for (const anchor of anchors) {
      const span = this.document.createElement('span');
      span.textContent = anchor;
      legend.append(span);
    }
    wrap.append(input, legend);
    return wrap;
  }
}

export function playerFor(context: AudioContext): StimulusPlayer {
  return new StimulusPlayer(context);
}
