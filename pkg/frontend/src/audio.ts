/**
 * Gapless multi-stimulus player with equal-power crossfade switching.
 *
 * All stimuli of a trial are decoded up front and started on the same
 * clock with the same offset, so they stay sample-synchronous for the
 * whole playback; switching the audible stimulus only moves gain, never
 * restarts a source. Playback position is therefore preserved exactly
 * across an A/B switch — the audible change is the fade itself.
 *
 * The Web Audio dependencies are narrow interfaces so the engine runs
 * against the browser's AudioContext in production and a virtual-time
 * double in tests.
 */

export const DEFAULT_CROSSFADE_SECONDS = 0.08;
const CURVE_SAMPLES = 65;
/** 80 ms / 16 segments = 5 ms steps: inaudible, and segment ramps never
 * hit the overlapping-automation restrictions that curve events have. */
const FADE_SEGMENTS = 16;

export interface AudioParamLike {
  value: number;
  setValueAtTime(value: number, startTime: number): unknown;
  linearRampToValueAtTime(value: number, endTime: number): unknown;
  cancelScheduledValues(startTime: number): unknown;
}

export interface GainNodeLike {
  gain: AudioParamLike;
  connect(destination: unknown): unknown;
  disconnect(): void;
}

export interface BufferSourceLike {
  buffer: AudioBufferLike | null;
  loop: boolean;
  connect(destination: unknown): unknown;
  start(when?: number, offset?: number): void;
  stop(when?: number): void;
}

export interface AudioBufferLike {
  duration: number;
  sampleRate: number;
  numberOfChannels: number;
  getChannelData(channel: number): Float32Array;
}

export interface AudioContextLike {
  readonly currentTime: number;
  readonly destination: unknown;
  createGain(): GainNodeLike;
  createBufferSource(): BufferSourceLike;
  decodeAudioData(data: ArrayBuffer): Promise<AudioBufferLike>;
}

/**
 * Equal-power fade shapes: outgoing cos, incoming sin, so the summed
 * power fadeOut² + fadeIn² is 1 at every point of the fade.
 */
export function crossfadeCurves(samples = CURVE_SAMPLES): {
  fadeOut: Float32Array;
  fadeIn: Float32Array;
} {
  const fadeOut = new Float32Array(samples);
  const fadeIn = new Float32Array(samples);
  for (let i = 0; i < samples; i++) {
    const x = i / (samples - 1);
    fadeOut[i] = Math.cos((x * Math.PI) / 2);
    fadeIn[i] = Math.sin((x * Math.PI) / 2);
  }
  return { fadeOut, fadeIn };
}

interface Slot {
  id: string;
  buffer: AudioBufferLike;
  gain: GainNodeLike;
  source: BufferSourceLike | null;
  /** Fade bookkeeping so mid-fade switches can resume from the true level. */
  level: number;
  fadeFrom: number;
  fadeTo: number;
  fadeStart: number;
  fadeDuration: number;
}

function levelAt(slot: Slot, now: number): number {
  if (slot.fadeDuration <= 0) return slot.level;
  const x = (now - slot.fadeStart) / slot.fadeDuration;
  if (x >= 1) return slot.fadeTo;
  if (x <= 0) return slot.fadeFrom;
  const shape =
    slot.fadeTo > slot.fadeFrom ? Math.sin((x * Math.PI) / 2) : Math.cos((x * Math.PI) / 2);
  const lo = Math.min(slot.fadeFrom, slot.fadeTo);
  const hi = Math.max(slot.fadeFrom, slot.fadeTo);
  return lo + (hi - lo) * shape;
}

export class StimulusPlayer {
  private slots = new Map<string, Slot>();
  private order: string[] = [];
  private activeId: string | null = null;
  private playing = false;
  private pausedAt = 0;
  private startedAt = 0;
  private startOffset = 0;
  private readonly auditionedIds = new Set<string>();

  constructor(
    private readonly context: AudioContextLike,
    readonly crossfadeSeconds = DEFAULT_CROSSFADE_SECONDS,
  ) {}

  /** Decode and install the stimuli of one trial, replacing the last set. */
  async load(stimuli: { id: string; data: ArrayBuffer }[]): Promise<void> {
    if (stimuli.length === 0) throw new Error('a trial needs at least one stimulus');
    this.stop();
    for (const slot of this.slots.values()) slot.gain.disconnect();
    this.slots.clear();
    this.auditionedIds.clear();
    const buffers = await Promise.all(
      stimuli.map((s) => this.context.decodeAudioData(s.data)),
    );
    this.order = stimuli.map((s) => s.id);
    stimuli.forEach((s, i) => {
      const gain = this.context.createGain();
      gain.connect(this.context.destination);
      gain.gain.value = 0;
      this.slots.set(s.id, {
        id: s.id,
        buffer: buffers[i]!,
        gain,
        source: null,
        level: 0,
        fadeFrom: 0,
        fadeTo: 0,
        fadeStart: 0,
        fadeDuration: 0,
      });
    });
    this.activeId = this.order[0]!;
  }

  get stimulusIds(): string[] {
    return [...this.order];
  }

  get activeStimulus(): string | null {
    return this.activeId;
  }

  get isPlaying(): boolean {
    return this.playing;
  }

  get duration(): number {
    const first = this.slots.get(this.order[0] ?? '');
    return first ? first.buffer.duration : 0;
  }

  /** Stimuli that have been audible at least once since load(). */
  get auditioned(): ReadonlySet<string> {
    return this.auditionedIds;
  }

  /** Current playback position in seconds, shared by every stimulus. */
  position(): number {
    if (!this.playing) return this.pausedAt;
    const elapsed = this.context.currentTime - this.startedAt + this.startOffset;
    const duration = this.duration;
    return duration > 0 ? elapsed % duration : 0;
  }

  /** Start (or resume) looped playback of every stimulus in sync. */
  play(): void {
    if (this.playing || this.slots.size === 0 || this.activeId === null) return;
    const now = this.context.currentTime;
    for (const slot of this.slots.values()) {
      const source = this.context.createBufferSource();
      source.buffer = slot.buffer;
      source.loop = true;
      source.connect(slot.gain);
      source.start(now, this.pausedAt);
      slot.source = source;
      const level = slot.id === this.activeId ? 1 : 0;
      slot.level = level;
      slot.fadeDuration = 0;
      slot.gain.gain.cancelScheduledValues(now);
      slot.gain.gain.setValueAtTime(level, now);
    }
    this.startedAt = now;
    this.startOffset = this.pausedAt;
    this.playing = true;
    this.auditionedIds.add(this.activeId);
  }

  /** Stop the sources, remembering the shared position for resume. */
  pause(): void {
    if (!this.playing) return;
    this.pausedAt = this.position();
    this.haltSources();
  }

  stop(): void {
    if (this.playing) this.haltSources();
    this.pausedAt = 0;
  }

  /**
   * Make another stimulus audible. While playing this is an equal-power
   * crossfade on the shared timeline; the position does not move. A
   * switch during an unfinished fade resumes from the true mid-fade
   * levels instead of jumping.
   */
  switchTo(id: string): void {
    const target = this.slots.get(id);
    if (!target) throw new Error(`unknown stimulus ${id}`);
    if (id === this.activeId && (!this.playing || levelAt(target, this.now()) === 1)) {
      this.activeId = id;
      if (this.playing) this.auditionedIds.add(id);
      return;
    }
    this.activeId = id;
    if (!this.playing) return;
    const now = this.now();
    for (const slot of this.slots.values()) {
      this.scheduleFade(slot, slot.id === id ? 1 : 0, now);
    }
    this.auditionedIds.add(id);
  }

  private now(): number {
    return this.context.currentTime;
  }

  private haltSources(): void {
    const now = this.context.currentTime;
    for (const slot of this.slots.values()) {
      if (slot.source) {
        slot.source.stop(now);
        slot.source = null;
      }
      slot.level = levelAt(slot, now);
      slot.fadeDuration = 0;
      slot.gain.gain.cancelScheduledValues(now);
      slot.gain.gain.setValueAtTime(0, now);
    }
    this.playing = false;
  }

  private scheduleFade(slot: Slot, targetLevel: number, now: number): void {
    const fromLevel = levelAt(slot, now);
    slot.level = fromLevel;
    slot.fadeFrom = fromLevel;
    slot.fadeTo = targetLevel;
    slot.fadeStart = now;
    slot.fadeDuration = targetLevel === fromLevel ? 0 : this.crossfadeSeconds;
    const param = slot.gain.gain;
    param.cancelScheduledValues(now);
    param.setValueAtTime(fromLevel, now);
    if (slot.fadeDuration === 0) return;
    const rising = targetLevel > fromLevel;
    const lo = Math.min(fromLevel, targetLevel);
    const hi = Math.max(fromLevel, targetLevel);
    for (let i = 1; i <= FADE_SEGMENTS; i++) {
      const x = i / FADE_SEGMENTS;
      const shape = rising ? Math.sin((x * Math.PI) / 2) : Math.cos((x * Math.PI) / 2);
      param.linearRampToValueAtTime(
        lo + (hi - lo) * shape,
        now + x * this.crossfadeSeconds,
      );
    }
    slot.level = targetLevel;
  }
}
