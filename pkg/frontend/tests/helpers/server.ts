/**
 * Spawns the real session service for integration tests: writes track
 * fixtures and an experiment config into a temp directory, starts the
 * server CLI, and waits for it to accept requests.
 */

import { ChildProcess, spawn } from 'node:child_process';
import { mkdtempSync, mkdirSync, rmSync, writeFileSync } from 'node:fs';
import { connect } from 'node:net';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { encodeWavFloat32 } from './wav.js';

export interface LiveServer {
  baseUrl: string;
  dir: string;
  stop(): Promise<void>;
}

function trackWav(seed: number, seconds: number, sampleRate: number): ArrayBuffer {
  const frames = Math.round(seconds * sampleRate);
  const left = new Float32Array(frames);
  const right = new Float32Array(frames);
  let state = (seed * 2654435761) >>> 0;
  const next = () => {
    state = (1103515245 * state + 12345) >>> 0;
    return state / 2 ** 32 - 0.5;
  };
  const tone = 110 * (seed + 1);
  for (let i = 0; i < frames; i++) {
    const t = i / sampleRate;
    const music =
      0.3 * Math.sin(2 * Math.PI * tone * t) +
      0.15 * Math.sin(2 * Math.PI * tone * 2.01 * t) +
      0.1 * next();
    left[i] = music;
    right[i] = 0.8 * music + 0.05 * next();
  }
  return encodeWavFloat32([left, right], sampleRate);
}

export async function startServer(options: {
  tracks: number;
  generations?: number;
  clipSeconds?: number;
  port?: number;
}): Promise<LiveServer> {
  const port = options.port ?? 8900 + Math.floor(Math.random() * 500);
  const dir = mkdtempSync(join(tmpdir(), 'listening-ui-'));
  const audioDir = join(dir, 'audio');
  mkdirSync(audioDir);
  const trackLines: string[] = [];
  for (let i = 0; i < options.tracks; i++) {
    const name = `track${i}.wav`;
    writeFileSync(
      join(audioDir, name),
      Buffer.from(trackWav(i, options.clipSeconds ?? 0.5, 48000)),
    );
    trackLines.push(`  - {id: t${i}, path: audio/${name}}`);
  }
  const config = [
    'seed: 20260814',
    `de: {generations: ${options.generations ?? 8}, population_size: 5, scale_factor: 0.2, crossover_rate: 0.7}`,
    'bounds: 3.0',
    'initial_curve: 0.0',
    'target_lufs: -20.0',
    'tap_count: 1535',
    'tracks:',
    ...trackLines,
    '',
  ].join('\n');
  writeFileSync(join(dir, 'config.yaml'), config);

  const child: ChildProcess = spawn(
    'evoq',
    [
      'serve',
      '--config',
      'config.yaml',
      '--data-dir',
      'data',
      '--host',
      '127.0.0.1',
      '--port',
      String(port),
    ],
    { cwd: dir, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  let output = '';
  child.stdout?.on('data', (chunk) => (output += chunk));
  child.stderr?.on('data', (chunk) => (output += chunk));

  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 60_000;
  // Raw TCP probe rather than fetch: the caller may run inside a
  // simulated browser whose fetch logs every refused connection.
  const listening = () =>
    new Promise<boolean>((resolve) => {
      const socket = connect({ host: '127.0.0.1', port }, () => {
        socket.destroy();
        resolve(true);
      });
      socket.on('error', () => resolve(false));
    });
  for (;;) {
    if (child.exitCode !== null) {
      throw new Error(`server exited early (${child.exitCode}):\n${output}`);
    }
    if (await listening()) break;
    if (Date.now() > deadline) {
      child.kill('SIGKILL');
      throw new Error(`server never came up:\n${output}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }

  return {
    baseUrl,
    dir,
    async stop() {
      child.kill('SIGKILL');
      await new Promise((resolve) => setTimeout(resolve, 200));
      rmSync(dir, { recursive: true, force: true });
    },
  };
}
