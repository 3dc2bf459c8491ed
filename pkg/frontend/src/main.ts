/**
 * Browser entry point: wires the API client, the audio engine, and the
 * DOM together. The API base defaults to the page's own origin (the
 * client is meant to be served behind the same host as the session
 * service); `?api=http://host:port` overrides it for development.
 */

import { ApiClient } from './api.js';
import { StimulusPlayer } from './audio.js';
import { SessionController } from './state.js';
import { SessionUi } from './ui.js';

const TOKEN_KEY = 'listening-session-token';

function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get('api') ?? '';
  const api = new ApiClient(baseUrl);
  const context = new AudioContext();
  const controller = new SessionController(api, new StimulusPlayer(context));

  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app mount point');

  // Reload-safe resume: keep the token, re-fetch the pending trial; any
  // unsent slider values are deliberately discarded with the old view.
  const begin = () => {
    void context.resume(); // user gesture unlocks audio
    const saved = window.sessionStorage.getItem(TOKEN_KEY);
    void controller.start(saved ?? undefined);
  };
  new SessionUi(root, controller, begin);
  controller.onChange(() => {
    const token = controller.sessionToken;
    if (token) window.sessionStorage.setItem(TOKEN_KEY, token);
  });
}

boot();
