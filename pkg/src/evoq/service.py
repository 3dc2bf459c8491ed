"""HTTP service exposing sessions, trials, stimuli, and rating submission.

One process serves many concurrent sessions; within a session, commands
are serialized by a per-session lock. Every accepted rating is persisted
(snapshot plus event log, atomically rewritten) before the response goes
out, so a crash loses at most the in-flight submission and a restarted
server resumes every session at its pre-crash pending trial.

Clients only ever see opaque stimulus ids and progress counters — never
gain vectors, member identities, or which side is the reference/anchor.
"""

from __future__ import annotations

import hashlib
import json
import logging
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Response

from .dsp.audio import AudioClip
from .dsp.filters import FirFilter, load_filter_file
from .dsp.render import render_stimulus
from .dsp.wav import read_wav, wav_bytes
from .session import (
    EvaluationTrialSpec,
    ExperimentConfig,
    SessionState,
    Stage,
    StaleTrialError,
    TrialSpec,
    create_session,
    event_lines,
    load,
    save,
    submit_comparison,
    submit_evaluation,
)

log = logging.getLogger(__name__)

DEFAULT_CONFIG_ID = "default"


def _stimulus_id(token: str, trial_id: str, slot: int) -> str:
    return hashlib.sha256(f"{token}:{trial_id}:{slot}".encode()).hexdigest()[:16]


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)


@dataclass
class _Entry:
    """One live session: its state, lock, and pending-trial stimulus cache."""

    token: str
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    stimuli: dict[str, bytes] = field(default_factory=dict)
    rendered_trial: str | None = None


class SessionStore:
    """Owns sessions, their persistence, and stimulus rendering."""

    def __init__(
        self,
        configs: dict[str, ExperimentConfig],
        data_dir: str | Path,
    ):
        self.configs = dict(configs)
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._entries: dict[str, _Entry] = {}
        self._tracks: dict[tuple[str, float, float | None], AudioClip] = {}
        self._compensation: dict[str, FirFilter | None] = {}
        self._registry_lock = threading.Lock()
        self._idempotency_path = self.data_dir / "idempotency.json"
        self._idempotency: dict[str, str] = {}
        if self._idempotency_path.is_file():
            self._idempotency = json.loads(self._idempotency_path.read_text())
        self._reload_sessions()

    # -- persistence ------------------------------------------------------

    def _session_dir(self, token: str) -> Path:
        return self.sessions_dir / token

    def _persist(self, entry: _Entry) -> None:
        directory = self._session_dir(entry.token)
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write(directory / "snapshot.json", save(entry.state))
        lines = event_lines(entry.state)
        _atomic_write(
            directory / "events.jsonl",
            "".join(line + "\n" for line in lines).encode(),
        )

    def _reload_sessions(self) -> None:
        for directory in sorted(self.sessions_dir.iterdir()):
            snapshot = directory / "snapshot.json"
            if not snapshot.is_file():
                continue
            try:
                state = load(snapshot.read_bytes())
            except Exception:
                log.exception("skipping unreadable session %s", directory.name)
                continue
            self._entries[directory.name] = _Entry(directory.name, state)
        if self._entries:
            log.info("restored %d session(s) from %s", len(self._entries), self.sessions_dir)

    # -- session lifecycle --------------------------------------------------

    def create(self, config_id: str, idempotency_key: str | None) -> _Entry:
        if config_id not in self.configs:
            raise HTTPException(404, f"unknown config id {config_id!r}")
        config = self.configs[config_id]
        missing = [t.path for t in config.tracks if not Path(t.path).is_file()]
        if missing:
            raise HTTPException(
                400, {"error": "missing track files", "missing": missing}
            )
        with self._registry_lock:
            if idempotency_key is not None and idempotency_key in self._idempotency:
                return self._entries[self._idempotency[idempotency_key]]
            token = secrets.token_hex(16)
            entry = _Entry(token, create_session(config))
            self._entries[token] = entry
            if idempotency_key is not None:
                self._idempotency[idempotency_key] = token
                _atomic_write(
                    self._idempotency_path,
                    json.dumps(self._idempotency, indent=2).encode(),
                )
        with entry.lock:
            self._persist(entry)
            self._render_pending(entry)
        return entry

    def entry(self, token: str) -> _Entry:
        try:
            return self._entries[token]
        except KeyError:
            raise HTTPException(404, f"unknown session token {token!r}") from None

    # -- rendering ----------------------------------------------------------

    def _track_clip(self, config: ExperimentConfig, track_id: str) -> AudioClip:
        spec = config.track(track_id)
        key = (spec.path, spec.start, spec.duration)
        if key not in self._tracks:
            clip = read_wav(spec.path)
            if spec.start or spec.duration is not None:
                duration = (
                    spec.duration
                    if spec.duration is not None
                    else clip.duration - spec.start
                )
                clip = clip.slice_seconds(spec.start, duration)
            self._tracks[key] = clip
        return self._tracks[key]

    def _compensation_filter(self, config: ExperimentConfig) -> FirFilter | None:
        if config.compensation is None:
            return None
        if config.compensation not in self._compensation:
            self._compensation[config.compensation] = load_filter_file(
                config.compensation
            )
        return self._compensation[config.compensation]

    def _render_pending(self, entry: _Entry) -> None:
        """Render every stimulus of the pending trial (idempotent)."""
        state = entry.state
        pending = state.pending
        if pending is None or entry.rendered_trial == pending.trial_id:
            return
        config = state.config
        track = self._track_clip(config, pending.track_id)
        compensation = self._compensation_filter(config)
        if isinstance(pending, TrialSpec):
            curves = [pending.curve_a, pending.curve_b]
        else:
            curves = list(pending.curves)
        stimuli: dict[str, bytes] = {}
        for slot, curve in enumerate(curves):
            rendered = render_stimulus(
                track,
                curve,
                config.band_plan,
                tap_count=config.tap_count,
                compensation=compensation,
                target_lufs=config.target_lufs,
            )
            stimuli[_stimulus_id(entry.token, pending.trial_id, slot)] = wav_bytes(
                rendered, encoding="float32"
            )
        entry.stimuli = stimuli
        entry.rendered_trial = pending.trial_id

    # -- client views ---------------------------------------------------------

    def trial_view(self, entry: _Entry) -> dict:
        state = entry.state
        if state.stage is Stage.DONE:
            return {
                "stage": state.stage.value,
                "progress": state.progress,
                "best_ranked_id": state.best_ranked_id,
            }
        with entry.lock:
            self._render_pending(entry)
            pending = state.pending
            assert pending is not None
            slots = [
                _stimulus_id(entry.token, pending.trial_id, slot)
                for slot in range(len(entry.stimuli))
            ]
        return {
            "stage": state.stage.value,
            "trial_id": pending.trial_id,
            "kind": "pair" if isinstance(pending, TrialSpec) else "multi",
            "track_id": pending.track_id,
            "stimuli": [
                {"id": sid, "url": f"/sessions/{entry.token}/stimuli/{sid}"}
                for sid in slots
            ],
            "progress": state.progress,
        }

    def stimulus(self, entry: _Entry, stimulus_id: str) -> bytes:
        with entry.lock:
            self._render_pending(entry)
            payload = entry.stimuli.get(stimulus_id)
        if payload is None:
            raise HTTPException(410, f"stimulus {stimulus_id!r} is stale or unknown")
        return payload

    def submit(self, entry: _Entry, payload: dict) -> dict:
        if not isinstance(payload, dict):
            raise HTTPException(422, "body must be a JSON object")
        trial_id = payload.get("trial_id")
        if not isinstance(trial_id, str):
            raise HTTPException(422, "trial_id is required")
        with entry.lock:
            state = entry.state
            try:
                if state.stage is Stage.DONE:
                    raise StaleTrialError("session is Done; nothing to rate")
                pending = state.pending
                assert pending is not None
                if trial_id != pending.trial_id:
                    # replays/duplicates conflict before payload-shape checks
                    raise StaleTrialError(
                        f"trial {trial_id!r} is not pending "
                        f"(expected {pending.trial_id!r})"
                    )
                if isinstance(pending, TrialSpec):
                    if "rating" not in payload:
                        raise HTTPException(422, "comparison trials need a 'rating'")
                    state = submit_comparison(state, trial_id, payload["rating"])
                else:
                    if "ratings" not in payload or not isinstance(
                        payload["ratings"], list
                    ):
                        raise HTTPException(
                            422, "evaluation trials need a 'ratings' list"
                        )
                    state = submit_evaluation(state, trial_id, payload["ratings"])
            except StaleTrialError as exc:
                raise HTTPException(409, str(exc)) from exc
            except (TypeError, ValueError) as exc:
                raise HTTPException(422, str(exc)) from exc
            entry.state = state
            self._persist(entry)
            self._render_pending(entry)
            summary = {
                "accepted": trial_id,
                "stage": state.stage.value,
                "progress": state.progress,
                "next_trial_id": (
                    state.pending.trial_id if state.pending is not None else None
                ),
            }
            if state.stage is Stage.DONE:
                summary["best_ranked_id"] = state.best_ranked_id
            return summary


def create_app(
    config: ExperimentConfig | dict[str, ExperimentConfig],
    data_dir: str | Path,
) -> FastAPI:
    """Build the service around one config (or several, keyed by id)."""
    configs = (
        config if isinstance(config, dict) else {DEFAULT_CONFIG_ID: config}
    )
    store = SessionStore(configs, data_dir)
    app = FastAPI(title="evoq listening service")
    app.state.store = store

    @app.post("/sessions", status_code=201)
    def create(payload: dict | None = Body(None)) -> dict:
        payload = payload or {}
        entry = store.create(
            str(payload.get("config_id", DEFAULT_CONFIG_ID)),
            payload.get("idempotency_key"),
        )
        return {
            "token": entry.token,
            "stage": entry.state.stage.value,
            "progress": entry.state.progress,
        }

    @app.get("/sessions/{token}")
    def summary(token: str) -> dict:
        state = store.entry(token).state
        out = {"stage": state.stage.value, "progress": state.progress}
        if state.stage is Stage.DONE:
            out["best_ranked_id"] = state.best_ranked_id
        return out

    @app.get("/sessions/{token}/trial")
    def trial(token: str) -> dict:
        return store.trial_view(store.entry(token))

    @app.get("/sessions/{token}/stimuli/{stimulus_id}")
    def stimulus(token: str, stimulus_id: str) -> Response:
        payload = store.stimulus(store.entry(token), stimulus_id)
        return Response(content=payload, media_type="audio/wav")

    @app.post("/sessions/{token}/ratings")
    def ratings(token: str, payload: dict = Body(...)) -> dict:
        return store.submit(store.entry(token), payload)

    return app
