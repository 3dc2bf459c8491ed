"""Minimal RIFF/WAV reader and writer.

Supports the interchange formats the pipeline needs: 16- and 24-bit PCM
and 32-bit IEEE float, mono or stereo. Chunks other than ``fmt `` and
``data`` are skipped on read.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .audio import AudioClip

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE

ENCODINGS = ("pcm16", "pcm24", "float32")


def _decode_fmt(payload: bytes) -> tuple[int, int, int, int]:
    if len(payload) < 16:
        raise ValueError("WAV fmt chunk truncated")
    fmt, channels, rate, _, _, bits = struct.unpack("<HHIIHH", payload[:16])
    if fmt == _FMT_EXTENSIBLE:
        if len(payload) < 26:
            raise ValueError("WAV extensible fmt chunk truncated")
        fmt = struct.unpack("<H", payload[24:26])[0]
    return fmt, channels, rate, bits


def read_wav_bytes(data: bytes) -> AudioClip:
    buf = io.BytesIO(data)
    head = buf.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise ValueError("not a RIFF/WAVE file")
    fmt_info = None
    frames = None
    while True:
        hdr = buf.read(8)
        if len(hdr) < 8:
            break
        cid, size = struct.unpack("<4sI", hdr)
        payload = buf.read(size)
        if len(payload) < size:
            raise ValueError(f"WAV chunk {cid!r} truncated")
        if size % 2:
            buf.read(1)  # chunks are word-aligned
        if cid == b"fmt ":
            fmt_info = _decode_fmt(payload)
        elif cid == b"data":
            frames = payload
    if fmt_info is None or frames is None:
        raise ValueError("WAV file missing fmt or data chunk")
    fmt, channels, rate, bits = fmt_info
    if channels < 1:
        raise ValueError("WAV file reports zero channels")
    if fmt == _FMT_PCM and bits == 16:
        x = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif fmt == _FMT_PCM and bits == 24:
        raw = np.frombuffer(frames, dtype=np.uint8)
        raw = raw[: (raw.size // 3) * 3].reshape(-1, 3)
        vals = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        x = vals.astype(np.float64) / float(1 << 23)
    elif fmt == _FMT_FLOAT and bits == 32:
        x = np.frombuffer(frames, dtype="<f4").astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV format (format code {fmt}, {bits} bits)")
    n = x.size // channels
    return AudioClip(x[: n * channels].reshape(n, channels), rate)


def read_wav(path: str | Path) -> AudioClip:
    return read_wav_bytes(Path(path).read_bytes())


def wav_bytes(clip: AudioClip, encoding: str = "float32") -> bytes:
    if encoding not in ENCODINGS:
        raise ValueError(f"encoding must be one of {ENCODINGS}, got {encoding!r}")
    x = clip.samples
    if encoding == "pcm16":
        fmt, bits = _FMT_PCM, 16
        frames = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2").tobytes()
    elif encoding == "pcm24":
        fmt, bits = _FMT_PCM, 24
        vals = np.clip(np.round(x * float(1 << 23)), -(1 << 23), (1 << 23) - 1)
        vals = vals.astype(np.int64).ravel()
        raw = np.empty((vals.size, 3), dtype=np.uint8)
        raw[:, 0] = vals & 0xFF
        raw[:, 1] = (vals >> 8) & 0xFF
        raw[:, 2] = (vals >> 16) & 0xFF
        frames = raw.tobytes()
    else:
        fmt, bits = _FMT_FLOAT, 32
        frames = x.astype("<f4").tobytes()
    channels = clip.channels
    block_align = channels * bits // 8
    byte_rate = clip.sample_rate * block_align
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(frames) + (len(frames) % 2),
        b"WAVE",
        b"fmt ",
        16,
        fmt,
        channels,
        clip.sample_rate,
        byte_rate,
        block_align,
        bits,
        b"data",
        len(frames),
    )
    return header + frames + (b"\x00" if len(frames) % 2 else b"")


def write_wav(path: str | Path, clip: AudioClip, encoding: str = "float32") -> None:
    Path(path).write_bytes(wav_bytes(clip, encoding))
