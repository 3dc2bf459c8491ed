"""In-memory audio container shared by the DSP pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_RATES = (44100, 48000)


@dataclass(frozen=True)
class AudioClip:
    """Uniformly sampled audio, shaped (samples, channels), nominal [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, np.newaxis]
        if x.ndim != 2:
            raise ValueError("samples must be a 1-D or (samples, channels) array")
        if x.shape[1] not in (1, 2):
            raise ValueError(f"channel count must be 1 or 2, got {x.shape[1]}")
        if x.shape[0] == 0:
            raise ValueError("clip has no samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if self.sample_rate not in SUPPORTED_RATES:
            raise ValueError(
                f"sample rate must be one of {SUPPORTED_RATES}, got {self.sample_rate}"
            )
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def channels(self) -> int:
        return int(self.samples.shape[1])

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def scaled(self, gain_db: float) -> "AudioClip":
        return AudioClip(self.samples * 10.0 ** (gain_db / 20.0), self.sample_rate)

    def slice_seconds(self, start: float, duration: float | None = None) -> "AudioClip":
        i0 = int(round(start * self.sample_rate))
        if not 0 <= i0 < len(self):
            raise ValueError(f"excerpt start {start:g} s outside clip of {self.duration:g} s")
        if duration is None:
            return AudioClip(self.samples[i0:], self.sample_rate)
        i1 = i0 + int(round(duration * self.sample_rate))
        if i1 > len(self):
            raise ValueError(
                f"excerpt [{start:g}, {start + duration:g}] s exceeds clip of "
                f"{self.duration:g} s"
            )
        return AudioClip(self.samples[i0:i1], self.sample_rate)
