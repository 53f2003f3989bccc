"""Optional cleanup applied to whole recordings before segmentation.

Order is fixed: integer decimation, 60 Hz notch, first principal component
removal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ValidationError
from .model import Recording

NOTCH_HZ = 60.0
NOTCH_Q = 30.0

__all__ = ["PreprocessOptions", "preprocess", "decimate", "notch", "remove_first_pc"]


@dataclass(frozen=True)
class PreprocessOptions:
    notch: bool = False
    remove_pc: bool = False
    target_rate: float | None = None
    notch_hz: float = NOTCH_HZ
    notch_q: float = NOTCH_Q


def decimate(data: np.ndarray, rate: float, target_rate: float) -> tuple[np.ndarray, int]:
    """Anti-aliased integer-factor downsampling; returns the data and the factor."""
    ratio = rate / target_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise ValidationError(f"non-integer decimation factor {ratio:g} ({rate:g} Hz -> {target_rate:g} Hz)")
    if factor == 1:
        return np.array(data, dtype=float), 1
    return signal.decimate(data, factor, ftype="fir", axis=-1, zero_phase=True), factor


def notch(data: np.ndarray, rate: float, freq: float = NOTCH_HZ, q: float = NOTCH_Q) -> np.ndarray:
    """Second-order IIR notch, applied forward and backward."""
    if not 0 < freq < rate / 2:
        raise ValidationError(f"notch frequency {freq} Hz is not below Nyquist ({rate / 2} Hz)")
    b, a = signal.iirnotch(freq, q, fs=rate)
    return signal.filtfilt(b, a, data, axis=-1)


def remove_first_pc(data: np.ndarray) -> np.ndarray:
    """Subtract the projection onto the leading spatial principal component."""
    centered = data - data.mean(axis=1, keepdims=True)
    u, _, _ = np.linalg.svd(centered, full_matrices=False)
    v = u[:, :1]
    return data - v @ (v.T @ centered)


def preprocess(rec: Recording, opts: PreprocessOptions) -> Recording:
    data = np.asarray(rec.data, dtype=float)
    rate, onset = rec.rate, rec.onset_index
    if opts.target_rate is not None and opts.target_rate != rate:
        data, factor = decimate(data, rate, opts.target_rate)
        rate = rate / factor
        onset = onset // factor
    if opts.notch:
        data = notch(data, rate, opts.notch_hz, opts.notch_q)
    if opts.remove_pc:
        data = remove_first_pc(data)
    return Recording(data, rate, onset, rec.channel_labels, rec.seizure_id)
