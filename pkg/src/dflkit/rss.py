"""Quantized RSS tensors and the code <-> dBm mapping.

Radios report RSS as an 8-bit code. The affine mapping between code and
dBm is declared alongside every tensor (and in every trace header) so
dequantization is never ambiguous. The default mapping uses half-dB
steps anchored at -115 dBm:

    code = clamp(round((dBm + 115) * 2), 0, 255)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantizationMap:
    offset_dbm: float = -115.0
    step_db: float = 0.5

    def quantize(self, dbm) -> np.ndarray:
        codes = np.rint((np.asarray(dbm, dtype=np.float64) - self.offset_dbm) / self.step_db)
        return np.clip(codes, 0, 255).astype(np.uint8)

    def dequantize_dbm(self, codes) -> np.ndarray:
        return self.offset_dbm + np.asarray(codes, dtype=np.float64) * self.step_db

    def dequantize_mw(self, codes) -> np.ndarray:
        return 10.0 ** (self.dequantize_dbm(codes) / 10.0)


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=np.float64) / 10.0)


def mw_to_dbm(mw):
    mw = np.asarray(mw, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(mw)


@dataclass
class RssTensor:
    """Quantized RSS indexed by (link, channel, sample).

    ``channels`` holds the radio channel numbers (e.g. 11..26) for the
    second axis; calibration and observation tensors of one experiment
    share the same (L, C) shape and quantization map.
    """

    codes: np.ndarray  # (L, C, S) uint8
    quantization: QuantizationMap
    channels: tuple[int, ...]

    def __post_init__(self):
        self.codes = np.asarray(self.codes)
        if self.codes.ndim != 3:
            raise ValueError(f"codes must be (link, channel, sample), got shape {self.codes.shape}")
        if self.codes.dtype != np.uint8:
            if self.codes.min() < 0 or self.codes.max() > 255:
                raise ValueError("codes outside 0..255")
            self.codes = self.codes.astype(np.uint8)
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != self.codes.shape[1]:
            raise ValueError(
                f"{len(self.channels)} channel numbers for {self.codes.shape[1]} channel columns"
            )

    @property
    def n_links(self) -> int:
        return self.codes.shape[0]

    @property
    def n_channels(self) -> int:
        return self.codes.shape[1]

    @property
    def n_samples(self) -> int:
        return self.codes.shape[2]

    def power_mw(self) -> np.ndarray:
        """Dequantized linear power, shape (L, C, S)."""
        return self.quantization.dequantize_mw(self.codes)

    def mean_power_mw(self) -> np.ndarray:
        """Sample-averaged linear power per (link, channel), shape (L, C)."""
        return self.power_mw().mean(axis=2)

    def select_channels(self, count_or_indices) -> "RssTensor":
        """Restrict to the first C channels (int) or an explicit index list."""
        if isinstance(count_or_indices, (int, np.integer)):
            idx = list(range(int(count_or_indices)))
        else:
            idx = [int(i) for i in count_or_indices]
        return RssTensor(
            codes=self.codes[:, idx, :],
            quantization=self.quantization,
            channels=tuple(self.channels[i] for i in idx),
        )
