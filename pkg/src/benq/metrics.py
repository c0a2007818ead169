"""Reconstruction-error metrics and schedule comparisons.

All statistics are accumulated in float64 regardless of input dtype.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .quantizer import QuantConfig, dequantize, quantize_tensor


@dataclass(frozen=True)
class DistortionReport:
    """Error summary for one (tensor, config) pair."""

    name: str
    schedule: str
    bits: int
    group_size: int
    mse: float
    max_abs_err: float
    rel_fro_err: float

    def to_dict(self) -> dict:
        return {
            "name": self.name, "schedule": self.schedule, "bits": self.bits,
            "group_size": self.group_size, "mse": self.mse,
            "max_abs_err": self.max_abs_err, "rel_fro_err": self.rel_fro_err,
        }


def distortion(original: np.ndarray, reconstructed: np.ndarray, *,
               name: str = "", config: QuantConfig | None = None) -> DistortionReport:
    """Elementwise error statistics between a tensor and its reconstruction."""
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    err = a - b
    mse = float(np.mean(np.square(err))) if err.size else 0.0
    max_abs = float(np.max(np.abs(err))) if err.size else 0.0
    norm_a = float(np.linalg.norm(a.ravel()))
    norm_e = float(np.linalg.norm(err.ravel()))
    if norm_a == 0.0:
        rel = 0.0 if norm_e == 0.0 else float("inf")
    else:
        rel = norm_e / norm_a
    return DistortionReport(
        name=name,
        schedule=config.schedule.value if config else "",
        bits=config.bits if config else 0,
        group_size=config.group_size if config else 0,
        mse=mse, max_abs_err=max_abs, rel_fro_err=rel,
    )


def compare_schedules(data: np.ndarray, configs: Sequence[QuantConfig],
                      name: str = "") -> list[DistortionReport]:
    """Quantize and reconstruct one tensor under each config, in given order."""
    arr = np.asarray(data)
    out = []
    for cfg in configs:
        qt = quantize_tensor(arr, cfg, name)
        out.append(distortion(arr, dequantize(qt), name=name, config=cfg))
    return out
