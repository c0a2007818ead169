"""Group-wise codebook and round-to-nearest weight quantization.

Tensors are flattened row-major and cut into groups of `group_size`
(the final group may be short; its length is the tensor's tail).  Each
group stores one float16 scale:

* codebook schedules (log/linear): scale = max|w| over the group, cast to
  float16.  Elements are divided by the stored scale and matched to the
  nearest codebook level, ties resolved to the lower index.  Reconstruction
  is level * scale, so the group maximum maps to the +/-1.0 endpoint.
* rtn: scale = max|w| / (2**(bits-1) - 1), cast to float16.  Elements are
  divided by the stored scale and rounded half away from zero to a signed
  integer clamped to [-2**(bits-1), 2**(bits-1) - 1].

Normalizing by the float16 value actually stored (not the exact maximum)
keeps quantization a projection: quantizing a reconstruction returns the
identical indices and scales, and the per-element error bound is stated
against the stored scale.

An all-zero group stores scale 0 and reconstructs exact zeros.  A nonzero
group whose maximum underflows float16 stores the smallest float16
subnormal instead, so scale 0 occurs only for all-zero groups; a maximum
above float16 range is a data error.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .levels import DEFAULT_EPSILON, Codebook, Schedule, make_codebook

_F16_TINY = np.float16(2.0 ** -24)
_BLOCK_ELEMS = 1 << 22  # soft cap on per-chunk working-set size


@dataclass(frozen=True)
class QuantConfig:
    """Grid parameters shared by every group of a quantization run."""

    bits: int = 4
    group_size: int = 8
    schedule: Schedule = Schedule.LOG_UNIFORM
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        if self.group_size != int(self.group_size) or self.group_size < 1:
            raise ConfigError(f"group_size must be a positive integer, got {self.group_size!r}")
        object.__setattr__(self, "group_size", int(self.group_size))
        if self.schedule is not Schedule.RTN:
            self.codebook()  # validates bits and epsilon
        elif self.bits != int(self.bits) or not 2 <= int(self.bits) <= 8:
            raise ConfigError(f"bits must be an integer in 2..8, got {self.bits!r}")

    def codebook(self) -> Codebook | None:
        if self.schedule is Schedule.RTN:
            return None
        return make_codebook(self.schedule, self.bits, self.epsilon)

    def to_dict(self) -> dict:
        out = {"bits": self.bits, "group_size": self.group_size,
               "schedule": self.schedule.value}
        if self.schedule is Schedule.LOG_UNIFORM:
            out["epsilon"] = self.epsilon
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QuantConfig":
        try:
            return cls(bits=d["bits"], group_size=d["group_size"],
                       schedule=Schedule.parse(d["schedule"]),
                       epsilon=d.get("epsilon", DEFAULT_EPSILON))
        except KeyError as e:
            raise ConfigError(f"quantization config is missing field {e.args[0]!r}") from None


def nearest_level_indices(values: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Index of the nearest level for each value; ties take the lower index."""
    x = np.asarray(values, dtype=np.float64)
    n = levels.size
    pos = np.searchsorted(levels, x)
    left = np.clip(pos - 1, 0, n - 1)
    right = np.clip(pos, 0, n - 1)
    take_left = np.abs(x - levels[left]) <= np.abs(x - levels[right])
    return np.where(take_left, left, right)


def _stored_scales(raw_max: np.ndarray, context: str) -> np.ndarray:
    """float16 scales from exact per-group maxima, with underflow pinned."""
    with np.errstate(over="ignore"):
        s = raw_max.astype(np.float16)
    if np.any(np.isinf(s)):
        raise DataError(f"{context}: group scale exceeds float16 range")
    return np.where((s == 0) & (raw_max > 0), _F16_TINY, s)


def _grouped(flat: np.ndarray, group_size: int) -> np.ndarray:
    """Zero-padded (n_groups, group_size) view of a flat tensor."""
    n = flat.size
    n_groups = -(-n // group_size) if n else 0
    padded = np.zeros(n_groups * group_size, dtype=np.float64)
    padded[:n] = flat
    return padded.reshape(n_groups, group_size)


@dataclass(frozen=True)
class QuantizedTensor:
    """Packed result of quantizing one tensor under one QuantConfig.

    `indices` is uint8 codebook rows for log/linear, int8 signed integers
    for rtn; `scales` holds one float16 per group in group order.
    """

    name: str
    shape: tuple[int, ...]
    indices: np.ndarray
    scales: np.ndarray
    config: QuantConfig

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        want = np.int8 if self.config.schedule is Schedule.RTN else np.uint8
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=want))
        object.__setattr__(self, "scales", np.ascontiguousarray(self.scales, dtype=np.float16))
        if self.indices.size != self.numel:
            raise FormatError(f"{self.name}: {self.indices.size} indices for {self.numel} elements")
        if self.scales.size != self.n_groups:
            raise FormatError(f"{self.name}: {self.scales.size} scales for {self.n_groups} groups")

    @property
    def numel(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    @property
    def n_groups(self) -> int:
        return -(-self.numel // self.config.group_size) if self.numel else 0

    @property
    def tail_len(self) -> int:
        """Length of the final short group, 0 when group_size divides numel."""
        return self.numel % self.config.group_size

    def storage_bits(self) -> dict:
        """Idealized payload cost: packed indices plus float16 scales."""
        per_index = 4 if self.config.bits <= 4 else 8
        return {"index_bits": self.numel * per_index, "scale_bits": self.n_groups * 16}


def quantize_group(group: np.ndarray, codebook: Codebook) -> tuple[np.ndarray, np.float16]:
    """Quantize one group against a codebook; returns (indices, stored scale)."""
    g = np.asarray(group, dtype=np.float64).ravel()
    if not np.all(np.isfinite(g)):
        raise DataError("cannot quantize non-finite values")
    if g.size == 0:
        raise DataError("cannot quantize an empty group")
    s = _stored_scales(np.array([np.max(np.abs(g))]), "group")[0]
    if s == 0:
        # all-zero group: park on the smallest positive level
        return np.full(g.size, codebook.n_levels // 2, dtype=np.uint8), s
    idx = nearest_level_indices(g / np.float64(s), codebook.levels)
    return idx.astype(np.uint8), s


def rtn_quantize_group(group: np.ndarray, bits: int) -> tuple[np.ndarray, np.float16]:
    """Uniform round-to-nearest for one group; returns (signed ints, scale)."""
    g = np.asarray(group, dtype=np.float64).ravel()
    if not np.all(np.isfinite(g)):
        raise DataError("cannot quantize non-finite values")
    if g.size == 0:
        raise DataError("cannot quantize an empty group")
    qmax = 2 ** (bits - 1) - 1
    s = _stored_scales(np.array([np.max(np.abs(g)) / qmax]), "group")[0]
    if s == 0:
        return np.zeros(g.size, dtype=np.int8), s
    t = g / np.float64(s)
    q = np.copysign(np.floor(np.abs(t) + 0.5), t)
    return np.clip(q, -(qmax + 1), qmax).astype(np.int8), s


def quantize_tensor(data: np.ndarray, config: QuantConfig, name: str = "") -> QuantizedTensor:
    """Quantize a whole tensor group-wise (row-major order, chunked)."""
    arr = np.asarray(getattr(data, "data", data))
    flat = np.asarray(arr, dtype=np.float64).ravel()
    if not np.all(np.isfinite(flat)):
        raise DataError(f"tensor {name or '<unnamed>'} contains non-finite values")
    G = config.group_size
    groups = _grouped(flat, G)
    n_groups = groups.shape[0]

    rtn = config.schedule is Schedule.RTN
    codebook = config.codebook()
    qmax = 2 ** (config.bits - 1) - 1
    out = np.empty(n_groups * G, dtype=np.int8 if rtn else np.uint8)
    scales = np.empty(n_groups, dtype=np.float16)

    block = max(1, _BLOCK_ELEMS // G)
    for start in range(0, n_groups, block):
        chunk = groups[start:start + block]
        raw_max = np.max(np.abs(chunk), axis=1)
        if rtn:
            raw_max = raw_max / qmax
        s = _stored_scales(raw_max, f"tensor {name or '<unnamed>'}")
        scales[start:start + block] = s
        zero = s == 0
        z = chunk / np.where(zero, 1.0, s.astype(np.float64))[:, None]
        if rtn:
            q = np.copysign(np.floor(np.abs(z) + 0.5), z)
            q = np.clip(q, -(qmax + 1), qmax)
            q[zero] = 0
            out[start * G:start * G + chunk.size] = q.ravel()
        else:
            idx = nearest_level_indices(z.ravel(), codebook.levels).reshape(z.shape)
            idx[zero] = codebook.n_levels // 2
            out[start * G:start * G + chunk.size] = idx.ravel()

    return QuantizedTensor(name, tuple(np.asarray(arr).shape), out[:flat.size], scales, config)


def _per_element_scales(qt: QuantizedTensor) -> np.ndarray:
    s = qt.scales.astype(np.float64)
    return np.repeat(s, qt.config.group_size)[:qt.numel]


def dequantize(qt: QuantizedTensor, codebook: Codebook | None = None) -> np.ndarray:
    """Reconstruct a float32 tensor from packed indices and scales.

    For codebook schedules a codebook may be supplied (it must match the
    tensor's config) or is derived from the config when omitted.
    """
    if qt.config.schedule is Schedule.RTN:
        if codebook is not None:
            raise ConfigError("rtn tensors take no codebook")
        q = qt.indices.astype(np.int64)
        lo, hi = -(2 ** (qt.config.bits - 1)), 2 ** (qt.config.bits - 1) - 1
        if q.size and (q.min() < lo or q.max() > hi):
            raise FormatError(f"{qt.name}: quantized value outside {qt.config.bits}-bit range")
        rec = q * _per_element_scales(qt)
    else:
        own = qt.config.codebook()
        if codebook is None:
            codebook = own
        elif (codebook.schedule is not own.schedule or codebook.bits != own.bits
              or not np.array_equal(codebook.levels, own.levels)):
            raise ConfigError(f"{qt.name}: supplied codebook does not match tensor config")
        idx = qt.indices.astype(np.int64)
        if idx.size and idx.max() >= codebook.n_levels:
            raise FormatError(f"{qt.name}: level index outside {qt.config.bits}-bit codebook")
        rec = codebook.levels[idx] * _per_element_scales(qt)
    return rec.reshape(qt.shape).astype(np.float32)


def rtn_dequantize(qt: QuantizedTensor) -> np.ndarray:
    if qt.config.schedule is not Schedule.RTN:
        raise ConfigError("rtn_dequantize expects an rtn-quantized tensor")
    return dequantize(qt)


# Substrings of the transformational linears the default policy quantizes,
# and of the statistically fragile tensors it preserves.  Skip wins when
# both match the same name.
_QUANTIZE_PATTERNS = ("q_proj", "k_proj", "v_proj", "o_proj", "attn",
                      "fc", "mlp", "gate_proj", "up_proj", "down_proj", "dense")
_SKIP_PATTERNS = ("norm", "ln", "embed", "wte", "wpe", "lm_head", ".bias")


@dataclass(frozen=True)
class QuantPolicy:
    """Name-pattern rules deciding which tensors are quantized.

    A name matching any skip pattern is preserved; otherwise a name matching
    any quantize pattern is quantized; otherwise `default_action` applies.
    `family_patterns` optionally overrides the family table used in reports.
    """

    quantize_patterns: tuple[str, ...] = _QUANTIZE_PATTERNS
    skip_patterns: tuple[str, ...] = _SKIP_PATTERNS
    default_action: str = "skip"
    family_patterns: tuple[tuple[str, tuple[str, ...]], ...] | None = None

    def __post_init__(self) -> None:
        if self.default_action not in ("skip", "quantize"):
            raise ConfigError(f"default_action must be 'skip' or 'quantize', "
                              f"got {self.default_action!r}")
        object.__setattr__(self, "quantize_patterns", tuple(self.quantize_patterns))
        object.__setattr__(self, "skip_patterns", tuple(self.skip_patterns))
        if self.family_patterns is not None:
            object.__setattr__(self, "family_patterns", tuple(
                (str(fam), tuple(subs)) for fam, subs in self.family_patterns))

    def should_quantize(self, name: str) -> bool:
        lowered = name.lower()
        if any(p in lowered for p in self.skip_patterns):
            return False
        if any(p in lowered for p in self.quantize_patterns):
            return True
        return self.default_action == "quantize"

    def to_dict(self) -> dict:
        out = {"quantize_patterns": list(self.quantize_patterns),
               "skip_patterns": list(self.skip_patterns),
               "default_action": self.default_action}
        if self.family_patterns is not None:
            out["family_patterns"] = [[fam, list(subs)] for fam, subs in self.family_patterns]
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QuantPolicy":
        bad = set(d) - {"quantize_patterns", "skip_patterns", "default_action", "family_patterns"}
        if bad:
            raise ConfigError(f"unknown policy fields: {sorted(bad)}")
        fams = d.get("family_patterns")
        return cls(
            quantize_patterns=tuple(d.get("quantize_patterns", _QUANTIZE_PATTERNS)),
            skip_patterns=tuple(d.get("skip_patterns", _SKIP_PATTERNS)),
            default_action=d.get("default_action", "skip"),
            family_patterns=None if fams is None else tuple(
                (fam, tuple(subs)) for fam, subs in fams),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


DEFAULT_POLICY = QuantPolicy()
QUANTIZE_ALL = QuantPolicy(quantize_patterns=(), skip_patterns=(), default_action="quantize")


@dataclass
class ModelQuantization:
    """Mixed result of applying a policy: quantized tensors plus originals."""

    entries: dict[str, Any]
    config: QuantConfig
    policy: QuantPolicy

    def quantized(self) -> dict[str, QuantizedTensor]:
        return {k: v for k, v in self.entries.items() if isinstance(v, QuantizedTensor)}

    def preserved(self) -> dict[str, Any]:
        return {k: v for k, v in self.entries.items() if not isinstance(v, QuantizedTensor)}

    def summary(self) -> dict:
        q_numel = p_numel = index_bits = scale_bits = preserved_bits = 0
        for t in self.entries.values():
            if isinstance(t, QuantizedTensor):
                q_numel += t.numel
                cost = t.storage_bits()
                index_bits += cost["index_bits"]
                scale_bits += cost["scale_bits"]
            else:
                arr = np.asarray(getattr(t, "data", t))
                p_numel += arr.size
                width = 16 if getattr(t, "source_dtype", "F32") in ("F16", "BF16") else 32
                preserved_bits += arr.size * width
        total = q_numel + p_numel
        return {
            "n_quantized": len(self.quantized()),
            "n_preserved": len(self.entries) - len(self.quantized()),
            "quantized_fraction": (q_numel / total) if total else 0.0,
            "index_bits": index_bits,
            "scale_bits": scale_bits,
            "preserved_bits": preserved_bits,
        }


def apply_policy(model: Mapping[str, Any], policy: QuantPolicy, config: QuantConfig,
                 threads: int = 1) -> ModelQuantization:
    """Quantize the tensors a policy selects; pass the rest through untouched."""
    if not model:
        raise DataError("cannot apply a policy to an empty tensor set")
    names = list(model.keys())

    def work(name: str):
        t = model[name]
        if policy.should_quantize(name):
            return quantize_tensor(np.asarray(getattr(t, "data", t)), config, name)
        return t

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, names))
    else:
        results = [work(n) for n in names]
    return ModelQuantization(dict(zip(names, results)), config, policy)
