"""Synthetic weight tensors with reproducible counter layouts.

A distribution spec is written `name(arg, ..., n)`, e.g. `loguniform(6,1000000)`.
Values are computed in float64 and stored as float32.  Counter layouts per
sample i (all streams start at counter 0 of the tensor's seed):

* loguniform(decades, n): signed values whose magnitudes are log-uniform
  over [10**-decades, 1).  Counter 2i yields u in [0,1), counter 2i+1 the
  sign; the value is sign * 10**(decades * (u - 1)).
* lognormal(mu, sigma, n): counters 3i and 3i+1 feed a Box-Muller pair
  (cosine branch) for z, counter 3i+2 the sign; value sign * exp(mu + sigma*z).
* gaussian(sigma, n): counters 2i and 2i+1 feed Box-Muller; value sigma * z.
* constant(c, n): every element is c; no counters consumed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError

_SPEC_RE = re.compile(r"^\s*([A-Za-z_]+)\s*\(\s*([^()]*)\s*\)\s*$")

_ARITY = {"loguniform": 1, "lognormal": 2, "gaussian": 1, "constant": 1}


@dataclass(frozen=True)
class SynthSpec:
    dist: str
    params: tuple[float, ...]
    n: int

    def __post_init__(self) -> None:
        if self.dist not in _ARITY:
            raise ConfigError(f"unknown distribution {self.dist!r} "
                              f"(expected one of: {', '.join(sorted(_ARITY))})")
        if len(self.params) != _ARITY[self.dist]:
            raise ConfigError(f"{self.dist} takes {_ARITY[self.dist]} parameter(s) "
                              f"plus a sample count, got {self.params}")
        if self.n < 1:
            raise ConfigError(f"sample count must be >= 1, got {self.n}")
        if self.dist == "loguniform" and self.params[0] <= 0:
            raise ConfigError("loguniform needs a positive decade span")
        if self.dist in ("lognormal", "gaussian") and self.params[-1] < 0:
            raise ConfigError(f"{self.dist} needs a non-negative sigma")

    def describe(self) -> str:
        args = ",".join(repr(p) for p in self.params)
        return f"{self.dist}({args},{self.n})"


def parse_spec(text: str) -> SynthSpec:
    """Parse `name(arg, ..., n)` into a SynthSpec."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse distribution spec {text!r}")
    name = m.group(1).lower()
    raw_args = [a.strip() for a in m.group(2).split(",")] if m.group(2).strip() else []
    if len(raw_args) < 2:
        raise ConfigError(f"{text!r}: expected distribution parameters and a sample count")
    try:
        params = tuple(float(a) for a in raw_args[:-1])
        n = int(raw_args[-1])
    except ValueError:
        raise ConfigError(f"cannot parse numeric arguments in {text!r}") from None
    return SynthSpec(name, params, n)


def synth_tensor(spec: SynthSpec | str, seed: int = 0) -> np.ndarray:
    """Generate a 1-D float32 tensor for a spec at a given seed."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    n = spec.n
    if spec.dist == "constant":
        vals = np.full(n, spec.params[0], dtype=np.float64)
    elif spec.dist == "loguniform":
        decades = spec.params[0]
        r = rng.raw64(seed, 0, 2 * n)
        u = rng.unit_from_raw(r[0::2])
        vals = rng.sign_from_raw(r[1::2]) * np.power(10.0, decades * (u - 1.0))
    elif spec.dist == "lognormal":
        mu, sigma = spec.params
        r = rng.raw64(seed, 0, 3 * n)
        u1 = rng.unit_from_raw(r[0::3], open_low=True)
        u2 = rng.unit_from_raw(r[1::3])
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        vals = rng.sign_from_raw(r[2::3]) * np.exp(mu + sigma * z)
    else:  # gaussian
        vals = spec.params[0] * rng.normals(seed, 0, n)
    return vals.astype(np.float32)
