"""Small generator-spec language for per-period profiles.

A profile spec is a JSON-friendly dict evaluated on the grid s = t/T,
t = 1..T:

    {"kind": "constant", "value": v}            v
    {"kind": "linear", "a": a, "b": b}          a + b * s
    {"kind": "poly", "coeffs": [c0, c1, ...]}   c0 + c1*s + c2*s^2 + ...
    {"kind": "cosine", "harmonic": k,
     "amplitude": a}                            a * cos(2*pi*k*s)
    {"kind": "table", "values": [...]}          explicit length-T table

Used for the time effects, the factor columns, and the variance profile.
Cosine profiles are handy for perturbations that must be orthogonal to a
constant on the grid: sum_t cos(2*pi*k*t/T) = 0 exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

_KINDS = ("constant", "linear", "poly", "cosine", "table")


def eval_profile(spec: dict, T: int) -> np.ndarray:
    """Evaluate a profile spec on t = 1..T; returns a length-T array."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"profile spec must be a dict with a 'kind' field: {spec!r}")
    kind = spec["kind"]
    s = np.arange(1, T + 1) / T
    try:
        if kind == "constant":
            return np.full(T, float(spec["value"]))
        if kind == "linear":
            return float(spec["a"]) + float(spec["b"]) * s
        if kind == "poly":
            coeffs = [float(c) for c in spec["coeffs"]]
            return sum(c * s**k for k, c in enumerate(coeffs)) + np.zeros(T)
        if kind == "cosine":
            return float(spec["amplitude"]) * np.cos(
                2.0 * np.pi * float(spec["harmonic"]) * s
            )
        if kind == "table":
            values = np.asarray(spec["values"], dtype=float)
            if values.shape != (T,):
                raise ConfigError(
                    f"table profile has length {values.size}, expected T={T}"
                )
            return values.copy()
    except KeyError as exc:
        raise ConfigError(f"profile spec {spec!r} is missing field {exc}") from exc
    raise ConfigError(f"unknown profile kind {kind!r}; expected one of {_KINDS}")


def eval_factor_spec(specs: list[dict], T: int, r: int) -> np.ndarray:
    """Evaluate one profile spec per factor column; returns a T x r matrix."""
    if len(specs) != r:
        raise ConfigError(f"F_spec needs {r} column specs, got {len(specs)}")
    return np.column_stack([eval_profile(sp, T) for sp in specs])
