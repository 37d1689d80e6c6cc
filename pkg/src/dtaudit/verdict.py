"""Verdict and witness records shared by the audit routines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["StabilityVerdict", "Witness"]


@dataclass(frozen=True)
class Witness:
    """Concrete sample demonstrating a violated bound.

    Holds everything needed to re-simulate the offending trajectory:
    the sampling period, the start index, the initial state, the index
    at which the bound failed, and the measured versus claimed values.
    """

    T: float
    k0: int
    initial_state: tuple
    k: int
    measured: float
    bound: float

    @classmethod
    def of(cls, T, k0, initial_state, k, measured, bound) -> "Witness":
        return cls(
            float(T),
            int(k0),
            tuple(float(v) for v in np.atleast_1d(initial_state)),
            int(k),
            float(measured),
            float(bound),
        )


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of a grid audit: pass, falsified, or inconclusive.

    A pass is a statement about the grid only. Falsification carries a
    re-simulable `Witness`. Inconclusive verdicts explain themselves in
    `detail` (for example, a tail sum that has not visibly converged).
    `margins` holds worst-ratio summaries so near-violations are visible.
    """

    kind: str
    witness: Witness | None = None
    detail: str = ""
    margins: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("pass", "falsified", "inconclusive"):
            raise ValueError(f"unknown verdict kind {self.kind!r}")
        if self.kind == "falsified" and self.witness is None:
            raise ValueError("falsified verdict requires a witness")

    def __bool__(self) -> bool:
        return self.kind == "pass"

    @classmethod
    def ok(cls, detail: str = "", **margins) -> "StabilityVerdict":
        return cls("pass", None, detail, margins)

    @classmethod
    def falsify(cls, witness: Witness, detail: str = "", **margins) -> "StabilityVerdict":
        return cls("falsified", witness, detail, margins)

    @classmethod
    def unknown(cls, detail: str, **margins) -> "StabilityVerdict":
        return cls("inconclusive", None, detail, margins)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "detail": self.detail, "margins": _plain(self.margins)}
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "T": w.T,
                "k0": w.k0,
                "initial_state": list(w.initial_state),
                "k": w.k,
                "measured": w.measured,
                "bound": w.bound,
            }
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in np.asarray(obj).tolist()] if isinstance(obj, np.ndarray) else [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
