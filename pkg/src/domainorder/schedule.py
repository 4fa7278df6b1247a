"""Piecewise-constant domain weight schedules.

Breakpoints and weights are held as exact rationals. Floats coming in are read
through their shortest decimal representation (``0.1`` becomes ``1/10``), so
a config written in decimals sums to one exactly and interventions conserve
the per-domain data budget bit for bit.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ArgumentError

SIMPLEX_TOL = Fraction(1, 10**12)


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError as exc:
            raise ArgumentError(f"cannot read {x!r} as a number") from exc
    return Fraction(repr(float(x)))


def _to_json_number(x: Fraction):
    """Shortest decimal when it reads back exactly, else the string ``"p/q"``."""
    f = float(x)
    return f if Fraction(repr(f)) == x else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class Violation:
    segment: int
    kind: str  # "negative-weight", "simplex-sum", "monotonicity", "shape"
    message: str

    def __str__(self):
        return f"segment {self.segment}: {self.message}"


class WeightSchedule:
    """Weights ``weights[m]`` apply on ``[breakpoints[m], breakpoints[m+1])``;
    the last entry holds on ``[breakpoints[-1], inf)``.

    The constructor does not validate; use :func:`validate_schedule` or the
    factory functions, which refuse invalid input.
    """

    __slots__ = ("breakpoints", "weights", "_float_bps")

    def __init__(self, breakpoints: Sequence, weights: Sequence[Sequence]):
        self.breakpoints = tuple(to_fraction(t) for t in breakpoints)
        self.weights = tuple(tuple(to_fraction(w) for w in row) for row in weights)
        self._float_bps = [float(t) for t in self.breakpoints]

    @property
    def k(self) -> int:
        return len(self.weights[0]) if self.weights else 0

    def __repr__(self):
        segs = ", ".join(
            f"{float(t):g}: ({', '.join(f'{float(w):g}' for w in row)})"
            for t, row in zip(self.breakpoints, self.weights)
        )
        return f"WeightSchedule({segs})"

    def __eq__(self, other):
        if not isinstance(other, WeightSchedule):
            return NotImplemented
        a, b = _canonical(self), _canonical(other)
        return a.breakpoints == b.breakpoints and a.weights == b.weights

    def __hash__(self):
        c = _canonical(self)
        return hash((c.breakpoints, c.weights))

    def segment_index(self, t) -> int:
        if isinstance(t, Fraction):
            return bisect.bisect_right(self.breakpoints, t) - 1
        return bisect.bisect_right(self._float_bps, float(t)) - 1

    def breakpoints_in(self, start: float, stop: float) -> list[float]:
        """Float breakpoints strictly inside ``(start, stop)``."""
        return [t for t in self._float_bps if start < t < stop]

    def to_dict(self) -> dict:
        return {
            "breakpoints": [_to_json_number(t) for t in self.breakpoints],
            "weights": [[_to_json_number(w) for w in row] for row in self.weights],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "WeightSchedule":
        try:
            return cls(data["breakpoints"], data["weights"])
        except (KeyError, TypeError) as exc:
            raise ArgumentError(f"schedule needs 'breakpoints' and 'weights' lists: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "WeightSchedule":
        return cls.from_dict(json.loads(text))


def _canonical(s: WeightSchedule) -> WeightSchedule:
    bps, ws = [], []
    for t, row in zip(s.breakpoints, s.weights):
        if ws and ws[-1] == row:
            continue
        bps.append(t)
        ws.append(row)
    return WeightSchedule(bps, ws)


def validate_schedule(s: WeightSchedule) -> list[Violation]:
    """Every violated invariant, with the offending segment index. Empty means valid."""
    out: list[Violation] = []
    if not s.breakpoints or len(s.breakpoints) != len(s.weights):
        out.append(Violation(0, "shape", "need one weight vector per breakpoint"))
        return out
    if s.breakpoints[0] != 0:
        out.append(Violation(0, "shape", f"first breakpoint must be 0, got {float(s.breakpoints[0])}"))
    k = len(s.weights[0])
    for m, row in enumerate(s.weights):
        if len(row) != k or k == 0:
            out.append(Violation(m, "shape", f"expected {k} weights, got {len(row)}"))
            continue
        neg = [i for i, w in enumerate(row) if w < 0]
        if neg:
            out.append(Violation(m, "negative-weight", f"negative weight at domain(s) {neg}: {[float(w) for w in row]}"))
        total = sum(row, Fraction(0))
        if abs(total - 1) > SIMPLEX_TOL:
            out.append(Violation(m, "simplex-sum", f"weights sum to {float(total):.17g}, not 1"))
    for m in range(1, len(s.breakpoints)):
        if s.breakpoints[m] <= s.breakpoints[m - 1]:
            out.append(
                Violation(
                    m,
                    "monotonicity",
                    f"breakpoint {float(s.breakpoints[m])} does not exceed {float(s.breakpoints[m - 1])}",
                )
            )
    return out


def _require_valid(s: WeightSchedule) -> WeightSchedule:
    problems = validate_schedule(s)
    if problems:
        raise ArgumentError("invalid schedule: " + "; ".join(str(p) for p in problems))
    return s


def constant_schedule(k: int, w: Sequence) -> WeightSchedule:
    if len(w) != k:
        raise ArgumentError(f"expected {k} weights, got {len(w)}")
    return _require_valid(WeightSchedule([0], [w]))


def piecewise_schedule(breakpoints: Sequence, weights: Sequence[Sequence]) -> WeightSchedule:
    return _require_valid(WeightSchedule(breakpoints, weights))


def weights_at(s: WeightSchedule, t) -> tuple[float, ...]:
    """Weights in force at ``t``; a breakpoint belongs to the segment on its right."""
    if t < 0:
        raise ArgumentError(f"t must be >= 0, got {t}")
    return tuple(float(w) for w in s.weights[s.segment_index(t)])


def total_data(s: WeightSchedule, horizon) -> tuple[Fraction, ...]:
    """Exact per-domain integrals of the weights over ``[0, horizon]``."""
    horizon = to_fraction(horizon)
    if horizon < 0:
        raise ArgumentError("horizon must be >= 0")
    totals = [Fraction(0)] * s.k
    ends = list(s.breakpoints[1:]) + [None]
    for start, end, row in zip(s.breakpoints, ends, s.weights):
        if start >= horizon:
            break
        stop = horizon if end is None else min(end, horizon)
        length = stop - start
        totals = [acc + length * w for acc, w in zip(totals, row)]
    return tuple(totals)


@dataclass(frozen=True)
class InterventionSpec:
    """Shift ``delta`` of weight between domains ``i`` and ``j`` over two
    adjacent windows of length ``eps`` starting at ``t0``.

    ``order="ij"`` raises ``i`` in the first window and ``j`` in the second;
    ``order="ji"`` does the reverse. Indices are zero-based.
    """

    t0: object
    eps: object
    delta: object
    i: int = 0
    j: int = 1
    order: str = "ij"

    def __post_init__(self):
        if self.i == self.j:
            raise ArgumentError("intervention needs two distinct domains")
        if self.order not in ("ij", "ji"):
            raise ArgumentError(f"order must be 'ij' or 'ji', got {self.order!r}")
        if to_fraction(self.eps) <= 0:
            raise ArgumentError("eps must be positive")
        if to_fraction(self.delta) < 0:
            raise ArgumentError("delta must be non-negative")
        if to_fraction(self.t0) < 0:
            raise ArgumentError("t0 must be non-negative")

    @property
    def end(self) -> Fraction:
        return to_fraction(self.t0) + 2 * to_fraction(self.eps)

    def reversed(self) -> "InterventionSpec":
        return InterventionSpec(self.t0, self.eps, self.delta, self.i, self.j, "ji" if self.order == "ij" else "ij")


def swap_intervention(base: WeightSchedule, spec: InterventionSpec) -> WeightSchedule:
    """Budget-conserving reordering of ``base`` around ``spec.t0``."""
    t0, eps, delta = to_fraction(spec.t0), to_fraction(spec.eps), to_fraction(spec.delta)
    if max(spec.i, spec.j) >= base.k or min(spec.i, spec.j) < 0:
        raise ArgumentError(f"domain index out of range for {base.k} domains")
    mid, end = t0 + eps, t0 + 2 * eps
    first, second = (spec.i, spec.j) if spec.order == "ij" else (spec.j, spec.i)
    cuts = sorted(set(base.breakpoints) | {t0, mid, end})
    bps, ws = [], []
    for idx, start in enumerate(cuts):
        row = list(base.weights[base.segment_index(start)])
        if t0 <= start < end:
            up, down = (first, second) if start < mid else (second, first)
            row[up] += delta
            row[down] -= delta
            if row[down] < 0 or row[up] > 1:
                stop = cuts[idx + 1] if idx + 1 < len(cuts) else end
                raise ArgumentError(
                    f"intervention leaves the simplex on segment [{float(start)}, {float(stop)}): "
                    f"w_{down} - delta = {float(row[down]):.6g}"
                )
        bps.append(start)
        ws.append(row)
    return _canonical(WeightSchedule(bps, ws))
