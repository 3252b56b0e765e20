"""Elementary cellular automata: rule decoding, evolution and rule triage.

Rows are numpy boolean arrays. Every update uses fixed-zero boundaries: the
cells just outside a row always read as 0. Neighbourhoods are addressed as
the 3-bit integer ``(left << 2) | (center << 1) | right``, so bit ``n`` of the
rule number is the next state for neighbourhood ``n`` (Wolfram numbering).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "Rule",
    "DynamicsTag",
    "DynamicsClass",
    "decode_rule",
    "encode_rule",
    "step_row",
    "evolve",
    "apply_rule_bitwise",
    "mirror_rule",
    "complement_rule",
    "rule_orbit",
    "symmetry_representatives",
    "classify_dynamics",
]


@dataclass(frozen=True)
class Rule:
    """An ECA rule: its number and the 8-entry truth table it encodes."""

    number: int
    table: tuple[bool, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.table) != 8:
            raise ValueError("rule table must have 8 entries")
        if encode_rule(self.table) != self.number:
            raise ValueError(f"table does not encode rule {self.number}")

    def lookup(self) -> np.ndarray:
        """Truth table as a uint8 array, indexable by neighbourhood codes."""
        return np.array(self.table, dtype=np.uint8)

    def __int__(self) -> int:
        return self.number


def encode_rule(table) -> int:
    return sum(1 << n for n, bit in enumerate(table) if bit)


@lru_cache(maxsize=256)
def decode_rule(number: int) -> Rule:
    """Return the rule whose table maps neighbourhood ``n`` to bit ``n`` of ``number``."""
    if isinstance(number, Rule):
        return number
    if isinstance(number, bool) or not isinstance(number, (int, np.integer)):
        raise TypeError(f"rule number must be an integer, got {type(number).__name__}")
    number = int(number)
    if not 0 <= number <= 255:
        raise ValueError(f"rule number must be in [0, 255], got {number}")
    return Rule(number, tuple(bool((number >> n) & 1) for n in range(8)))


def _as_rule(rule) -> Rule:
    return rule if isinstance(rule, Rule) else decode_rule(rule)


def step_row(row, rule) -> np.ndarray:
    """Advance one ECA step along the last axis.

    Leading axes are treated as independent rows, so a whole stack of rows
    (or a bitplane tensor) advances in a single call.
    """
    rule = _as_rule(rule)
    row = np.asarray(row, dtype=bool)
    if row.ndim == 0 or row.shape[-1] == 0:
        raise ValueError("row must be non-empty")
    cells = row.astype(np.uint8)
    left = np.zeros_like(cells)
    right = np.zeros_like(cells)
    left[..., 1:] = cells[..., :-1]
    right[..., :-1] = cells[..., 1:]
    code = (left << 2) | (cells << 1) | right
    return rule.lookup()[code].astype(bool)


def evolve(row, rule, steps: int) -> np.ndarray:
    """Spacetime diagram: ``steps + 1`` rows, the seed first."""
    rule = _as_rule(rule)
    out = [np.asarray(row, dtype=bool)]
    for _ in range(steps):
        out.append(step_row(out[-1], rule))
    return np.stack(out)


def apply_rule_bitwise(left: np.ndarray, center: np.ndarray, right: np.ndarray, rule) -> np.ndarray:
    """Evaluate a rule on packed unsigned lanes, one independent cell per bit.

    The result is the OR of the minterms selected by the truth table, which
    evaluates all bit positions of the operands at once.
    """
    rule = _as_rule(rule)
    if rule.number == 90:
        return left ^ right
    if rule.number == 150:
        return left ^ center ^ right
    out = np.zeros_like(center)
    for n, bit in enumerate(rule.table):
        if not bit:
            continue
        term = left if n & 4 else ~left
        term = term & (center if n & 2 else ~center)
        term = term & (right if n & 1 else ~right)
        out |= term
    return out


def mirror_rule(rule) -> Rule:
    """Left-right reflection: T'(a, b, c) = T(c, b, a)."""
    table = _as_rule(rule).table
    mirrored = []
    for n in range(8):
        a, b, c = (n >> 2) & 1, (n >> 1) & 1, n & 1
        mirrored.append(table[(c << 2) | (b << 1) | a])
    return decode_rule(encode_rule(mirrored))


def complement_rule(rule) -> Rule:
    """Black-white conjugation: T'(a, b, c) = not T(not a, not b, not c)."""
    table = _as_rule(rule).table
    return decode_rule(encode_rule([not table[7 - n] for n in range(8)]))


def rule_orbit(rule) -> frozenset[int]:
    rule = _as_rule(rule)
    return frozenset(
        r.number
        for r in (rule, mirror_rule(rule), complement_rule(rule), mirror_rule(complement_rule(rule)))
    )


def symmetry_representatives() -> list[Rule]:
    """Smallest rule number of each orbit under mirror and complement (88 rules)."""
    return [decode_rule(n) for n in range(256) if n == min(rule_orbit(n))]


class DynamicsTag(str, enum.Enum):
    VANISHING = "Vanishing"
    SHORT_PERIOD_NO_TRANSIENT = "ShortPeriodNoTransient"
    NONTRIVIAL = "Nontrivial"


@dataclass(frozen=True)
class DynamicsClass:
    tag: DynamicsTag
    transients: tuple[int, ...]
    periods: tuple[int | None, ...]  # None: no cycle found within max_steps
    vanished: tuple[bool, ...]

    @property
    def trivial(self) -> bool:
        return self.tag is not DynamicsTag.NONTRIVIAL


def _find_cycle(row: np.ndarray, rule: Rule, max_steps: int) -> tuple[int, int | None, np.ndarray]:
    """Return (transient length, period, cycle state) by exact state hashing."""
    seen = {row.tobytes(): 0}
    state = row
    for t in range(1, max_steps + 1):
        state = step_row(state, rule)
        key = state.tobytes()
        if key in seen:
            return seen[key], t - seen[key], state
        seen[key] = t
    return max_steps, None, state


def classify_dynamics(
    rule,
    width: int = 28,
    trials: int = 16,
    max_steps: int | None = None,
    seed: int = 0,
    transient_threshold: int = 2,
) -> DynamicsClass:
    """Triage a rule by evolving random rows until a state repeats.

    A rule is trivial when every trial settles within ``transient_threshold``
    steps into either the all-zero row (Vanishing) or a cycle of period at
    most 2 (ShortPeriodNoTransient). Anything else is Nontrivial, including
    rows that die out only after a longer transient.

    Random rows come from ``numpy.random.default_rng(seed)`` (PCG64), each
    cell on with probability 1/2.
    """
    rule = _as_rule(rule)
    if width < 3 or trials < 1:
        raise ValueError("need width >= 3 and trials >= 1")
    if max_steps is None:
        max_steps = min(2 ** min(width, 12), 4096)
    if max_steps < 4:
        raise ValueError("max_steps must be >= 4")

    rng = np.random.default_rng(seed)
    transients, periods, vanished = [], [], []
    for _ in range(trials):
        row = rng.integers(0, 2, size=width).astype(bool)
        mu, lam, state = _find_cycle(row, rule, max_steps)
        transients.append(mu)
        periods.append(lam)
        vanished.append(lam == 1 and not state.any())

    short = all(lam is not None and lam <= 2 and mu <= transient_threshold
                for mu, lam in zip(transients, periods))
    if short and all(vanished):
        tag = DynamicsTag.VANISHING
    elif short:
        tag = DynamicsTag.SHORT_PERIOD_NO_TRANSIENT
    else:
        tag = DynamicsTag.NONTRIVIAL
    return DynamicsClass(tag, tuple(transients), tuple(periods), tuple(vanished))
