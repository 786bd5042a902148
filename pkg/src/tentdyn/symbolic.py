"""Words and eventually periodic sequences over the alphabet {0, 1, C}.

Words are plain ``str`` objects over the characters ``"0"``, ``"1"`` and
``"C"``.  Infinite eventually periodic sequences are :class:`EPSeq` values
kept in canonical form, and :class:`SeqView` gives uniform prefix access to
either kind.  Every comparison carries an explicit depth; agreement up to
that depth is reported as :attr:`Order.EQ_TO_DEPTH`, never as equality.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "Symbol",
    "Parity",
    "Order",
    "EPSeq",
    "SeqView",
    "InsufficientPrefixError",
    "as_view",
    "validate_word",
    "parse_sequence",
    "format_sequence",
    "parity",
    "discrepancy",
    "plex_compare",
    "plex_compare_words",
    "shift",
    "find_segment",
    "metric",
]

ALPHABET = frozenset("01C")

# parity-lexicographic rank: 0 < C < 1
_RANK = {"0": 0, "C": 1, "1": 2}


class Symbol(str, Enum):
    ZERO = "0"
    CRIT = "C"
    ONE = "1"

    @property
    def rank(self) -> int:
        return _RANK[self.value]

    def __lt__(self, other):
        if isinstance(other, Symbol):
            return self.rank < other.rank
        return NotImplemented


class Parity(Enum):
    EVEN = 0
    ODD = 1


class Order(Enum):
    LT = "LT"
    GT = "GT"
    EQ_TO_DEPTH = "EQ_TO_DEPTH"


class InsufficientPrefixError(ValueError):
    """A sequence view does not know enough symbols for the request."""


def validate_word(word: str) -> str:
    bad = set(word) - ALPHABET
    if bad:
        raise ValueError(f"invalid symbols {sorted(bad)!r} in word {word!r}")
    return word


def _primitive_root(word: str) -> str:
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


@dataclass(frozen=True)
class EPSeq:
    """Eventually periodic sequence ``preperiod + period^inf`` in canonical form.

    Construction canonicalizes: the period is reduced to its primitive root
    and trailing preperiod symbols are absorbed into a rotated period.  Two
    values are therefore equal exactly when they denote the same sequence.
    """

    preperiod: str
    period: str

    def __post_init__(self):
        validate_word(self.preperiod)
        validate_word(self.period)
        if not self.period:
            raise ValueError("period must be non-empty")
        pre, per = self.preperiod, _primitive_root(self.period)
        while pre and pre[-1] == per[-1]:
            pre = pre[:-1]
            per = per[-1] + per[:-1]
        object.__setattr__(self, "preperiod", pre)
        object.__setattr__(self, "period", per)

    @classmethod
    def periodic(cls, period: str) -> "EPSeq":
        return cls("", period)

    def __getitem__(self, i: int) -> str:
        if i < 0:
            raise IndexError(i)
        pre = self.preperiod
        if i < len(pre):
            return pre[i]
        return self.period[(i - len(pre)) % len(self.period)]

    def prefix(self, n: int) -> str:
        pre, per = self.preperiod, self.period
        if n <= len(pre):
            return pre[:n]
        rest = n - len(pre)
        reps = -(-rest // len(per))
        return pre + (per * reps)[:rest]

    def shift(self, n: int) -> "EPSeq":
        pre, per = self.preperiod, self.period
        if n <= len(pre):
            return EPSeq(pre[n:], per)
        r = (n - len(pre)) % len(per)
        return EPSeq("", per[r:] + per[:r])

    @property
    def is_periodic(self) -> bool:
        return not self.preperiod

    def __str__(self) -> str:
        return f"{self.preperiod}({self.period})"


@dataclass(frozen=True)
class SeqView:
    """Uniform prefix access to an :class:`EPSeq` or a finite word.

    A finite word is treated as the known prefix of a sequence whose tail is
    unknown; ``known_length`` is ``math.inf`` for exact sequences.
    """

    source: EPSeq | str

    @property
    def known_length(self) -> float:
        if isinstance(self.source, EPSeq):
            return math.inf
        return len(self.source)

    @property
    def is_exact(self) -> bool:
        return isinstance(self.source, EPSeq)

    def __getitem__(self, i: int) -> str:
        if i >= self.known_length:
            raise InsufficientPrefixError(f"position {i} beyond known length {self.known_length}")
        return self.source[i]

    def prefix(self, n: int) -> str:
        if n > self.known_length:
            raise InsufficientPrefixError(f"prefix {n} beyond known length {self.known_length}")
        if isinstance(self.source, EPSeq):
            return self.source.prefix(n)
        return self.source[:n]

    def shift(self, n: int) -> "SeqView":
        if n > self.known_length:
            raise InsufficientPrefixError(f"shift {n} beyond known length {self.known_length}")
        if isinstance(self.source, EPSeq):
            return SeqView(self.source.shift(n))
        return SeqView(self.source[n:])

    def __str__(self) -> str:
        return str(self.source)


def as_view(s) -> SeqView:
    if isinstance(s, SeqView):
        return s
    if isinstance(s, EPSeq):
        return SeqView(s)
    if isinstance(s, str):
        return SeqView(validate_word(s))
    raise TypeError(f"cannot view {type(s).__name__} as a symbol sequence")


_SEQ_RE = re.compile(r"^([01C]*)(?:\(([01C]*)\))?$")


def parse_sequence(text: str) -> EPSeq | str:
    """Parse ``PRE(PERIOD)`` into an :class:`EPSeq`; a bare word stays a word."""
    m = _SEQ_RE.match(text.strip())
    if not m:
        raise ValueError(f"malformed sequence text {text!r}")
    pre, per = m.group(1), m.group(2)
    if per is None:
        return pre
    if not per:
        raise ValueError(f"empty period in {text!r}")
    return EPSeq(pre, per)


def format_sequence(s) -> str:
    if isinstance(s, SeqView):
        s = s.source
    return str(s)


def parity(word: str) -> Parity:
    return Parity.ODD if word.count("1") % 2 else Parity.EVEN


def _first_difference(a: str, b: str) -> int | None:
    if a == b:
        return None
    # bisect on prefix equality; slices compare in C
    lo, hi = 0, min(len(a), len(b))
    if a[:hi] == b[:hi]:
        return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if a[:mid] == b[:mid]:
            lo = mid
        else:
            hi = mid
    return lo


def discrepancy(s, t, depth: int) -> int | None:
    """Least ``k < depth`` with ``s[k] != t[k]``, or ``None`` if none exists."""
    a = as_view(s).prefix(depth)
    b = as_view(t).prefix(depth)
    return _first_difference(a, b)


def plex_compare_words(a: str, b: str) -> tuple[Order, int | None]:
    """Compare two equal-length words; returns the order and the discrepancy."""
    k = _first_difference(a, b)
    if k is None:
        return Order.EQ_TO_DEPTH, None
    below = _RANK[a[k]] < _RANK[b[k]]
    if a.count("1", 0, k) % 2:
        below = not below
    return (Order.LT if below else Order.GT), k


def plex_compare(s, t, depth: int) -> Order:
    """Parity-lexicographic comparison of the first ``depth`` symbols."""
    a = as_view(s).prefix(depth)
    b = as_view(t).prefix(depth)
    return plex_compare_words(a, b)[0]


def shift(s, n: int):
    """Drop the first ``n`` symbols; keeps the input's kind."""
    if isinstance(s, EPSeq):
        return s.shift(n)
    if isinstance(s, str):
        if n > len(s):
            raise InsufficientPrefixError(f"shift {n} beyond word length {len(s)}")
        return s[n:]
    return as_view(s).shift(n)


def find_segment(needle: str, hay, start: int, horizon: int) -> list[int]:
    """Start positions ``p`` with ``start <= p <= horizon - len(needle)``."""
    text = as_view(hay).prefix(horizon)
    out = []
    p = text.find(needle, start)
    while p != -1 and p + len(needle) <= horizon:
        out.append(p)
        p = text.find(needle, p + 1)
    return out


def metric(s, t, depth: int) -> float:
    """Symbolic distance ``2**-k``; zero when the sequences agree to ``depth``."""
    k = discrepancy(s, t, depth)
    return 0.0 if k is None else 2.0 ** -k
