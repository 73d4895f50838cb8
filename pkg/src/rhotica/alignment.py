"""DTW alignment of phoneme sequences from two G2P frontends, and detection
of rhotic-contrast sites on the resulting path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import RhoticaError
from .phonemes import CostConfig, Phoneme, phoneme_distance

log = logging.getLogger(__name__)

DIAGONAL = (1, 1)
ADVANCE_B = (0, 1)
ADVANCE_A = (1, 0)
# traceback preference on equal cost
_STEP_ORDER = (DIAGONAL, ADVANCE_B, ADVANCE_A)

R_INSERTION = "r_insertion"
RHOTACIZED_VOWEL = "rhotacized_vowel"


@dataclass(frozen=True)
class AlignmentPath:
    steps: tuple[tuple[int, int], ...]
    total_cost: float

    def moves(self) -> list[tuple[int, int]]:
        """Step increment arriving at each path cell; the start counts as diagonal."""
        out = [DIAGONAL]
        for (i0, j0), (i1, j1) in zip(self.steps, self.steps[1:]):
            out.append((i1 - i0, j1 - j0))
        return out

    def to_dict(self) -> dict:
        return {"steps": [list(s) for s in self.steps], "total_cost": self.total_cost}


def path_cost(steps: Sequence[tuple[int, int]], seq_a: Sequence[Phoneme], seq_b: Sequence[Phoneme],
              cfg: CostConfig | None = None) -> float:
    """Recompute a path's cost: substitution cost on diagonal moves, indel otherwise."""
    cfg = cfg or CostConfig()
    terms = []
    prev = None
    for i, j in steps:
        if prev is None or (i - prev[0], j - prev[1]) == DIAGONAL:
            terms.append(phoneme_distance(seq_a[i], seq_b[j], cfg))
        else:
            terms.append(cfg.indel_cost)
        prev = (i, j)
    return math.fsum(terms)


def _to_integers(values: list[float]) -> tuple[list[int], int]:
    # Rescale floats onto a shared power-of-two denominator; sums become exact.
    fracs = [Fraction(v) for v in values]
    den = max(f.denominator for f in fracs)
    return [f.numerator * (den // f.denominator) for f in fracs], den


def align(seq_a: Sequence[Phoneme], seq_b: Sequence[Phoneme], cfg: CostConfig | None = None) -> AlignmentPath:
    """Globally align two phoneme sequences with DTW.

    Moves are (1,1), (0,1) and (1,0). A diagonal move into cell (i, j) costs
    the phoneme distance of that pair; the other two moves cost
    ``cfg.indel_cost``. Costs are accumulated exactly, so equal-cost paths
    are genuinely tied and the traceback preference (diagonal, then advancing
    ``seq_b``, then advancing ``seq_a``) decides deterministically.
    """
    cfg = cfg or CostConfig()
    n, m = len(seq_a), len(seq_b)
    if n == 0 or m == 0:
        raise RhoticaError("cannot align an empty phoneme sequence")

    flat = [phoneme_distance(a, b, cfg) for a in seq_a for b in seq_b]
    ints, den = _to_integers(flat + [cfg.indel_cost])
    indel = ints[-1]
    sub = [ints[i * m:(i + 1) * m] for i in range(n)]

    acc = [[0] * m for _ in range(n)]
    for i in range(n):
        row, sub_row = acc[i], sub[i]
        prev_row = acc[i - 1] if i else None
        for j in range(m):
            if i == 0 and j == 0:
                row[j] = sub_row[0]
                continue
            best = None
            if i and j:
                best = prev_row[j - 1] + sub_row[j]
            if j:
                c = row[j - 1] + indel
                best = c if best is None or c < best else best
            if i:
                c = prev_row[j] + indel
                best = c if best is None or c < best else best
            row[j] = best

    steps = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        for di, dj in _STEP_ORDER:
            pi, pj = i - di, j - dj
            if pi < 0 or pj < 0:
                continue
            cost = sub[i][j] if (di, dj) == DIAGONAL else indel
            if acc[pi][pj] + cost == acc[i][j]:
                i, j = pi, pj
                break
        else:  # pragma: no cover - the DP recurrence guarantees a predecessor
            raise AssertionError("traceback lost the optimal path")
        steps.append((i, j))
    steps.reverse()
    return AlignmentPath(steps=tuple(steps), total_cost=acc[-1][-1] / den)


@dataclass(frozen=True)
class RhoticContext:
    kind: str
    rhotic_span: tuple[int, int]  # inclusive indices into the rhotic-side sequence
    nonrhotic_index: int
    utterance_id: str = ""
    rhotic_symbols: tuple[str, ...] = ()
    nonrhotic_symbol: str = ""

    def __post_init__(self):
        lo, hi = self.rhotic_span
        if lo < 0 or hi < lo:
            raise RhoticaError(f"invalid span {self.rhotic_span}")
        if self.kind not in (R_INSERTION, RHOTACIZED_VOWEL):
            raise RhoticaError(f"unknown context kind {self.kind!r}")
        if self.kind == RHOTACIZED_VOWEL and lo != hi:
            raise RhoticaError("a rhotacized-vowel context spans exactly one phoneme")

    @property
    def context_id(self) -> str:
        return f"{self.utterance_id}:{self.rhotic_span[0]}-{self.rhotic_span[1]}"

    def to_dict(self) -> dict:
        return {"utterance": self.utterance_id, "kind": self.kind,
                "rhotic_span": list(self.rhotic_span), "nonrhotic_index": self.nonrhotic_index,
                "rhotic_symbols": list(self.rhotic_symbols), "nonrhotic_symbol": self.nonrhotic_symbol}

    @classmethod
    def from_dict(cls, d: dict) -> "RhoticContext":
        try:
            return cls(kind=d["kind"], rhotic_span=(int(d["rhotic_span"][0]), int(d["rhotic_span"][1])),
                       nonrhotic_index=int(d["nonrhotic_index"]), utterance_id=str(d.get("utterance", "")),
                       rhotic_symbols=tuple(d.get("rhotic_symbols", ())),
                       nonrhotic_symbol=d.get("nonrhotic_symbol", ""))
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise RhoticaError(f"malformed context record {d!r}: {exc}") from None


def find_rhotic_contrasts(path: AlignmentPath, seq_rhotic: Sequence[Phoneme], seq_nonrhotic: Sequence[Phoneme],
                          *, rhotic_first: bool = False, utterance_id: str = "") -> list[RhoticContext]:
    """Locate /r/ insertions and rhotacized vowels on an alignment path.

    ``rhotic_first`` says whether the path's first index runs over
    ``seq_rhotic`` (i.e. the path came from ``align(seq_rhotic, seq_nonrhotic)``).
    """
    len_first, len_second = ((len(seq_rhotic), len(seq_nonrhotic)) if rhotic_first
                             else (len(seq_nonrhotic), len(seq_rhotic)))
    if path.steps[0] != (0, 0) or path.steps[-1] != (len_first - 1, len_second - 1):
        raise RhoticaError("alignment path does not span the given sequences; check rhotic_first")
    if not any(ph.rhotic for ph in seq_rhotic):
        log.warning("utterance %r: rhotic-side sequence has no rhotic phoneme; "
                    "is the side declaration swapped?", utterance_id)
        return []

    rhotic_move = ADVANCE_A if rhotic_first else ADVANCE_B
    found: dict[tuple[int, int], RhoticContext] = {}
    for (x, y), move in zip(path.steps, path.moves()):
        r, nr = (x, y) if rhotic_first else (y, x)
        ph, other = seq_rhotic[r], seq_nonrhotic[nr]
        if move == rhotic_move:
            if ph.rhotic and not ph.is_vowel and other.is_vowel and r > 0 and seq_rhotic[r - 1].is_vowel \
                    and (r + 1 == len(seq_rhotic) or not seq_rhotic[r + 1].is_vowel):
                span = (r - 1, r)
                found.setdefault(span, RhoticContext(
                    R_INSERTION, span, nr, utterance_id,
                    (seq_rhotic[r - 1].symbol, ph.symbol), other.symbol))
        elif move == DIAGONAL:
            if ph.is_vowel and ph.rhotic and other.is_vowel and not other.rhotic:
                span = (r, r)
                found.setdefault(span, RhoticContext(
                    RHOTACIZED_VOWEL, span, nr, utterance_id, (ph.symbol,), other.symbol))
    return [found[k] for k in sorted(found)]
