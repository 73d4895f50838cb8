"""Per-context F3 slopes: contexts are located in time through the CTM phone
timings of each utterance, then tracked and reduced to slope statistics.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .alignment import RhoticContext
from .corpus_io import Pcm, PhoneTiming
from .errors import InsufficientDataError, RhoticaError
from .formants import FormantTrack, SlopeStat, TrackConfig, f3_slope, track_formants
from .phonemes import BOUNDARY_SYMBOLS

log = logging.getLogger(__name__)

RHOTIC_SIDE = "rhotic"
NONRHOTIC_SIDE = "nonrhotic"
# Non-phone labels forced aligners put between words.
SILENCE_SYMBOLS = frozenset({"sil", "SIL", "sp", "spn", "SPN", "<eps>", "<sil>", "NSN"})

SLOPE_FIELDS = ("context_id", "utterance", "kind", "start", "end", "ols_slope", "net_change", "n_frames")


def phone_sequence(timings: Sequence[PhoneTiming]) -> list[PhoneTiming]:
    """Timings of real phones only (silences and boundary marks removed)."""
    return [t for t in timings if t.symbol not in SILENCE_SYMBOLS and t.symbol not in BOUNDARY_SYMBOLS]


def context_time_span(context: RhoticContext, timings: Sequence[PhoneTiming],
                      side: str = RHOTIC_SIDE) -> tuple[float, float]:
    """Start and end time of a context in one utterance's phone timings.

    ``side`` says which frontend's phone sequence the timings follow.
    """
    phones = phone_sequence(timings)
    if side == RHOTIC_SIDE:
        lo, hi = context.rhotic_span
        expected = context.rhotic_symbols
    elif side == NONRHOTIC_SIDE:
        lo = hi = context.nonrhotic_index
        expected = (context.nonrhotic_symbol,) if context.nonrhotic_symbol else ()
    else:
        raise RhoticaError(f"side must be {RHOTIC_SIDE!r} or {NONRHOTIC_SIDE!r}, got {side!r}")
    if hi >= len(phones):
        raise RhoticaError(f"{context.context_id}: phone index {hi} beyond the {len(phones)} "
                           f"timed phones of {context.utterance_id!r}")
    got = tuple(t.symbol for t in phones[lo:hi + 1])
    if expected and got != tuple(expected):
        raise RhoticaError(f"{context.context_id}: timings give phones {got}, context expects {tuple(expected)}")
    return phones[lo].start, phones[hi].end


@dataclass(frozen=True)
class ContextSlope:
    context: RhoticContext
    start: float
    end: float
    track: FormantTrack
    slope: SlopeStat

    def record(self) -> dict:
        return {"context_id": self.context.context_id, "utterance": self.context.utterance_id,
                "kind": self.context.kind, "start": self.start, "end": self.end,
                "ols_slope": self.slope.ols_slope, "net_change": self.slope.net_change,
                "n_frames": self.slope.n_frames}


def context_slopes(audio: Mapping[str, Pcm], timings: Mapping[str, Sequence[PhoneTiming]],
                   contexts: Iterable[RhoticContext], side: str = RHOTIC_SIDE,
                   config: TrackConfig | None = None, workers: int = 1) -> tuple[list[ContextSlope], list[str]]:
    """Slopes for every context whose utterance has audio and timings.

    Returns the slopes (ordered by utterance id, then span) and a list of
    human-readable reasons for each skipped context. ``workers > 1`` tracks
    contexts in a thread pool; the result order does not change.
    """
    config = config or TrackConfig()
    todo, skipped = [], []
    for ctx in sorted(contexts, key=lambda c: (c.utterance_id, c.rhotic_span)):
        utt = ctx.utterance_id
        if utt not in audio or utt not in timings:
            skipped.append(f"{ctx.context_id}: no audio or timings for utterance {utt!r}")
            continue
        todo.append((ctx, context_time_span(ctx, timings[utt], side)))

    def measure(item):
        ctx, (start, end) = item
        track = track_formants(audio[ctx.utterance_id], (start, end), config, ctx.utterance_id)
        try:
            return ContextSlope(ctx, start, end, track, f3_slope(track, ctx.context_id))
        except InsufficientDataError as exc:
            return f"{ctx.context_id}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            measured = list(pool.map(measure, todo))
    else:
        measured = [measure(item) for item in todo]
    out = [m for m in measured if isinstance(m, ContextSlope)]
    skipped += [m for m in measured if isinstance(m, str)]
    for reason in skipped:
        log.warning("skipped context %s", reason)
    return out, skipped


def slopes_to_csv(records: Iterable[dict], header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.DictWriter(buf, fieldnames=SLOPE_FIELDS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})
    return buf.getvalue()


def slopes_from_csv(text: str) -> list[SlopeStat]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"ols_slope", "net_change", "n_frames"} <= set(reader.fieldnames):
        raise RhoticaError("slopes CSV needs ols_slope, net_change and n_frames columns")
    out = []
    for n, row in enumerate(reader, start=2):
        try:
            out.append(SlopeStat(float(row["ols_slope"]), float(row["net_change"]), int(row["n_frames"]),
                                 row.get("context_id") or None))
        except (TypeError, ValueError) as exc:
            raise RhoticaError(f"slopes CSV line {n}: {exc}") from None
    return out
