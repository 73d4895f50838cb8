"""Readers and writers for the external formats: CTM phone timings, WAV
audio, corpus manifests and listening-test score tables.

All parsers are all-or-nothing: they either return a complete value or raise.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParseError, ValidationError

# ---------------------------------------------------------------------------
# CTM


@dataclass(frozen=True)
class PhoneTiming:
    utterance_id: str
    symbol: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


# Tolerance for touching intervals written with limited precision.
_OVERLAP_EPS = 1e-9


def parse_ctm(text: str) -> list[PhoneTiming]:
    """Parse phone-level CTM lines ``<utt> <channel> <start> <dur> <symbol>``.

    Blank lines and ``;;`` comments are skipped; extra trailing fields (e.g. a
    confidence) are ignored. Output is grouped by utterance in order of first
    appearance and sorted by start time within each utterance.
    """
    by_utt: dict[str, list[PhoneTiming]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(";;"):
            continue
        fields = stripped.split()
        if len(fields) < 5:
            raise ParseError(f"expected 5 fields, got {len(fields)}", f"line {lineno}")
        utt, _channel, start_s, dur_s, symbol = fields[:5]
        try:
            start, dur = float(start_s), float(dur_s)
        except ValueError:
            raise ParseError(f"non-numeric start/duration {start_s!r} {dur_s!r}", f"line {lineno}") from None
        if not (math.isfinite(start) and math.isfinite(dur)):
            raise ParseError("start and duration must be finite", f"line {lineno}")
        if start < 0:
            raise ParseError(f"negative start {start}", f"line {lineno}")
        if dur <= 0:
            raise ParseError(f"non-positive duration {dur}", f"line {lineno}")
        by_utt.setdefault(utt, []).append(PhoneTiming(utt, symbol, start, dur))

    out = []
    for utt, items in by_utt.items():
        items.sort(key=lambda t: t.start)
        for prev, cur in zip(items, items[1:]):
            if cur.start < prev.end - _OVERLAP_EPS:
                raise ParseError(f"overlapping intervals in utterance {utt!r}: "
                                 f"{prev.symbol}@{prev.start} and {cur.symbol}@{cur.start}")
        out.extend(items)
    return out


def serialize_ctm(timings: Iterable[PhoneTiming], channel: str = "1") -> str:
    return "".join(f"{t.utterance_id} {channel} {t.start!r} {t.duration!r} {t.symbol}\n" for t in timings)


def group_timings(timings: Iterable[PhoneTiming]) -> dict[str, list[PhoneTiming]]:
    grouped: dict[str, list[PhoneTiming]] = {}
    for t in timings:
        grouped.setdefault(t.utterance_id, []).append(t)
    return grouped


# ---------------------------------------------------------------------------
# WAV

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class Pcm:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError("only mono audio is supported")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        return (isinstance(other, Pcm) and self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))


def read_wav(data: bytes) -> Pcm:
    """Decode a mono RIFF/WAVE file holding PCM16 or float32 samples.

    PCM16 is scaled by 1/32768, so -32768 maps to exactly -1.0.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ParseError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise ParseError(f"truncated {chunk_id.decode('latin-1')!r} chunk "
                             f"({len(body)} of {size} bytes)")
        if chunk_id == b"fmt ":
            if size < 16:
                raise ParseError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _FMT_EXTENSIBLE:
                if size < 40:
                    raise ParseError("extensible fmt chunk too short")
                # first two bytes of the sub-format GUID carry the real codec
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise ParseError("missing fmt chunk")
    if payload is None:
        raise ParseError("missing data chunk (truncated file?)")

    codec, channels, rate, _byte_rate, block_align, bits = fmt
    if channels != 1:
        raise ParseError(f"expected mono audio, got {channels} channels")
    if codec == _FMT_PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif codec == _FMT_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise ParseError(f"unsupported codec {codec} with {bits} bits; need PCM16 or float32")
    if len(payload) % block_align:
        raise ParseError("truncated data chunk (partial sample frame)")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    if codec == _FMT_FLOAT:
        samples = np.clip(samples, -1.0, 1.0)
    return Pcm(samples, rate)


def read_wav_file(path: str | Path) -> Pcm:
    return read_wav(Path(path).read_bytes())


def write_wav(pcm: Pcm, *, float32: bool = False) -> bytes:
    """Encode mono audio as PCM16 (default) or float32 WAV bytes."""
    samples = np.clip(pcm.samples, -1.0, 1.0)
    if float32:
        payload = samples.astype("<f4").tobytes()
        header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
                             b"fmt ", 16, _FMT_FLOAT, 1, pcm.sample_rate, pcm.sample_rate * 4, 4, 32,
                             b"data", len(payload))
        return header + payload
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(pcm.sample_rate)
        w.writeframes(ints.tobytes())
    return buf.getvalue()


def write_wav_file(path: str | Path, pcm: Pcm, **kwargs) -> None:
    Path(path).write_bytes(write_wav(pcm, **kwargs))


# ---------------------------------------------------------------------------
# Corpus manifest


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    audio: str
    text: str = ""


@dataclass(frozen=True)
class Speaker:
    speaker_id: str
    accent: str
    utterances: tuple[Utterance, ...] = ()


@dataclass(frozen=True)
class CorpusManifest:
    speakers: tuple[Speaker, ...]
    donor: str
    target_accent: str

    def __post_init__(self):
        problems = _manifest_problems(self)
        if problems:
            raise ValidationError(problems)

    def speaker(self, speaker_id: str) -> Speaker:
        for spk in self.speakers:
            if spk.speaker_id == speaker_id:
                return spk
        raise KeyError(speaker_id)

    @property
    def donor_speaker(self) -> Speaker:
        return self.speaker(self.donor)


def _manifest_problems(m: CorpusManifest) -> list[str]:
    problems = []
    ids = [s.speaker_id for s in m.speakers]
    for sid in sorted({s for s in ids if ids.count(s) > 1}):
        problems.append(f"duplicate speaker id {sid!r}")
    by_id = {s.speaker_id: s for s in m.speakers}
    if m.donor not in by_id:
        problems.append(f"donor {m.donor!r} is not a listed speaker")
    elif by_id[m.donor].accent == m.target_accent:
        problems.append(f"donor {m.donor!r} already has the target accent {m.target_accent!r}")
    for spk in m.speakers:
        utt_ids = [u.utterance_id for u in spk.utterances]
        seen = set()
        for uid in utt_ids:
            if uid in seen:
                problems.append(f"speaker {spk.speaker_id!r}: duplicate utterance id {uid!r}")
            seen.add(uid)
    return problems


def parse_manifest(text: str) -> CorpusManifest:
    """Parse a corpus manifest.

    Schema::

        {"donor": str, "target_accent": str,
         "speakers": [{"id": str, "accent": str,
                       "utterances": [{"id": str, "audio": str, "text": str}]}]}
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    problems = []
    if not isinstance(doc, dict):
        raise ParseError("manifest must be a JSON object")
    for key in ("donor", "target_accent"):
        if not isinstance(doc.get(key), str) or not doc.get(key):
            problems.append(f"{key}: missing or not a string")
    raw_speakers = doc.get("speakers")
    if not isinstance(raw_speakers, list):
        problems.append("speakers: missing or not a list")
        raw_speakers = []
    speakers = []
    for i, raw in enumerate(raw_speakers):
        loc = f"speakers[{i}]"
        if not isinstance(raw, dict):
            problems.append(f"{loc}: not an object")
            continue
        if not isinstance(raw.get("id"), str) or not isinstance(raw.get("accent"), str):
            problems.append(f"{loc}: id and accent must be strings")
            continue
        utts = []
        for k, u in enumerate(raw.get("utterances", [])):
            if not isinstance(u, dict) or not isinstance(u.get("id"), str) \
                    or not isinstance(u.get("audio"), str):
                problems.append(f"{loc}.utterances[{k}]: id and audio must be strings")
                continue
            utts.append(Utterance(u["id"], u["audio"], str(u.get("text", ""))))
        speakers.append(Speaker(raw["id"], raw["accent"], tuple(utts)))
    if problems:
        raise ValidationError(problems)
    return CorpusManifest(tuple(speakers), doc["donor"], doc["target_accent"])


def manifest_to_dict(m: CorpusManifest) -> dict:
    return {
        "donor": m.donor,
        "target_accent": m.target_accent,
        "speakers": [{"id": s.speaker_id, "accent": s.accent,
                      "utterances": [{"id": u.utterance_id, "audio": u.audio, "text": u.text}
                                     for u in s.utterances]}
                     for s in m.speakers],
    }


def serialize_manifest(m: CorpusManifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=1, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Listening-test scores

MUSHRA = "mushra"
PREFERENCE = "preference"
PREFERENCE_CHOICES = ("A", "B", "tie")
SCORE_HEADER = ("listener", "testcase", "system", "score")


@dataclass(frozen=True)
class ScoreRow:
    listener: str
    testcase: str
    system: str
    score: float | str  # float for MUSHRA, one of PREFERENCE_CHOICES otherwise


@dataclass(frozen=True)
class ScoreTable:
    rows: tuple[ScoreRow, ...]
    kind: str = MUSHRA

    def __post_init__(self):
        problems = []
        if self.kind not in (MUSHRA, PREFERENCE):
            problems.append(f"unknown score table kind {self.kind!r}")
        seen = set()
        for n, row in enumerate(self.rows, start=1):
            key = (row.listener, row.testcase, row.system)
            if key in seen:
                problems.append(f"row {n}: duplicate (listener, testcase, system) {key}")
            seen.add(key)
            if self.kind == MUSHRA:
                if isinstance(row.score, str) or not 0.0 <= row.score <= 100.0:
                    problems.append(f"row {n}: MUSHRA score {row.score!r} outside [0, 100]")
            elif row.score not in PREFERENCE_CHOICES:
                problems.append(f"row {n}: preference must be one of {PREFERENCE_CHOICES}, got {row.score!r}")
        if problems:
            raise ValidationError(problems)

    @property
    def systems(self) -> list[str]:
        return sorted({r.system for r in self.rows})

    def __len__(self):
        return len(self.rows)


def _preference_choice(value: str) -> str | None:
    v = value.strip()
    for choice in PREFERENCE_CHOICES:
        if v.lower() == choice.lower():
            return choice
    return None


def parse_scores(text: str, kind: str | None = None) -> ScoreTable:
    """Parse a ``listener,testcase,system,score`` CSV.

    With ``kind=None`` the table is a preference table when every score is
    A/B/tie, otherwise MUSHRA. Lines starting with ``#`` are ignored.
    """
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != SCORE_HEADER:
        raise ParseError(f"header must be exactly {','.join(SCORE_HEADER)!r}, got {header!r}", "line 1")
    raw = []
    problems = []
    for n, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 4:
            problems.append(f"line {n}: expected 4 fields, got {len(rec)}")
            continue
        raw.append((n, [f.strip() for f in rec]))
    if problems:
        raise ValidationError(problems)

    if kind is None:
        prefs = [_preference_choice(rec[3]) for _, rec in raw]
        kind = PREFERENCE if raw and all(prefs) else MUSHRA

    rows = []
    for n, (listener, testcase, system, score) in raw:
        if kind == PREFERENCE:
            value = _preference_choice(score)
            if value is None:
                problems.append(f"line {n}: preference must be A, B or tie, got {score!r}")
                continue
        else:
            try:
                value = float(score)
            except ValueError:
                problems.append(f"line {n}: non-numeric score {score!r}")
                continue
            if not 0.0 <= value <= 100.0:
                problems.append(f"line {n}: score {value} out of range [0, 100]")
                continue
        rows.append(ScoreRow(listener, testcase, system, value))
    if problems:
        raise ValidationError(problems)
    return ScoreTable(tuple(rows), kind)


def serialize_scores(table: ScoreTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for r in table.rows:
        w.writerow([r.listener, r.testcase, r.system,
                    r.score if isinstance(r.score, str) else repr(float(r.score))])
    return buf.getvalue()
