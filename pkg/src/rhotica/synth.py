"""All-pole resonator synthesis.

Used to build signals whose formants are known exactly, and to generate the
synthetic rhoticity mini-corpus (one system with falling F3 across each
/r/ context, one with flat F3).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import align, find_rhotic_contrasts
from .corpus_io import Pcm, PhoneTiming, serialize_ctm, write_wav_file
from .phonemes import default_inventory


def resonator_poles(freqs, bandwidths, sample_rate: float) -> np.ndarray:
    """Upper-half-plane poles for resonances at ``freqs`` with ``bandwidths`` (Hz)."""
    f = np.asarray(freqs, dtype=float)
    bw = np.asarray(bandwidths, dtype=float)
    radius = np.exp(-math.pi * bw / sample_rate)
    return radius * np.exp(2j * math.pi * f / sample_rate)


def predictor_from_poles(poles) -> np.ndarray:
    """Predictor coefficients a[1..p] of the all-pole filter with ``poles``
    and their conjugates."""
    poles = np.asarray(poles)
    full = np.concatenate([poles, np.conj(poles)])
    return -np.real(np.poly(full))[1:]


def synthesize(freqs, bandwidths, excitation, sample_rate: float) -> np.ndarray:
    """Filter ``excitation`` through an all-pole resonator cascade.

    ``freqs``/``bandwidths`` are either one row of resonances (constant
    filter) or one row per sample (time-varying filter).
    """
    x = np.asarray(excitation, dtype=float)
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    bandwidths = np.atleast_2d(np.asarray(bandwidths, dtype=float))
    if freqs.shape[0] == 1:
        from scipy.signal import lfilter

        a = predictor_from_poles(resonator_poles(freqs[0], bandwidths[0], sample_rate))
        return lfilter([1.0], np.concatenate([[1.0], -a]), x)
    if freqs.shape[0] != len(x):
        raise ValueError("time-varying resonances need one row per excitation sample")
    order = 2 * freqs.shape[1]
    block = max(1, int(sample_rate // 1000))  # coefficients refreshed every ~1 ms
    y = np.zeros(len(x))
    hist = [0.0] * order  # y[n-1], y[n-2], ...
    a = None
    for n in range(len(x)):
        if n % block == 0:
            a = predictor_from_poles(resonator_poles(freqs[n], bandwidths[n], sample_rate)).tolist()
        v = x[n]
        for k in range(order):
            v += a[k] * hist[k]
        y[n] = v
        hist.pop()
        hist.insert(0, v)
    return y


def tilted_noise(n: int, rng: np.random.Generator, tilt: float = 0.97) -> np.ndarray:
    """White noise with a -6 dB/octave source tilt (one real pole at ``tilt``).

    The real pole adds no resonance, so the formants of a signal built from
    this source are exactly those of the resonator filter.
    """
    from scipy.signal import lfilter

    return lfilter([1.0], [1.0, -tilt], rng.standard_normal(n))


def normalize(signal: np.ndarray, peak: float = 0.5) -> np.ndarray:
    m = np.max(np.abs(signal))
    return signal if m == 0 else signal * (peak / m)


# ---------------------------------------------------------------------------
# Synthetic rhoticity corpus

# Short phrases whose rhotic rendering has /r/ after a vowel and before a
# consonant or the end of the phrase.
_PHRASES = [
    ("car park", "k A: p A: k", "k A: r p A: r k"),
    ("far card", "f A: k A: d", "f A: r k A: r d"),
    ("park bar", "p A: k b A:", "p A: r k b A: r"),
    ("hard tar", "h A: d t A:", "h A: r d t A: r"),
    ("dark barn", "d A: k b A: n", "d A: r k b A: r n"),
]

_VOWEL_FORMANTS = (750.0, 1250.0)  # F1, F2 for /A:/
_BANDWIDTHS = (90.0, 110.0, 130.0)


@dataclass(frozen=True)
class MiniCorpus:
    root: Path
    systems: dict  # system name -> {"wav_dir", "ctm", "contexts", "side"}


def _utterance_layout(rng: np.random.Generator, rhotic: list[str]) -> list[tuple[str, int]]:
    # durations in whole milliseconds so CTM times are exact and non-overlapping
    ranges = {"A:": (130, 170), "r": (70, 90)}
    return [(sym, int(rng.integers(*ranges.get(sym, (60, 90)), endpoint=True))) for sym in rhotic]


def make_rhotic_corpus(root: str | Path, n_utterances: int = 20, seed: int = 0,
                       sample_rate: int = 16000) -> MiniCorpus:
    """Write a two-system synthetic corpus for rhoticity analysis.

    ``falling``: F3 falls linearly across every vowel+/r/ span; its CTM
    follows the rhotic (en-US) phone sequence. ``flat``: F3 stays constant;
    its CTM follows the non-rhotic (en-GB) sequence and its /r/ time is
    folded into the preceding vowel. Both systems share utterance ids and
    context lists, so their slopes pair up context by context.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    gb, us = default_inventory("en-GB"), default_inventory("en-US")
    systems = {name: root / name for name in ("falling", "flat")}
    for d in systems.values():
        (d / "wav").mkdir(parents=True, exist_ok=True)

    contexts = []
    ctm = {"falling": [], "flat": []}
    for u in range(n_utterances):
        utt = f"utt{u:03d}"
        _, gb_text, us_text = _PHRASES[u % len(_PHRASES)]
        seq_gb, seq_us = gb.sequence(gb_text), us.sequence(us_text)
        ctxs = find_rhotic_contrasts(align(seq_gb, seq_us), seq_us, seq_gb, utterance_id=utt)
        contexts.extend(c.to_dict() for c in ctxs)

        layout = _utterance_layout(rng, us_text.split())
        lead_ms = 50
        bounds = []  # (symbol, start s, duration s)
        t_ms = lead_ms
        for sym, dur_ms in layout:
            bounds.append((sym, t_ms / 1000, dur_ms / 1000))
            t_ms += dur_ms
        total = int(math.ceil((t_ms + lead_ms) * sample_rate / 1000))
        f3_hi = rng.uniform(2500.0, 2700.0, size=len(ctxs))
        f3_lo = rng.uniform(1600.0, 1800.0, size=len(ctxs))

        for system in ("falling", "flat"):
            freqs = np.tile([*_VOWEL_FORMANTS, 2600.0], (total, 1))
            gate = np.zeros(total)
            for sym, start, dur in bounds:
                if sym in ("A:", "r"):
                    gate[int(round(start * sample_rate)):int(round((start + dur) * sample_rate))] = 1.0
            for c, hi, lo in zip(ctxs, f3_hi, f3_lo):
                _, s0, _ = bounds[c.rhotic_span[0]]
                _, s1, d1 = bounds[c.rhotic_span[1]]
                i0, i1 = int(round(s0 * sample_rate)), int(round((s1 + d1) * sample_rate))
                if system == "falling":
                    freqs[i0:i1, 2] = np.linspace(hi, lo, i1 - i0)
                else:
                    freqs[i0:i1, 2] = hi
            excitation = tilted_noise(total, rng) * gate
            bws = np.tile(_BANDWIDTHS, (total, 1))
            signal = normalize(synthesize(freqs, bws, excitation, sample_rate))
            write_wav_file(systems[system] / "wav" / f"{utt}.wav", Pcm(signal, sample_rate))

        for sym, start, dur in bounds:
            ctm["falling"].append(PhoneTiming(utt, sym, start, dur))
        # non-rhotic timing: each /r/ is absorbed by the vowel before it
        merged: list[list] = []
        for sym, start, dur in bounds:
            if sym == "r":
                merged[-1][2] = round(merged[-1][2] + dur, 3)
            else:
                merged.append([sym, start, dur])
        ctm["flat"].extend(PhoneTiming(utt, s, a, d) for s, a, d in merged)

    out = {}
    for system, side in (("falling", "rhotic"), ("flat", "nonrhotic")):
        d = systems[system]
        (d / "phones.ctm").write_text(serialize_ctm(ctm[system]))
        (d / "contexts.json").write_text(json.dumps(contexts, indent=1) + "\n")
        out[system] = {"wav_dir": d / "wav", "ctm": d / "phones.ctm",
                       "contexts": d / "contexts.json", "side": side}
    return MiniCorpus(root, out)
