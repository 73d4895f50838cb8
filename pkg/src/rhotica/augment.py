"""Voice-conversion augmentation planning.

Target-accent recordings are converted to the donor voice by an external VC
model; this module plans those jobs, drives the model through a command
template, and assembles the combined recordings+synthetic training manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
import shlex
import shutil
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus_io import CorpusManifest
from .errors import RhoticaError, ValidationError

RECORDING = "recording"
SYNTHETIC = "synthetic"
PLACEHOLDERS = ("{input}", "{output}", "{donor}")


@dataclass(frozen=True)
class VcJob:
    job_id: str
    source_speaker: str
    utterance_id: str
    audio_path: str
    donor: str
    output_path: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "VcJob":
        try:
            job = cls(**{k: str(d[k]) for k in ("job_id", "source_speaker", "utterance_id",
                                                 "audio_path", "donor", "output_path")})
        except KeyError as exc:
            raise RhoticaError(f"job record missing {exc.args[0]!r}") from None
        if job.job_id != job_id(job.source_speaker, job.utterance_id, job.donor):
            raise RhoticaError(f"job {job.job_id!r}: id does not match its content")
        return job


def job_id(source_speaker: str, utterance_id: str, donor: str) -> str:
    digest = hashlib.sha256("\x1f".join((source_speaker, utterance_id, donor)).encode("utf-8"))
    return digest.hexdigest()[:16]


def plan_vc_jobs(manifest: CorpusManifest, source_speakers: Sequence[str] | None = None) -> list[VcJob]:
    """One conversion job per utterance of the chosen target-accent speakers.

    By default only the first target-accent speaker (in id order) is used.
    Jobs are ordered by (speaker id, utterance id).
    """
    target = [s for s in manifest.speakers if s.accent == manifest.target_accent]
    if source_speakers is None:
        if not target:
            raise ValidationError(f"no speaker has the target accent {manifest.target_accent!r}")
        chosen = [min(target, key=lambda s: s.speaker_id)]
    else:
        problems = []
        chosen = []
        known = {s.speaker_id: s for s in manifest.speakers}
        for sid in dict.fromkeys(source_speakers):
            spk = known.get(sid)
            if spk is None:
                problems.append(f"source speaker {sid!r} not in manifest")
            elif spk.accent != manifest.target_accent:
                problems.append(f"source speaker {sid!r} has accent {spk.accent!r}, "
                                f"not the target {manifest.target_accent!r}")
            else:
                chosen.append(spk)
        if problems:
            raise ValidationError(problems)

    jobs = []
    for spk in sorted(chosen, key=lambda s: s.speaker_id):
        for utt in sorted(spk.utterances, key=lambda u: u.utterance_id):
            jobs.append(VcJob(
                job_id=job_id(spk.speaker_id, utt.utterance_id, manifest.donor),
                source_speaker=spk.speaker_id,
                utterance_id=utt.utterance_id,
                audio_path=utt.audio,
                donor=manifest.donor,
                output_path=f"vc/{manifest.donor}/{spk.speaker_id}/{utt.utterance_id}.wav",
            ))
    return jobs


def dump_jsonl(records: Iterable) -> str:
    return "".join((r.to_json() if hasattr(r, "to_json") else json.dumps(r, sort_keys=True)) + "\n"
                   for r in records)


def load_jobs(text: str) -> list[VcJob]:
    jobs = []
    for n, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            try:
                jobs.append(VcJob.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise RhoticaError(f"line {n}: {exc}") from None
    return jobs


# ---------------------------------------------------------------------------
# Training manifest


@dataclass(frozen=True)
class TrainingEntry:
    speaker: str
    accent: str
    utterance_id: str
    audio_path: str
    origin: str


@dataclass(frozen=True)
class TrainingManifest:
    entries: tuple[TrainingEntry, ...]
    donor: str
    target_accent: str

    def __len__(self):
        return len(self.entries)

    def totals(self) -> dict[str, dict[str, int]]:
        """Entry counts per accent, split by origin."""
        out: dict[str, dict[str, int]] = {}
        for e in self.entries:
            bucket = out.setdefault(e.accent, {RECORDING: 0, SYNTHETIC: 0})
            bucket[e.origin] += 1
        return {k: out[k] for k in sorted(out)}

    def donor_voice_count(self) -> int:
        return sum(e.speaker == self.donor for e in self.entries)

    def to_jsonl(self) -> str:
        return dump_jsonl(asdict(e) for e in self.entries)


def build_tts_corpus(manifest: CorpusManifest, completed_jobs: Sequence[VcJob],
                     output_root: str | Path | None = None) -> TrainingManifest:
    """All recordings plus one synthetic donor-voice entry per completed job.

    With ``output_root`` set, every job's output file must exist under it.
    """
    problems = []
    seen = set()
    for job in completed_jobs:
        if job.donor != manifest.donor:
            problems.append(f"job {job.job_id}: donor {job.donor!r} differs from manifest donor")
        if job.job_id in seen:
            problems.append(f"job {job.job_id}: listed twice")
        seen.add(job.job_id)
    if output_root is not None:
        root = Path(output_root)
        missing = [j.job_id for j in completed_jobs if not (root / j.output_path).is_file()]
        if missing:
            problems.append(f"missing output for job(s): {', '.join(missing)}")
    if problems:
        raise ValidationError(problems)

    entries = [TrainingEntry(spk.speaker_id, spk.accent, u.utterance_id, u.audio, RECORDING)
               for spk in manifest.speakers for u in spk.utterances]
    entries += [TrainingEntry(manifest.donor, manifest.target_accent,
                              f"{j.source_speaker}/{j.utterance_id}", j.output_path, SYNTHETIC)
                for j in completed_jobs]
    return TrainingManifest(tuple(entries), manifest.donor, manifest.target_accent)


# ---------------------------------------------------------------------------
# Adapter execution


@dataclass(frozen=True)
class JobStatus:
    job_id: str
    ok: bool
    exit_code: int | None
    error: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def check_template(template: str) -> list[str]:
    missing = [p for p in PLACEHOLDERS if p not in template]
    if missing:
        raise ValidationError(f"adapter template lacks placeholder(s) {', '.join(missing)}")
    argv = shlex.split(template)
    if not argv:
        raise ValidationError("adapter template is empty")
    return argv


def _run_one(argv_template: list[str], job: VcJob, input_root: Path, output_root: Path,
             timeout: float | None) -> JobStatus:
    src = input_root / job.audio_path
    dst = output_root / job.output_path
    dst.parent.mkdir(parents=True, exist_ok=True)
    values = {"{input}": str(src), "{output}": str(dst), "{donor}": job.donor}
    argv = []
    for token in argv_template:
        for key, value in values.items():
            token = token.replace(key, value)
        argv.append(token)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        return JobStatus(job.job_id, False, None, f"timed out after {timeout} s")
    except OSError as exc:
        return JobStatus(job.job_id, False, None, str(exc))
    if proc.returncode != 0:
        return JobStatus(job.job_id, False, proc.returncode, proc.stderr.strip()[-500:])
    if not dst.is_file():
        return JobStatus(job.job_id, False, 0, "adapter exited 0 but wrote no output")
    return JobStatus(job.job_id, True, 0)


def run_adapter(jobs: Sequence[VcJob], adapter: str, parallelism: int | None = None,
                input_root: str | Path = ".", output_root: str | Path = ".",
                timeout: float | None = None) -> list[JobStatus]:
    """Run the external VC command once per job.

    ``adapter`` is a command template with ``{input}``, ``{output}`` and
    ``{donor}`` placeholders; it is split shell-style and executed without a
    shell. A job succeeds when the command exits 0 and the output file
    exists. Failures do not stop the batch. Statuses come back in the order
    of ``jobs`` whatever the completion order.
    """
    argv = check_template(adapter)
    if shutil.which(argv[0]) is None:
        raise ValidationError(f"adapter executable {argv[0]!r} not found")
    parallelism = parallelism or os.cpu_count() or 1
    if parallelism < 1:
        raise ValidationError("parallelism must be at least 1")
    outputs = [j.output_path for j in jobs]
    if len(set(outputs)) != len(outputs):
        raise ValidationError("two jobs share an output path")
    input_root, output_root = Path(input_root), Path(output_root)
    if parallelism == 1:
        return [_run_one(argv, j, input_root, output_root, timeout) for j in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda j: _run_one(argv, j, input_root, output_root, timeout), jobs))
