"""Command-line entry point: ``rhotica <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure. Data goes to
stdout or ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, reports
from .alignment import RhoticContext, align, find_rhotic_contrasts
from .augment import JobStatus, build_tts_corpus, dump_jsonl, load_jobs, plan_vc_jobs, run_adapter
from .corpus_io import group_timings, parse_ctm, parse_manifest, parse_scores, read_wav_file
from .errors import RhoticaError
from .formants import TrackConfig, track_formants
from .phonemes import DEFAULT_ACCENTS, CostConfig, default_inventory, load_inventory_file, unify_tokens
from .rhoticity import NONRHOTIC_SIDE, RHOTIC_SIDE, context_slopes, slopes_from_csv, slopes_to_csv
from .stats import mushra_summary, preference_summary, slope_comparison

log = logging.getLogger("rhotica")

CONFIG_ENV = "RHOTICA_CONFIG"
EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def default_config() -> dict:
    return {
        "cost": CostConfig().to_dict(),
        "track": asdict(TrackConfig()),
        "alpha": 0.05,
        "mushra": {"family": "top", "unit": "rating"},
        "workers": 1,
        "parallelism": None,
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise RhoticaError(f"{CONFIG_ENV}: unknown setting {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise RhoticaError(f"{CONFIG_ENV}: {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config(environ=None) -> dict:
    """Defaults, overlaid with the JSON file named by ``RHOTICA_CONFIG`` if set."""
    environ = os.environ if environ is None else environ
    cfg = default_config()
    path = environ.get(CONFIG_ENV)
    if path:
        text = Path(path).read_text(encoding="utf-8")
        try:
            override = json.loads(text)
        except json.JSONDecodeError as exc:
            raise RhoticaError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(override, dict):
            raise RhoticaError(f"{path}: expected a JSON object")
        cfg = _merge(cfg, override)
    return cfg


def cost_config(cfg: dict) -> CostConfig:
    return CostConfig.from_dict(cfg["cost"])


def track_config(cfg: dict) -> TrackConfig:
    try:
        return TrackConfig(**cfg["track"])
    except TypeError as exc:
        raise RhoticaError(f"track settings: {exc}") from None


# ---------------------------------------------------------------------------
# Argument helpers


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the validation code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _inventory(value: str):
    if value in DEFAULT_ACCENTS and not Path(value).exists():
        return default_inventory(value)
    return load_inventory_file(value)


def _sequence_text(inline: str | None, path: str | None, name: str) -> str:
    if (inline is None) == (path is None):
        raise RhoticaError(f"give exactly one of --seq-{name} and --seq-file-{name}")
    return inline if inline is not None else Path(path).read_text(encoding="utf-8")


def _emit(args, cfg: dict, kind: str, fmt: str, data, extra: dict | None = None) -> None:
    bundle = reports.ReportBundle(kind, fmt, cfg, extra=extra or {})
    text = reports.write(bundle, data, args.out)
    if args.out is None:
        sys.stdout.write(text)


def _load_contexts(path: str) -> list[RhoticContext]:
    data = reports.unwrap_json(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise RhoticaError(f"{path}: expected a list of context records")
    return [RhoticContext.from_dict(d) for d in data]


def _csv_rows(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands


def cmd_map_phonemes(args, cfg):
    invs = [_inventory(v) for v in args.inventory]
    tokens = unify_tokens(invs)
    _emit(args, cfg, "token_map", "json", tokens.to_dict())


def cmd_align(args, cfg):
    inv_a, inv_b = _inventory(args.inventory_a), _inventory(args.inventory_b)
    seq_a = inv_a.sequence(_sequence_text(args.seq_a, args.seq_file_a, "a"))
    seq_b = inv_b.sequence(_sequence_text(args.seq_b, args.seq_file_b, "b"))
    path = align(seq_a, seq_b, cost_config(cfg))
    data = {"seq_a": [p.symbol for p in seq_a], "seq_b": [p.symbol for p in seq_b], **path.to_dict(),
            "pairs": [[seq_a[i].symbol, seq_b[j].symbol] for i, j in path.steps]}
    _emit(args, cfg, "alignment", "json", data)


def _utterance_pairs(args) -> list[tuple[str, str, str]]:
    if args.pairs is None:
        if args.seq_rhotic is None or args.seq_nonrhotic is None:
            raise RhoticaError("give --pairs, or both --seq-rhotic and --seq-nonrhotic")
        return [(args.utterance, args.seq_rhotic, args.seq_nonrhotic)]
    out = []
    text = Path(args.pairs).read_text(encoding="utf-8")
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise RhoticaError(f"{args.pairs}:{n}: expected utterance<TAB>rhotic<TAB>non-rhotic")
        out.append((parts[0].strip(), parts[1], parts[2]))
    return out


def cmd_find_contexts(args, cfg):
    inv_r, inv_n = _inventory(args.rhotic_inventory), _inventory(args.nonrhotic_inventory)
    cost = cost_config(cfg)
    found = []
    for utt, text_r, text_n in _utterance_pairs(args):
        seq_r, seq_n = inv_r.sequence(text_r), inv_n.sequence(text_n)
        path = align(seq_n, seq_r, cost)
        found.extend(find_rhotic_contrasts(path, seq_r, seq_n, utterance_id=utt))
    _emit(args, cfg, "contexts", "json", [c.to_dict() for c in found])


def cmd_f3_track(args, cfg):
    pcm = read_wav_file(args.wav)
    end = pcm.duration if args.end is None else args.end
    utt = Path(args.wav).stem
    track = track_formants(pcm, (args.start, end), track_config(cfg), utt)
    rows = []
    for fr in track.frames:
        row = {"time": fr.time}
        for name in ("f1", "f2", "f3"):
            f = getattr(fr, name)
            row[name] = f.frequency if f else None
            row[f"{name}_bw"] = f.bandwidth if f else None
        rows.append(row)
    if args.format == "csv":
        data = _csv_rows(["time", "f1", "f1_bw", "f2", "f2_bw", "f3", "f3_bw"], rows)
    else:
        data = {"utterance": utt, "span": [args.start, end], "frames": rows}
    _emit(args, cfg, "f3_track", args.format, data)


def _audio(args) -> dict:
    paths = [Path(p) for p in args.wav or []]
    if args.wav_dir:
        paths += sorted(Path(args.wav_dir).glob("*.wav"))
    if not paths:
        raise RhoticaError("give --wav or --wav-dir")
    audio = {}
    for p in paths:
        if p.stem in audio:
            raise RhoticaError(f"two audio files for utterance {p.stem!r}")
        audio[p.stem] = read_wav_file(p)
    return audio


def cmd_f3_slope(args, cfg):
    audio = _audio(args)
    timings = group_timings(parse_ctm(Path(args.ctm).read_text(encoding="utf-8")))
    contexts = _load_contexts(args.contexts)
    slopes, skipped = context_slopes(audio, timings, contexts, args.side, track_config(cfg),
                                     workers=cfg["workers"])
    for reason in skipped:
        print(f"skipped {reason}", file=sys.stderr)
    records = [s.record() for s in slopes]
    if args.format == "csv":
        data = slopes_to_csv(records)
    else:
        data = records
    _emit(args, cfg, "slopes", args.format, data, {"side": args.side, "skipped": skipped})


def _read_slopes(path: str):
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith(("{", "[")):
        from .formants import SlopeStat

        data = reports.unwrap_json(text)
        try:
            return [SlopeStat(float(r["ols_slope"]), float(r["net_change"]), int(r["n_frames"]),
                              r.get("context_id")) for r in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise RhoticaError(f"{path}: malformed slope record: {exc}") from None
    return slopes_from_csv(text)


def cmd_compare_slopes(args, cfg):
    per_system = {}
    for item in args.systems:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise RhoticaError(f"expected NAME=PATH, got {item!r}")
        if name in per_system:
            raise RhoticaError(f"system {name!r} given twice")
        per_system[name] = _read_slopes(path)
    result = slope_comparison(per_system, cfg["alpha"])
    _emit(args, cfg, "slope_comparison", "json", result.to_dict())


def cmd_mushra(args, cfg):
    table = parse_scores(Path(args.scores).read_text(encoding="utf-8"), kind="mushra")
    m = cfg["mushra"]
    summary = mushra_summary(table, cfg["alpha"], family=m["family"], unit=m["unit"])
    if args.format == "csv":
        data = _csv_rows(["system", "mean", "n", "ci_lo", "ci_hi", "best_group", "adjusted_p"], summary.rows())
    else:
        data = summary.to_dict()
    _emit(args, cfg, "mushra", args.format, data)


def cmd_preference(args, cfg):
    table = parse_scores(Path(args.scores).read_text(encoding="utf-8"), kind="preference")
    summary = preference_summary(table, args.system)
    _emit(args, cfg, "preference", "json", summary.to_dict())


def cmd_plan_vc(args, cfg):
    manifest = parse_manifest(Path(args.manifest).read_text(encoding="utf-8"))
    jobs = plan_vc_jobs(manifest, args.source_speaker or None)
    print(f"planned {len(jobs)} job(s)", file=sys.stderr)
    _emit(args, cfg, "plan", "jsonl", dump_jsonl(jobs))


def cmd_run_adapter(args, cfg):
    jobs = load_jobs(Path(args.jobs).read_text(encoding="utf-8"))
    statuses = run_adapter(jobs, args.adapter, cfg["parallelism"], args.input_root, args.output_root,
                           args.timeout)
    failed = [s for s in statuses if not s.ok]
    print(f"{len(statuses) - len(failed)} of {len(statuses)} job(s) succeeded", file=sys.stderr)
    for s in failed:
        print(f"job {s.job_id} failed (exit {s.exit_code}): {s.error}", file=sys.stderr)
    _emit(args, cfg, "adapter_status", "jsonl", dump_jsonl(statuses))


def _completed(jobs, status_path: str | None):
    if status_path is None:
        return jobs
    ok = set()
    for n, line in enumerate(Path(status_path).read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                s = JobStatus(**json.loads(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise RhoticaError(f"{status_path}:{n}: {exc}") from None
            if s.ok:
                ok.add(s.job_id)
    return [j for j in jobs if j.job_id in ok]


def cmd_build_corpus(args, cfg):
    manifest = parse_manifest(Path(args.manifest).read_text(encoding="utf-8"))
    jobs = load_jobs(Path(args.jobs).read_text(encoding="utf-8")) if args.jobs else []
    training = build_tts_corpus(manifest, _completed(jobs, args.status), args.output_root)
    totals = training.totals()
    for accent, counts in totals.items():
        print(f"{accent}: {counts['recording']} recording(s), {counts['synthetic']} synthetic", file=sys.stderr)
    print(f"donor voice {manifest.donor}: {training.donor_voice_count()} utterance(s)", file=sys.stderr)
    _emit(args, cfg, "training_manifest", "jsonl", training.to_jsonl(),
          {"totals": totals, "donor_voice_count": training.donor_voice_count()})


def cmd_report(args, cfg):
    sys.stdout.write(reports.dumps_json(reports.read_meta(args.path)))


def cmd_config(args, cfg):
    sys.stdout.write(reports.dumps_json(cfg))


def cmd_make_corpus(args, cfg):
    from .synth import make_rhotic_corpus

    corpus = make_rhotic_corpus(args.root, args.utterances, args.seed, cfg["track"]["sample_rate"])
    for name, info in corpus.systems.items():
        print(f"{name}: --wav-dir {info['wav_dir']} --ctm {info['ctm']} "
              f"--contexts {info['contexts']} --side {info['side']}")


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rhotica", description="Cross-accent phoneme alignment and rhoticity analysis toolkit.")
    p.add_argument("--version", action="version", version=f"rhotica {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def command(name, func, help_text, out=True):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        if out:
            sp.add_argument("--out", help="write the report here (plus a .meta.json sidecar) instead of stdout")
        return sp

    def alpha_flag(sp):
        sp.add_argument("--alpha", type=float, help="significance level (default from config: 0.05)")

    sp = command("map-phonemes", cmd_map_phonemes, "Build the unified token map over accent inventories.")
    sp.add_argument("inventory", nargs="+", help="inventory JSON file or built-in accent name")

    sp = command("align", cmd_align, "DTW-align two phoneme sequences.")
    sp.add_argument("--inventory-a", required=True)
    sp.add_argument("--inventory-b", required=True)
    sp.add_argument("--seq-a", help="space-separated symbols")
    sp.add_argument("--seq-b", help="space-separated symbols")
    sp.add_argument("--seq-file-a")
    sp.add_argument("--seq-file-b")

    sp = command("find-contexts", cmd_find_contexts, "Locate rhotic contexts between a rhotic and a non-rhotic "
                                                     "transcription.")
    sp.add_argument("--rhotic-inventory", required=True)
    sp.add_argument("--nonrhotic-inventory", required=True)
    sp.add_argument("--pairs", help="TSV file: utterance, rhotic sequence, non-rhotic sequence")
    sp.add_argument("--seq-rhotic")
    sp.add_argument("--seq-nonrhotic")
    sp.add_argument("--utterance", default="utt", help="utterance id for a single pair (default: utt)")

    sp = command("f3-track", cmd_f3_track, "Formant track of one WAV file over a time span.")
    sp.add_argument("--wav", required=True)
    sp.add_argument("--start", type=float, default=0.0)
    sp.add_argument("--end", type=float)
    sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = command("f3-slope", cmd_f3_slope, "F3 slope per rhotic context.")
    sp.add_argument("--wav", action="append", help="WAV file named <utterance>.wav; repeatable")
    sp.add_argument("--wav-dir", help="directory of <utterance>.wav files")
    sp.add_argument("--ctm", required=True)
    sp.add_argument("--contexts", required=True, help="contexts JSON (report or bare list)")
    sp.add_argument("--side", choices=(RHOTIC_SIDE, NONRHOTIC_SIDE), default=RHOTIC_SIDE,
                    help="which phone sequence the CTM follows")
    sp.add_argument("--jobs", type=int, help="tracking threads (default from config)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = command("compare-slopes", cmd_compare_slopes, "Compare F3 slopes between systems.")
    sp.add_argument("systems", nargs="+", metavar="NAME=PATH", help="slopes CSV/JSON per system")
    alpha_flag(sp)

    sp = command("mushra", cmd_mushra, "Summarise MUSHRA ratings.")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--family", choices=("top", "all"))
    sp.add_argument("--unit", choices=("rating", "testcase"))
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    alpha_flag(sp)

    sp = command("preference", cmd_preference, "Summarise an A/B preference test.")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--system", help="comparison label to summarise when the table holds several")

    sp = command("plan-vc", cmd_plan_vc, "Plan voice-conversion jobs (JSON lines).")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--source-speaker", action="append", help="repeatable; default: first target-accent speaker")

    sp = command("run-adapter", cmd_run_adapter, "Run an external VC command for each planned job.")
    sp.add_argument("--jobs", required=True, help="JSON lines from plan-vc")
    sp.add_argument("--adapter", required=True, help="command template with {input}, {output} and {donor}")
    sp.add_argument("--parallelism", type=int)
    sp.add_argument("--input-root", default=".")
    sp.add_argument("--output-root", default=".")
    sp.add_argument("--timeout", type=float, help="seconds per job")

    sp = command("build-corpus", cmd_build_corpus, "Assemble the TTS training manifest (JSON lines).")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--jobs", help="JSON lines from plan-vc")
    sp.add_argument("--status", help="JSON lines from run-adapter; only successful jobs are used")
    sp.add_argument("--output-root", help="check that every job output exists under this directory")

    sp = command("report", cmd_report, "Print the provenance of a report file.", out=False)
    sp.add_argument("path")

    sp = command("config", cmd_config, "Print the effective configuration.", out=False)
    sp.add_argument("--show", action="store_true", help="print all settings (the default action)")

    sp = command("make-corpus", cmd_make_corpus, "Write the synthetic two-system rhoticity mini-corpus.", out=False)
    sp.add_argument("root")
    sp.add_argument("--utterances", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    return p


def _apply_flags(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if getattr(args, "alpha", None) is not None:
        cfg["alpha"] = args.alpha
    for key in ("family", "unit"):
        if getattr(args, key, None) is not None:
            cfg["mushra"][key] = getattr(args, key)
    if getattr(args, "jobs", None) is not None and args.command == "f3-slope":
        cfg["workers"] = args.jobs
    if getattr(args, "parallelism", None) is not None:
        cfg["parallelism"] = args.parallelism
    return cfg


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_flags(load_config(), args)
        args.func(args, cfg)
    except RhoticaError as exc:
        print(f"rhotica {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"rhotica {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
