import json
import subprocess
import sys
from pathlib import Path

import pytest

from rhotica import __version__
from rhotica.cli import build_parser, run
from rhotica.corpus_io import serialize_manifest
from rhotica.phonemes import default_inventory

from test_augment import COPY, manifest

SUBCOMMANDS = ("map-phonemes", "align", "find-contexts", "f3-track", "f3-slope", "compare-slopes", "mushra",
               "preference", "plan-vc", "run-adapter", "build-corpus", "report", "config", "make-corpus")


def cli(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def inventories(tmp_path):
    gb, us = tmp_path / "gb.json", tmp_path / "us.json"
    gb.write_text(default_inventory("en-GB").to_json())
    us.write_text(default_inventory("en-US").to_json())
    return gb, us


def test_align_car_park(capsys, inventories):
    gb, us = inventories
    code, out, err = cli(capsys, "align", "--inventory-a", gb, "--inventory-b", us,
                         "--seq-a", "k A: p A: k", "--seq-b", "k A: r p A: r k")
    assert code == 0, err
    doc = json.loads(out)
    assert doc["data"]["steps"] == [[0, 0], [1, 1], [1, 2], [2, 3], [3, 4], [3, 5], [4, 6]]
    assert doc["meta"]["version"] == __version__
    assert doc["meta"]["config"]["cost"]["indel_cost"] == 0.7


def test_align_from_files(capsys, tmp_path):
    (tmp_path / "a.txt").write_text("T 3` t i: n\n")
    (tmp_path / "b.txt").write_text("T 3: t i: n\n")
    code, out, _ = cli(capsys, "align", "--inventory-a", "en-US", "--inventory-b", "en-GB",
                       "--seq-file-a", tmp_path / "a.txt", "--seq-file-b", tmp_path / "b.txt")
    assert code == 0 and json.loads(out)["data"]["total_cost"] == pytest.approx(0.2)


def test_find_contexts_pairs_file(capsys, tmp_path):
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text("u1\tk A: r p A: r k\tk A: p A: k\nu2\tT 3` t i: n\tT 3: t i: n\n")
    code, out, _ = cli(capsys, "find-contexts", "--rhotic-inventory", "en-US", "--nonrhotic-inventory", "en-GB",
                       "--pairs", pairs)
    assert code == 0
    data = json.loads(out)["data"]
    assert [(c["utterance"], c["kind"]) for c in data] == [
        ("u1", "r_insertion"), ("u1", "r_insertion"), ("u2", "rhotacized_vowel")]


def test_map_phonemes(capsys):
    code, out, _ = cli(capsys, "map-phonemes", "en-GB", "en-US", "en-IE")
    tokens = json.loads(out)["data"]
    assert code == 0 and tokens["tokens"] == sorted(tokens["tokens"])
    assert tokens["accents"]["en-GB"]["A:"] == tokens["accents"]["en-US"]["A:"]


def test_f3_slope_single_file(capsys, tmp_path, mini_corpus):
    info = mini_corpus.systems["falling"]
    wav = Path(info["wav_dir"]) / "utt000.wav"
    code, out, err = cli(capsys, "f3-slope", "--wav", wav, "--ctm", info["ctm"], "--contexts", info["contexts"])
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0].startswith("# rhotica-report ")
    rows = lines[2:]
    assert len(rows) == 2 and all(float(r.split(",")[5]) < 0 for r in rows)
    # contexts of other utterances have no audio here
    assert "skipped" in err


def test_compare_slopes_end_to_end(capsys, tmp_path, mini_corpus):
    paths = {}
    for name, info in mini_corpus.systems.items():
        paths[name] = tmp_path / f"{name}.csv"
        code, _, err = cli(capsys, "f3-slope", "--wav-dir", info["wav_dir"], "--ctm", info["ctm"],
                           "--contexts", info["contexts"], "--side", info["side"], "--out", paths[name])
        assert code == 0, err
    code, out, err = cli(capsys, "compare-slopes", *(f"{n}={p}" for n, p in paths.items()))
    assert code == 0, err
    data = json.loads(out)["data"]
    means = {s["system"]: s["mean_ols_slope"] for s in data["systems"]}
    assert means["falling"] < -3000 and abs(means["flat"]) < 500
    assert data["comparisons"][0]["rejected_after_correction"]


def test_f3_track_csv(capsys, mini_corpus):
    wav = Path(mini_corpus.systems["flat"]["wav_dir"]) / "utt001.wav"
    code, out, _ = cli(capsys, "f3-track", "--wav", wav, "--start", "0.1", "--end", "0.3", "--format", "csv")
    assert code == 0
    assert out.splitlines()[1] == "time,f1,f1_bw,f2,f2_bw,f3,f3_bw"


def _mushra_csv(path):
    a, b = [70, 80, 75, 85], [60, 70, 65, 75]
    units = [(l, t) for l in ("L1", "L2") for t in ("T1", "T2")]
    rows = [f"{l},{t},A,{v}" for (l, t), v in zip(units, a)] + [f"{l},{t},B,{v}" for (l, t), v in zip(units, b)]
    path.write_text("listener,testcase,system,score\n" + "\n".join(rows) + "\n")
    return path


def test_mushra_fixture(capsys, tmp_path):
    scores = _mushra_csv(tmp_path / "scores.csv")
    code, out, _ = cli(capsys, "mushra", "--scores", scores, "--alpha", "0.05")
    systems = {s["system"]: s["mean"] for s in json.loads(out)["data"]["systems"]}
    assert code == 0 and systems == {"A": 77.5, "B": 67.5}
    code, out, _ = cli(capsys, "mushra", "--scores", scores, "--format", "csv", "--family", "all")
    assert code == 0
    assert out.splitlines()[1] == "system,mean,n,ci_lo,ci_hi,best_group,adjusted_p"
    assert json.loads(out.splitlines()[0].split(" ", 2)[2])["config"]["mushra"]["family"] == "all"


def test_preference(capsys, tmp_path):
    p = tmp_path / "pref.csv"
    p.write_text("listener,testcase,system,score\n" + "".join(f"L{i},T1,gb_vs_us,{c}\n" for i, c in
                                                            enumerate("AAAB")))
    code, out, _ = cli(capsys, "preference", "--scores", p)
    assert code == 0 and json.loads(out)["data"]["share_a"] == 0.75


def test_augmentation_pipeline(capsys, tmp_path):
    m = manifest((4,))
    mpath = tmp_path / "manifest.json"
    mpath.write_text(serialize_manifest(m))
    for spk in m.speakers:
        for u in spk.utterances:
            (tmp_path / "in" / u.audio).parent.mkdir(parents=True, exist_ok=True)
            (tmp_path / "in" / u.audio).write_bytes(b"RIFF")
    plan = tmp_path / "jobs.jsonl"
    code, _, err = cli(capsys, "plan-vc", "--manifest", mpath, "--out", plan)
    assert code == 0 and "planned 4" in err
    assert json.loads(Path(f"{plan}.meta.json").read_text())["kind"] == "plan"

    template = f"{sys.executable} {COPY} {{input}} {{output}} {{donor}} --fail-on 0002"
    status = tmp_path / "status.jsonl"
    code, _, err = cli(capsys, "run-adapter", "--jobs", plan, "--adapter", template, "--parallelism", 2,
                       "--input-root", tmp_path / "in", "--output-root", tmp_path / "out", "--out", status)
    assert code == 0 and "3 of 4" in err
    assert [json.loads(l)["ok"] for l in status.read_text().splitlines()] == [True, True, False, True]

    corpus = tmp_path / "train.jsonl"
    code, _, err = cli(capsys, "build-corpus", "--manifest", mpath, "--jobs", plan, "--status", status,
                       "--output-root", tmp_path / "out", "--out", corpus)
    assert code == 0, err
    entries = [json.loads(l) for l in corpus.read_text().splitlines()]
    assert sum(e["origin"] == "synthetic" for e in entries) == 3
    meta = json.loads(Path(f"{corpus}.meta.json").read_text())
    assert meta["totals"]["en-IE"] == {"recording": 4, "synthetic": 3}

    # a job reported as successful whose output vanished is an itemized error
    code, _, err = cli(capsys, "build-corpus", "--manifest", mpath, "--jobs", plan,
                       "--output-root", tmp_path / "out")
    assert code == 1 and "missing output" in err


def test_report_and_config(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 0.01, "cost": {"indel_cost": 0.9}}))
    monkeypatch.setenv("RHOTICA_CONFIG", str(cfg))
    code, out, _ = cli(capsys, "config", "--show")
    shown = json.loads(out)
    assert code == 0 and shown["alpha"] == 0.01 and shown["cost"]["indel_cost"] == 0.9
    assert shown["track"]["frame_ms"] == 25.0

    out_path = tmp_path / "align.json"
    cli(capsys, "align", "--inventory-a", "en-GB", "--inventory-b", "en-US", "--seq-a", "k A:", "--seq-b", "k A: r",
        "--out", out_path)
    code, out, _ = cli(capsys, "report", out_path)
    assert code == 0 and json.loads(out)["config"]["cost"]["indel_cost"] == 0.9

    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli(capsys, "config", "--show")[0] == 1


def test_exit_codes(capsys, tmp_path):
    assert cli(capsys, "frobnicate")[0] == 1
    code, _, err = cli(capsys, "align", "--no-such-flag")
    assert code == 1 and "usage" in err
    assert cli(capsys, "mushra", "--scores", tmp_path / "missing.csv")[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("listener,testcase,system,score\nL1,T1,A,101\n")
    code, out, err = cli(capsys, "mushra", "--scores", bad)
    assert code == 1 and out == "" and "out of range" in err
    code, _, err = cli(capsys, "align", "--inventory-a", "en-GB", "--inventory-b", "en-GB",
                       "--seq-a", "3`", "--seq-b", "k")
    assert code == 1


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_for_every_subcommand(capsys, command):
    code, out, _ = cli(capsys, command, "--help")
    assert code == 0 and out.startswith("usage: rhotica " + command)


def test_outputs_are_deterministic(capsys, tmp_path):
    scores = _mushra_csv(tmp_path / "scores.csv")
    for name in ("a.json", "b.json"):
        cli(capsys, "mushra", "--scores", scores, "--out", tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.json.meta.json").read_text().replace("a.json", "") == \
        (tmp_path / "b.json.meta.json").read_text().replace("b.json", "")


def test_parser_lists_all_subcommands():
    parser = build_parser()
    text = parser.format_help()
    for command in SUBCOMMANDS:
        assert command in text


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "rhotica.cli", "config", "--show"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["alpha"] == 0.05
