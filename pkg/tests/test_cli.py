import json

import numpy as np
import pytest

from aomi.cli import config as cfgmod
from aomi.cli.bundle import BundleError, atomic_dir, read_bundle, read_header, write_bundle
from aomi.cli.main import (EXIT_EMPTY, EXIT_INCOMPATIBLE, EXIT_MISSING, EXIT_OK, EXIT_RUNTIME,
                           EXIT_SCHEMA, main, read_onsets)
from aomi.core import ChannelMeta, Event, Recording

FAST = """\
kernels = linear
c_values = 1
gamma_values = auto
folds = 3
ica = false
"""


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    cfg = root / "synth.cfg"
    cfg.write_text("trials = 4\neeg_fs = 250.0\n# MI and ME\nsessions = MI, ME\n"
                   "transitions = sit_to_stand\n")
    assert main(["synth", "--out", str(root / "raw"), "--config", str(cfg), "--seed", "5"]) == 0
    fast = root / "fast.cfg"
    fast.write_text(FAST)
    return root


def test_synth_tree_and_manifest(study):
    base = study / "raw" / "S01"
    assert sorted(p.name for p in base.iterdir()) == ["ME_sit_to_stand", "MI_sit_to_stand"]
    for name in ("eeg", "emg"):
        hdr = read_header(base / "MI_sit_to_stand" / name)
        assert hdr["format"] == "aomi-bundle" and hdr["subject"] == "S01"
    truth = json.loads((base / "ME_sit_to_stand" / "truth.json").read_text())
    assert len(truth["trials"]) == 4
    man = json.loads((study / "raw" / "manifest.json").read_text())
    assert man["command"] == "synth" and man["seed"] == 5
    assert "S01/MI_sit_to_stand/eeg/data.f32" in man["outputs"]


def test_synth_is_reproducible(study, tmp_path):
    cfg = study / "synth.cfg"
    assert main(["synth", "--out", str(tmp_path / "a"), "--config", str(cfg), "--seed", "5",
                 "--session", "MI"]) == 0
    a = (tmp_path / "a" / "S01" / "MI_sit_to_stand" / "eeg" / "data.f32").read_bytes()
    b = (study / "raw" / "S01" / "MI_sit_to_stand" / "eeg" / "data.f32").read_bytes()
    assert a == b


def test_full_mi_chain(study, tmp_path):
    raw = study / "raw" / "S01" / "MI_sit_to_stand" / "eeg"
    pre = tmp_path / "pre"
    assert main(["preprocess", "--in", str(raw), "--out", str(pre)]) == EXIT_OK
    rec, hdr = read_bundle(pre)
    assert rec.fs == 250.0 and hdr["preprocessed"] and hdr["session"] == "MI"
    fast = str(study / "fast.cfg")
    out = tmp_path / "loocv"
    assert main(["eval-loocv", "--in", str(pre), "--out", str(out), "--task", "ao_mi",
                 "--config", fast]) == EXIT_OK
    rows = (out / "folds.tsv").read_text().splitlines()
    assert len(rows) == 5 and rows[1].split("\t")[3] == "22"
    res = json.loads((out / "loocv.json").read_text())
    assert res["windows_per_trial"] == 11 and len(res["accuracies"]) == 4
    assert "+-" in (out / "summary.txt").read_text()
    st = tmp_path / "stream"
    assert main(["stream", "--in", str(pre), "--out", str(st), "--config", fast]) == EXIT_OK
    lines = (st / "raster.txt").read_text().splitlines()
    assert lines[0].startswith("truth\t") and len(lines[0].split("\t")[1]) == 56
    assert set(lines[0].split("\t")[1]) == {"R", "A", "M"}
    assert len(lines) == 5
    tr = tmp_path / "train"
    assert main(["train", "--in", str(pre), "--out", str(tr), "--task", "r_ao",
                 "--config", fast]) == EXIT_OK
    assert json.loads((tr / "model.json").read_text())["classes"] == ["R", "AO"]
    rep = tmp_path / "report"
    assert main(["report", "--in", str(out), str(st), "--out", str(rep)]) == EXIT_OK
    table = (rep / "table1_accuracy.tsv").read_text().splitlines()
    assert table[0] == "subject\tAO_vs_MI (sit_to_stand)" and table[1].startswith("S01")
    assert (rep / "table2_rates.tsv").read_text().count("\n") == 2


def test_me_chain_with_onsets(study, tmp_path):
    base = study / "raw" / "S01" / "ME_sit_to_stand"
    on = tmp_path / "onsets"
    assert main(["onset", "--in", str(base / "emg"), "--out", str(on)]) == EXIT_OK
    onsets = read_onsets(on / "onsets.csv")
    truth = json.loads((base / "truth.json").read_text())["trials"]
    err = [abs(onsets[k] - t["onset_s"]) for k, t in enumerate(truth)]
    # the earliest channel can fire early on a single trial; judge the median
    assert float(np.median(err)) < 0.05 and max(err) < 0.25
    pre = tmp_path / "pre"
    assert main(["preprocess", "--in", str(base / "eeg"), "--out", str(pre)]) == EXIT_OK
    # ME decoding without onsets is an incompatible request
    assert main(["eval-loocv", "--in", str(pre), "--out", str(tmp_path / "x"),
                 "--task", "ao_mrcp"]) == EXIT_INCOMPATIBLE
    out = tmp_path / "loocv"
    assert main(["eval-loocv", "--in", str(pre), "--out", str(out), "--task", "ao_mrcp",
                 "--onsets", str(on / "onsets.csv"), "--config",
                 str(study / "fast.cfg")]) == EXIT_OK
    assert json.loads((out / "loocv.json").read_text())["windows_per_trial"] == 4
    sw = tmp_path / "sweep"
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("h_min = 8\nh_max = 10\n")
    assert main(["sweep-h", "--in", str(base / "emg"), "--out", str(sw), "--config", str(cfg),
                 "--truth", str(base / "truth.json")]) == EXIT_OK
    rows = (sw / "sweep_h.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows[1:]] == ["8", "9", "10"]


def test_ersp_command(study, tmp_path):
    pre = tmp_path / "pre"
    main(["preprocess", "--in", str(study / "raw" / "S01" / "MI_sit_to_stand" / "eeg"),
          "--out", str(pre)])
    cfg = tmp_path / "ersp.cfg"
    cfg.write_text("n_boot = 50\nn_freqs = 5\nn_out_times = 20\ntmax_s = 10.0\n")
    out = tmp_path / "ersp"
    assert main(["ersp", "--in", str(pre), "--out", str(out), "--config", str(cfg)]) == EXIT_OK
    m = np.loadtxt(out / "ersp_Cz.tsv", skiprows=1)
    assert m.shape == (5, 21)
    assert set(np.loadtxt(out / "mask_Pz.tsv", skiprows=1)[:, 1:].ravel()) <= {0.0, 1.0}
    bad = tmp_path / "bad.cfg"
    bad.write_text("tmin_s = 0.0\n")        # baseline would precede the epoch
    assert main(["ersp", "--in", str(pre), "--out", str(tmp_path / "e2"),
                 "--config", str(bad)]) == EXIT_RUNTIME
    assert not (tmp_path / "e2").exists()


def test_exit_codes(study, tmp_path):
    raw = study / "raw" / "S01" / "MI_sit_to_stand" / "eeg"
    assert main(["preprocess", "--in", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "o")]) == EXIT_MISSING
    assert main(["preprocess", "--in", str(raw), "--out", str(tmp_path / "o"),
                 "--config", str(tmp_path / "missing.cfg")]) == EXIT_MISSING
    bad = tmp_path / "bad.cfg"
    bad.write_text("notch_hz = 50\nwhatever = 1\n")
    assert main(["preprocess", "--in", str(raw), "--out", str(tmp_path / "o"),
                 "--config", str(bad)]) == EXIT_SCHEMA
    assert main(["preprocess", "--in", str(raw), "--out", str(tmp_path / "o"),
                 "--session", "ME"]) == EXIT_INCOMPATIBLE
    assert main(["onset", "--in", str(raw), "--out", str(tmp_path / "o")]) == EXIT_INCOMPATIBLE
    assert main(["synth", "--out", str(tmp_path / "o")]) == EXIT_SCHEMA
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", "--in", str(empty), "--out", str(tmp_path / "r")]) == EXIT_EMPTY
    assert not (tmp_path / "r").exists() and not (tmp_path / "o").exists()
    with pytest.raises(SystemExit) as info:
        main(["stream", "--out", str(tmp_path / "o")])
    assert info.value.code == 2


def test_corrupt_bundle_is_schema_error(study, tmp_path):
    import shutil
    src = study / "raw" / "S01" / "MI_sit_to_stand" / "eeg"
    dst = tmp_path / "eeg"
    shutil.copytree(src, dst)
    data = dst / "data.f32"
    data.write_bytes(data.read_bytes()[:-4])
    assert main(["preprocess", "--in", str(dst), "--out", str(tmp_path / "o")]) == EXIT_SCHEMA


# -- bundle and config units ----------------------------------------------------------

def _rec():
    chans = [ChannelMeta("Cz", "EEG"), ChannelMeta("EOG1", "EOG")]
    data = np.random.default_rng(0).normal(size=(2, 100))
    return Recording(chans, 250.0, data, [Event(0, "trial_start", "sit_to_stand"),
                                          Event(40, "ao_onset", "sit_to_stand")])


def test_bundle_roundtrip(tmp_path):
    rec = _rec()
    write_bundle(tmp_path / "b", rec, {"subject": "S03"})
    back, hdr = read_bundle(tmp_path / "b")
    np.testing.assert_allclose(back.data, rec.data.astype("<f4"))
    assert back.events == rec.events and [e.transition for e in back.events] == \
        ["sit_to_stand"] * 2
    assert back.channels == rec.channels and hdr["subject"] == "S03"
    (tmp_path / "b" / "header.json").write_text("{}")
    with pytest.raises(BundleError):
        read_bundle(tmp_path / "b")


def test_atomic_dir_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with atomic_dir(target) as tmp:
            (tmp / "partial.txt").write_text("x")
            raise RuntimeError("boom")
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []
    with atomic_dir(target) as tmp:
        (tmp / "done.txt").write_text("y")
    assert (target / "done.txt").read_text() == "y"


def test_config_parse_and_validate():
    cfg = cfgmod.parse("# comment\nh = 10\nE = 5\nname = abc  # trailing\nlist = 1, 2.5\n"
                       "flag = true\nnothing = none\n")
    assert cfg == {"h": 10, "E": 5, "name": "abc", "list": [1, 2.5], "flag": True,
                   "nothing": None}
    assert cfgmod.parse(cfgmod.dump(cfg)) == cfg
    with pytest.raises(cfgmod.SchemaError):
        cfgmod.parse("a = 1\na = 2\n")
    with pytest.raises(cfgmod.SchemaError):
        cfgmod.parse("just a line\n")
    schema = {"h": float, "E": int, "mode": ("AO", "R")}
    out = cfgmod.validate({"h": 10, "mode": "R"}, schema, {"E": 5})
    assert out == {"h": 10.0, "E": 5, "mode": "R"}
    for bad in ({"h": "x"}, {"E": 2.5}, {"mode": "IDLE"}, {"zzz": 1}):
        with pytest.raises(cfgmod.SchemaError):
            cfgmod.validate(bad, schema)
