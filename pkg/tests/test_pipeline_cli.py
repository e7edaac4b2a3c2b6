import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hrvprv import cli
from hrvprv.features import FEATURE_NAMES
from hrvprv.session import Recording, SessionMeta, load_session, write_session
from hrvprv.synth import AutonomicScenario, PatModel, make_session

# Small, fast sessions: 150 s supine, 150 s standing, PPG at 250 Hz.
SMALL = {"supine_s": 150.0, "standing_s": 150.0, "ppg_rate": 250.0}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    scen = root / "scenario.json"
    scen.write_text(json.dumps(SMALL))
    assert run("synth", "--n", 5, "--scenario", scen, "--seed", 3, "--out", root / "c") == 0
    return root / "c"


@pytest.fixture(scope="module")
def analysis(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("analysis")
    code = run("analyze", "--input", corpus, "--out", out)
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_analyze_writes_six_rows_per_session(analysis):
    code, out = analysis
    assert code == 0
    rows = read_rows(out / "features.csv")
    assert len(rows) == 30
    assert list(rows[0]) == ["subject_id", "phase", "source", *FEATURE_NAMES]
    assert {r["source"] for r in rows} == {"HRV", "PRV"}
    assert json.loads((out / "rejected.json").read_text()) == {"rejected": {}, "missing_phases": {}}
    q = json.loads((out / "quality.json").read_text())
    assert set(q) == {f"S00{i}" for i in range(1, 6)}
    assert all(0.1 < e["ppi_lag_s"] < 0.5 for e in q.values())


def test_long_format_matches_wide(analysis):
    _, out = analysis
    wide = read_rows(out / "features.csv")
    long_rows = read_rows(out / "features_long.csv")
    assert len(long_rows) == len(wide) * len(FEATURE_NAMES)
    first = wide[0]
    match = {r["feature"]: r["value"] for r in long_rows
             if (r["subject_id"], r["phase"], r["source"]) == (first["subject_id"], first["phase"], first["source"])}
    assert match == {k: first[k] for k in FEATURE_NAMES}


def test_rerun_is_byte_identical(corpus, analysis, tmp_path):
    _, out = analysis
    again = tmp_path / "again"
    assert run("analyze", "--input", corpus, "--out", again) == 0
    for name in ("features.csv", "features_long.csv", "quality.json", "rejected.json"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_parallel_matches_serial(corpus, analysis, tmp_path):
    _, out = analysis
    par = tmp_path / "par"
    assert run("analyze", "--input", corpus, "--out", par, "--workers", 2) == 0
    assert (par / "features.csv").read_bytes() == (out / "features.csv").read_bytes()


def test_synth_is_reproducible(corpus, tmp_path):
    scen = tmp_path / "scenario.json"
    scen.write_text(json.dumps(SMALL))
    assert run("synth", "--n", 1, "--scenario", scen, "--seed", 3, "--out", tmp_path / "c") == 0
    for name in ("ecg.csv", "ppg.csv", "meta.json"):
        assert (tmp_path / "c" / "S001" / name).read_bytes() == (corpus / "S001" / name).read_bytes()


def test_rejected_session_listed(corpus, tmp_path):
    bad = tmp_path / "in"
    for sid in ("S001", "S002", "S003"):
        rec, meta = load_session(corpus / sid)
        if sid == "S002":
            noise = np.random.default_rng(0).standard_normal(rec.ppg_samples.size)
            rec = Recording(rec.ecg_samples, rec.ecg_rate, noise, rec.ppg_rate, rec.start_time)
        write_session(bad / sid, rec, meta)
    out = tmp_path / "out"
    assert run("analyze", "--input", bad, "--out", out) == cli.EXIT_PARTIAL
    rej = json.loads((out / "rejected.json").read_text())["rejected"]
    assert list(rej) == ["S002"]
    assert {r["subject_id"] for r in read_rows(out / "features.csv")} == {"S001", "S003"}


def test_all_rejected_is_fatal(tmp_path):
    rng = np.random.default_rng(1)
    rec = Recording(rng.standard_normal(300 * 300), 300.0, rng.standard_normal(250 * 300), 250.0, 0.0)
    write_session(tmp_path / "in" / "X", rec, SessionMeta("X", 0.0, 150.0, 300.0))
    assert run("analyze", "--input", tmp_path / "in", "--out", tmp_path / "out") == cli.EXIT_FATAL


def test_short_standing_reports_missing_phase(tmp_path):
    s = make_session("SHORT", AutonomicScenario(), PatModel(), 1, supine_s=150.0, standing_s=70.0, ppg_rate=250.0)
    write_session(tmp_path / "SHORT", s.recording, s.meta)
    out = tmp_path / "out"
    assert run("analyze", "--input", tmp_path / "SHORT", "--out", out) == cli.EXIT_PARTIAL
    missing = json.loads((out / "rejected.json").read_text())["missing_phases"]
    assert list(missing["SHORT"]) == ["standing"]
    assert {r["phase"] for r in read_rows(out / "features.csv")} == {"supine", "transition"}


def test_compare_report(analysis, tmp_path):
    _, out = analysis
    rep = tmp_path / "rep"
    assert run("compare", "--input", out, "--out", rep) == 0
    doc = json.loads((rep / "report.json").read_text())
    assert set(doc) == {"supine", "transition", "standing"}
    assert set(doc["supine"]) == set(FEATURE_NAMES)
    assert "α = 0.0033" in (rep / "report.txt").read_text()


def test_compare_identical_sources(analysis, tmp_path):
    _, out = analysis
    rows = [r for r in read_rows(out / "features.csv") if r["source"] == "HRV"]
    path = tmp_path / "features.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow(r)
            w.writerow({**r, "source": "PRV"})
    assert run("compare", "--input", path, "--out", tmp_path / "rep") == 0
    doc = json.loads((tmp_path / "rep" / "report.json").read_text())
    for phase in doc.values():
        for res in phase.values():
            assert res["p_value"] == 1.0 and not res["significant"]


def test_compare_needs_five_sessions(analysis, tmp_path, capsys):
    _, out = analysis
    rows = read_rows(out / "features.csv")
    keep = [r for r in rows if r["subject_id"] in {"S001", "S002", "S003", "S004"}]
    path = tmp_path / "features.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(keep)
    assert run("compare", "--input", path, "--out", tmp_path / "rep") == cli.EXIT_FATAL
    assert "at least 5" in capsys.readouterr().err
    assert not (tmp_path / "rep").exists()


def test_print_config_defaults(capsys):
    assert run("print-config") == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["alpha"] == 0.05 and cfg["bands"] == [0.04, 0.15, 0.15, 0.4]
    assert cfg["resample_hz"] == 4.0 and cfg["entropy_m"] == 2 and cfg["entropy_r"] == 0.2
    assert cfg["seed"] == 7 and cfg["workers"] == 1 and cfg["quality_gate"] is True


def test_flags_override_config_file(tmp_path, capsys):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"alpha": 0.01, "entropy_m": 3, "seed": 11}))
    assert run("print-config", "--config", conf, "--alpha", 0.1, "--no-quality-gate") == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["alpha"] == 0.1 and cfg["entropy_m"] == 3 and cfg["seed"] == 11
    assert cfg["quality_gate"] is False


@pytest.mark.parametrize(
    "argv",
    [
        ["--bands", "0.15,0.04,0.15,0.4"],
        ["--bands", "0.04,0.15,0.15,2.5"],
        ["--alpha", "1.5"],
        ["--workers", "0"],
    ],
)
def test_invalid_config_rejected(argv, capsys):
    assert cli.main(["print-config", *argv]) == cli.EXIT_FATAL
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"alfa": 0.01}))
    assert run("print-config", "--config", conf) == cli.EXIT_FATAL
    assert "alfa" in capsys.readouterr().err


def test_missing_input_is_fatal(tmp_path):
    assert run("analyze", "--input", tmp_path / "nope", "--out", tmp_path / "o") == cli.EXIT_FATAL


def test_export_intervals(corpus, tmp_path):
    out = tmp_path / "out"
    assert run("analyze", "--input", corpus / "S001", "--out", out, "--export-intervals") == 0
    names = sorted(p.name for p in (out / "intervals").iterdir())
    assert names == ["S001_PPI.csv", "S001_RRI.csv"]


def _backend(env_value):
    env = dict(os.environ)
    env.pop("HRVPRV_PURE_PYTHON", None)
    if env_value is not None:
        env["HRVPRV_PURE_PYTHON"] = env_value
    out = subprocess.run(
        [sys.executable, "-c", "import hrvprv; print(hrvprv.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


def test_env_forces_python_backend():
    assert _backend("1") == "python"


def test_compiled_backend_default():
    from hrvprv.kernels import backends

    if "cython" not in backends():
        pytest.skip("compiled extension not built")
    assert _backend(None) == "cython"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hrvprv", "print-config"], capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["alpha"] == 0.05
