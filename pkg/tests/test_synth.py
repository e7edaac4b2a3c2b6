import json
from dataclasses import replace

import numpy as np
import pytest

from hrvprv.beats import detect_ppg_peaks_troughs, detect_r_peaks, midpoints
from hrvprv.pipeline import analyze_session
from hrvprv.session import SessionMeta, load_session
from hrvprv.synth import (
    POSTURE_CORPUS,
    AutonomicScenario,
    CorpusSpec,
    PatModel,
    ScenarioError,
    corpus_spec_from_dict,
    generate_corpus,
    generate_rr,
    make_session,
    pulse_arrival_times,
    render_ecg,
    render_ppg,
    write_corpus,
)

FLAT = AutonomicScenario(
    supine_mean_rr=800.0,
    standing_mean_rr=800.0,
    lf_amp_supine=0.0,
    lf_amp_standing=0.0,
    hf_amp_supine=0.0,
    hf_amp_standing=0.0,
    rr_noise_sd=0.0,
)


def feature(res, phase, src, name):
    return res.features[phase][src].to_dict()[name]


def test_session_deterministic():
    a = make_session("S", AutonomicScenario(), PatModel(beat_jitter_sd=2.0), 5, snr_db=25)
    b = make_session("S", AutonomicScenario(), PatModel(beat_jitter_sd=2.0), 5, snr_db=25)
    assert a.recording == b.recording
    assert np.array_equal(a.beat_times, b.beat_times)
    c = make_session("S", AutonomicScenario(), PatModel(beat_jitter_sd=2.0), 6, snr_db=25)
    assert not np.array_equal(a.beat_times, c.beat_times)


def test_zero_amplitudes_give_periodic_beats():
    beats = generate_rr(FLAT, SessionMeta("S", 0.0, 300.0, 480.0), 0)
    np.testing.assert_allclose(np.diff(beats), 0.8, atol=1e-12)


def test_standing_mean_follows_scenario():
    scen = replace(AutonomicScenario(), supine_mean_rr=1000.0, standing_mean_rr=750.0)
    beats = generate_rr(scen, SessionMeta("S", 0.0, 300.0, 480.0), 1)
    rr = np.diff(beats) * 1000
    standing = rr[beats[1:] > 360.0]
    assert abs(standing.mean() - 750.0) < 7.5


def test_ecg_without_beats_is_noise():
    x = render_ecg([], 300.0, snr_db=20, duration_s=10.0)
    assert x.size == 3000
    assert abs(x.std() - 0.1) < 0.01


def test_ppg_fiducials_one_per_beat():
    beats = np.arange(1.0, 20.0, 0.9)
    _, fid = render_ppg(beats, PatModel(base_pat=200.0), 500.0)
    assert fid.size == beats.size
    np.testing.assert_allclose(np.diff(fid), 0.9, atol=1e-12)


def test_pat_inversion_rejected():
    beats = np.arange(1.0, 20.0, 0.3)
    with pytest.raises(ScenarioError, match="inverts"):
        render_ppg(beats, PatModel(base_pat=200.0, beat_jitter_sd=200.0), 500.0, seed=1)


def test_pat_step_dynamics():
    t = np.array([0.0, 100.0, 100.0 + 8.0, 400.0])
    pat = pulse_arrival_times(t, PatModel(base_pat=220.0, posture_step=-40.0, step_tau=8.0, stand_time_s=100.0))
    np.testing.assert_allclose(pat[:2], 220.0)
    assert pat[2] == pytest.approx(220.0 - 40.0 * (1 - np.exp(-1)))
    assert pat[3] == pytest.approx(180.0)


def test_standing_jitter_only_after_stand():
    t = np.arange(0.0, 400.0, 0.8)
    pat = pulse_arrival_times(t, PatModel(standing_jitter_sd=5.0, stand_time_s=200.0), seed=3)
    assert np.all(pat[t <= 200.0] == 220.0)
    assert pat[t > 260.0].std() == pytest.approx(5.0, rel=0.2)


def test_constant_pat_ppi_equals_rri():
    s = make_session("S", AutonomicScenario(), PatModel(), 0, snr_db=None)
    rec = s.recording
    r = detect_r_peaks(rec.ecg_samples, rec.ecg_rate).timestamps
    m = midpoints(detect_ppg_peaks_troughs(rec.ppg_samples, rec.ppg_rate), rec.ppg_samples, rec.ppg_rate).timestamps
    # pair each R peak with the pulse that follows it
    k = np.searchsorted(m, r)
    ok = k < m.size
    lag = m[k[ok]] - r[ok]
    assert np.all((lag > 0.1) & (lag < 0.5))
    rri = np.diff(r[ok])
    ppi = np.diff(m[k[ok]])
    assert rri.size > 500
    assert np.max(np.abs(rri - ppi)) < 1.0 / rec.ecg_rate


def test_jitter_inflates_prv_rmssd():
    s = make_session("S", AutonomicScenario(), PatModel(beat_jitter_sd=10.0), 2)
    res = analyze_session(s.recording, s.meta)
    assert res.rejected is None
    for phase in res.features:
        assert feature(res, phase, "PRV", "RMSSD") > feature(res, phase, "HRV", "RMSSD")


def test_null_session_agrees():
    s = make_session("S", AutonomicScenario(), PatModel(), 3, snr_db=45)
    res = analyze_session(s.recording, s.meta)
    for phase in res.features:
        h, p = (feature(res, phase, src, "RMSSD") for src in ("HRV", "PRV"))
        assert abs(h - p) / h < 0.02


def test_posture_step_concentrates_in_transition():
    s = make_session("S", AutonomicScenario(), PatModel(posture_step=-40.0, step_tau=8.0), 4, snr_db=45)
    res = analyze_session(s.recording, s.meta)
    gap = {ph: abs(feature(res, ph, "PRV", "SDNN") - feature(res, ph, "HRV", "SDNN")) for ph in res.features}
    assert gap["transition"] > gap["supine"]


def test_standing_raises_heart_rate():
    s = make_session("S", AutonomicScenario(), PatModel(), 6)
    res = analyze_session(s.recording, s.meta)
    assert feature(res, "standing", "HRV", "AHR") > feature(res, "supine", "HRV", "AHR")


def test_corpus_deterministic_and_distinct():
    spec = replace(POSTURE_CORPUS, supine_s=60.0, standing_s=60.0)
    a = list(generate_corpus(spec, 3, 9))
    b = list(generate_corpus(spec, 3, 9))
    assert [s.meta.subject_id for s in a] == ["S001", "S002", "S003"]
    assert all(x.recording == y.recording for x, y in zip(a, b))
    assert len({s.scenario.supine_mean_rr for s in a}) == 3


def test_write_corpus_manifest(tmp_path):
    spec = CorpusSpec(supine_s=40.0, standing_s=30.0)
    out = write_corpus(tmp_path / "c", spec, 2, 4)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["corpus_seed"] == 4 and manifest["n_sessions"] == 2
    assert [e["subject_id"] for e in manifest["sessions"]] == ["S001", "S002"]
    assert all(isinstance(e["seed"], int) for e in manifest["sessions"])
    rec, meta = load_session(out / "S001")
    assert meta.session_end_s == 70.0 and rec.ecg_rate == 300.0
    assert corpus_spec_from_dict(manifest["spec"]) == spec


@pytest.mark.parametrize(
    "kwargs",
    [{"supine_mean_rr": 200.0}, {"hf_amp_supine": -1.0}, {"transition_tau": 0.0}],
)
def test_scenario_validation(kwargs):
    with pytest.raises(ScenarioError):
        replace(AutonomicScenario(), **kwargs).validate()


def test_pat_model_validation():
    with pytest.raises(ScenarioError):
        PatModel(beat_jitter_sd=-1.0).validate()
    with pytest.raises(ScenarioError):
        PatModel(standing_jitter_sd=-1.0).validate()
    with pytest.raises(TypeError):
        corpus_spec_from_dict({"pat_model": {"nonsense": 1}})
