"""Synthetic supine-to-stand sessions with known beat times.

RR intervals follow a two-tone (LF + HF) modulation plus white noise whose
parameters relax from supine to standing values after stand-up. PPG pulses are
placed one pulse arrival time (PAT) after each R peak; PAT carries a first-order
posture step, an RR-coupled term and per-beat jitter.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from hrvprv.session import Recording, SessionMeta, write_session


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AutonomicScenario:
    supine_mean_rr: float = 950.0
    standing_mean_rr: float = 720.0
    lf_amp_supine: float = 30.0
    lf_amp_standing: float = 35.0
    hf_amp_supine: float = 40.0
    hf_amp_standing: float = 12.0
    lf_freq: float = 0.10
    hf_freq: float = 0.25
    rr_noise_sd: float = 8.0
    transition_tau: float = 10.0

    def validate(self):
        for name in ("supine_mean_rr", "standing_mean_rr"):
            v = getattr(self, name)
            if not 400 < v < 1500:
                raise ScenarioError(f"{name}={v} ms outside (400, 1500)")
        for name in ("lf_amp_supine", "lf_amp_standing", "hf_amp_supine", "hf_amp_standing", "rr_noise_sd"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be >= 0")
        if not 0.04 <= self.lf_freq < 0.15:
            raise ScenarioError(f"lf_freq={self.lf_freq} Hz outside the LF band")
        if not 0.15 <= self.hf_freq <= 0.40:
            raise ScenarioError(f"hf_freq={self.hf_freq} Hz outside the HF band")
        if self.transition_tau <= 0:
            raise ScenarioError("transition_tau must be positive")


@dataclass(frozen=True)
class PatModel:
    base_pat: float = 220.0
    posture_step: float = 0.0
    step_tau: float = 8.0
    beat_jitter_sd: float = 0.0
    bp_coupling_gain: float = 0.0
    stand_time_s: float | None = None
    #: Jitter SD reached after standing; ``None`` keeps ``beat_jitter_sd`` throughout.
    standing_jitter_sd: float | None = None

    def validate(self):
        if not 100 < self.base_pat < 400:
            raise ScenarioError(f"base_pat={self.base_pat} ms outside (100, 400)")
        if self.beat_jitter_sd < 0 or (self.standing_jitter_sd or 0.0) < 0:
            raise ScenarioError("jitter SDs must be >= 0")
        if self.step_tau <= 0:
            raise ScenarioError("step_tau must be positive")


def _blend(t, stand, tau):
    w = np.where(t > stand, 1.0 - np.exp(-(t - stand) / tau), 0.0)
    return w


def generate_rr(scenario: AutonomicScenario, meta: SessionMeta, seed) -> np.ndarray:
    """Ground-truth beat times (s) covering the whole session.

    Each RR interval is drawn at the time of the beat that starts it, so beat times
    follow by cumulative summation.
    """
    scenario.validate()
    rng = np.random.default_rng(seed)
    s = scenario
    times = [meta.supine_start_s + 0.5 * s.supine_mean_rr / 1000.0]
    while True:
        t = times[-1]
        w = float(_blend(np.asarray(t), meta.supine_end_s, s.transition_tau))
        mean = s.supine_mean_rr + w * (s.standing_mean_rr - s.supine_mean_rr)
        lf = s.lf_amp_supine + w * (s.lf_amp_standing - s.lf_amp_supine)
        hf = s.hf_amp_supine + w * (s.hf_amp_standing - s.hf_amp_supine)
        rr = (
            mean
            + lf * math.sin(2 * math.pi * s.lf_freq * t)
            + hf * math.sin(2 * math.pi * s.hf_freq * t)
            + s.rr_noise_sd * rng.standard_normal()
        )
        if not 250 < rr < 3000:
            raise ScenarioError(f"generated RR {rr:.1f} ms at t={t:.2f} s outside (250, 3000)")
        nxt = t + rr / 1000.0
        if nxt >= meta.session_end_s:
            break
        times.append(nxt)
    return np.asarray(times)


# (amplitude, centre s, width s) of the P, Q, R, S, T Gaussians relative to the R peak
ECG_WAVES = ((0.15, -0.16, 0.020), (-0.12, -0.025, 0.008), (1.0, 0.0, 0.010), (-0.25, 0.025, 0.008), (0.30, 0.25, 0.040))
ECG_SUPPORT = (-0.25, 0.45)


def ecg_template(tau):
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    for amp, c, w in ECG_WAVES:
        out += amp * np.exp(-0.5 * ((tau - c) / w) ** 2)
    out[(tau < ECG_SUPPORT[0]) | (tau > ECG_SUPPORT[1])] = 0.0
    return out


# Pulse upstroke: a foot dip then the systolic rise, fixed in duration.
PPG_FOOT = (-0.15, 0.04, 0.04)  # amplitude, centre s, half-width s
PPG_SYSTOLE = (1.0, 0.18, 0.10)
PPG_DICROTIC = (0.12, 0.40, 0.15)  # amplitude, centre and half-width in units of the decay span


def _bump(tau, c, w):
    out = np.zeros_like(tau)
    inside = np.abs(tau - c) < w
    out[inside] = np.cos(np.pi * (tau[inside] - c) / (2 * w)) ** 2
    return out


def ppg_template(tau, cycle_s=1.0):
    """One pulse over ``[0, cycle_s)`` seconds from its onset.

    The foot dip and systolic upstroke have fixed timing; the diastolic decay is
    stretched so the pulse returns to zero exactly at the next onset, so pulses never
    overlap and the rising-edge fiducial does not depend on the cycle length.
    """
    tau = np.asarray(tau, dtype=float)
    amp_f, c_f, w_f = PPG_FOOT
    amp_s, c_s, w_s = PPG_SYSTOLE
    out = amp_f * _bump(tau, c_f, w_f)
    rise = (tau >= c_s - w_s) & (tau <= c_s)
    out[rise] += amp_s * _bump(tau[rise], c_s, w_s)
    span = cycle_s - c_s
    fall = (tau > c_s) & (tau < cycle_s)
    u = (tau[fall] - c_s) / span
    amp_d, c_d, w_d = PPG_DICROTIC
    out[fall] += amp_s * 0.5 * (1.0 + np.cos(np.pi * u)) + amp_d * _bump(u, c_d, w_d)
    out[(tau < 0) | (tau >= cycle_s)] = 0.0
    return out


@lru_cache(maxsize=None)
def ppg_fiducial_offset() -> float:
    """Seconds from pulse onset to the rising-edge half-amplitude crossing of the template."""
    tau = np.linspace(0.0, PPG_SYSTOLE[1], 180001)
    y = ppg_template(tau)
    lo_i = int(np.argmin(y[: np.argmax(y)]))
    hi_i = int(np.argmax(y))
    level = 0.5 * (y[lo_i] + y[hi_i])
    k = lo_i + int(np.argmax(y[lo_i : hi_i + 1] >= level))
    a, b = y[k - 1], y[k]
    return float(tau[k - 1] + (level - a) / (b - a) * (tau[1] - tau[0]))


def _place(n_samples, rate, refs, template, support, t0):
    out = np.zeros(n_samples)
    lo_off, hi_off = support
    for r in refs:
        i0 = max(0, int(math.floor((r + lo_off - t0) * rate)))
        i1 = min(n_samples, int(math.ceil((r + hi_off - t0) * rate)) + 1)
        if i1 <= i0:
            continue
        tau = t0 + np.arange(i0, i1) / rate - r
        out[i0:i1] += template(tau)
    return out


def _add_noise(clean, snr_db, rng):
    if snr_db is None or math.isinf(snr_db):
        return clean
    power = float(np.mean(clean**2))
    if power == 0:
        power = 1.0
    sd = math.sqrt(power / 10 ** (snr_db / 10))
    return clean + sd * rng.standard_normal(clean.size)


def _n_samples(beat_times, rate, duration_s, t0):
    if duration_s is None:
        duration_s = (beat_times[-1] - t0 + 1.0) if len(beat_times) else 10.0
    return int(round(duration_s * rate))


def render_ecg(beat_times, rate: float, snr_db: float | None = None, duration_s=None, seed=0, t0: float = 0.0):
    """ECG samples with a P-QRS-T template at each beat plus white noise at ``snr_db``."""
    beat_times = np.asarray(beat_times, dtype=float)
    if beat_times.size > 1 and np.any(np.diff(beat_times) <= 0):
        raise ScenarioError("beat_times must be strictly increasing")
    n = _n_samples(beat_times, rate, duration_s, t0)
    clean = _place(n, rate, beat_times, ecg_template, ECG_SUPPORT, t0)
    rng = np.random.default_rng(seed)
    if beat_times.size == 0:
        sd = 1.0 if snr_db is None else 10 ** (-snr_db / 20)
        return sd * rng.standard_normal(n)
    return _add_noise(clean, snr_db, rng)


def pulse_arrival_times(beat_times, pat_model: PatModel, seed=0) -> np.ndarray:
    """PAT (ms) for every beat."""
    pat_model.validate()
    t = np.asarray(beat_times, dtype=float)
    rng = np.random.default_rng(seed)
    pat = np.full(t.size, pat_model.base_pat)
    if pat_model.stand_time_s is not None and pat_model.posture_step:
        pat += pat_model.posture_step * _blend(t, pat_model.stand_time_s, pat_model.step_tau)
    if pat_model.bp_coupling_gain and t.size > 2:
        rr = np.diff(t) * 1000.0
        rr = np.concatenate([[rr[0]], rr])
        dev = rr - uniform_filter1d(rr, 11, mode="nearest")
        pat += pat_model.bp_coupling_gain * dev
    sd = np.full(t.size, pat_model.beat_jitter_sd)
    if pat_model.standing_jitter_sd is not None and pat_model.stand_time_s is not None:
        sd += (pat_model.standing_jitter_sd - pat_model.beat_jitter_sd) * _blend(t, pat_model.stand_time_s, pat_model.step_tau)
    if np.any(sd > 0):
        pat += sd * rng.standard_normal(t.size)
    return pat


def render_ppg(beat_times, pat_model: PatModel, rate: float, seed=0, snr_db: float | None = None, duration_s=None, t0: float = 0.0):
    """PPG samples with one pulse per beat, its onset delayed by the beat's PAT.

    Returns
    -------
    samples : ndarray
    fiducials : ndarray
        Ground-truth half-amplitude crossing instants (s) of every pulse.
    """
    beat_times = np.asarray(beat_times, dtype=float)
    if beat_times.size > 1 and np.any(np.diff(beat_times) <= 0):
        raise ScenarioError("beat_times must be strictly increasing")
    rng = np.random.default_rng(seed)
    pat = pulse_arrival_times(beat_times, pat_model, seed=rng.integers(2**32))
    onsets = beat_times + pat / 1000.0
    if onsets.size > 1 and np.any(np.diff(onsets) <= 0):
        k = int(np.flatnonzero(np.diff(onsets) <= 0)[0])
        raise ScenarioError(f"PAT sequence inverts pulse order at beat {k + 1}")
    n = _n_samples(onsets, rate, duration_s, t0)
    clean = np.zeros(n)
    cycles = np.diff(onsets)
    cycles = np.append(cycles, cycles[-1] if cycles.size else 1.0)
    for onset, cyc in zip(onsets, cycles):
        i0 = max(0, int(math.ceil((onset - t0) * rate)))
        i1 = min(n, int(math.ceil((onset + cyc - t0) * rate)))
        if i1 > i0:
            clean[i0:i1] += ppg_template(t0 + np.arange(i0, i1) / rate - onset, cyc)
    return _add_noise(clean, snr_db, rng), onsets + ppg_fiducial_offset()


#: Default rates follow the reference recording setup (ECG 300 Hz, PPG 1000 Hz).
DEFAULT_ECG_RATE = 300.0
DEFAULT_PPG_RATE = 1000.0


@dataclass(frozen=True)
class SyntheticSession:
    recording: Recording
    meta: SessionMeta
    beat_times: np.ndarray
    ppg_fiducials: np.ndarray
    scenario: AutonomicScenario
    pat_model: PatModel
    seed: int


def make_session(
    subject_id: str,
    scenario: AutonomicScenario,
    pat_model: PatModel,
    seed: int,
    supine_s: float = 300.0,
    standing_s: float = 180.0,
    ecg_rate: float = DEFAULT_ECG_RATE,
    ppg_rate: float = DEFAULT_PPG_RATE,
    snr_db: float | None = 30.0,
) -> SyntheticSession:
    meta = SessionMeta(subject_id, 0.0, supine_s, supine_s + standing_s)
    if pat_model.stand_time_s is None:
        pat_model = replace(pat_model, stand_time_s=meta.supine_end_s)
    ss = np.random.SeedSequence(seed)
    s_rr, s_ecg, s_ppg = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    beats = generate_rr(scenario, meta, s_rr)
    duration = meta.session_end_s - meta.supine_start_s
    ecg = render_ecg(beats, ecg_rate, snr_db, duration_s=duration, seed=s_ecg)
    ppg, fid = render_ppg(beats, pat_model, ppg_rate, seed=s_ppg, snr_db=snr_db, duration_s=duration)
    rec = Recording(ecg, ecg_rate, ppg, ppg_rate, 0.0)
    return SyntheticSession(rec, meta, beats, fid, scenario, pat_model, int(seed))


@dataclass(frozen=True)
class CorpusSpec:
    """Population of synthetic subjects.

    Each subject's scenario and PAT model are drawn around the base values with
    log-normal spread ``subject_spread`` (means use a tenth of that spread).
    """

    scenario: AutonomicScenario = AutonomicScenario()
    pat_model: PatModel = PatModel()
    subject_spread: float = 0.2
    supine_s: float = 300.0
    standing_s: float = 180.0
    ecg_rate: float = DEFAULT_ECG_RATE
    ppg_rate: float = DEFAULT_PPG_RATE
    snr_db: float | None = 30.0


#: Zero jitter, zero coupling, constant PAT: PRV should equal HRV.
NULL_CORPUS = CorpusSpec(snr_db=45.0)
#: Posture-coupled PAT: a PAT drop on standing and per-beat jitter that appears
#: with the orthostatic response.
POSTURE_CORPUS = CorpusSpec(pat_model=PatModel(posture_step=-40.0, step_tau=8.0, standing_jitter_sd=3.0))


def subject_seeds(n: int, seed: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2**31 - 1, size=n)]


def draw_subject(spec: CorpusSpec, seed: int) -> tuple[AutonomicScenario, PatModel]:
    rng = np.random.default_rng([seed, 1])
    sp = spec.subject_spread
    s = spec.scenario

    def jit(v, spread=sp):
        return float(v * math.exp(spread * rng.standard_normal()))

    scen = replace(
        s,
        supine_mean_rr=float(np.clip(jit(s.supine_mean_rr, sp / 2), 450, 1450)),
        standing_mean_rr=float(np.clip(jit(s.standing_mean_rr, sp / 2), 450, 1450)),
        lf_amp_supine=jit(s.lf_amp_supine),
        lf_amp_standing=jit(s.lf_amp_standing),
        hf_amp_supine=jit(s.hf_amp_supine),
        hf_amp_standing=jit(s.hf_amp_standing),
        rr_noise_sd=jit(s.rr_noise_sd),
    )
    p = spec.pat_model
    pat = replace(
        p,
        base_pat=float(np.clip(jit(p.base_pat, sp / 2), 120, 380)),
        posture_step=jit(p.posture_step),
        beat_jitter_sd=jit(p.beat_jitter_sd),
        standing_jitter_sd=None if p.standing_jitter_sd is None else jit(p.standing_jitter_sd),
        bp_coupling_gain=jit(p.bp_coupling_gain),
    )
    return scen, pat


def generate_corpus(spec: CorpusSpec, n: int, seed: int):
    """Yield ``n`` :class:`SyntheticSession` objects, deterministic in ``seed``."""
    for i, s in enumerate(subject_seeds(n, seed)):
        scen, pat = draw_subject(spec, s)
        yield make_session(
            f"S{i + 1:03d}",
            scen,
            pat,
            s,
            supine_s=spec.supine_s,
            standing_s=spec.standing_s,
            ecg_rate=spec.ecg_rate,
            ppg_rate=spec.ppg_rate,
            snr_db=spec.snr_db,
        )


def write_corpus(out_dir, spec: CorpusSpec, n: int, seed: int) -> Path:
    """Write ``n`` sessions in session-directory format plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for sess in generate_corpus(spec, n, seed):
        write_session(out / sess.meta.subject_id, sess.recording, sess.meta)
        entries.append(
            {
                "subject_id": sess.meta.subject_id,
                "seed": sess.seed,
                "scenario": asdict(sess.scenario),
                "pat_model": asdict(sess.pat_model),
                "n_beats": int(sess.beat_times.size),
            }
        )
    manifest = {"corpus_seed": seed, "n_sessions": n, "spec": _spec_dict(spec), "sessions": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _spec_dict(spec: CorpusSpec):
    d = asdict(spec)
    return d


def corpus_spec_from_dict(d: dict) -> CorpusSpec:
    d = dict(d)
    scen = AutonomicScenario(**d.pop("scenario", {}))
    pat = PatModel(**d.pop("pat_model", {}))
    spec = CorpusSpec(scenario=scen, pat_model=pat, **d)
    scen.validate()
    pat.validate()
    return spec
