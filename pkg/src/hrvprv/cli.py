"""Command-line entry point: ``analyze``, ``compare``, ``synth`` and ``print-config``.

Exit codes are 0 on success, 2 when some sessions were rejected or some phases
could not be analysed, and 1 on fatal errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from hrvprv import synth
from hrvprv.features import FEATURE_NAMES, FeatureSet
from hrvprv.pipeline import SOURCES, RunConfig, SessionResult, analyze_session
from hrvprv.session import PHASES, SessionError, load_session
from hrvprv.stats import MIN_PAIRS, build_paired_samples, compare_features, render_report

log = logging.getLogger("hrvprv")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

PRESETS = {"null": synth.NULL_CORPUS, "posture": synth.POSTURE_CORPUS}


class CliError(Exception):
    pass


def _parse_bands(text):
    try:
        bands = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bands must be four comma-separated numbers, got {text!r}") from None
    if len(bands) != 4:
        raise argparse.ArgumentTypeError(f"bands must be four comma-separated numbers, got {text!r}")
    return bands


def _validate(cfg: RunConfig):
    lf_lo, lf_hi, hf_lo, hf_hi = cfg.bands
    if not (0 <= lf_lo < lf_hi <= hf_lo < hf_hi):
        raise CliError(f"bands must satisfy 0 <= lf_lo < lf_hi <= hf_lo < hf_hi, got {list(cfg.bands)}")
    if hf_hi >= cfg.resample_hz / 2:
        raise CliError(f"hf upper edge {hf_hi} Hz must lie below the Nyquist frequency of {cfg.resample_hz} Hz")
    if not 0 < cfg.alpha < 1:
        raise CliError(f"alpha must lie in (0, 1), got {cfg.alpha}")
    if cfg.entropy_m < 1 or cfg.entropy_r <= 0:
        raise CliError("entropy m must be >= 1 and r must be > 0")
    if cfg.workers < 1:
        raise CliError("workers must be >= 1")
    return cfg


def build_config(args) -> RunConfig:
    """Defaults, then the ``--config`` JSON file, then explicit flags."""
    values = RunConfig().to_dict()
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file {args.config}: {exc}") from None
        unknown = sorted(set(doc) - set(values))
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
        values.update(doc)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if isinstance(values["bands"], str):
        values["bands"] = _parse_bands(values["bands"])
    values["bands"] = tuple(float(b) for b in values["bands"])
    if isinstance(values["input"], (str, Path)):
        values["input"] = [values["input"]]
    values["input"] = [str(p) for p in values["input"]]
    return _validate(RunConfig(**values))


def discover_sessions(inputs) -> list[Path]:
    """Session directories named directly or found one level below a corpus directory."""
    found = []
    for raw in inputs:
        p = Path(raw)
        if (p / "meta.json").is_file():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(c for c in p.iterdir() if (c / "meta.json").is_file()))
        else:
            raise CliError(f"input is neither a session nor a corpus directory: {p}")
    if not found:
        raise CliError("no sessions found under " + ", ".join(str(i) for i in inputs))
    return found


def _analyze_path(path, cfg: RunConfig):
    try:
        rec, meta = load_session(path)
    except SessionError as exc:
        return SessionResult(subject_id=Path(path).name, rejected=f"load failed: {exc}")
    return analyze_session(rec, meta, cfg)


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_analysis(results, out: Path, cfg: RunConfig):
    out.mkdir(parents=True, exist_ok=True)
    with (out / "features.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "phase", "source", *FEATURE_NAMES])
        for r in results:
            for phase in PHASES:
                for src in SOURCES:
                    if phase in r.features:
                        w.writerow([r.subject_id, phase, src, *r.features[phase][src].csv_row()])
    with (out / "features_long.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "phase", "source", "feature", "value"])
        for r in results:
            for phase in PHASES:
                if phase not in r.features:
                    continue
                for src in SOURCES:
                    for name, v in r.features[phase][src].to_dict().items():
                        w.writerow([r.subject_id, phase, src, name, _fmt(v)])
    rejected = {
        "rejected": {r.subject_id: r.rejected for r in results if r.rejected},
        "missing_phases": {r.subject_id: r.missing for r in results if r.missing and not r.rejected},
    }
    _dump_json(out / "rejected.json", rejected)
    quality = {}
    for r in results:
        entry = {"quality": r.quality.to_dict() if r.quality else None}
        if "ppi_lag_s" in r.diagnostics:
            entry["ppi_lag_s"] = r.diagnostics["ppi_lag_s"]
        for name, s in r.intervals.items():
            entry[f"{name}_removed"] = int(s.n_removed)
            entry[f"{name}_total"] = int(s.n_original)
        quality[r.subject_id] = entry
    _dump_json(out / "quality.json", quality)
    _dump_json(out / "config.json", cfg.to_dict())
    if cfg.export_intervals:
        idir = out / "intervals"
        idir.mkdir(exist_ok=True)
        for r in results:
            for name, s in r.intervals.items():
                s.to_csv(idir / f"{r.subject_id}_{name}.csv")


def _dump_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def cmd_analyze(cfg: RunConfig) -> int:
    if not cfg.input:
        raise CliError("analyze needs --input")
    paths = discover_sessions(cfg.input)
    if cfg.workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_analyze_path, paths, [cfg] * len(paths)))
    else:
        results = [_analyze_path(p, cfg) for p in paths]
    results.sort(key=lambda r: r.subject_id)
    out = Path(cfg.out)
    write_analysis(results, out, cfg)
    n_rej = sum(r.rejected is not None for r in results)
    n_missing = sum(bool(r.missing) for r in results if r.rejected is None)
    for r in results:
        if r.rejected:
            log.warning("%s rejected: %s", r.subject_id, r.rejected)
        for phase, why in r.missing.items():
            if not r.rejected:
                log.warning("%s missing %s: %s", r.subject_id, phase, why)
    print(f"analyzed {len(results)} session(s): {len(results) - n_rej} accepted, {n_rej} rejected; wrote {out}")
    if n_rej == len(results):
        print("error: every session was rejected, see rejected.json", file=sys.stderr)
        return EXIT_FATAL
    return EXIT_PARTIAL if (n_rej or n_missing) else EXIT_OK


def read_features(path) -> dict:
    """``{phase: ([hrv FeatureSet], [prv FeatureSet])}`` from an analyze ``features.csv``."""
    path = Path(path)
    if path.is_dir():
        path = path / "features.csv"
    if not path.is_file():
        raise CliError(f"missing features file: {path}")
    rows = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"subject_id", "phase", "source", *FEATURE_NAMES}
        if not need <= set(reader.fieldnames or ()):
            raise CliError(f"malformed features file {path}: missing columns")
        for row in reader:
            rows[(row["phase"], row["subject_id"], row["source"])] = FeatureSet.from_dict(row)
    out = {}
    for phase in PHASES:
        subjects = sorted({s for (p, s, _) in rows if p == phase})
        pairs = [(rows.get((phase, s, "HRV")), rows.get((phase, s, "PRV"))) for s in subjects]
        pairs = [(h, p) for h, p in pairs if h is not None and p is not None]
        if pairs:
            out[phase] = ([h for h, _ in pairs], [p for _, p in pairs])
    return out


def cmd_compare(cfg: RunConfig) -> int:
    if not cfg.input:
        raise CliError("compare needs --input (an analyze output directory or features.csv)")
    by_phase = {}
    for inp in cfg.input:
        for phase, (h, p) in read_features(inp).items():
            hh, pp = by_phase.setdefault(phase, ([], []))
            hh.extend(h)
            pp.extend(p)
    n_sessions = max((len(h) for h, _ in by_phase.values()), default=0)
    if n_sessions < MIN_PAIRS:
        raise CliError(f"compare needs at least {MIN_PAIRS} analysed sessions, found {n_sessions}")
    phases = {}
    for phase, (h, p) in by_phase.items():
        if len(h) < MIN_PAIRS:
            log.warning("phase %s has only %d session(s); skipped", phase, len(h))
            continue
        phases[phase] = compare_features(build_paired_samples(h, p), alpha=cfg.alpha)
    text, doc = render_report(phases, alpha=cfg.alpha)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    _dump_json(out / "report.json", doc)
    print(text, end="")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    if args.scenario:
        try:
            spec = synth.corpus_spec_from_dict(json.loads(Path(args.scenario).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise CliError(f"cannot read scenario file {args.scenario}: {exc}") from None
    else:
        spec = PRESETS[args.preset]
    out = synth.write_corpus(cfg.out, spec, args.n, cfg.seed)
    print(f"wrote {args.n} session(s) to {out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    p.add_argument("--input", nargs="+", help="session directories or corpus directories")
    p.add_argument("--out", help="output directory")
    p.add_argument("--alpha", type=float, help="family-wise significance level (default 0.05)")
    p.add_argument("--bands", type=_parse_bands, help="lf_lo,lf_hi,hf_lo,hf_hi in Hz")
    p.add_argument("--resample-hz", dest="resample_hz", type=float, help="spline resampling rate (default 4)")
    p.add_argument("--entropy-m", dest="entropy_m", type=int, help="entropy embedding dimension (default 2)")
    p.add_argument("--entropy-r", dest="entropy_r", type=float, help="entropy tolerance as a fraction of SD (default 0.2)")
    p.add_argument("--seed", type=int, help="random seed for synthetic corpora (default 7)")
    p.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
    p.add_argument("--no-quality-gate", dest="quality_gate", action="store_const", const=False,
                   help="keep sessions that fail the PPG quality rule")
    p.add_argument("--export-intervals", dest="export_intervals", action="store_const", const=True,
                   help="also write filtered RRI/PPI series")
    p.add_argument("--no-align-ppi", dest="align_ppi", action="store_const", const=False,
                   help="slice PPI with the same time windows as RRI instead of lag-aligned ones")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrvprv", description="Compare ECG-derived HRV with PPG-derived PRV.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("analyze", help="detect beats and compute per-phase features"))
    _common(sub.add_parser("compare", help="paired HRV vs PRV tests per phase"))
    sp = sub.add_parser("synth", help="generate a synthetic session corpus")
    _common(sp)
    sp.add_argument("--n", type=int, default=20, help="number of sessions (default 20)")
    sp.add_argument("--preset", choices=sorted(PRESETS), default="posture")
    sp.add_argument("--scenario", help="JSON corpus specification; overrides --preset")
    _common(sub.add_parser("print-config", help="print the effective configuration as JSON"))
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "print-config":
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.n < 1:
            raise CliError("--n must be >= 1")
        return cmd_synth(args, cfg)
    except (CliError, synth.ScenarioError, SessionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
