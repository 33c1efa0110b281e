"""
Command-line front end.

    ssirelay compute  --config CFG [--output PATH]
    ssirelay simulate --config CFG [--samples N] [--seed S] [--workers W]
    ssirelay sweep    --config CFG --output out.csv [--emit-plot]
    ssirelay check    --config CFG

``--config table1`` loads the bundled four-relay parameter set.  Failures
print a single JSON error record on stderr and exit non-zero (2 for bad
configuration, 1 for numerical failures or failed checks).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import engine, montecarlo
from .engine import EngineConfig, Protocol, RelayLink, Scenario
from .fading import EgkParams
from .perfkernel import MODULATIONS, PerfKind, PerfSpec
from .selection import FirstHopEnsemble, SelectionError, selection_probabilities
from .specfun import QuadTolerance

NORM_THRESHOLD = 1e-4


class ConfigError(ValueError):
    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field
        self.msg = msg


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path):
    if str(path) == "table1":
        text = resources.files("ssirelay").joinpath("data/table1.json").read_text("utf-8")
    else:
        try:
            text = Path(path).read_text("utf-8")
        except OSError as e:
            raise ConfigError("--config", str(e)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON: {e}") from None


def _num(d, key, where, default=None, allow_inf=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}", "missing")
        return default
    v = d[key]
    if allow_inf and isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _hop(d, where):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected an object")
    vals = dict(m=_num(d, "m", where), xi=_num(d, "xi", where),
                n=_num(d, "n", where, allow_inf=True), zeta=_num(d, "zeta", where),
                omega=_num(d, "omega", where))
    try:
        return EgkParams(**vals)
    except ValueError as e:
        raise ConfigError(where, str(e)) from None


def parse_links(cfg):
    relays = cfg.get("relays")
    if not isinstance(relays, list) or not relays:
        raise ConfigError("relays", "expected a non-empty list")
    return tuple(RelayLink(_hop(r.get("hop1"), f"relays[{i}].hop1"),
                           _hop(r.get("hop2"), f"relays[{i}].hop2"))
                 for i, r in enumerate(relays))


def parse_protocols(cfg):
    raw = cfg.get("protocols", cfg.get("protocol", "SSI"))
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("protocols", "expected at least one protocol")
    out = []
    for i, p in enumerate(raw):
        try:
            out.append(Protocol(str(p).upper()))
        except ValueError:
            raise ConfigError(f"protocols[{i}]", f"unknown protocol {p!r}") from None
    return out


def parse_metric(cfg):
    m = cfg.get("metric")
    if not isinstance(m, dict):
        raise ConfigError("metric", "expected an object")
    kind = str(m.get("kind", "")).lower()
    try:
        if kind == "bep":
            mod = m.get("modulation")
            if mod not in MODULATIONS:
                raise ConfigError("metric.modulation", f"expected one of {sorted(MODULATIONS)}")
            return PerfSpec.bep(mod)
        if kind == "capacity":
            return PerfSpec.capacity(_num(m, "bandwidth", "metric", default=1.0))
        if kind == "mgf":
            return PerfSpec.mgf(_num(m, "p", "metric"))
        if kind == "moment":
            k = m.get("k")
            if not isinstance(k, int) or isinstance(k, bool) or k < 0:
                raise ConfigError("metric.k", "expected a non-negative integer")
            return PerfSpec.moment(k)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("metric", str(e)) from None
    raise ConfigError("metric.kind", "expected bep, capacity, mgf or moment")


def parse_engine(cfg):
    e = cfg.get("engine", {})
    try:
        tol = QuadTolerance(rel_tol=_num(e, "rel_tol", "engine", 1e-10),
                            abs_tol=_num(e, "abs_tol", "engine", 1e-14))
        return EngineConfig(gcq_N=int(_num(e, "gcq_N", "engine", 64)), u_tol=tol)
    except ConfigError:
        raise
    except ValueError as e_:
        raise ConfigError("engine", str(e_)) from None


def parse_mc(cfg, args):
    m = cfg.get("mc", {})
    enabled = bool(m.get("enabled", True))
    samples = args.samples if args.samples is not None else int(_num(m, "samples", "mc", 1_000_000))
    seed = args.seed if args.seed is not None else int(_num(m, "seed", "mc", 20240917))
    workers = args.workers if args.workers is not None else int(_num(m, "workers", "mc", 1))
    try:
        return enabled, montecarlo.McConfig(samples=samples, seed=seed, workers=workers)
    except ValueError as e:
        raise ConfigError("mc", str(e)) from None


def parse_sweep(cfg):
    s = cfg.get("sweep")
    if not isinstance(s, dict):
        raise ConfigError("sweep", "expected an object")
    a, b, h = (_num(s, k, "sweep") for k in ("start_db", "stop_db", "step_db"))
    if not h > 0:
        raise ConfigError("sweep.step_db", "must be > 0")
    if a > b:
        raise ConfigError("sweep", "start_db must not exceed stop_db")
    n = int(math.floor((b - a) / h + 1e-9)) + 1
    return [round(a + i * h, 12) for i in range(n)]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _analytic(scn, spec, ecfg):
    if spec.kind is PerfKind.MOMENT:
        return engine.moments(scn, spec.moment_k, ecfg)
    return engine.aup(scn, spec, ecfg)


def _result_record(scn, spec, r):
    return dict(protocol=scn.protocol.value, snr_db=scn.snr_scale_db, metric=spec.label,
                analytic=r.analytic_value, analytic_err=r.error_estimate,
                norm_residual=r.normalization_residual,
                flagged=bool(abs(r.normalization_residual) >= NORM_THRESHOLD))


def cmd_compute(args, cfg):
    links = parse_links(cfg)
    spec = parse_metric(cfg)
    ecfg = parse_engine(cfg)
    snr = _num(cfg, "snr_db", "", 0.0)
    out = []
    for proto in parse_protocols(cfg):
        if proto is Protocol.CSI_SIM_ONLY:
            continue
        scn = Scenario(links, proto, snr)
        out.append(_result_record(scn, spec, _analytic(scn, spec, ecfg)))
    if not out:
        raise ConfigError("protocols", "no analytic protocol requested (CSI_SIM_ONLY is simulation-only)")
    return out


def cmd_simulate(args, cfg):
    links = parse_links(cfg)
    spec = parse_metric(cfg)
    _, mc = parse_mc(cfg, args)
    snr = _num(cfg, "snr_db", "", 0.0)
    out = []
    for proto in parse_protocols(cfg):
        est = montecarlo.simulate(Scenario(links, proto, snr), spec, mc)
        out.append(dict(protocol=proto.value, snr_db=snr, metric=spec.label,
                        mc_mean=est.mean, mc_stderr=est.std_error,
                        samples=est.samples_used, seed=mc.seed))
    return out


CSV_COLUMNS = ["snr_db", "protocol", "metric", "analytic", "analytic_err",
               "mc_mean", "mc_stderr", "samples", "norm_residual"]


def _g17(v):
    if isinstance(v, str):
        return v
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def run_sweep(cfg, args):
    """Rows of the sweep table, ordered by (snr_db, protocol)."""
    links = parse_links(cfg)
    spec = parse_metric(cfg)
    ecfg = parse_engine(cfg)
    protos = parse_protocols(cfg)
    snrs = parse_sweep(cfg)
    mc_on, mc = parse_mc(cfg, args)
    if Protocol.CSI_SIM_ONLY in protos and not mc_on:
        raise ConfigError("mc.enabled", "CSI_SIM_ONLY has no analytic path; enable mc")

    jobs = [(d, p) for d in snrs for p in protos if p is not Protocol.CSI_SIM_ONLY]

    def one(job):
        d, p = job
        return job, _analytic(Scenario(links, p, d), spec, ecfg)

    workers = max(1, args.workers or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            analytic = dict(ex.map(one, jobs))
    else:
        analytic = dict(map(one, jobs))

    mcres = {}
    if mc_on:
        for p in protos:
            est = montecarlo.simulate_sweep(Scenario(links, p, 0.0), [spec], snrs, mc)
            for j, d in enumerate(snrs):
                mcres[(d, p)] = est[(0, j)]
    rows, flagged = [], []
    for d in snrs:
        for p in protos:
            r = analytic.get((d, p))
            e = mcres.get((d, p))
            row = dict(snr_db=d, protocol=p.value, metric=spec.label,
                       analytic=r.analytic_value if r else math.nan,
                       analytic_err=r.error_estimate if r else math.nan,
                       mc_mean=e.mean if e else math.nan,
                       mc_stderr=e.std_error if e else math.nan,
                       samples=e.samples_used if e else 0,
                       norm_residual=r.normalization_residual if r else math.nan)
            if r and abs(r.normalization_residual) >= NORM_THRESHOLD:
                flagged.append(dict(snr_db=d, protocol=p.value,
                                    norm_residual=r.normalization_residual))
            rows.append(row)
    return rows, flagged, spec


def write_csv(rows, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_g17(r[c]) for c in CSV_COLUMNS])


def gnuplot_script(csv_path, spec, protocols):
    logy = spec.kind not in (PerfKind.CAPACITY,)
    lines = [
        "# generated by ssirelay sweep",
        "set datafile separator ','",
        "set xlabel 'average SNR (dB)'",
        f"set ylabel '{spec.label}'",
        "set grid",
    ]
    if logy:
        lines.append("set logscale y")
    plots = []
    for p in protocols:
        sel = f"(strcol(2) eq '{p}' ? $%d : 1/0)"
        if p != "CSI_SIM_ONLY":
            plots.append(f"'{csv_path}' using 1:{sel % 4} with lines title '{p} analytic'")
        plots.append(f"'{csv_path}' using 1:{sel % 6} with points title '{p} simulation'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_sweep(args, cfg):
    rows, flagged, spec = run_sweep(cfg, args)
    buf = io.StringIO(newline="")
    write_csv(rows, buf)
    text = buf.getvalue()
    if args.output:
        Path(args.output).write_bytes(text.encode("utf-8"))
        if args.emit_plot:
            gp = Path(args.output).with_suffix(".gp")
            protos = [p.value for p in parse_protocols(cfg)]
            gp.write_bytes(gnuplot_script(Path(args.output).name, spec, protos).encode("utf-8"))
    else:
        sys.stdout.write(text)
    if flagged:
        sys.stderr.write(json.dumps(dict(warning="normalization residual above threshold",
                                         threshold=NORM_THRESHOLD, rows=flagged)) + "\n")
    return None


def cmd_check(args, cfg):
    links = parse_links(cfg)
    ecfg = parse_engine(cfg)
    snr = _num(cfg, "snr_db", "", 0.0)
    checks = []
    for proto in parse_protocols(cfg):
        if proto is Protocol.CSI_SIM_ONLY:
            continue
        scn = Scenario(links, proto, snr)
        r = engine.normalization(scn, ecfg)
        checks.append(dict(check="normalization", protocol=proto.value,
                           residual=r.normalization_residual,
                           passed=bool(abs(r.normalization_residual) < NORM_THRESHOLD)))
    if all(lk.hop1.shadowed for lk in links):
        ens = FirstHopEnsemble.from_params([lk.hop1 for lk in links])
        try:
            mu = selection_probabilities(ens)
            dev = abs(sum(mu.mu) - 1.0)
            checks.append(dict(check="selection_sum", residual=dev, mu=list(mu.mu),
                               passed=bool(dev < 1e-9)))
        except SelectionError as e:
            checks.append(dict(check="selection_sum", residual=e.deviation, passed=False))
    gk = all(h.xi == 1.0 and (not h.shadowed or h.zeta == 1.0)
             for lk in links for h in (lk.hop1, lk.hop2))
    if gk:
        spec = PerfSpec.bep("bpsk")
        for proto in (Protocol.SSI, Protocol.RR, Protocol.AP):
            scn = Scenario(links, proto, snr)
            try:
                a = engine.aup(scn, spec, ecfg).analytic_value
            except ValueError:
                continue
            b = engine.aup_gk_fastpath(scn, spec, ecfg).analytic_value
            rel = abs(a - b) / abs(b)
            checks.append(dict(check="gk_fastpath", protocol=proto.value, residual=rel,
                               passed=bool(rel <= 1e-6)))
    else:
        checks.append(dict(check="gk_fastpath", skipped="shaping factors differ from 1",
                           passed=True))
    report = dict(passed=all(c["passed"] for c in checks), checks=checks)
    return report


def _emit(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=True) + "\n"
    if path:
        Path(path).write_bytes(text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _error(kind, msg, field=None, code=1):
    rec = dict(error=dict(type=kind, message=msg))
    if field:
        rec["error"]["field"] = field
    sys.stderr.write(json.dumps(rec) + "\n")
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="ssirelay", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in [("compute", "analytic value at snr_db"),
                           ("simulate", "Monte Carlo estimate at snr_db"),
                           ("sweep", "SNR sweep to CSV"),
                           ("check", "normalization / selection / fast-path checks")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON config path or 'table1'")
        p.add_argument("--output", help="output file (stdout if omitted)")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--emit-plot", action="store_true",
                       help="sweep: also write a gnuplot script next to the CSV")
    return ap


COMMANDS = dict(compute=cmd_compute, simulate=cmd_simulate, sweep=cmd_sweep, check=cmd_check)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("<root>", "expected a JSON object")
        out = COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        return _error("config", e.msg, e.field, code=2)
    except (ValueError, ArithmeticError, RuntimeError) as e:
        return _error(type(e).__name__, str(e))
    if out is not None:
        _emit(out, args.output)
    if args.command == "check" and not out["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
