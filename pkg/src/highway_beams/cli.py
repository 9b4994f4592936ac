"""Command line front end: ``highway-beams analyze|simulate|compare|sweep``.

Exit codes: 0 all gates pass, 1 usage or configuration error, 2 analysis and
simulation disagree beyond the statistical gate (compare only).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import closed_form as cf
from .config import SWEEP_OUTPUTS, SWEEP_PARAMETERS, ConfigError, ScenarioConfig, Sweep, parse_config
from .monte_carlo import EnsembleStats, MetricStats, run_ensemble, sample_realization, trace_realization
from .overhead import SaturationError, feasible_csi_periods, overhead_report, ssb_count, t_beamswitch, t_handover
from .stochastic_geometry import Seed, Side

log = logging.getLogger("highway_beams")

CSV_SCHEMA = "highway-beams-sweep/1"
SWEEP_COLUMNS = ["schema", "parameter", "value", "output", "analytic", "sim_mean", "ci95_half_width",
                 "rel_error"]
# single-sided means must sit within this many standard errors of the closed form
COMPARE_Z = 3.0
DOUBLE_SIDE_REL_GATE = 0.15


class UsageError(Exception):
    pass


# -- analysis -------------------------------------------------------------------------

def analyze(cfg: ScenarioConfig) -> dict:
    """Closed-form report; HON clamp warnings are collected, not printed."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.single_side is not None:
            p = cfg.single_params()
            bsn, hon = cf.bsn_single_side(p), cf.hon_single_side(p)
            out = {
                "deployment": cfg.run.deployment,
                "lambda_los_per_m": p.lambda_los,
                "w_m": p.w,
                "expected_switches_neighbor": cf.expected_switches_neighbor(p),
            }
        else:
            p = cfg.double_params()
            ctl = cfg.series_control
            hp = cf.handover_probabilities(p)
            ns = cf.expected_switches_box(p, ctl)
            nh = cf.expected_handovers_box(p, ctl)
            e_tb, e_bt = cf.expected_switches_cross(p)
            bsn, hon = cf.bsn_double_side(p, ctl), cf.hon_double_side(p, ctl)
            out = {
                "deployment": "double",
                "lambda_top_los_per_m": p.lambda_t_los,
                "lambda_bottom_los_per_m": p.lambda_b_los,
                "w_top_m": p.w_t,
                "w_bottom_m": p.w_b,
                "p_tb": hp.tb,
                "p_bt": hp.bt,
                "e_ntb": e_tb,
                "e_nbt": e_bt,
                "ns_box": {"value": ns.value, "n_terms": ns.n_terms, "tail_bound": ns.tail_bound},
                "nh_box": {"value": nh.value, "n_terms": nh.n_terms, "tail_bound": nh.tail_bound},
            }
    oc = cfg.overhead_config
    out.update({
        "n_c": cfg.codebook.n_c,
        "beamwidth_deg": cfg.cb.beamwidth_deg,
        "l_h_m": cfg.l_h,
        "bsn": bsn,
        "hon": hon,
        "overhead": _overhead(hon, bsn, cfg),
        "lambda_v_per_km": cfg.densities.lambda_v_per_km,
        "lambda_v_used": False,
        "warnings": [str(w.message) for w in caught],
    })
    out["overhead"]["ssb_per_handover"] = ssb_count(oc)
    return out


def _overhead(n_ho: float, n_bs: float, cfg: ScenarioConfig) -> dict:
    try:
        return overhead_report(n_ho, n_bs, cfg.l_h, cfg.overhead_config).as_dict()
    except SaturationError as e:
        return {"saturated": True, "detail": str(e)}


# -- simulation -----------------------------------------------------------------------

def _ensemble(cfg: ScenarioConfig, detail: bool = True) -> EnsembleStats:
    n = cfg.run.n_realizations

    def progress(done: int, st: EnsembleStats) -> None:
        log.info("%d/%d realizations: BSN %.4g +/- %.3g, HON %.4g +/- %.3g",
                 done, n, st.bsn.mean, st.bsn.half_width, st.hon.mean, st.hon.half_width)

    return run_ensemble(cfg.simulation_setup(), n, cfg.run.master_seed, workers=cfg.run.workers,
                        detail=detail, on_checkpoint=progress)


def tcr_samples(st: EnsembleStats, cfg: ScenarioConfig) -> np.ndarray:
    oc = cfg.overhead_config
    spent = t_handover(st.handovers, oc) + t_beamswitch(st.switches, oc)
    total = 1000.0 * cfg.l_h / oc.speed
    if np.any(spent >= total):
        raise SaturationError("beam training exceeds travel time in at least one realization")
    return spent / (total - spent)


def simulate(cfg: ScenarioConfig, event_log: Path | None = None) -> dict:
    st = _ensemble(cfg)
    out = st.as_dict()
    soj = st.sojourn_ms(cfg.speed)
    out["sojourn_ms"] = soj.as_dict()
    try:
        out["tcr"] = MetricStats.of(tcr_samples(st, cfg)).as_dict()
    except SaturationError as e:
        out["tcr"] = {"saturated": True, "detail": str(e)}
    if soj.count:
        fc = feasible_csi_periods(soj.mean, cfg.overhead_config)
        out["feasible_csi_periods"] = {"slots": list(fc.slots), "ms": list(fc.ms), "advisory": fc.advisory}
    out["deployment"] = cfg.run.deployment
    out["master_seed"] = cfg.run.master_seed
    if event_log is not None:
        write_event_log(cfg, event_log)
    return out


def write_event_log(cfg: ScenarioConfig, path: Path) -> None:
    setup = cfg.simulation_setup()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["realization_id", "x_m", "event", "from", "to"])
        for i in range(cfg.run.n_realizations):
            tr = trace_realization(sample_realization(setup, Seed(cfg.run.master_seed, i)), setup.forward_only)
            for x, kind, a, b in tr.events():
                w.writerow([i, repr(float(x)), kind, a, b])


# -- comparison -------------------------------------------------------------------------

def _row(name: str, analytic: float, sim: MetricStats, gate: str) -> dict:
    diff = sim.mean - analytic
    se = math.sqrt(sim.variance / sim.count) if sim.count else math.nan
    rel = diff / sim.mean if sim.mean else math.nan
    if gate == "z":
        ok = abs(diff) <= COMPARE_Z * se
    elif gate == "rel":
        ok = abs(rel) <= DOUBLE_SIDE_REL_GATE
    else:
        ok = True
    return {
        "metric": name,
        "analytic": analytic,
        "sim_mean": sim.mean,
        "ci95_half_width": sim.half_width,
        "abs_error": diff,
        "rel_error": rel,
        "in_ci95": abs(diff) <= sim.half_width,
        "gate": gate,
        "pass": bool(ok),
    }


def compare(cfg: ScenarioConfig) -> tuple[dict, bool]:
    ana = analyze(cfg)
    st = _ensemble(cfg, detail=cfg.single_side is None)
    single = cfg.single_side is not None
    rows = [
        _row("BSN", ana["bsn"], st.bsn, "z" if single else "rel"),
        _row("HON", ana["hon"], st.hon, "z" if single else "none"),
    ]
    if not single:
        rows += [
            _row("NS_box", ana["ns_box"]["value"], st.ns_box, "none"),
            _row("NH_box", ana["nh_box"]["value"], st.nh_box, "none"),
        ]
    ok = all(r["pass"] for r in rows)
    return {"deployment": cfg.run.deployment, "n_realizations": st.n_realizations,
            "n_empty_excluded": st.n_empty, "rows": rows, "pass": ok}, ok


# -- sweeps -----------------------------------------------------------------------------

def _apply(cfg: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param == "lambda_b":
        return cfg.with_values(densities__lambda_b_per_km=value, densities__lambda_b_top_per_km=None,
                               densities__lambda_b_bottom_per_km=None)
    if param == "n_c":
        if value != int(value):
            raise ConfigError(f"n_c sweep value {value} is not an integer")
        return cfg.with_values(codebook__n_c=int(value))
    if param == "beamwidth":
        from .codebook import Codebook
        return cfg.with_values(codebook__n_c=Codebook.from_beamwidth(value).n_c)
    if param == "speed":
        return cfg.with_values(overhead__speed_kmh=value)
    if param == "w":
        return cfg.with_values(highway__w_top_m=value, highway__derive_w=False)
    raise ConfigError(f"unknown sweep parameter {param!r}")


def sweep(cfg: ScenarioConfig, plan: Sweep) -> list[dict]:
    rows = []
    for v in plan.values:
        c = _apply(cfg, plan.parameter, v)
        log.info("sweep %s = %g", plan.parameter, v)
        ana = analyze(c)
        st = _ensemble(c, detail=False)
        for out in plan.outputs:
            if out == "BSN":
                a, s = ana["bsn"], st.bsn
            elif out == "HON":
                a, s = ana["hon"], st.hon
            elif out == "TCR":
                a, s = ana["overhead"].get("tcr", math.nan), MetricStats.of(tcr_samples(st, c))
            else:
                a, s = math.nan, st.sojourn_ms(c.speed)
            rel = (s.mean - a) / s.mean if s.mean and math.isfinite(a) else math.nan
            rows.append({"schema": CSV_SCHEMA, "parameter": plan.parameter, "value": v, "output": out,
                         "analytic": a, "sim_mean": s.mean, "ci95_half_width": s.half_width, "rel_error": rel})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# -- output -------------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return _jsonable(x.item())
    return x


def _flat(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for i, item in enumerate(v):
                out.update(_flat(item, f"{key}.{i}."))
        else:
            out[key] = v
    return out


def render(report: dict, fmt: str) -> str:
    report = _jsonable(report)
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in sorted(_flat(report).items()):
        w.writerow([k, json.dumps(v) if isinstance(v, list) else v])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- argument handling ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="highway-beams", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("analyze", "simulate", "compare", "sweep"):
        s = sub.add_parser(name)
        s.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        s.add_argument("--config", help="scenario file (defaults apply when omitted)")
        s.add_argument("--out", help="write the report here instead of stdout")
        s.add_argument("--seed", type=int, help="override run.master_seed")
        s.add_argument("--realizations", type=int, help="override run.n_realizations")
        s.add_argument("--workers", type=int, help="override run.workers")
        s.add_argument("--format", choices=("json", "csv"), default="csv" if name == "sweep" else "json")
        if name == "simulate":
            s.add_argument("--event-log", help="per-realization event CSV")
        if name == "sweep":
            s.add_argument("--param", choices=SWEEP_PARAMETERS)
            s.add_argument("--values", help="comma separated grid")
            s.add_argument("--outputs", help=f"comma separated subset of {','.join(SWEEP_OUTPUTS)}")
    return p


def _load(args) -> ScenarioConfig:
    cfg = parse_config(args.config)
    run = {}
    if args.seed is not None:
        run["run__master_seed"] = args.seed
    if args.realizations is not None:
        run["run__n_realizations"] = args.realizations
    if args.workers is not None:
        run["run__workers"] = args.workers
    return cfg.with_values(**run) if run else cfg


def _sweep_plan(cfg: ScenarioConfig, args) -> Sweep:
    s = cfg.sweep
    param = args.param or s.parameter
    values = tuple(float(v) for v in args.values.split(",")) if args.values else s.values
    outputs = tuple(o.strip() for o in args.outputs.split(",")) if args.outputs else s.outputs
    if param is None:
        raise UsageError("sweep needs --param or sweep.parameter in the config")
    plan = Sweep(param, values, outputs)
    cfg.with_values(sweep__parameter=param, sweep__values=values, sweep__outputs=outputs)  # validates
    return plan


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _load(args)
        if args.command == "analyze":
            _emit(render(analyze(cfg), args.format), args.out)
        elif args.command == "simulate":
            ev = Path(args.event_log) if args.event_log else None
            _emit(render(simulate(cfg, ev), args.format), args.out)
        elif args.command == "compare":
            report, ok = compare(cfg)
            _emit(render(report, args.format), args.out)
            return 0 if ok else 2
        else:
            rows = sweep(cfg, _sweep_plan(cfg, args))
            if args.format == "json":
                _emit(render({"schema": CSV_SCHEMA, "rows": rows}, "json"), args.out)
            else:
                _emit(sweep_csv(rows), args.out)
    except (ConfigError, UsageError, ValueError, SaturationError, cf.SeriesConvergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
