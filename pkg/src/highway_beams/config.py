"""Scenario configuration: a flat ``section.key = value`` text format.

Values are kept in the units they are written in (km, per km, km/h) so that
dumping a parsed file reproduces it exactly; SI views are properties.

Example::

    # dense two-sided deployment
    densities.lambda_b_per_km = 20
    codebook.n_c = 32
    run.n_realizations = 5000
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .closed_form import DoubleSideParams, SeriesControl, SingleSideParams
from .codebook import Codebook, LaneGeometry
from .monte_carlo import SimulationSetup
from .overhead import OverheadConfig
from .stochastic_geometry import LosModel, Side

__all__ = [
    "ConfigError",
    "Highway",
    "Densities",
    "CodebookSection",
    "Overhead",
    "Run",
    "Sweep",
    "ScenarioConfig",
    "parse_config",
    "parse_config_text",
    "dump_config",
    "SWEEP_PARAMETERS",
    "SWEEP_OUTPUTS",
]

SWEEP_PARAMETERS = ("lambda_b", "n_c", "beamwidth", "speed", "w")
SWEEP_OUTPUTS = ("BSN", "HON", "TCR", "sojourn")
DEPLOYMENTS = ("double", "top", "bottom")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


@dataclass(frozen=True)
class Highway:
    length_km: float = 10.0
    n_lanes: int = 4
    lane_width_m: float = 3.7
    vu_lane: int = 1
    bs_setback_m: float = 0.0
    w_top_m: float = 10.0
    w_bottom_m: float = 20.0
    derive_w: bool = False
    antenna_height_m: float = 10.0
    effective_height: bool = False


@dataclass(frozen=True)
class Densities:
    lambda_b_per_km: float = 10.0
    lambda_b_top_per_km: float | None = None
    lambda_b_bottom_per_km: float | None = None
    lambda_block_per_km: float = 0.1
    lambda_block_top_per_km: float | None = None
    lambda_block_bottom_per_km: float | None = None
    tau0_m: float = 9.0
    lambda_v_per_km: float = 1.0  # carried for reporting; no event formula uses it


@dataclass(frozen=True)
class CodebookSection:
    n_c: int = 72


@dataclass(frozen=True)
class Overhead:
    codebook_bs: int | None = None  # defaults to codebook.n_c
    codebook_vu: int = 4
    tau_ss_ms: float = 5.0
    tau_sym_ms: float = 0.125
    speed_kmh: float = 60.0
    t_ss_period_ms: int = 20
    t_csi_period_slots: int = 20
    slot_symbols: int = 14
    fractional_ssb: bool = False


@dataclass(frozen=True)
class Run:
    n_realizations: int = 1000
    master_seed: int = 0
    rel_tol: float = 1e-10
    n_max: int = 512
    workers: int = 1
    deployment: str = "double"
    forward_only: bool = False


@dataclass(frozen=True)
class Sweep:
    parameter: str | None = None
    values: tuple[float, ...] = ()
    outputs: tuple[str, ...] = ("BSN", "HON")


_SECTIONS = {
    "highway": Highway,
    "densities": Densities,
    "codebook": CodebookSection,
    "overhead": Overhead,
    "run": Run,
    "sweep": Sweep,
}


@dataclass(frozen=True)
class ScenarioConfig:
    highway: Highway = field(default_factory=Highway)
    densities: Densities = field(default_factory=Densities)
    codebook: CodebookSection = field(default_factory=CodebookSection)
    overhead: Overhead = field(default_factory=Overhead)
    run: Run = field(default_factory=Run)
    sweep: Sweep = field(default_factory=Sweep)

    def __post_init__(self):
        _validate(self)

    # -- SI views ---------------------------------------------------------------
    @property
    def l_h(self) -> float:
        return self.highway.length_km * 1000.0

    @property
    def cb(self) -> Codebook:
        return Codebook(self.codebook.n_c)

    @property
    def geometry(self) -> LaneGeometry:
        h = self.highway
        height = h.antenna_height_m if h.effective_height else None
        if h.derive_w:
            return LaneGeometry.from_lanes(h.vu_lane, h.n_lanes, h.lane_width_m, h.bs_setback_m, height)
        wt, wb = h.w_top_m, h.w_bottom_m
        if height:
            wt, wb = math.hypot(wt, height), math.hypot(wb, height)
        return LaneGeometry(wt, wb, h.lane_width_m, h.n_lanes)

    @property
    def los(self) -> LosModel:
        d = self.densities
        top = d.lambda_block_per_km if d.lambda_block_top_per_km is None else d.lambda_block_top_per_km
        bot = d.lambda_block_per_km if d.lambda_block_bottom_per_km is None else d.lambda_block_bottom_per_km
        return LosModel(d.tau0_m, top / 1000.0, bot / 1000.0)

    def lambda_bs(self, side: Side) -> float:
        """Deployed BS density on ``side`` (per meter, before LoS thinning)."""
        d = self.densities
        v = d.lambda_b_top_per_km if side is Side.TOP else d.lambda_b_bottom_per_km
        return (d.lambda_b_per_km if v is None else v) / 1000.0

    def lambda_los(self, side: Side) -> float:
        return self.lambda_bs(side) * self.los.los_probability(side)

    @property
    def speed(self) -> float:
        return self.overhead.speed_kmh / 3.6

    @property
    def series_control(self) -> SeriesControl:
        return SeriesControl(self.run.rel_tol, self.run.n_max)

    @property
    def overhead_config(self) -> OverheadConfig:
        o = self.overhead
        return OverheadConfig(
            codebook_bs=self.codebook.n_c if o.codebook_bs is None else o.codebook_bs,
            codebook_vu=o.codebook_vu,
            tau_ss=o.tau_ss_ms,
            tau_sym=o.tau_sym_ms,
            speed=self.speed,
            t_ss_period=o.t_ss_period_ms,
            t_csi_period=o.t_csi_period_slots,
            slot_symbols=o.slot_symbols,
            fractional_ssb=o.fractional_ssb,
        )

    @property
    def single_side(self) -> Side | None:
        dep = self.run.deployment
        return None if dep == "double" else Side(dep)

    def single_params(self) -> SingleSideParams:
        side = self.single_side or Side.TOP
        g = self.geometry
        w = g.w_top if side is Side.TOP else g.w_bottom
        return SingleSideParams(self.lambda_los(side), w, self.cb, self.l_h)

    def double_params(self) -> DoubleSideParams:
        g = self.geometry
        return DoubleSideParams(self.lambda_los(Side.TOP), self.lambda_los(Side.BOTTOM), g.w_top, g.w_bottom,
                                self.cb, self.l_h)

    def simulation_setup(self) -> SimulationSetup:
        side = self.single_side
        lt = self.lambda_bs(Side.TOP) if side in (None, Side.TOP) else 0.0
        lb = self.lambda_bs(Side.BOTTOM) if side in (None, Side.BOTTOM) else 0.0
        return SimulationSetup(self.l_h, lt, lb, self.geometry, self.cb, self.los, self.run.forward_only)

    def with_values(self, **dotted: Any) -> "ScenarioConfig":
        """Copy with ``section__key=value`` replacements."""
        parts: dict[str, dict] = {}
        for k, v in dotted.items():
            sec, key = k.split("__", 1)
            parts.setdefault(sec, {})[key] = v
        kw = {sec: dataclasses.replace(getattr(self, sec), **vals) for sec, vals in parts.items()}
        return dataclasses.replace(self, **kw)


def _validate(c: ScenarioConfig) -> None:
    h, d, o, r = c.highway, c.densities, c.overhead, c.run
    if not h.length_km > 0:
        raise ConfigError("highway.length_km must be positive")
    if h.n_lanes < 1 or not 1 <= h.vu_lane <= h.n_lanes:
        raise ConfigError("highway.vu_lane must lie in 1..n_lanes")
    if not (h.lane_width_m > 0 and h.bs_setback_m >= 0 and h.antenna_height_m >= 0):
        raise ConfigError("lane width must be positive; setback and antenna height non-negative")
    if not (0 < h.w_top_m and 0 < h.w_bottom_m):
        raise ConfigError("highway.w_top_m and highway.w_bottom_m must be positive")
    if r.deployment not in DEPLOYMENTS:
        raise ConfigError(f"run.deployment must be one of {DEPLOYMENTS}")
    g = c.geometry
    if r.deployment == "double" and not g.w_top <= g.w_bottom:
        raise ConfigError("double-sided analysis needs the VU on the top side (w_top <= w_bottom)")
    for name in ("lambda_b_per_km", "lambda_b_top_per_km", "lambda_b_bottom_per_km", "lambda_block_per_km",
                 "lambda_block_top_per_km", "lambda_block_bottom_per_km", "tau0_m", "lambda_v_per_km"):
        v = getattr(d, name)
        if v is not None and not (math.isfinite(v) and v >= 0):
            raise ConfigError(f"densities.{name} must be finite and non-negative")
    try:
        Codebook(c.codebook.n_c)
    except ValueError as e:
        raise ConfigError(f"codebook.n_c: {e}") from None
    try:
        c.overhead_config
    except ValueError as e:
        raise ConfigError(f"overhead: {e}") from None
    try:
        c.series_control
    except ValueError as e:
        raise ConfigError(f"run.rel_tol / run.n_max: {e}") from None
    if r.n_realizations < 1 or r.workers < 1:
        raise ConfigError("run.n_realizations and run.workers must be >= 1")
    if not 0 <= r.master_seed < 2**64:
        raise ConfigError("run.master_seed must be an unsigned 64-bit integer")
    s = c.sweep
    if s.parameter is not None:
        _validate_sweep(s)


def _validate_sweep(s: Sweep) -> None:
    if s.parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep.parameter must be one of {SWEEP_PARAMETERS}")
    if not s.values:
        raise ConfigError("sweep.values must not be empty")
    diffs = [b - a for a, b in zip(s.values[:-1], s.values[1:])]
    if not (all(x > 0 for x in diffs) or all(x < 0 for x in diffs)):
        raise ConfigError("sweep.values must be strictly monotone")
    bad = [o for o in s.outputs if o not in SWEEP_OUTPUTS]
    if bad or not s.outputs:
        raise ConfigError(f"sweep.outputs must be drawn from {SWEEP_OUTPUTS}")


# -- text format --------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _converter(annotation: str):
    ann = annotation.replace(" | None", "")
    if ann == "bool":
        return _parse_bool
    if ann == "int":
        return _parse_int
    if ann == "float":
        return float
    if ann == "str":
        return str
    if ann == "tuple[float, ...]":
        return lambda t: tuple(float(x) for x in t.replace(",", " ").split())
    if ann == "tuple[str, ...]":
        return lambda t: tuple(x for x in t.replace(",", " ").split())
    raise TypeError(annotation)


def parse_config_text(text: str) -> ScenarioConfig:
    values: dict[str, dict[str, Any]] = {}
    seen: dict[str, int] = {}
    beamwidth: tuple[float, int] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        if not val:
            raise ConfigError(f"missing value for {key!r}", lineno)
        if key == "codebook.beamwidth_deg":
            beamwidth = (float(val), lineno)
            continue
        sec, _, name = key.partition(".")
        cls = _SECTIONS.get(sec)
        fields = {f.name: f for f in dataclasses.fields(cls)} if cls else {}
        if name not in fields:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            values.setdefault(sec, {})[name] = _converter(fields[name].type)(val)
        except ValueError as e:
            raise ConfigError(f"{key}: {e}", lineno) from None
    if beamwidth is not None:
        deg, lineno = beamwidth
        if "n_c" in values.get("codebook", {}):
            raise ConfigError("set either codebook.n_c or codebook.beamwidth_deg, not both", lineno)
        try:
            values.setdefault("codebook", {})["n_c"] = Codebook.from_beamwidth(deg).n_c
        except ValueError as e:
            raise ConfigError(str(e), lineno) from None
    try:
        return ScenarioConfig(**{sec: _SECTIONS[sec](**kv) for sec, kv in values.items()})
    except ConfigError as e:
        # anchor invariant violations to the line that set the offending key
        for key, lineno in seen.items():
            if key in str(e):
                raise ConfigError(str(e), lineno) from None
        raise


def parse_config(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config_text(text)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(c: ScenarioConfig) -> str:
    """Serialize every set key; unset optional keys and empty lists are omitted."""
    out = []
    for sec in _SECTIONS:
        obj = getattr(c, sec)
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if v is None or v == ():
                continue
            out.append(f"{sec}.{f.name} = {_fmt(v)}")
    return "\n".join(out) + "\n"
