"""Scenario description, YAML loading and validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..grid.equivalent import (ReducedGrid, external_network, load_reduced, reduce_external,
                               study_network)
from ..grid.network import NetworkError, NetworkModel, load_network
from ..turbine import TurbineParams
from .wind import WindError, WindProfile, build_wind

MODES = ("none", "fixed_pi", "adaptive_str")
MODE_ALIASES = {"none": "none", "pi": "fixed_pi", "fixed_pi": "fixed_pi",
                "str": "adaptive_str", "adaptive_str": "adaptive_str"}


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field_name, message, path=None):
        self.field = field_name
        self.message = str(message)
        self.path = str(path) if path is not None else None
        where = f"{self.path}: " if self.path else ""
        super().__init__(f"{where}{field_name}: {message}")


@dataclass(frozen=True)
class ControllerConfig:
    mode: str = "adaptive_str"
    alpha: float = 0.9
    gamma: float = 0.98
    p0_scale: float = 1e6
    ts: float = 0.01
    # fixed-gain PI baseline, deg per p.u. overspeed (applied with negative feedback)
    kp: float = 40.0
    ki: float = 10.0
    kd: float = 0.0
    # adaptive-loop safeguards
    rls_gate: float = 0.1         # |omega_r - omega_ref| above which RLS only records history
    cov_limit: float = 1e9        # covariance trace beyond which forgetting pauses
    gain_limit: float = 1e6       # reject STR designs with larger |gain|
    warmup_updates: int = 20      # RLS updates before the first STR design is accepted
    dither_deg: float = 0.1       # random-sign pitch dither while identifying (excitation)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError("controller.mode", f"must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ScenarioError("controller.alpha", "must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ScenarioError("controller.gamma", "must lie in (0, 1]")
        if not self.p0_scale > 0:
            raise ScenarioError("controller.p0_scale", "must be positive")
        if not self.ts > 0:
            raise ScenarioError("controller.ts", "must be positive")
        for name in ("kp", "ki", "kd", "rls_gate", "cov_limit", "gain_limit",
                     "dither_deg"):
            if not math.isfinite(getattr(self, name)) or getattr(self, name) < 0:
                raise ScenarioError(f"controller.{name}", "must be finite and non-negative")


@dataclass
class TurbineSite:
    name: str
    bus: int
    tie_bus: int
    units: int
    params: TurbineParams
    wind: WindProfile

    @property
    def rated_mw(self):
        return self.units * self.params.rated_power_kw / 1e3

    @property
    def rating_mva(self):
        return self.units * self.params.rated_generator_mva


@dataclass(frozen=True)
class FaultEvent:
    time: float
    bus: int
    duration: float
    impedance: complex = 1e-4

    @property
    def admittance(self):
        return 1.0 / self.impedance


@dataclass(frozen=True)
class WindEvent:
    time: float
    turbine: str
    profile: WindProfile


@dataclass
class Scenario:
    name: str
    network: NetworkModel
    turbines: list
    dt: float = 1e-3
    t_end: float = 10.0
    reduced: ReducedGrid | None = None
    external: NetworkModel | None = None   # detailed electromagnetic external area
    events: list = field(default_factory=list)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    seed: int = 0
    converter_tau: float = 0.02     # s, first-order converter lag
    p_max: float = 1.5              # converter power ceiling, turbine p.u.
    current_limit: float = 1.1      # converter current limit, multiple of rated MVA
    tsa_every: int = 0              # steps between TSA updates (0: controller rate)
    trace_theta: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt", f"must be positive, got {self.dt}")
        if not self.t_end > self.dt * (1 - 1e-9):
            raise ScenarioError("t_end", f"must exceed dt, got {self.t_end}")
        ratio = self.controller.ts / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ScenarioError("controller.ts", "must be a positive integer multiple of dt")
        if self.reduced is not None and self.external is not None:
            raise ScenarioError("grid", "reduced and detailed external models are exclusive")
        if self.reduced is not None and abs(self.reduced.dt - self.dt) > 1e-12 and self.reduced.fdne:
            raise ScenarioError("dt", f"reduced model was fitted at dt={self.reduced.dt}")
        known = set(self.network.bus_ids)
        names = set()
        for tb in self.turbines:
            if tb.bus not in known:
                raise ScenarioError(f"turbines.{tb.name}.bus", f"bus {tb.bus} not in network")
            if tb.tie_bus not in known:
                raise ScenarioError(f"turbines.{tb.name}.tie_bus", f"bus {tb.tie_bus} not in network")
            if tie_reactance(self.network, tb.bus, tb.tie_bus) is None:
                raise ScenarioError(f"turbines.{tb.name}.tie_bus",
                                    f"no branch between {tb.bus} and {tb.tie_bus}")
            if tb.units < 1:
                raise ScenarioError(f"turbines.{tb.name}.units", "must be >= 1")
            if tb.name in names:
                raise ScenarioError("turbines", f"duplicate turbine name {tb.name!r}")
            names.add(tb.name)
        for ev in self.events:
            if not 0.0 <= ev.time <= self.t_end:
                raise ScenarioError("events", f"event time {ev.time} outside [0, t_end]")
            if isinstance(ev, FaultEvent):
                if ev.bus not in known:
                    raise ScenarioError("events", f"fault bus {ev.bus} not in network")
                if not ev.duration > 0:
                    raise ScenarioError("events", "fault duration must be positive")
            elif isinstance(ev, WindEvent) and ev.turbine not in names:
                raise ScenarioError("events", f"unknown turbine {ev.turbine!r}")
        for name in ("converter_tau", "p_max", "current_limit"):
            if not getattr(self, name) > 0:
                raise ScenarioError(name, "must be positive")
        bus_gens = [g.bus for g in self.network.generators]
        if len(set(bus_gens)) != len(bus_gens):
            raise ScenarioError("network.generators", "at most one generator per bus")

    @property
    def sync_gens(self):
        return list(self.network.generators)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def with_controller(self, **changes):
        return replace(self, controller=replace(self.controller, **changes))


def tie_reactance(network: NetworkModel, a, b):
    """Series reactance of the (parallel) branches between ``a`` and ``b``."""
    ys = [br.series for br in network.branches if {br.from_bus, br.to_bus} == {a, b}]
    if not ys:
        return None
    return (1.0 / sum(ys)).imag


# --------------------------------------------------------------------------- loading

_TURBINE_FIELDS = {f.name for f in fields(TurbineParams)}


def _get(data, key, cast, default, path, prefix=""):
    if key not in data or data[key] is None:
        if default is _REQUIRED:
            raise ScenarioError(prefix + key, "missing", path)
        return default
    try:
        return cast(data[key])
    except (TypeError, ValueError):
        raise ScenarioError(prefix + key, f"cannot interpret {data[key]!r}", path) from None


_REQUIRED = object()


def _resolve(base_dir, p):
    p = Path(p)
    return p if p.is_absolute() else Path(base_dir) / p


def scenario_from_dict(data, base_dir=".", path=None, overrides=None, reduced_cache=None):
    """Build a :class:`Scenario` from parsed YAML.

    ``overrides`` may carry ``dt``, ``t_end``, ``mode``, ``alpha``, ``gamma``,
    ``seed`` and ``grid``; they replace file values before validation.
    """
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "expected a mapping", path)
    data = dict(data)
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    ctrl_data = dict(data.get("controller") or {})
    if "mode" in ov:
        ctrl_data["mode"] = ov["mode"]
    for key in ("alpha", "gamma"):
        if key in ov:
            ctrl_data[key] = ov[key]
    for key in ("dt", "t_end", "seed", "grid"):
        if key in ov:
            data[key] = ov[key]

    dt = _get(data, "dt", float, 1e-3, path)
    t_end = _get(data, "t_end", float, _REQUIRED, path)
    if not dt > 0:
        raise ScenarioError("dt", f"must be positive, got {dt}", path)
    if not t_end > dt * (1 - 1e-9):
        raise ScenarioError("t_end", f"must exceed dt, got {t_end}", path)
    seed = _get(data, "seed", int, 0, path)
    if seed < 0:
        raise ScenarioError("seed", "must be non-negative", path)

    mode = MODE_ALIASES.get(str(ctrl_data.get("mode", "adaptive_str")))
    if mode is None:
        raise ScenarioError("controller.mode", f"unknown mode {ctrl_data.get('mode')!r}", path)
    ctrl_kw = {"mode": mode}
    for f in fields(ControllerConfig):
        if f.name != "mode" and f.name in ctrl_data:
            cast = int if f.name == "warmup_updates" else float
            ctrl_kw[f.name] = _get(ctrl_data, f.name, cast, None, path, "controller.")
    try:
        controller = ControllerConfig(**ctrl_kw)
    except ScenarioError as exc:
        raise ScenarioError(exc.field, exc.message, path) from None

    net_path = _get(data, "network", str, _REQUIRED, path)
    try:
        full = load_network(_resolve(base_dir, net_path))
    except FileNotFoundError:
        raise ScenarioError("network", f"file not found: {net_path}", path) from None
    except NetworkError as exc:
        raise ScenarioError("network", str(exc), path) from None

    grid = str(data.get("grid", "reduced" if full.area_buses("external") else "full"))
    reduced = None
    external = None
    if grid == "reduced":
        red_cfg = data.get("reduction") or {}
        try:
            if data.get("reduced_model"):
                reduced = load_reduced(_resolve(base_dir, data["reduced_model"]))
            else:
                key = (str(_resolve(base_dir, net_path)), dt, repr(sorted(red_cfg.items())))
                if reduced_cache is not None and key in reduced_cache:
                    reduced = reduced_cache[key]
                else:
                    reduced = reduce_external(full, dt=dt,
                                              fdne_order=int(red_cfg.get("fdne_order", 8)),
                                              max_order=int(red_cfg.get("max_order", 20)),
                                              fit_fdne=bool(red_cfg.get("fdne", True)),
                                              sweep=red_cfg.get("sweep"))
                    if reduced_cache is not None:
                        reduced_cache[key] = reduced
            network = study_network(full)
        except FileNotFoundError as exc:
            raise ScenarioError("reduced_model", f"file not found: {exc.filename}", path) from None
        except NetworkError as exc:
            raise ScenarioError("network", str(exc), path) from None
    elif grid == "full":
        network = full
    elif grid == "detailed":
        try:
            network = study_network(full)
            external = external_network(full)
        except NetworkError as exc:
            raise ScenarioError("network", str(exc), path) from None
    else:
        raise ScenarioError("grid", f"must be 'reduced', 'detailed' or 'full', got {grid!r}",
                            path)

    turbines = []
    for n, tb in enumerate(data.get("turbines") or []):
        name = str(tb.get("name", f"wtg{n + 1}"))
        prefix = f"turbines.{name}."
        overrides_tp = dict(tb.get("params") or {})
        unknown = set(overrides_tp) - _TURBINE_FIELDS
        if unknown:
            raise ScenarioError(prefix + "params", f"unknown fields {sorted(unknown)}", path)
        try:
            params = TurbineParams(**{k: float(v) for k, v in overrides_tp.items()})
        except (TypeError, ValueError) as exc:
            raise ScenarioError(prefix + "params", str(exc), path) from None
        try:
            wind = build_wind(tb.get("wind", params.rated_wind), t_end, seed=seed + n,
                              base_dir=base_dir)
        except (WindError, KeyError, OSError) as exc:
            raise ScenarioError(prefix + "wind", str(exc), path) from None
        turbines.append(TurbineSite(
            name=name,
            bus=_get(tb, "bus", int, _REQUIRED, path, prefix),
            tie_bus=_get(tb, "tie_bus", int, _REQUIRED, path, prefix),
            units=_get(tb, "units", int, 1, path, prefix),
            params=params,
            wind=wind,
        ))

    events = []
    for n, ev in enumerate(data.get("events") or []):
        prefix = f"events[{n}]."
        kind = ev.get("kind")
        time = _get(ev, "time", float, _REQUIRED, path, prefix)
        if kind == "three_phase_fault":
            imp = ev.get("impedance", 1e-4)
            if isinstance(imp, (list, tuple)):
                imp = complex(*imp)
            events.append(FaultEvent(time, _get(ev, "bus", int, _REQUIRED, path, prefix),
                                     _get(ev, "duration", float, _REQUIRED, path, prefix),
                                     complex(imp)))
        elif kind == "wind_profile":
            spec = ev.get("wind") or ({"type": "csv", "file": ev["file"]} if "file" in ev else None)
            if spec is None:
                raise ScenarioError(prefix + "wind", "needs 'wind' or 'file'", path)
            try:
                prof = build_wind(spec, t_end, seed=seed + 100 + n, base_dir=base_dir)
            except (WindError, KeyError, OSError) as exc:
                raise ScenarioError(prefix + "wind", str(exc), path) from None
            events.append(WindEvent(time, str(ev.get("turbine", "")), prof))
        else:
            raise ScenarioError(prefix + "kind", f"unknown event kind {kind!r}", path)

    sim = data.get("simulation") or {}
    kwargs = {}
    for key, cast in (("converter_tau", float), ("p_max", float), ("current_limit", float),
                      ("tsa_every", int), ("trace_theta", bool)):
        if key in sim:
            kwargs[key] = _get(sim, key, cast, None, path, "simulation.")
    try:
        return Scenario(name=str(data.get("name", Path(path).stem if path else "scenario")),
                        network=network, turbines=turbines, dt=dt, t_end=t_end,
                        reduced=reduced, external=external, events=events, controller=controller, seed=seed,
                        **kwargs)
    except ScenarioError as exc:
        raise ScenarioError(exc.field, exc.message, path) from None


def load_scenario(path, overrides=None, reduced_cache=None):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ScenarioError("scenario", f"file not found: {path}", path) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("scenario", f"YAML error: {exc}", path) from None
    return scenario_from_dict(data, base_dir=path.parent, path=path, overrides=overrides,
                              reduced_cache=reduced_cache)
