"""Wind-speed profiles: piecewise-linear tables and synthetic generators."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class WindError(ValueError):
    pass


@dataclass(frozen=True)
class WindProfile:
    """Piecewise-linear wind speed; held constant outside the table."""

    times: tuple
    speeds: tuple

    def __post_init__(self):
        if len(self.times) == 0 or len(self.times) != len(self.speeds):
            raise WindError("wind table needs matching, non-empty time and speed columns")
        if np.any(np.diff(self.times) <= 0):
            raise WindError("wind table times must be strictly increasing")
        if min(self.speeds) < 0:
            raise WindError("wind speeds must be non-negative")

    def speed(self, t):
        return float(np.interp(t, self.times, self.speeds))

    @classmethod
    def constant(cls, v):
        return cls((0.0,), (float(v),))


def read_wind_csv(path):
    """Read ``time_s, speed_ms`` rows (a header row is optional)."""
    path = Path(path)
    times, speeds = [], []
    with path.open(newline="") as fh:
        for n, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                if n == 0:
                    continue
                raise WindError(f"{path}:{n + 1}: cannot parse {row!r}") from None
            except IndexError:
                raise WindError(f"{path}:{n + 1}: expected two columns") from None
            times.append(t)
            speeds.append(v)
    return WindProfile(tuple(times), tuple(speeds))


def _component(spec, t, rng, base_dir):
    kind = spec.get("type")
    if kind == "constant":
        return np.full_like(t, float(spec["speed"]))
    if kind == "step":
        return np.where(t < float(spec["time"]), float(spec["before"]), float(spec["after"]))
    if kind == "ramp":
        return np.interp(t, [float(spec["start"]), float(spec["end"])],
                         [float(spec["before"]), float(spec["after"])])
    if kind == "gust":
        t0, dur, amp = float(spec["start"]), float(spec["duration"]), float(spec["amplitude"])
        inside = (t >= t0) & (t <= t0 + dur)
        return np.where(inside, 0.5 * amp * (1.0 - np.cos(2.0 * math.pi * (t - t0) / dur)), 0.0)
    if kind == "turbulence":
        # first-order filtered Gaussian noise with standard deviation ``sigma``
        sigma, tau = float(spec["sigma"]), float(spec.get("time_constant", 2.0))
        step = t[1] - t[0] if len(t) > 1 else 1.0
        phi = math.exp(-step / tau)
        noise = rng.standard_normal(len(t)) * sigma * math.sqrt(1.0 - phi**2)
        out = np.empty_like(t)
        x = 0.0
        for k, w in enumerate(noise):
            x = phi * x + w
            out[k] = x
        return out
    if kind == "csv":
        path = Path(spec["file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        table = read_wind_csv(path)
        return np.interp(t, table.times, table.speeds)
    raise WindError(f"unknown wind component type {kind!r}")


def build_wind(spec, t_end, seed=0, base_dir=None, resolution=0.05):
    """Build a profile from a component spec (dict) or a list of them.

    The first component gives the absolute speed; later ones add on top
    (gusts and turbulence are deviations). ``seed`` drives turbulence.
    """
    if isinstance(spec, (int, float)):
        return WindProfile.constant(spec)
    if isinstance(spec, dict):
        spec = [spec]
    if not spec:
        raise WindError("empty wind specification")
    if len(spec) == 1 and spec[0].get("type") == "csv":
        path = Path(spec[0]["file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return read_wind_csv(path)
    n = max(int(math.ceil(t_end / resolution)), 1) + 1
    t = np.linspace(0.0, n * resolution - resolution, n)
    rng = np.random.default_rng(seed)
    total = np.zeros_like(t)
    for comp in spec:
        total += _component(comp, t, rng, base_dir)
    return WindProfile(tuple(t.tolist()), tuple(np.maximum(total, 0.0).tolist()))
