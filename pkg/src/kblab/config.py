"""Experiment configuration: JSON file plus dotted --set overrides.

One experiment per invocation.  The function grammar used for the
potential is reused for initial conditions, extended with the two
sink-based forms.  Every validation failure names the offending field
path so config errors are actionable from the shell.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import Grid, ScalarField
from .spectral import Potential

_DEFAULTS = {
    "grid": {"n_points": 2001},
    "modes": 30,
    "potential": {"kind": "polynomial", "coefficients": [10.0, 5.0]},
    "initial": {"kind": "sink"},
    "time": {"start": 0.0, "stop": 1.0, "samples": 11, "dt": None},
    "truncation": {"max_mode": 8, "max_order": 3, "lambda_cut": None},
    "output": "out",
    "seed": 0,
    "debug": {"flip_mode_sign": None},
}

_FUNCTION_KINDS = ("constant", "polynomial", "cosine", "tabulated")
_INITIAL_KINDS = _FUNCTION_KINDS + ("sink", "sink_perturbation")


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ValidationError(f"{path}: {message}")


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(item: str):
    """Split one KEY=VALUE override; VALUE parsed as JSON when possible."""
    if "=" not in item:
        raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    key = key.strip()
    _require(bool(key), "--set", "empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_override(data: dict, dotted: str, value):
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


@dataclass
class ExperimentConfig:
    """Validated experiment description; raw holds the resolved JSON tree."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(_DEFAULTS))

    # -- construction -------------------------------------------------------

    @classmethod
    def load(cls, path: str | None = None, overrides=(), seed=None,
             out_dir=None) -> "ExperimentConfig":
        data = copy.deepcopy(_DEFAULTS)
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ValidationError(f"config file not found: {path}")
            try:
                user = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config is not valid JSON: {exc}") from exc
            if not isinstance(user, dict):
                raise ValidationError("config root must be a JSON object")
            data = _deep_merge(data, user)
        for item in overrides:
            key, value = parse_override(item)
            _apply_override(data, key, value)
        if seed is not None:
            data["seed"] = seed
        if out_dir is not None:
            data["output"] = str(out_dir)
        cfg = cls(raw=data)
        cfg.validate()
        return cfg

    # -- validation ---------------------------------------------------------

    def validate(self):
        r = self.raw
        n = r.get("grid", {}).get("n_points")
        _require(isinstance(n, int) and n >= 3, "grid.n_points",
                 "must be an integer >= 3")
        _require(n % 2 == 1, "grid.n_points", "must be odd")
        k = r.get("modes")
        _require(isinstance(k, int) and k >= 2, "modes",
                 "must be an integer >= 2")
        _require(k <= n // 4, "modes", f"must be <= n_points/4 = {n // 4}")
        self._validate_function(r.get("potential"), "potential",
                                _FUNCTION_KINDS)
        self._validate_function(r.get("initial"), "initial", _INITIAL_KINDS)
        tm = r.get("time", {})
        _require(isinstance(tm, dict), "time", "must be an object")
        start, stop = tm.get("start"), tm.get("stop")
        _require(isinstance(start, (int, float)) and start >= 0, "time.start",
                 "must be a number >= 0")
        _require(isinstance(stop, (int, float)) and stop > start, "time.stop",
                 "must exceed time.start")
        samples = tm.get("samples")
        _require(isinstance(samples, int) and samples >= 2, "time.samples",
                 "must be an integer >= 2")
        dt = tm.get("dt")
        _require(dt is None or (isinstance(dt, (int, float)) and dt > 0),
                 "time.dt", "must be a positive number when set")
        tr = r.get("truncation", {})
        _require(isinstance(tr.get("max_mode"), int) and tr["max_mode"] >= 1,
                 "truncation.max_mode", "must be an integer >= 1")
        _require(isinstance(tr.get("max_order"), int) and tr["max_order"] >= 0,
                 "truncation.max_order", "must be an integer >= 0")
        cut = tr.get("lambda_cut")
        _require(cut is None or (isinstance(cut, (int, float)) and 0 < cut < 1),
                 "truncation.lambda_cut", "must lie in (0, 1) when set")
        _require(isinstance(r.get("seed"), int), "seed", "must be an integer")
        _require(isinstance(r.get("output"), str) and r["output"],
                 "output", "must be a non-empty path")
        flip = r.get("debug", {}).get("flip_mode_sign")
        _require(flip is None or (isinstance(flip, int) and 0 <= flip < k),
                 "debug.flip_mode_sign", "must be a mode index below modes")

    @staticmethod
    def _validate_function(spec, path: str, kinds):
        _require(isinstance(spec, dict), path, "must be an object")
        kind = spec.get("kind")
        _require(kind in kinds, f"{path}.kind", f"must be one of {kinds}")
        if kind == "constant":
            _require(isinstance(spec.get("value"), (int, float)),
                     f"{path}.value", "must be a number")
        elif kind in ("polynomial", "cosine"):
            coeffs = spec.get("coefficients")
            ok = (isinstance(coeffs, list) and len(coeffs) >= 1
                  and all(isinstance(c, (int, float)) for c in coeffs))
            _require(ok, f"{path}.coefficients", "must be a list of numbers")
        elif kind == "tabulated":
            _require(isinstance(spec.get("path"), str), f"{path}.path",
                     "must be a file path")
        elif kind == "sink_perturbation":
            amp = spec.get("amplitude")
            _require(isinstance(amp, (int, float)), f"{path}.amplitude",
                     "must be a number")
            mode = spec.get("mode")
            _require(isinstance(mode, int) and mode >= 1, f"{path}.mode",
                     "must be an integer >= 1")

    # -- accessors -----------------------------------------------------------

    @property
    def n_points(self) -> int:
        return self.raw["grid"]["n_points"]

    @property
    def modes(self) -> int:
        return self.raw["modes"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def output(self) -> Path:
        return Path(self.raw["output"])

    @property
    def flip_mode_sign(self):
        return self.raw.get("debug", {}).get("flip_mode_sign")

    def grid(self) -> Grid:
        return Grid(self.n_points)

    def time_samples(self) -> np.ndarray:
        tm = self.raw["time"]
        return np.linspace(tm["start"], tm["stop"], tm["samples"])

    def fd_dt(self, u0_sup: float) -> float:
        dt = self.raw["time"].get("dt")
        if dt is not None:
            return float(dt)
        h = self.grid().spacing
        return h / (4.0 * max(1.0, u0_sup + 1.0))

    def truncation(self):
        from .koopman import TruncationSpec

        tr = self.raw["truncation"]
        cut = tr.get("lambda_cut")
        return TruncationSpec(tr["max_mode"], tr["max_order"],
                              None if cut is None else float(cut))

    def digest(self) -> str:
        # output location does not influence any computed number, so it is
        # left out: the digest identifies the experiment, not the run
        numeric = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(numeric, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- function grammar ----------------------------------------------------

    def _evaluate_function(self, grid: Grid, spec: dict, path: str) -> np.ndarray:
        kind = spec["kind"]
        x = grid.nodes
        if kind == "constant":
            return np.full(grid.n_points, float(spec["value"]))
        if kind == "polynomial":
            # ascending powers: [a, b, c] -> a + b x + c x^2
            return np.polynomial.polynomial.polyval(
                x, np.asarray(spec["coefficients"], dtype=np.float64)
            )
        if kind == "cosine":
            # [a0, a1, ...] -> sum a_k cos(k pi x)
            vals = np.zeros(grid.n_points)
            for k, a in enumerate(spec["coefficients"]):
                vals += float(a) * np.cos(k * math.pi * x)
            return vals
        if kind == "tabulated":
            file_path = Path(spec["path"])
            if not file_path.is_file():
                raise ValidationError(f"{path}.path: file not found: {file_path}")
            try:
                table = np.loadtxt(file_path, delimiter=",", ndmin=2)
            except ValueError as exc:
                raise ValidationError(f"{path}.path: unreadable table: {exc}")
            if table.shape[1] == 1:
                if table.shape[0] != grid.n_points:
                    raise ValidationError(
                        f"{path}.path: single-column table must hold "
                        f"{grid.n_points} samples, found {table.shape[0]}"
                    )
                return table[:, 0].copy()
            if table.shape[1] == 2:
                xs, ys = table[:, 0], table[:, 1]
                if np.any(np.diff(xs) <= 0):
                    raise ValidationError(
                        f"{path}.path: sample abscissae must increase"
                    )
                return np.interp(x, xs, ys)
            raise ValidationError(f"{path}.path: expected 1 or 2 columns")
        raise ValidationError(f"{path}.kind: unsupported kind {kind!r}")

    def potential(self, grid: Grid) -> Potential:
        vals = self._evaluate_function(grid, self.raw["potential"], "potential")
        if np.min(vals) <= 0.0:
            raise ValidationError(
                "potential: must be strictly positive on the grid "
                f"(min = {float(np.min(vals)):g})"
            )
        return Potential(ScalarField(grid, vals))

    def initial_values(self, grid: Grid, basis, *, target: str) -> np.ndarray:
        """Evaluate the initial-condition spec for a given flow target.

        target is "heat" or "burgers"; the sink resolves to f0~ = e0/i0 on
        the heat side and to s0 = -2 e0'/e0 on the Burgers side, and the
        perturbed sink adds a cosine (heat, Neumann-compatible) or sine
        (Burgers, endpoint-compatible) bump.
        """
        spec = self.raw["initial"]
        kind = spec["kind"]
        if kind in _FUNCTION_KINDS:
            return self._evaluate_function(grid, spec, "initial")
        if target not in ("heat", "burgers"):
            raise ValidationError(f"unknown flow target {target!r}")
        e0 = basis.modes[0]
        if target == "heat":
            base = e0 / basis.i0
        else:
            base = -2.0 * basis.d_modes[0] / e0
        if kind == "sink":
            return base.copy()
        amp = float(spec["amplitude"])
        mode = int(spec["mode"])
        x = grid.nodes
        if target == "heat":
            bump = np.cos(mode * math.pi * x)
        else:
            bump = np.sin(mode * math.pi * x)
        return base + amp * bump
