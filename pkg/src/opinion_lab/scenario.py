"""Scenario files: a flat ``key = value`` text format with ``matrix`` blocks.

Grammar (one statement per line, ``#`` starts a comment)::

    name = paper-hopf-2
    n = 2
    p = 0 0
    w = 3 4
    r = 10 5
    z0 = -0.0349 -0.0039        # or: z0 = preferences
    seed = 0
    integrator.t_end = 2000
    analysis.multistart = true
    sweep.param = c2            # c2, or p[i], w[i], r[i], a[i,k] (1-based)
    sweep.start = 4.5
    sweep.stop = 5.5
    sweep.num = 11
    matrix weights
      0   -20
      4.99  0
    end

Vectors are whitespace separated. Floats are written with ``repr`` so a
write/load cycle is exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import OpinionLabError, ParseError, ValidationError
from .integrate import IntegratorConfig
from .model import InfluenceNetwork, build_network, network_from_arrays

FIXTURES = ("paper-consensus-6", "paper-disagreement-6", "paper-hopf-2")

INTEGRATOR_KEYS = {f.name: f.type for f in fields(IntegratorConfig)}
ANALYSIS_KEYS = {"root_tol": float, "multistart": bool, "poa": bool, "convergence_tol": float, "egalitarian_steps": int}
SWEEP_KEYS = {"param": str, "start": float, "stop": float, "num": int}
VECTOR_KEYS = ("p", "w", "r")

_PARAM_RE = re.compile(r"^(?:c2|[pwr]\[\d+\]|a\[\d+,\d+\])$")


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    num: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True, eq=False)
class ScenarioFile:
    name: str
    n: int
    weights: np.ndarray
    p: np.ndarray
    w: np.ndarray
    r: np.ndarray
    z0: Union[np.ndarray, str] = "preferences"
    integrator: IntegratorConfig = IntegratorConfig()
    seed: int = 0
    analysis: dict = field(default_factory=dict)
    sweep: Optional[SweepSpec] = None
    warnings: tuple = ()

    def network(self) -> InfluenceNetwork:
        return network_from_arrays(self.weights, self.p, self.w, self.r)

    def initial_state(self) -> np.ndarray:
        if isinstance(self.z0, str):
            return np.array(self.p, dtype=float)
        return np.array(self.z0, dtype=float)

    def option(self, key, default=None):
        return self.analysis.get(key, default)


def _bool(text):
    t = text.lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _scalar(kind, text):
    if kind in (bool, "bool"):
        return _bool(text)
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def _floats(text):
    return np.array([float(x) for x in text.split()], dtype=float)


def parse_scenario(text: str, source: str = "<string>") -> ScenarioFile:
    """Parse and validate scenario text."""
    raw: dict = {}
    integ: dict = {}
    analysis: dict = {}
    sweep: dict = {}
    rows: Optional[list] = None
    matrix_line = None
    seen: set = set()
    lines = text.splitlines()
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if rows is not None:
            if body == "end":
                raw["weights"] = rows
                rows = None
                continue
            if not body:
                continue
            try:
                rows.append([float(x) for x in body.split()])
            except ValueError:
                raise ParseError(f"{source}:{lineno}: bad matrix row {body!r}", line=lineno, field="weights")
            continue
        if not body:
            continue
        if body.startswith("matrix"):
            parts = body.split()
            if len(parts) != 2 or parts[1] != "weights":
                raise ParseError(f"{source}:{lineno}: only 'matrix weights' blocks are supported", line=lineno,
                                 field="weights")
            if "weights" in raw:
                raise ParseError(f"{source}:{lineno}: duplicate weights block", line=lineno, field="weights")
            rows, matrix_line = [], lineno
            continue
        if "=" not in body:
            raise ParseError(f"{source}:{lineno}: expected 'key = value', got {body!r}", line=lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key in seen:
            raise ParseError(f"{source}:{lineno}: duplicate key {key!r}", line=lineno, field=key)
        seen.add(key)
        try:
            if key in ("name",):
                raw[key] = value
            elif key in ("n", "seed"):
                raw[key] = int(value)
            elif key in VECTOR_KEYS:
                raw[key] = _floats(value)
            elif key == "z0":
                raw[key] = "preferences" if value == "preferences" else _floats(value)
            elif key.startswith("integrator.") and key[11:] in INTEGRATOR_KEYS:
                integ[key[11:]] = value if key[11:] == "method" else _scalar(INTEGRATOR_KEYS[key[11:]], value)
            elif key.startswith("analysis.") and key[9:] in ANALYSIS_KEYS:
                analysis[key[9:]] = _scalar(ANALYSIS_KEYS[key[9:]], value)
            elif key.startswith("sweep.") and key[6:] in SWEEP_KEYS:
                sweep[key[6:]] = _scalar(SWEEP_KEYS[key[6:]], value)
            else:
                raise ParseError(f"{source}:{lineno}: unknown key {key!r}", line=lineno, field=key)
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"{source}:{lineno}: bad value for {key}: {exc}", line=lineno, field=key)
    if rows is not None:
        raise ParseError(f"{source}:{matrix_line}: matrix block not closed with 'end'", line=matrix_line,
                         field="weights")
    for key in ("n", "p", "w", "r", "weights"):
        if key not in raw:
            raise ParseError(f"{source}: missing required field {key!r}", field=key)
    return _validate(raw, integ, analysis, sweep, source)


def _validate(raw, integ, analysis, sweep, source) -> ScenarioFile:
    n = raw["n"]
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}", field="n")
    rows = raw["weights"]
    if len(rows) != n or any(len(row) != n for row in rows):
        raise ValidationError(f"weights must be {n}x{n}", field="weights")
    weights = np.array(rows, dtype=float)
    vecs = {}
    for key in VECTOR_KEYS:
        v = raw[key]
        if v.shape != (n,):
            raise ValidationError(f"{key} has {v.size} entries, expected {n}", field=key)
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValidationError(f"agent {bad + 1}: {key} is not finite", field=key, agent=bad + 1)
        if key in ("w", "r") and np.any(v <= 0):
            bad = int(np.flatnonzero(v <= 0)[0])
            raise ValidationError(f"agent {bad + 1}: {key} = {v[bad]!r} must be > 0", field=key, agent=bad + 1)
        vecs[key] = v
    if not np.all(np.isfinite(weights)):
        raise ValidationError("weights contain non-finite entries", field="weights")
    z0 = raw.get("z0", "preferences")
    if not isinstance(z0, str) and z0.shape != (n,):
        raise ValidationError(f"z0 has {z0.size} entries, expected {n}", field="z0")
    try:
        cfg = IntegratorConfig(**integ)
    except (OpinionLabError, ValueError, TypeError) as exc:
        raise ValidationError(f"integrator: {exc}", field="integrator")
    spec = None
    if sweep:
        missing = [k for k in SWEEP_KEYS if k not in sweep]
        if missing:
            raise ValidationError(f"sweep block missing {missing}", field="sweep")
        if not _PARAM_RE.match(sweep["param"]):
            raise ValidationError(f"unsupported sweep.param {sweep['param']!r}", field="sweep.param")
        if sweep["num"] < 1:
            raise ValidationError("sweep.num must be >= 1", field="sweep.num")
        spec = SweepSpec(**sweep)
    try:
        net = build_network(weights, [(vecs["p"][i], vecs["w"][i], vecs["r"][i]) for i in range(n)])
    except OpinionLabError as exc:
        raise ValidationError(str(exc), field="weights")
    return ScenarioFile(
        name=raw.get("name", Path(source).stem),
        n=n,
        weights=weights,
        p=vecs["p"],
        w=vecs["w"],
        r=vecs["r"],
        z0=z0,
        integrator=cfg,
        seed=raw.get("seed", 0),
        analysis=analysis,
        sweep=spec,
        warnings=tuple(net.warnings),
    )


def load_scenario(path_or_fixture) -> ScenarioFile:
    """Load a scenario from a path, or a bundled fixture by name."""
    name = str(path_or_fixture)
    if name in FIXTURES:
        text = resources.files("opinion_lab").joinpath("fixtures", f"{name}.scn").read_text()
        return parse_scenario(text, f"{name}.scn")
    path = Path(name)
    if not path.is_file():
        raise ParseError(f"no such scenario file or fixture: {name!r}")
    return parse_scenario(path.read_text(), str(path))


def _vec(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def format_scenario(sc: ScenarioFile) -> str:
    lines = [f"name = {sc.name}", f"n = {sc.n}", f"p = {_vec(sc.p)}", f"w = {_vec(sc.w)}", f"r = {_vec(sc.r)}"]
    lines.append("z0 = preferences" if isinstance(sc.z0, str) else f"z0 = {_vec(sc.z0)}")
    lines.append(f"seed = {sc.seed}")
    default = IntegratorConfig()
    for f in fields(IntegratorConfig):
        value = getattr(sc.integrator, f.name)
        if value != getattr(default, f.name):
            lines.append(f"integrator.{f.name} = {value!r}" if not isinstance(value, str)
                         else f"integrator.{f.name} = {value}")
    for key in ANALYSIS_KEYS:
        if key in sc.analysis:
            v = sc.analysis[key]
            lines.append(f"analysis.{key} = {str(v).lower() if isinstance(v, bool) else repr(v)}")
    if sc.sweep is not None:
        lines += [f"sweep.param = {sc.sweep.param}", f"sweep.start = {sc.sweep.start!r}",
                  f"sweep.stop = {sc.sweep.stop!r}", f"sweep.num = {sc.sweep.num}"]
    lines.append("matrix weights")
    lines += ["  " + _vec(row) for row in sc.weights]
    lines.append("end")
    return "\n".join(lines) + "\n"


def write_scenario(sc: ScenarioFile, path) -> Path:
    path = Path(path)
    path.write_text(format_scenario(sc))
    return path


def scenario_from_network(net: InfluenceNetwork, name="generated", z0="preferences", **kw) -> ScenarioFile:
    return ScenarioFile(name, net.n, np.array(net.weights), net.preferences.copy(), net.importance.copy(),
                        net.resources.copy(), z0 if isinstance(z0, str) else np.asarray(z0, dtype=float), **kw)
