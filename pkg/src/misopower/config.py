"""YAML documents describing scenarios and experiments.

A scenario document::

    kind: interference        # or: broadcast
    K: 3
    M: 3
    kappa: 0.1
    eps: 0.05                 # scalar or one value per user
    alpha: 2.0
    seed: 0
    noise: 1.0
    geometry:
      layout: linear          # or: coordinates: {tx: [[x, y], ...], rx: [...]}
    caps:
      individual: 10.0
      total: 30.0

Broadcast documents use ``sigma2``, ``mu`` and ``phi`` instead of
``kappa``, ``eps``, ``alpha``, ``geometry`` and ``caps``.

An experiment document wraps a scenario with ``problem``, ``seeds``,
``sweep``, ``solver``, ``validate`` and ``output`` blocks. Every
validation error names the offending key and its line.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .errors import ConfigError
from .llbcp import SolverConfig
from .model import (
    BroadcastScenario,
    Geometry,
    InterferenceScenario,
    generate_broadcast_scenario,
    generate_interference_scenario,
    paper_layout,
)

KINDS = ("interference", "broadcast")
LAYOUTS = ("linear",)
PROBLEMS = ("powermin", "maxmin-individual", "maxmin-total", "msemin")
SWEEPABLE = ("alpha", "kappa", "eps", "mu", "budget")


def _load(text) -> Tuple[Any, Dict[tuple, int]]:
    """Parse YAML and record the 1-based line of every mapping key and item."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"unparseable document: {exc}", key="<document>",
                          line=None if mark is None else mark.line + 1) from None
    lines: Dict[tuple, int] = {}

    def walk(n, path):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                sub = path + (k.value,)
                lines[sub] = k.start_mark.line + 1
                walk(v, sub)
        elif isinstance(n, yaml.SequenceNode):
            for i, v in enumerate(n.value):
                lines[path + (i,)] = v.start_mark.line + 1
                walk(v, path + (i,))

    if node is not None:
        lines[()] = node.start_mark.line + 1
        walk(node, ())
    return data, lines


class _Reader:
    """Typed access to a parsed mapping with key/line-aware errors."""

    def __init__(self, data, lines, path=()):
        self.lines = lines
        self.path = path
        if data is None:
            data = {}
        if not isinstance(data, dict):
            self.fail("expected a mapping")
        self.data = data
        self.used = set()

    def _key(self, *rest):
        return ".".join(str(p) for p in self.path + rest) or "<document>"

    def _line(self, *rest):
        path = self.path + rest
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, message, *rest):
        raise ConfigError(message, key=self._key(*rest), line=self._line(*rest))

    def has(self, name):
        return name in self.data

    def raw(self, name, default=None):
        self.used.add(name)
        return self.data.get(name, default)

    def child(self, name):
        self.used.add(name)
        return _Reader(self.data.get(name), self.lines, self.path + (name,)) if name in self.data \
            else _Reader({}, self.lines, self.path + (name,))

    def int(self, name, default=None, minimum=None):
        value = self.raw(name, default)
        if value is None:
            self.fail("missing required key", name)
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"expected an integer, got {value!r}", name)
        if minimum is not None and value < minimum:
            self.fail(f"must be at least {minimum}", name)
        return value

    def number(self, name, default=None, lo=None, hi=None, open_lo=False, open_hi=False, required=True):
        value = self.raw(name, default)
        if value is None:
            if required:
                self.fail("missing required key", name)
            return None
        return self._check_number(value, (name,), lo, hi, open_lo, open_hi)

    def _check_number(self, value, rest, lo, hi, open_lo, open_hi):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {value!r}", *rest)
        value = float(value)
        if not math.isfinite(value):
            self.fail("must be finite", *rest)
        if lo is not None and (value <= lo if open_lo else value < lo):
            self.fail(f"must be {'>' if open_lo else '>='} {lo}", *rest)
        if hi is not None and (value >= hi if open_hi else value > hi):
            self.fail(f"must be {'<' if open_hi else '<='} {hi}", *rest)
        return value

    def per_user(self, name, K, required=True, **bounds):
        """Scalar or length-K list; the original shape is preserved."""
        value = self.raw(name)
        if value is None:
            if required:
                self.fail("missing required key", name)
            return None
        if isinstance(value, list):
            if len(value) != K:
                self.fail(f"expected {K} values, got {len(value)}", name)
            return [self._check_number(v, (name, i), **bounds) for i, v in enumerate(value)]
        return self._check_number(value, (name,), **bounds)

    def finish(self):
        extra = [k for k in self.data if k not in self.used]
        if extra:
            self.fail("unknown key", extra[0])


def _bounds(lo=None, hi=None, open_lo=False, open_hi=False):
    return dict(lo=lo, hi=hi, open_lo=open_lo, open_hi=open_hi)


@dataclass(frozen=True)
class ScenarioSpec:
    """Reproducible description of a random scenario."""

    kind: str
    K: int
    M: int
    seed: int = 0
    noise: float = 1.0
    kappa: Optional[float] = None
    eps: Any = None
    alpha: Any = None
    layout: Optional[str] = "linear"
    coordinates: Optional[dict] = None
    cap_individual: Any = None
    cap_total: Optional[float] = None
    sigma2: Any = None
    mu: Any = None
    phi: Any = None

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    def geometry(self) -> Geometry:
        if self.coordinates is not None:
            return Geometry(self.coordinates["tx"], self.coordinates["rx"])
        return paper_layout(self.K)

    def build(self):
        if self.kind == "interference":
            return generate_interference_scenario(
                self.K, self.M, self.kappa, self.eps, self.alpha,
                geometry=self.geometry(), seed=self.seed, noise=self.noise,
                p_bar=self.cap_individual, p_bar_tot=self.cap_total,
            )
        return generate_broadcast_scenario(self.K, self.M, self.sigma2, self.mu, self.phi,
                                           seed=self.seed, noise=self.noise)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "K": self.K, "M": self.M, "seed": self.seed, "noise": self.noise}
        if self.kind == "interference":
            out.update(kappa=self.kappa, eps=self.eps, alpha=self.alpha)
            if self.coordinates is not None:
                out["geometry"] = {"coordinates": {"tx": self.coordinates["tx"], "rx": self.coordinates["rx"]}}
            else:
                out["geometry"] = {"layout": self.layout}
            caps = {}
            if self.cap_individual is not None:
                caps["individual"] = self.cap_individual
            if self.cap_total is not None:
                caps["total"] = self.cap_total
            if caps:
                out["caps"] = caps
        else:
            out.update(sigma2=self.sigma2, mu=self.mu, phi=self.phi)
        return out


def _read_scenario(r: _Reader) -> ScenarioSpec:
    kind = r.raw("kind", "interference")
    if kind not in KINDS:
        r.fail(f"kind must be one of {KINDS}", "kind")
    K = r.int("K", minimum=1)
    M = r.int("M", minimum=1)
    seed = r.int("seed", default=0, minimum=0)
    noise = r.number("noise", default=1.0, lo=0.0, open_lo=True)
    if kind == "broadcast":
        if M < K:
            r.fail("broadcast scenarios need M >= K", "M")
        spec = ScenarioSpec(
            kind=kind, K=K, M=M, seed=seed, noise=noise, layout=None,
            sigma2=r.per_user("sigma2", K, **_bounds(lo=0.0)),
            mu=r.per_user("mu", K, **_bounds(lo=0.0, open_lo=True)),
            phi=r.per_user("phi", K, **_bounds(0.0, 1.0, True, True)),
        )
        r.finish()
        return spec

    kappa = r.number("kappa", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
    eps = r.per_user("eps", K, **_bounds(0.0, 1.0, True, True))
    alpha = r.per_user("alpha", K, **_bounds(lo=0.0))
    g = r.child("geometry")
    layout, coords = "linear", None
    if g.has("layout") and g.has("coordinates"):
        g.fail("give either layout or coordinates, not both", "coordinates")
    if g.has("coordinates"):
        layout = None
        c = g.child("coordinates")
        coords = {}
        for end in ("tx", "rx"):
            pts = c.raw(end)
            if not isinstance(pts, list) or len(pts) != K:
                c.fail(f"expected {K} [x, y] pairs", end)
            for i, pt in enumerate(pts):
                if not isinstance(pt, list) or len(pt) != 2:
                    c.fail("expected an [x, y] pair", end, i)
                for v in pt:
                    c._check_number(v, (end, i), None, None, False, False)
            coords[end] = [[float(v) for v in pt] for pt in pts]
        c.finish()
    else:
        layout = g.raw("layout", "linear")
        if layout not in LAYOUTS:
            g.fail(f"layout must be one of {LAYOUTS}", "layout")
    g.finish()
    caps = r.child("caps")
    individual = caps.per_user("individual", K, required=False, **_bounds(lo=0.0, open_lo=True))
    total = caps.number("total", lo=0.0, open_lo=True, required=False)
    caps.finish()
    spec = ScenarioSpec(kind=kind, K=K, M=M, seed=seed, noise=noise, kappa=kappa, eps=eps, alpha=alpha,
                        layout=layout, coordinates=coords, cap_individual=individual, cap_total=total)
    r.finish()
    if coords is not None:
        try:
            spec.geometry().distances()
        except ValueError as exc:
            g.fail(str(exc), "coordinates")
    return spec


def load_scenario(text) -> ScenarioSpec:
    data, lines = _load(text)
    return _read_scenario(_Reader(data, lines))


def dump_scenario(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    scenario: ScenarioSpec
    seeds: Tuple[int, ...]
    sweep_param: Optional[str] = None
    sweep_values: Tuple[float, ...] = ()
    solver: Dict[str, float] = field(default_factory=dict)
    validate_samples: Optional[int] = None
    validate_seed: int = 0
    histogram_bins: Optional[int] = None
    output: Optional[str] = None
    workers: int = 1
    record_runtime: bool = True
    trace: bool = False

    def solver_config(self) -> SolverConfig:
        return SolverConfig(record_trace=self.trace, **self.solver)

    def to_dict(self) -> dict:
        out = {"problem": self.problem, "scenario": self.scenario.to_dict(), "seeds": list(self.seeds)}
        if self.sweep_param is not None:
            out["sweep"] = {self.sweep_param: list(self.sweep_values)}
        if self.solver:
            out["solver"] = dict(self.solver)
        if self.validate_samples is not None:
            v = {"samples": self.validate_samples, "seed": self.validate_seed}
            if self.histogram_bins is not None:
                v["histogram_bins"] = self.histogram_bins
            out["validate"] = v
        o = {"workers": self.workers, "record_runtime": self.record_runtime, "trace": self.trace}
        if self.output is not None:
            o["path"] = self.output
        out["output"] = o
        return out


SOLVER_KEYS = {
    "epsilon": _bounds(0.0, 1.0, True, True),
    "theta": _bounds(0.5, 1.0, True, True),
    "newton_tol": _bounds(lo=0.0, open_lo=True),
}

PROBLEM_KIND = {"powermin": "interference", "maxmin-individual": "interference",
                "maxmin-total": "interference", "msemin": "broadcast"}
SWEEP_DOMAIN = {
    "alpha": ("interference", _bounds(lo=0.0)),
    "kappa": ("interference", _bounds(0.0, 1.0, True, True)),
    "eps": ("interference", _bounds(0.0, 1.0, True, True)),
    "mu": ("broadcast", _bounds(lo=0.0, open_lo=True)),
    "budget": ("interference", _bounds(lo=0.0, open_lo=True)),
}


def _read_experiment(r: _Reader) -> ExperimentConfig:
    problem = r.raw("problem")
    if problem not in PROBLEMS:
        r.fail(f"problem must be one of {PROBLEMS}", "problem")
    if not r.has("scenario"):
        r.fail("missing required key", "scenario")
    scenario = _read_scenario(r.child("scenario"))
    if scenario.kind != PROBLEM_KIND[problem]:
        r.fail(f"problem {problem} needs a {PROBLEM_KIND[problem]} scenario", "scenario", "kind")

    seeds = r.raw("seeds")
    if seeds is None:
        seeds = [scenario.seed]
    if not isinstance(seeds, list) or not seeds:
        r.fail("expected a non-empty list of seeds", "seeds")
    for i, s in enumerate(seeds):
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            r.fail(f"seed must be a nonnegative integer, got {s!r}", "seeds", i)

    sweep_param, sweep_values = None, ()
    if r.has("sweep"):
        sw = r.child("sweep")
        if len(sw.data) != 1:
            sw.fail(f"exactly one swept parameter is required, got {len(sw.data)}")
        sweep_param = next(iter(sw.data))
        if sweep_param not in SWEEPABLE:
            sw.fail(f"cannot sweep {sweep_param!r}; choose one of {SWEEPABLE}", sweep_param)
        kind, bounds = SWEEP_DOMAIN[sweep_param]
        if kind != scenario.kind:
            sw.fail(f"{sweep_param} does not apply to {scenario.kind} scenarios", sweep_param)
        if sweep_param == "budget" and not problem.startswith("maxmin"):
            sw.fail("budget sweeps need a maxmin problem", sweep_param)
        values = sw.raw(sweep_param)
        if not isinstance(values, list) or not values:
            sw.fail("expected a non-empty list of values", sweep_param)
        sweep_values = tuple(sw._check_number(v, (sweep_param, i), **bounds) for i, v in enumerate(values))

    if problem == "maxmin-individual" and scenario.cap_individual is None and sweep_param != "budget":
        r.fail("maxmin-individual needs caps.individual or a budget sweep", "scenario", "caps")
    if problem == "maxmin-total" and scenario.cap_total is None and sweep_param != "budget":
        r.fail("maxmin-total needs caps.total or a budget sweep", "scenario", "caps")

    s = r.child("solver")
    solver = {}
    for key, bounds in SOLVER_KEYS.items():
        if s.has(key):
            solver[key] = s.number(key, **bounds)
    s.finish()

    v = r.child("validate")
    samples = seed = bins = None
    if v.data:
        samples = v.int("samples", minimum=1000)
        seed = v.int("seed", default=0, minimum=0)
        if v.has("histogram_bins"):
            bins = v.int("histogram_bins", minimum=2)
    v.finish()

    o = r.child("output")
    path = o.raw("path")
    if path is not None and not isinstance(path, str):
        o.fail("expected a path string", "path")
    workers = o.int("workers", default=1, minimum=1)
    flags = {}
    for key, default in (("record_runtime", True), ("trace", False)):
        val = o.raw(key, default)
        if not isinstance(val, bool):
            o.fail("expected true or false", key)
        flags[key] = val
    o.finish()
    r.finish()
    return ExperimentConfig(
        problem=problem, scenario=scenario, seeds=tuple(seeds), sweep_param=sweep_param,
        sweep_values=sweep_values, solver=solver, validate_samples=samples,
        validate_seed=0 if seed is None else seed, histogram_bins=bins, output=path,
        workers=workers, **flags,
    )


def load_experiment(text) -> ExperimentConfig:
    data, lines = _load(text)
    return _read_experiment(_Reader(data, lines))


def load_document(text, problem: Optional[str] = None) -> ExperimentConfig:
    """Experiment document, or a bare scenario document wrapped as one.

    ``problem`` overrides the document's problem when given.
    """
    data, lines = _load(text)
    if isinstance(data, dict) and "scenario" in data:
        if problem is not None:
            data = {**data, "problem": problem}
        return _read_experiment(_Reader(data, lines))
    scenario = _read_scenario(_Reader(data, lines))
    if problem is None:
        problem = "msemin" if scenario.kind == "broadcast" else "powermin"
    if PROBLEM_KIND[problem] != scenario.kind:
        raise ConfigError(f"problem {problem} needs a {PROBLEM_KIND[problem]} scenario", key="kind",
                          line=lines.get(("kind",)))
    return ExperimentConfig(problem=problem, scenario=scenario, seeds=(scenario.seed,))


def dump_experiment(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def _apply(spec: ScenarioSpec, problem: str, param: Optional[str], value) -> ScenarioSpec:
    if param is None:
        return spec
    if param == "budget":
        if problem == "maxmin-total":
            return spec.replace(cap_total=value)
        return spec.replace(cap_individual=value / spec.K)
    return spec.replace(**{param: value})


def expand(cfg: ExperimentConfig) -> List[Tuple[str, ScenarioSpec, Optional[float]]]:
    """Grid points ``(scenario_id, spec, swept value)`` in sweep-major order.

    A ``budget`` value is a total power budget; in individual-cap mode every
    link receives ``budget / K``.
    """
    points = []
    values = cfg.sweep_values if cfg.sweep_param is not None else (None,)
    for i, value in enumerate(values):
        for seed in cfg.seeds:
            spec = _apply(cfg.scenario, cfg.problem, cfg.sweep_param, value).replace(seed=seed)
            sid = f"s{seed}" if value is None else f"{cfg.sweep_param}{i}-s{seed}"
            points.append((sid, spec, value))
    return points


def scenario_fingerprint(scenario) -> str:
    """Short digest of the channel data a solution was computed for."""
    h = hashlib.sha256()
    if isinstance(scenario, InterferenceScenario):
        arrays = (scenario.h_hat, scenario.sigma2, scenario.g, scenario.eta2)
    elif isinstance(scenario, BroadcastScenario):
        arrays = (scenario.H_hat, scenario.Lambda, scenario.eta2)
    else:
        raise TypeError(f"not a scenario: {type(scenario).__name__}")
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]
