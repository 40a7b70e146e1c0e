"""JSON run configurations.

A minimal document is ``{"n": 1, "res": 64}``. Expressions (``F``, ``truth``, the
parts of ``a`` and of the metric perturbation) are either a number, meaning a
constant, or a list of terms ``{"amp": 0.3, "k": [1, 0], "trig": "cos"}``.

    {
      "n": 2, "res": [24, 24, 24, 24],
      "metric": "flat" | {"perturbation": [{"i": 1, "j": 2, "re": EXPR, "im": EXPR}],
                          "check_positive": true},
      "a": {"constant": [[0.2, 0.1], [0.2, 0.1]]} | {"components": [{"re": EXPR, "im": EXPR}]},
      "F": EXPR, "truth": EXPR,
      "solver": {"t_steps": 4, "newton_tol": 1e-11, ...},
      "outputs": {"dir": "runs/demo", "monitors": ["estimates", "aeppli", "kernel", "uniqueness"]},
      "seed": 0, "probe_trials": 3, "dealias": false
    }

Metric indices are 1-based; only ``i <= j`` is given, the rest follows by symmetry.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import hermitian as hm
from .operator import ProblemData
from .solver import SolverConfig
from .torus import (
    HermitianField,
    OneFormField,
    PeriodicGrid,
    ScalarField,
    TrigExpression,
    TrigTerm,
    sample_field,
)

log = logging.getLogger(__name__)

MONITORS = ("estimates", "aeppli", "kernel", "uniqueness")
DEFAULT_MONITORS = ("estimates", "aeppli")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass(frozen=True)
class MetricEntry:
    i: int
    j: int
    re: TrigExpression
    im: TrigExpression = TrigExpression()


@dataclass(frozen=True)
class MetricSpec:
    """``g = identity + perturbation``; an empty perturbation is the flat metric."""

    perturbation: tuple[MetricEntry, ...] = ()
    check_positive: bool = True

    @property
    def flat(self) -> bool:
        return not self.perturbation


@dataclass(frozen=True)
class FormSpec:
    """Either constant complex components or per-component real/imaginary expressions."""

    constant: tuple[complex, ...] | None = None
    components: tuple[tuple[TrigExpression, TrigExpression], ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    n: int
    res: tuple[int, ...]
    metric: MetricSpec = MetricSpec()
    a: FormSpec = FormSpec()
    F: TrigExpression = TrigExpression()
    truth: TrigExpression | None = None
    solver: SolverConfig = SolverConfig()
    out_dir: str | None = None
    monitors: tuple[str, ...] = DEFAULT_MONITORS
    seed: int = 0
    probe_trials: int = 3
    dealias: bool = False

    @property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.n, self.res)


# ---------------------------------------------------------------------------
# Parsing


def _check_keys(obj: dict, allowed: set[str], path: str, strict: bool) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        if strict:
            raise ConfigError(path, f"unknown keys {extra}")
        log.warning("%s: ignoring unknown keys %s", path or "<root>", extra)


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _expression(value: Any, path: str, grid: PeriodicGrid, strict: bool) -> TrigExpression:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return TrigExpression.constant(float(value))
    if not isinstance(value, list):
        raise ConfigError(path, "expected a number or a list of terms")
    terms = []
    for idx, item in enumerate(value):
        tpath = f"{path}[{idx}]"
        if not isinstance(item, dict):
            raise ConfigError(tpath, "term must be an object")
        _check_keys(item, {"amp", "k", "trig"}, tpath, strict)
        if "amp" not in item:
            raise ConfigError(tpath, "missing 'amp'")
        amp = _number(item["amp"], f"{tpath}.amp")
        k = item.get("k", [])
        if not isinstance(k, list):
            raise ConfigError(f"{tpath}.k", "expected a list of integers")
        k = [_integer(kj, f"{tpath}.k[{j}]") for j, kj in enumerate(k)]
        if len(k) > grid.ndim:
            raise ConfigError(f"{tpath}.k", f"has {len(k)} entries, grid has {grid.ndim} axes")
        for axis, kj in enumerate(k):
            if abs(kj) >= grid.res[axis] / 2:
                raise ConfigError(
                    f"{tpath}.k[{axis}]",
                    f"wavevector {kj} not resolvable on axis {axis} (res {grid.res[axis]})",
                )
        trig = item.get("trig", "cos")
        if trig not in ("cos", "sin"):
            raise ConfigError(f"{tpath}.trig", f"expected 'cos' or 'sin', got {trig!r}")
        terms.append(TrigTerm(amp, tuple(k), trig))
    return TrigExpression(terms)


def _solver(value: Any, path: str, strict: bool) -> SolverConfig:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    names = {f.name: f.type for f in dataclasses.fields(SolverConfig)}
    _check_keys(value, set(names), path, strict)
    kwargs = {}
    for key, raw in value.items():
        if key not in names:
            continue
        default = getattr(SolverConfig(), key)
        if isinstance(default, bool):
            if not isinstance(raw, bool):
                raise ConfigError(f"{path}.{key}", "expected a boolean")
            kwargs[key] = raw
        elif isinstance(default, int):
            kwargs[key] = _integer(raw, f"{path}.{key}")
        else:
            kwargs[key] = _number(raw, f"{path}.{key}")
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _metric(value: Any, path: str, grid: PeriodicGrid, strict: bool) -> MetricSpec:
    if value == "flat":
        return MetricSpec()
    if not isinstance(value, dict):
        raise ConfigError(path, "expected 'flat' or an object")
    _check_keys(value, {"perturbation", "check_positive"}, path, strict)
    check = value.get("check_positive", True)
    if not isinstance(check, bool):
        raise ConfigError(f"{path}.check_positive", "expected a boolean")
    raw = value.get("perturbation", [])
    if not isinstance(raw, list):
        raise ConfigError(f"{path}.perturbation", "expected a list")
    entries = []
    seen = set()
    for idx, item in enumerate(raw):
        epath = f"{path}.perturbation[{idx}]"
        if not isinstance(item, dict):
            raise ConfigError(epath, "entry must be an object")
        _check_keys(item, {"i", "j", "re", "im"}, epath, strict)
        i = _integer(item.get("i"), f"{epath}.i")
        j = _integer(item.get("j"), f"{epath}.j")
        if not (1 <= i <= j <= grid.n):
            raise ConfigError(epath, f"need 1 <= i <= j <= {grid.n}, got ({i}, {j})")
        if (i, j) in seen:
            raise ConfigError(epath, f"duplicate entry ({i}, {j})")
        seen.add((i, j))
        re = _expression(item.get("re", 0), f"{epath}.re", grid, strict)
        im = _expression(item.get("im", 0), f"{epath}.im", grid, strict)
        if i == j and im.terms:
            raise ConfigError(f"{epath}.im", "diagonal entries must be real")
        entries.append(MetricEntry(i, j, re, im))
    spec = MetricSpec(tuple(entries), check)
    if check and entries:
        lam = float(np.min(hm.min_eigenvalue(metric_field(spec, grid).entries)))
        if lam <= 0:
            raise ConfigError(path, f"metric is not positive definite (min eigenvalue {lam:.3e})")
    return spec


def _form(value: Any, path: str, grid: PeriodicGrid, strict: bool) -> FormSpec:
    if not isinstance(value, dict) or len(value) != 1:
        raise ConfigError(path, "expected {'constant': [...]} or {'components': [...]}")
    _check_keys(value, {"constant", "components"}, path, True)
    if "constant" in value:
        raw = value["constant"]
        if not isinstance(raw, list) or len(raw) != grid.n:
            raise ConfigError(f"{path}.constant", f"expected {grid.n} [re, im] pairs")
        vals = []
        for idx, pair in enumerate(raw):
            ppath = f"{path}.constant[{idx}]"
            if isinstance(pair, (int, float)) and not isinstance(pair, bool):
                pair = [pair, 0.0]
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError(ppath, "expected [re, im]")
            vals.append(complex(_number(pair[0], ppath + "[0]"), _number(pair[1], ppath + "[1]")))
        return FormSpec(constant=tuple(vals))
    raw = value["components"]
    if not isinstance(raw, list) or len(raw) != grid.n:
        raise ConfigError(f"{path}.components", f"expected {grid.n} components")
    comps = []
    for idx, item in enumerate(raw):
        cpath = f"{path}.components[{idx}]"
        if not isinstance(item, dict):
            raise ConfigError(cpath, "expected {'re': EXPR, 'im': EXPR}")
        _check_keys(item, {"re", "im"}, cpath, strict)
        comps.append(
            (
                _expression(item.get("re", 0), f"{cpath}.re", grid, strict),
                _expression(item.get("im", 0), f"{cpath}.im", grid, strict),
            )
        )
    return FormSpec(components=tuple(comps))


TOP_KEYS = {
    "n", "res", "metric", "a", "F", "truth", "solver", "outputs", "seed", "probe_trials", "dealias",
}


def parse_config(text: str | bytes, strict: bool = False) -> RunConfig:
    """Parse and validate a JSON run configuration.

    With ``strict`` set, unknown keys are errors; otherwise they are logged and ignored.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be an object")
    _check_keys(doc, TOP_KEYS, "", strict)
    if "n" not in doc:
        raise ConfigError("n", "missing complex dimension")
    n = _integer(doc["n"], "n")
    if n not in (1, 2, 3):
        raise ConfigError("n", f"complex dimension must be 1, 2 or 3, got {n}")
    if "res" not in doc:
        raise ConfigError("res", "missing resolution")
    raw_res = doc["res"]
    if isinstance(raw_res, int) and not isinstance(raw_res, bool):
        raw_res = [raw_res] * (2 * n)
    if not isinstance(raw_res, list) or len(raw_res) != 2 * n:
        raise ConfigError("res", f"expected an integer or a list of {2 * n} integers")
    res = []
    for axis, r in enumerate(raw_res):
        r = _integer(r, f"res[{axis}]")
        if r < 4 or r % 2:
            raise ConfigError(f"res[{axis}]", f"resolution on axis {axis} must be even and >= 4, got {r}")
        res.append(r)
    grid = PeriodicGrid(n, tuple(res))

    metric = _metric(doc.get("metric", "flat"), "metric", grid, strict)
    a = _form(doc["a"], "a", grid, strict) if "a" in doc else FormSpec(constant=(0j,) * n)
    F = _expression(doc.get("F", 0), "F", grid, strict)
    truth = _expression(doc["truth"], "truth", grid, strict) if "truth" in doc else None
    solver = _solver(doc.get("solver", {}), "solver", strict)

    outputs = doc.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigError("outputs", "expected an object")
    _check_keys(outputs, {"dir", "monitors"}, "outputs", strict)
    out_dir = outputs.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("outputs.dir", "expected a string")
    monitors = outputs.get("monitors", list(DEFAULT_MONITORS))
    if not isinstance(monitors, list):
        raise ConfigError("outputs.monitors", "expected a list")
    for idx, m in enumerate(monitors):
        if m not in MONITORS:
            raise ConfigError(f"outputs.monitors[{idx}]", f"unknown monitor {m!r}; choose from {MONITORS}")

    seed = _integer(doc.get("seed", 0), "seed")
    trials = _integer(doc.get("probe_trials", 3), "probe_trials")
    if trials < 1:
        raise ConfigError("probe_trials", "must be positive")
    dealias = doc.get("dealias", False)
    if not isinstance(dealias, bool):
        raise ConfigError("dealias", "expected a boolean")
    return RunConfig(
        n=n,
        res=tuple(res),
        metric=metric,
        a=a,
        F=F,
        truth=truth,
        solver=solver,
        out_dir=out_dir,
        monitors=tuple(monitors),
        seed=seed,
        probe_trials=trials,
        dealias=dealias,
    )


def config_to_dict(cfg: RunConfig) -> dict:
    doc: dict[str, Any] = {"n": cfg.n, "res": list(cfg.res)}
    if cfg.metric.flat:
        doc["metric"] = "flat"
    else:
        doc["metric"] = {
            "perturbation": [
                {"i": e.i, "j": e.j, "re": e.re.to_json(), "im": e.im.to_json()}
                for e in cfg.metric.perturbation
            ],
            "check_positive": cfg.metric.check_positive,
        }
    if cfg.a.constant is not None:
        doc["a"] = {"constant": [[v.real, v.imag] for v in cfg.a.constant]}
    else:
        doc["a"] = {"components": [{"re": re.to_json(), "im": im.to_json()} for re, im in cfg.a.components]}
    doc["F"] = cfg.F.to_json()
    if cfg.truth is not None:
        doc["truth"] = cfg.truth.to_json()
    doc["solver"] = dataclasses.asdict(cfg.solver)
    outputs: dict[str, Any] = {"monitors": list(cfg.monitors)}
    if cfg.out_dir is not None:
        outputs["dir"] = cfg.out_dir
    doc["outputs"] = outputs
    doc["seed"] = cfg.seed
    doc["probe_trials"] = cfg.probe_trials
    doc["dealias"] = cfg.dealias
    return doc


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Problem construction


def metric_field(spec: MetricSpec, grid: PeriodicGrid) -> HermitianField:
    m = np.broadcast_to(np.eye(grid.n, dtype=complex), grid.shape + (grid.n, grid.n)).copy()
    for e in spec.perturbation:
        i, j = e.i - 1, e.j - 1
        val = sample_field(e.re, grid).re + 1j * sample_field(e.im, grid).re
        m[..., i, j] += val
        if i != j:
            m[..., j, i] += val.conj()
    return HermitianField(grid, m)


def form_field(spec: FormSpec, grid: PeriodicGrid) -> OneFormField:
    if spec.constant is not None:
        return OneFormField.constant(grid, spec.constant)
    return OneFormField(
        grid,
        tuple(
            ScalarField(grid, sample_field(re, grid).re + 1j * sample_field(im, grid).re)
            for re, im in spec.components
        ),
    )


def build_problem(cfg: RunConfig, F: ScalarField | None = None) -> ProblemData:
    grid = cfg.grid
    return ProblemData(
        grid,
        metric_field(cfg.metric, grid),
        form_field(cfg.a, grid),
        sample_field(cfg.F, grid) if F is None else F,
        cfg.dealias,
    )
