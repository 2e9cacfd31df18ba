"""Flat ``key = value`` experiment configurations.

Keys are dotted (``problem.theta = 0.5``). Lines starting with ``#`` and
blank lines are ignored. ``sweep.<name> = a:b:step`` or ``sweep.<name> = v1, v2``
declares a sweep axis over an existing key; ``<name>`` may be the full key or
its last component when that is unambiguous.
"""

from dataclasses import dataclass, field
import itertools
import math
import re

from .errors import ConfigError

SCENARIOS = (
    "exact-radial", "manufactured", "exponent-atlas", "tail-fit", "entropy-check",
    "h-zero", "bounded", "transform-crosscheck", "uniqueness-probe", "threshold-probe",
    "strong-singular",
)
MAX_SWEEP_POINTS = 10_000
LIST_KEYS = ("mesh.refine", "solver.schedule", "solver.alt_schedule", "check.order_meshes",
             "check.levels")


def parse_schedule(text):
    """``2^4..2^24`` (every power of the base in the range) or a comma list."""
    text = text.strip()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)\^(-?\d+)\s*\.\.\s*(\d+(?:\.\d+)?)\^(-?\d+)", text)
    if m:
        base, lo, base2, hi = float(m[1]), int(m[2]), float(m[3]), int(m[4])
        if base != base2 or base <= 1 or hi < lo:
            raise ValueError(f"bad schedule range {text!r}")
        vals = tuple(base ** j for j in range(lo, hi + 1))
    else:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    if not vals or any(b <= a for a, b in zip(vals, vals[1:])) or vals[0] < 1:
        raise ValueError("schedule must be nonempty, strictly increasing and start at >= 1")
    return vals


def _format_schedule(vals):
    return ", ".join(repr(float(v)) for v in vals)


def _float_list(text):
    vals = tuple(float(x) for x in text.split(",") if x.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _int_list(text):
    vals = tuple(int(x) for x in text.split(",") if x.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _optional_float(text):
    return None if text.strip().lower() == "none" else float(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, formatter, default)
KEYS = {
    "scenario": (str, str, None),
    "seed": (int, str, 0),
    "problem.N": (float, repr, 3.0),
    "problem.p": (float, repr, 2.0),
    "problem.theta": (float, repr, 0.5),
    "problem.gamma1": (float, repr, 0.0),
    "problem.gamma2": (float, repr, 0.5),
    "problem.c_h": (float, repr, 1.0),
    "problem.s_bar": (_optional_float, lambda v: "none" if v is None else repr(v), None),
    "problem.amplitude": (float, repr, 1.0),
    "problem.sigma": (float, repr, 0.0),
    "problem.epsilon": (float, repr, 0.5),
    "problem.m": (float, repr, 1.0),
    "problem.threshold_factor": (float, repr, 1.2),
    "problem.amplitude_factor": (float, repr, 100.0),
    "problem.instance": (str, str, "exact-radial"),
    "mesh.M": (int, str, 4096),
    "mesh.grading": (float, repr, 2.0),
    "mesh.refine": (_int_list, lambda v: ", ".join(map(str, v)), (1024, 4096)),
    "solver.schedule": (parse_schedule, _format_schedule, tuple(2.0 ** j for j in range(4, 25))),
    "solver.alt_schedule": (parse_schedule, _format_schedule, tuple(3.0 ** j for j in range(3, 16))),
    "solver.tol": (float, repr, 1e-10),
    "solver.energy_tol": (float, repr, 1e-8),
    "solver.max_iter": (int, str, 100),
    "solver.window": (int, str, 4),
    "solver.stop_when_converged": (_bool, lambda v: "true" if v else "false", True),
    "check.rel_error": (float, repr, 0.01),
    "check.r_min": (float, repr, 0.1),
    "check.tail_tol": (float, repr, 0.05),
    "check.slack": (float, repr, 0.1),
    "check.max_error": (float, repr, 1e-4),
    "check.order": (float, repr, 2.0),
    "check.order_tol": (float, repr, 0.2),
    "check.order_meshes": (_int_list, lambda v: ", ".join(map(str, v)), (64, 128, 256, 512)),
    "check.levels": (_float_list, lambda v: ", ".join(repr(x) for x in v), (0.1, 1.0, 10.0)),
    "check.entropy_tol": (float, repr, 1e-6),
    "check.bound_tol": (float, repr, 1e-8),
    "check.refine_tol": (float, repr, 0.01),
    "check.agree_tol": (float, repr, 1e-8),
    "check.k": (float, repr, 1.0),
    "check.ratio_tol": (float, repr, 0.1),
    "check.random_points": (int, str, 0),
    "check.continuity_tol": (float, repr, 1e-6),
    "output.dir": (str, str, "runs"),
}

# scenario-specific defaults that differ from the global ones
SCENARIO_DEFAULTS = {
    "manufactured": {"problem.theta": 0.0, "problem.gamma2": 0.0, "mesh.M": 512, "mesh.grading": 1.0},
    "h-zero": {"problem.theta": 3.0, "problem.gamma2": 0.0, "problem.s_bar": 2.0,
               "problem.amplitude": 100.0, "mesh.M": 1024},
    "bounded": {"problem.sigma": 1.0, "problem.amplitude": 10.0, "mesh.refine": (1024, 2048)},
    "uniqueness-probe": {"mesh.M": 1024, "solver.tol": 1e-12},
    "threshold-probe": {"solver.stop_when_converged": False},
    "strong-singular": {"problem.theta": 0.0, "problem.gamma1": 2.0, "problem.gamma2": 2.0,
                        "mesh.grading": 1.0},
    "exponent-atlas": {"problem.theta": 0.5},
}

# keys each scenario must state explicitly
REQUIRED = {
    "exact-radial": ("problem.N", "problem.theta", "problem.gamma2", "problem.epsilon"),
    "tail-fit": ("problem.N", "problem.theta", "problem.gamma2", "problem.epsilon"),
    "transform-crosscheck": ("problem.N", "problem.theta", "problem.gamma2", "problem.epsilon"),
    "manufactured": ("problem.N",),
    "exponent-atlas": ("problem.N", "problem.p", "problem.gamma2"),
    "h-zero": ("problem.s_bar",),
}


@dataclass
class ExperimentConfig:
    scenario: str
    values: dict                              # explicitly given keys only
    sweep: dict = field(default_factory=dict)  # full key -> tuple of values
    lines: dict = field(default_factory=dict)  # key -> source line number

    def get(self, key):
        if key in self.values:
            return self.values[key]
        default = SCENARIO_DEFAULTS.get(self.scenario, {})
        if key in default:
            return default[key]
        return KEYS[key][2]

    def __getitem__(self, key):
        return self.get(key)

    def echo(self):
        """Canonical text form; parsing it reproduces this config."""
        out = [f"scenario = {self.scenario}"]
        for key in sorted(self.values):
            out.append(f"{key} = {KEYS[key][1](self.values[key])}")
        for key in sorted(self.sweep):
            out.append(f"sweep.{key} = " + ", ".join(KEYS[key][1](v) for v in self.sweep[key]))
        return "\n".join(out) + "\n"

    def points(self):
        """Cartesian product of sweep axes as point configs (no sweep axes left)."""
        keys = sorted(self.sweep)
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            vals = dict(self.values)
            vals.update(zip(keys, combo))
            yield ExperimentConfig(self.scenario, vals, {}, dict(self.lines))

    @property
    def sweep_size(self):
        return math.prod(len(v) for v in self.sweep.values()) if self.sweep else 1

    def __eq__(self, other):
        return (isinstance(other, ExperimentConfig) and self.scenario == other.scenario
                and self.values == other.values and self.sweep == other.sweep)


def _resolve_axis(name, line):
    if name in KEYS:
        return name
    hits = [k for k in KEYS if k.rsplit(".", 1)[-1] == name]
    if len(hits) == 1:
        return hits[0]
    if not hits:
        raise ConfigError(f"sweep axis {name!r} names no parameter", line, f"sweep.{name}")
    raise ConfigError(f"sweep axis {name!r} is ambiguous: {hits}", line, f"sweep.{name}")


def _parse_axis(key, text, line):
    parser = KEYS[key][0]
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if not step > 0 or b < a:
                raise ValueError("need a <= b and step > 0")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            vals = tuple(parser(repr(a + i * step)) for i in range(count))
        else:
            vals = tuple(parser(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad sweep values for {key}: {exc}", line, f"sweep.{key}") from None
    if not vals:
        raise ConfigError(f"empty sweep axis {key}", line, f"sweep.{key}")
    return vals


def parse_config(text):
    values, sweep, lines = {}, {}, {}
    scenario = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key in lines or (key.startswith("sweep.") and key in lines):
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        lines[key] = lineno
        if key.startswith("sweep."):
            target = _resolve_axis(key[len("sweep."):], lineno)
            if target in ("scenario", "output.dir") or target in LIST_KEYS:
                raise ConfigError(f"cannot sweep {target}", lineno, key)
            sweep[target] = _parse_axis(target, val, lineno)
            lines[target + "@sweep"] = lineno
            continue
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key == "scenario":
            scenario = val
            continue
        try:
            values[key] = KEYS[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, key) from None
    if scenario is None:
        raise ConfigError("missing 'scenario'", None, "scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}", lines.get("scenario"), "scenario")
    cfg = ExperimentConfig(scenario, values, sweep, lines)
    validate(cfg)
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def _fail(cfg, key, msg):
    # a swept key takes its value from the sweep line
    line = cfg.lines.get(key + "@sweep", cfg.lines.get(key))
    raise ConfigError(msg, line, key)


def validate(cfg):
    """Scenario-level checks, run on every sweep point before any solve."""
    for key in REQUIRED.get(cfg.scenario, ()):
        if key not in cfg.values and key not in cfg.sweep:
            raise ConfigError(f"scenario {cfg.scenario} requires {key}", None, key)
    if cfg.sweep_size > MAX_SWEEP_POINTS:
        raise ConfigError(f"sweep has {cfg.sweep_size} points, limit {MAX_SWEEP_POINTS}", None, "sweep")
    for point in (cfg.points() if cfg.sweep else [cfg]):
        _validate_point(point)


def _validate_point(c):
    N, p = c["problem.N"], c["problem.p"]
    if not 1 < p < N:
        _fail(c, "problem.p", f"need 1 < p < N (p={p}, N={N})")
    for key in ("problem.theta", "problem.gamma1", "problem.gamma2", "problem.amplitude",
                "problem.sigma"):
        if c[key] < 0:
            _fail(c, key, f"{key} must be nonnegative")
    if c["problem.amplitude"] > 0 and not c["problem.sigma"] < N:
        _fail(c, "problem.sigma", "source must be integrable: need sigma < N")
    if c["problem.s_bar"] is not None and not c["problem.s_bar"] > 0:
        _fail(c, "problem.s_bar", "s_bar must be positive")
    if c["mesh.M"] < 8:
        _fail(c, "mesh.M", "need at least 8 cells")
    if c["mesh.grading"] < 1:
        _fail(c, "mesh.grading", "grading must be >= 1")
    if any(m < 8 for m in c["mesh.refine"]) or any(m < 8 for m in c["check.order_meshes"]):
        _fail(c, "mesh.refine", "refinement meshes need at least 8 cells")
    if not c["solver.tol"] > 0:
        _fail(c, "solver.tol", "tolerance must be positive")
    if c["solver.max_iter"] < 1:
        _fail(c, "solver.max_iter", "max_iter must be >= 1")
    if c["solver.window"] < 2:
        _fail(c, "solver.window", "divergence window must be >= 2")
    if c["problem.m"] < 1:
        _fail(c, "problem.m", "m must be >= 1")
    if any(k <= 0 for k in c["check.levels"]):
        _fail(c, "check.levels", "levels must be positive")
    s = c.scenario
    if s in ("exact-radial", "tail-fit", "transform-crosscheck") or (
            s == "entropy-check" and c["problem.instance"] == "exact-radial"):
        if c["problem.p"] != 2 or N < 3:
            _fail(c, "problem.p", "the radial oracle needs p = 2 and N >= 3")
        if not c["problem.epsilon"] > 0:
            _fail(c, "problem.epsilon", "epsilon must be positive")
        den = 1 - c["problem.theta"] + c["problem.gamma2"]
        if den == 0:
            _fail(c, "problem.theta", "1 - theta + gamma2 = 0 has no radial oracle")
        alpha = (2 + c["problem.epsilon"] - N) / den
        if alpha > 0:
            _fail(c, "problem.epsilon", "alpha > 0 gives a negative radial profile")
        if alpha * (N - 2 + alpha * (1 - c["problem.theta"])) > 0:
            _fail(c, "problem.epsilon", "parameters give a negative source amplitude")
    if s == "manufactured" and p != 2:
        _fail(c, "problem.p", "the manufactured oracle is for p = 2")
    if s == "entropy-check" and c["problem.instance"] not in ("exact-radial", "manufactured"):
        _fail(c, "problem.instance", "instance must be exact-radial or manufactured")
    if s == "h-zero" and c["problem.s_bar"] is None:
        _fail(c, "problem.s_bar", "h-zero needs problem.s_bar")
    if s == "strong-singular" and not c["problem.gamma1"] > 1:
        _fail(c, "problem.gamma1", "strong-singular needs gamma1 > 1")
    if s == "threshold-probe" and c["problem.p"] != 2:
        _fail(c, "problem.p", "the threshold probe scales the radial oracle (p = 2)")
