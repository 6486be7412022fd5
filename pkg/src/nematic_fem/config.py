"""JSON run configuration with strict validation."""
import json
import math
from dataclasses import asdict, dataclass, field, fields

from .scheme import ConfigurationError, SimParams

EXPERIMENTS = ("annihilation", "convergence", "stability")

# overrides applied to keys the user did not set, per experiment
EXPERIMENT_DEFAULTS = {
    "annihilation": {},
    "convergence": {
        "domain": [0.0, 1.0, -0.5, 0.5],
        "nx": 20,
        "ny": 20,
        "T": 0.016,
    },
    "stability": {
        "T": 0.4,
        "pressure_solver": "direct",
    },
}


@dataclass
class RunConfig:
    experiment: str = "annihilation"
    domain: list = field(default_factory=lambda: [-1.0, 1.0, -1.0, 1.0])
    nx: int = 41
    ny: int = 41
    nu: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    eps: float = 0.05
    k: float = 1e-3
    T: float = 0.6
    S: float = 1.0
    tol: float = 1e-10
    max_iter: int = None
    deltas: list = field(default_factory=lambda: [10.0, 6.0, 1.5])
    h4_mode: str = "warn"
    pressure_solver: str = "cg"
    defect_offset: float = 0.25
    output_dir: str = "results"
    snapshot_times: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.6])
    seed: int = 0
    k_levels: list = field(default_factory=lambda: [1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5])
    ref_divisor: int = 16
    sweep_k: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    sweep_nx: list = field(default_factory=lambda: [31, 41, 61, 121])
    blowup_factor: float = 10.0

    def sim_params(self, **overrides):
        kw = dict(nu=self.nu, lam=self.lam, gamma=self.gamma, eps=self.eps, k=self.k, T=self.T, S=self.S,
                  tol=self.tol, max_iter=self.max_iter, deltas=tuple(self.deltas), h4_mode=self.h4_mode,
                  pressure_solver=self.pressure_solver)
        kw.update(overrides)
        return SimParams(**kw)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
_POSITIVE = ("nu", "lam", "gamma", "eps", "k", "T", "S", "tol", "blowup_factor")


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def validate(cfg):
    """Raise :class:`ConfigurationError` naming the first offending key."""
    def bad(key, why):
        raise ConfigurationError(f"invalid value for {key!r}: {why} (got {getattr(cfg, key)!r})")

    if cfg.experiment not in EXPERIMENTS:
        bad("experiment", f"must be one of {EXPERIMENTS}")
    for key in _POSITIVE:
        v = getattr(cfg, key)
        if not _is_number(v) or v <= 0:
            bad(key, "must be a positive number")
    if not (isinstance(cfg.domain, list) and len(cfg.domain) == 4 and all(_is_number(v) for v in cfg.domain)):
        bad("domain", "must be [x0, x1, y0, y1]")
    x0, x1, y0, y1 = cfg.domain
    if not (x1 > x0 and y1 > y0):
        bad("domain", "needs x1 > x0 and y1 > y0")
    for key in ("nx", "ny", "ref_divisor"):
        v = getattr(cfg, key)
        if not _is_int(v) or v < 1:
            bad(key, "must be a positive integer")
    if cfg.max_iter is not None and (not _is_int(cfg.max_iter) or cfg.max_iter < 1):
        bad("max_iter", "must be a positive integer or null")
    if not (isinstance(cfg.deltas, list) and len(cfg.deltas) == 3
            and all(_is_number(v) and v > 0 for v in cfg.deltas)):
        bad("deltas", "must be three positive numbers")
    if cfg.h4_mode not in ("warn", "fail"):
        bad("h4_mode", "must be 'warn' or 'fail'")
    if cfg.pressure_solver not in ("cg", "direct"):
        bad("pressure_solver", "must be 'cg' or 'direct'")
    if not _is_number(cfg.defect_offset):
        bad("defect_offset", "must be a number")
    if not isinstance(cfg.output_dir, str) or not cfg.output_dir:
        bad("output_dir", "must be a non-empty string")
    if not _is_int(cfg.seed):
        bad("seed", "must be an integer")
    for key in ("snapshot_times", "k_levels", "sweep_k"):
        v = getattr(cfg, key)
        if not (isinstance(v, list) and all(_is_number(x) and x > 0 for x in v)):
            bad(key, "must be a list of positive numbers")
    if not (isinstance(cfg.sweep_nx, list) and all(_is_int(x) and x > 0 for x in cfg.sweep_nx)):
        bad("sweep_nx", "must be a list of positive integers")
    if cfg.k > cfg.T:
        bad("k", f"time step exceeds final time T={cfg.T}")
    if cfg.experiment == "convergence":
        if len(cfg.k_levels) < 2:
            bad("k_levels", "need at least two time-step levels")
        if any(cfg.k_levels[i + 1] >= cfg.k_levels[i] for i in range(len(cfg.k_levels) - 1)):
            bad("k_levels", "must be strictly decreasing")
    return cfg


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigurationError(f"unknown configuration key(s): {', '.join(map(repr, unknown))}")
    experiment = data.get("experiment", "annihilation")
    merged = dict(EXPERIMENT_DEFAULTS.get(experiment, {}))
    merged.update(data)
    cfg = RunConfig(**merged)
    # ints are acceptable wherever floats are expected
    for key in _POSITIVE + ("defect_offset",):
        v = getattr(cfg, key)
        if _is_int(v):
            setattr(cfg, key, float(v))
    if isinstance(cfg.domain, list):
        cfg.domain = [float(v) if _is_int(v) else v for v in cfg.domain]
    return validate(cfg)


def parse_config(text):
    """Parse and validate a JSON configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
