"""TOML experiment configs: schema, validation, resolution, manifests.

One format, one parser, strict validation.  Unknown keys are rejected
with their full key path, physics parameters are never silently
defaulted (the plant table must either say `preset = "hydrolysis"`
or spell out every coefficient), and the resolved configuration can be
re-emitted as a manifest whose re-run reproduces the original artifacts
byte for byte.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .controller import ESGains
from .integrate import IntegratorConfig
from .plant import CstrParams
from .reference import ReferenceSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config",
           "default_config_toml", "manifest_toml", "output_root"]

ENV_OUTPUT_ROOT = "ESTRACK_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the key path."""


# ---------------------------------------------------------------------------
# schema tables: key -> (type, default)  (REQUIRED means no default)

_REQUIRED = object()

# coefficients default to None here; parse_config enforces the
# preset-or-every-coefficient rule with a better message
_PLANT_KEYS = {
    "preset": (str, None),
    "n_bar": (float, None),
    "phi1": (float, None),
    "phi2": (float, None),
    "k1": (float, None),
    "k2": (float, None),
    "kappa": (float, None),
    "u1_max": (float, None),
    "u2_max": (float, None),
    "variant": (str, "corrected"),
}
_REFERENCE_KEYS = {
    "waveform": (str, "trig"),
    "period": (float, 100.0),
    "a1": (float, -1.798),
    "a2": (float, -0.06663),
}
_GAINS_KEYS = {
    "gamma": (float, _REQUIRED),
    "epsilon": (float, _REQUIRED),
    "eta": (float, 1.0),
    "n_u": (int, 2),
    "h_floor": (float, 1e-12),
}
_INTEGRATOR_KEYS = {
    "method": (str, "rk4"),
    "dt": (float, 1e-3),
    "atol": (float, 1e-10),
    "rtol": (float, 1e-10),
    "dt_min": (float, 1e-12),
    "dt_max": (float, 1.0),
    "h_init": (float, 1e-4),
    "max_steps": (float, 5e8),
    "samples_per_period": (int, 2000),
}
_INITIAL_KEYS = {
    "x0": (list, None),     # absolute state, overrides dx
    "dx": (list, [0.05, 0.005]),   # else: x0 = x*(t0) + dx
    "u0": (list, [0.0, 0.0]),
}
_RUN_KEYS = {
    "t_end": (float, _REQUIRED),
    "t0": (float, 0.0),
    "pin_reference_input": (bool, False),
    "clamp_inputs": (bool, False),
    "rho": (float, 0.25),
    "window": (float, None),   # None -> one reference period
}
_SWEEP_KEYS = {
    "gamma": (list, None),
    "epsilon": (list, None),
    "eta": (list, None),
}
_OUTPUT_KEYS = {
    "dir": (str, "."),
    "prefix": (str, None),     # None -> config file stem
}

_SECTIONS = {
    "plant": _PLANT_KEYS,
    "reference": _REFERENCE_KEYS,
    "gains": _GAINS_KEYS,
    "integrator": _INTEGRATOR_KEYS,
    "initial": _INITIAL_KEYS,
    "run": _RUN_KEYS,
    "sweep": _SWEEP_KEYS,
    "output": _OUTPUT_KEYS,
}
_REQUIRED_SECTIONS = ("plant", "gains", "run")


def _coerce(path, val, typ):
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {val!r}")
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}: expected an integer, got {val!r}")
        return val
    if typ is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{path}: expected a boolean, got {val!r}")
        return val
    if typ is str:
        if not isinstance(val, str):
            raise ConfigError(f"{path}: expected a string, got {val!r}")
        return val
    if typ is list:
        if not isinstance(val, list):
            raise ConfigError(f"{path}: expected an array, got {val!r}")
        return val
    raise AssertionError(typ)


def _validate_section(name, table, keys):
    if not isinstance(table, dict):
        raise ConfigError(f"{name}: expected a table")
    out = {}
    for k in table:
        if k not in keys:
            raise ConfigError(f"{name}.{k}: unknown key")
    for k, (typ, default) in keys.items():
        if k in table:
            out[k] = _coerce(f"{name}.{k}", table[k], typ)
        elif default is _REQUIRED:
            raise ConfigError(f"{name}.{k}: required key missing")
        else:
            out[k] = default.copy() if isinstance(default, list) else default
    return out


def _pair(path, val):
    if val is None:
        return None
    if len(val) != 2 or not all(isinstance(v, (int, float)) and
                                not isinstance(v, bool) for v in val):
        raise ConfigError(f"{path}: expected an array of two numbers")
    return (float(val[0]), float(val[1]))


@dataclass(frozen=True)
class ExperimentConfig:
    plant: CstrParams
    reference: ReferenceSpec
    gains: ESGains
    integrator: IntegratorConfig
    x0: tuple | None          # absolute initial state, or None to use dx
    dx: tuple                 # perturbation of the orbit state at t0
    u0: tuple
    t_end: float
    t0: float
    pin_reference_input: bool
    clamp_inputs: bool
    rho: float
    window: float | None
    sweep_gamma: tuple | None
    sweep_epsilon: tuple | None
    sweep_eta: tuple | None
    out_dir: str
    prefix: str

    @property
    def has_sweep(self) -> bool:
        return any(ax is not None for ax in
                   (self.sweep_gamma, self.sweep_epsilon, self.sweep_eta))

    def sweep_cells(self):
        """Cartesian product of the sweep axes as ESGains, fixed order."""
        gs = self.sweep_gamma or (self.gains.gamma,)
        es = self.sweep_epsilon or (self.gains.epsilon,)
        hs = self.sweep_eta or (self.gains.eta,)
        return [ESGains(gamma=g, epsilon=e, eta=h,
                        n_u=self.gains.n_u, h_floor=self.gains.h_floor)
                for g in gs for e in es for h in hs]


def parse_config(text: str, name: str = "config") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc

    for sect in raw:
        if sect not in _SECTIONS:
            raise ConfigError(f"{sect}: unknown section")
    for sect in _REQUIRED_SECTIONS:
        if sect not in raw:
            raise ConfigError(f"{sect}: required section missing")

    tables = {s: _validate_section(s, raw.get(s, {}), keys)
              for s, keys in _SECTIONS.items()}

    pl = tables["plant"]
    if pl["preset"] is not None:
        if pl["preset"] != "hydrolysis":
            raise ConfigError(f"plant.preset: unknown preset {pl['preset']!r}")
        extra = [k for k in raw["plant"] if k not in ("preset", "variant")]
        if extra:
            raise ConfigError(
                f"plant.{extra[0]}: not allowed together with preset")
        plant = CstrParams(variant=pl["variant"])
    else:
        missing = [k for k in _PLANT_KEYS
                   if k not in ("preset", "variant") and k not in raw["plant"]]
        if missing:
            raise ConfigError(
                f"plant.{missing[0]}: required (no preset given; physics "
                f"parameters are never defaulted silently)")
        plant = CstrParams(n_bar=pl["n_bar"], phi1=pl["phi1"], phi2=pl["phi2"],
                           k1=pl["k1"], k2=pl["k2"], kappa=pl["kappa"],
                           u1_max=pl["u1_max"], u2_max=pl["u2_max"],
                           variant=pl["variant"])

    rf = tables["reference"]
    try:
        reference = ReferenceSpec(waveform=rf["waveform"], period=rf["period"],
                                  a1=rf["a1"], a2=rf["a2"])
        reference.validate_against(plant)
        gn = tables["gains"]
        gains = ESGains(gamma=gn["gamma"], epsilon=gn["epsilon"],
                        eta=gn["eta"], n_u=gn["n_u"], h_floor=gn["h_floor"])
        ig = tables["integrator"]
        integrator = IntegratorConfig(
            method=ig["method"], dt=ig["dt"], atol=ig["atol"], rtol=ig["rtol"],
            dt_min=ig["dt_min"], dt_max=ig["dt_max"], h_init=ig["h_init"],
            max_steps=ig["max_steps"],
            samples_per_period=ig["samples_per_period"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    ini = tables["initial"]
    x0 = _pair("initial.x0", ini["x0"])
    dx = _pair("initial.dx", ini["dx"])
    u0 = _pair("initial.u0", ini["u0"])

    rn = tables["run"]
    if rn["t_end"] <= rn["t0"]:
        raise ConfigError("run.t_end: must exceed run.t0")
    if rn["rho"] < 0.0:
        raise ConfigError("run.rho: must be nonnegative")
    if rn["window"] is not None and rn["window"] <= 0.0:
        raise ConfigError("run.window: must be positive")

    sw = tables["sweep"]

    def _axis(path, vals):
        if vals is None:
            return None
        got = tuple(_coerce(f"{path}[{i}]", v, float)
                    for i, v in enumerate(vals))
        if not got or any(v <= 0.0 for v in got):
            raise ConfigError(f"{path}: entries must be positive")
        return got

    out = tables["output"]
    prefix = out["prefix"] if out["prefix"] is not None else name

    return ExperimentConfig(
        plant=plant, reference=reference, gains=gains, integrator=integrator,
        x0=x0, dx=dx, u0=u0,
        t_end=rn["t_end"], t0=rn["t0"],
        pin_reference_input=rn["pin_reference_input"],
        clamp_inputs=rn["clamp_inputs"], rho=rn["rho"], window=rn["window"],
        sweep_gamma=_axis("sweep.gamma", sw["gamma"]),
        sweep_epsilon=_axis("sweep.epsilon", sw["epsilon"]),
        sweep_eta=_axis("sweep.eta", sw["eta"]),
        out_dir=out["dir"], prefix=prefix)


def load_config(path) -> ExperimentConfig:
    with open(path, "r") as fh:
        text = fh.read()
    stem = os.path.splitext(os.path.basename(path))[0]
    return parse_config(text, name=stem)


def output_root() -> str:
    return os.environ.get(ENV_OUTPUT_ROOT, ".")


# ---------------------------------------------------------------------------
# serialisation


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            raise ConfigError(f"cannot serialise {v}")
        s = f"{v:.17g}"
        # TOML floats need a decimal point or exponent
        return s if any(c in s for c in ".eE") else s + ".0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise AssertionError(type(v))


def manifest_toml(cfg: ExperimentConfig, version: str) -> str:
    """Fully resolved config as deterministic TOML.

    Every default is materialised, so parsing the manifest yields an
    identical ExperimentConfig and re-running it reproduces the CSV
    artifacts byte for byte.
    """
    p, r, g, i = cfg.plant, cfg.reference, cfg.gains, cfg.integrator
    lines = [f"# estrack manifest (tool version {version})", ""]

    def sect(name, pairs):
        lines.append(f"[{name}]")
        for k, v in pairs:
            if v is None:
                continue
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")

    sect("plant", [("n_bar", p.n_bar), ("phi1", p.phi1), ("phi2", p.phi2),
                   ("k1", p.k1), ("k2", p.k2), ("kappa", p.kappa),
                   ("u1_max", p.u1_max), ("u2_max", p.u2_max),
                   ("variant", p.variant)])
    sect("reference", [("waveform", r.waveform), ("period", r.period),
                       ("a1", r.a1), ("a2", r.a2)])
    sect("gains", [("gamma", g.gamma), ("epsilon", g.epsilon), ("eta", g.eta),
                   ("n_u", g.n_u), ("h_floor", g.h_floor)])
    sect("integrator", [("method", i.method), ("dt", i.dt), ("atol", i.atol),
                        ("rtol", i.rtol), ("dt_min", i.dt_min),
                        ("dt_max", i.dt_max), ("h_init", i.h_init),
                        ("max_steps", i.max_steps),
                        ("samples_per_period", i.samples_per_period)])
    sect("initial", [("x0", cfg.x0), ("dx", cfg.dx), ("u0", cfg.u0)])
    sect("run", [("t_end", cfg.t_end), ("t0", cfg.t0),
                 ("pin_reference_input", cfg.pin_reference_input),
                 ("clamp_inputs", cfg.clamp_inputs), ("rho", cfg.rho),
                 ("window", cfg.window)])
    if cfg.has_sweep:
        sect("sweep", [("gamma", cfg.sweep_gamma),
                       ("epsilon", cfg.sweep_epsilon),
                       ("eta", cfg.sweep_eta)])
    sect("output", [("dir", cfg.out_dir), ("prefix", cfg.prefix)])
    return "\n".join(lines)


def default_config_toml() -> str:
    """Reference config with every documented default spelled out."""
    return """\
# estrack experiment config. All keys shown; [plant], [gains] and [run]
# are required. Physics parameters are never defaulted silently: either
# give preset = "hydrolysis" or set every coefficient explicitly.

[plant]
preset = "hydrolysis"
variant = "corrected"        # or "printed"

[reference]
waveform = "trig"            # or "bang"
period = 100.0
a1 = -1.798
a2 = -0.06663

[gains]
gamma = 150.0                # required
epsilon = 0.001              # required
eta = 1.0
n_u = 2
h_floor = 1e-12

[integrator]
method = "rk4"               # or "rkf45"
dt = 0.001                   # fixed-step target; capped at one 50th of
                             # the averaging window either way
atol = 1e-10
rtol = 1e-10
dt_min = 1e-12
dt_max = 1.0
h_init = 0.0001
max_steps = 5e8
samples_per_period = 2000    # output rows per reference period

[initial]
# x0 = [0.0, 0.0]            # absolute initial state (overrides dx)
dx = [0.05, 0.005]           # else: x0 = orbit state at t0, plus dx
u0 = [0.0, 0.0]

[run]
t_end = 200.0                # required
t0 = 0.0
pin_reference_input = false  # drive u = u*(t) open-loop instead of ES
clamp_inputs = false         # saturate u at the admissible box
rho = 0.25                   # tracking-report bound level
# window = 100.0             # settling window; default: one period

[sweep]
# gamma = [150.0]
# epsilon = [1e-4, 1e-3, 1e-2]
# eta = [1.0, 5.0]

[output]
dir = "."
# prefix = "fig1a"           # default: config file stem
"""
