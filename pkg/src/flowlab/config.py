"""Experiment configuration: flat typed key-value sections, strictly checked.

Config files are INI-style; each section is one experiment.  Every key is
typed against the schema of the experiment kind, and unknown keys are
rejected outright: a silently ignored misspelt constant would invalidate a
bound test without anyone noticing.

Example::

    [lp-translate]
    kind = density_bound
    field = translate
    d = 1
    s = 0.0
    t = 0.1
    dt = 0.001
    trajectories = 50000
    p_list = 1.5, 2, 3
    seed = 42
"""

import configparser
from dataclasses import dataclass, field as dc_field

from .errors import ConfigError

EXPERIMENT_KINDS = (
    "density_bound",
    "entropy_budget",
    "coupling",
    "krylov",
    "fokker_planck",
    "validate",
    "oracle_suite",
)

FIELD_KEYS = ("translate", "ou_linear", "sign_drift", "anisotropic")


def _float_list(raw):
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip())


def _int_list(raw):
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


# key -> (parser, default); the REQUIRED sentinel marks keys with no default
REQUIRED = object()

_COMMON = {
    "kind": (str, REQUIRED),
    "seed": (int, 0),
}

_FIELD = {
    "field": (str, REQUIRED),
    "d": (int, 1),
    "a": (float, 1.0),
    "beta": (float, 1.0),
    "lam": (float, None),
}

_SCHEMAS = {
    "density_bound": {
        **_COMMON, **_FIELD,
        "s": (float, 0.0),
        "t": (float, REQUIRED),
        "dt": (float, REQUIRED),
        "trajectories": (int, REQUIRED),
        "replicas": (int, 1),
        "p_list": (_float_list, (2.0,)),
        "quad_order": (int, 0),
    },
    "entropy_budget": {
        **_COMMON, **_FIELD,
        "horizon": (float, REQUIRED),
        "dt": (float, REQUIRED),
        "trajectories": (int, REQUIRED),
        "n_list": (_int_list, (8, 32)),
        "quad_order": (int, 0),
    },
    "coupling": {
        **_COMMON, **_FIELD,
        "s": (float, 0.0),
        "t": (float, REQUIRED),
        "dt": (float, REQUIRED),
        "trajectories": (int, REQUIRED),
        "n_list": (_int_list, (4, 8, 16, 32, 64)),
        "n_ref": (int, 128),
        "quad_order": (int, 0),
    },
    "krylov": {
        **_COMMON, **_FIELD,
        "s": (float, 0.0),
        "t": (float, REQUIRED),
        "dt": (float, REQUIRED),
        "trajectories": (int, REQUIRED),
        "lambda_discount": (float, 1.0),
        "slab_widths": (_float_list, (0.1, 0.05, 0.025)),
    },
    "fokker_planck": {
        **_COMMON, **_FIELD,
        "s": (float, 0.0),
        "t": (float, REQUIRED),
        "dt": (float, REQUIRED),
        "trajectories": (int, REQUIRED),
        "grid_R": (float, 8.0),
        "grid_h": (float, 0.05),
        "grid_tau": (float, REQUIRED),
        "factorization_samples": (int, 0),
    },
    "validate": {
        **_COMMON, **_FIELD,
        "horizon": (float, 1.0),
        "quad_order": (int, 0),
    },
    "oracle_suite": dict(_COMMON),
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    options: dict = dc_field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.options[key]
        except KeyError:
            raise AttributeError(key)


def _parse_section(name, section):
    if "kind" not in section:
        raise ConfigError(f"section [{name}] is missing 'kind'", section=name, key="kind")
    kind = section["kind"].strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"section [{name}]: unknown kind {kind!r} (choose from {EXPERIMENT_KINDS})",
            section=name, key="kind",
        )
    schema = _SCHEMAS[kind]
    options = {}
    for key, raw in section.items():
        if key == "kind":
            continue
        if key not in schema:
            raise ConfigError(
                f"section [{name}]: unknown key {key!r} for kind {kind!r}",
                section=name, key=key,
            )
        parser, _ = schema[key]
        try:
            options[key] = parser(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"section [{name}]: cannot parse {key} = {raw!r} ({exc})",
                section=name, key=key,
            )
    for key, (parser, default) in schema.items():
        if key == "kind" or key in options:
            continue
        if default is REQUIRED:
            raise ConfigError(
                f"section [{name}]: required key {key!r} missing", section=name, key=key
            )
        options[key] = default
    cfg = ExperimentConfig(name=name, kind=kind, options=options)
    _validate_numerics(cfg)
    return cfg


def _validate_numerics(cfg):
    opt = cfg.options

    def need_positive(key):
        if key in opt and opt[key] is not None and opt[key] <= 0:
            raise ConfigError(
                f"section [{cfg.name}]: {key} must be positive", section=cfg.name, key=key
            )

    for key in ("dt", "t", "trajectories", "horizon", "grid_R", "grid_h", "grid_tau", "a", "beta"):
        need_positive(key)
    if "p_list" in opt:
        for p in opt["p_list"]:
            if p <= 1.0:
                raise ConfigError(
                    f"section [{cfg.name}]: p values must exceed 1", section=cfg.name, key="p_list"
                )
    if "dt" in opt and "t" in opt and opt.get("t") is not None:
        s = opt.get("s", 0.0)
        if opt["dt"] > opt["t"] - s:
            raise ConfigError(
                f"section [{cfg.name}]: dt exceeds the horizon", section=cfg.name, key="dt"
            )
    if "field" in opt and opt["field"] not in FIELD_KEYS:
        raise ConfigError(
            f"section [{cfg.name}]: unknown field {opt['field']!r}", section=cfg.name, key="field"
        )


def parse_config(path):
    """Parse and validate a config file; returns a list of ExperimentConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive, matched exactly
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}")
    configs = [_parse_section(name, parser[name]) for name in parser.sections()]
    if not configs:
        raise ConfigError(f"config {path!r} defines no experiments")
    return configs


def build_field(cfg):
    """Instantiate the catalog field named by a config."""
    from .coefficients import builtin_coefficients

    name = cfg.field
    kwargs = {}
    if cfg.options.get("lam") is not None:
        kwargs["lam"] = cfg.lam
    if name == "ou_linear":
        kwargs["a"] = cfg.a
    elif name == "sign_drift":
        kwargs["beta"] = cfg.beta
    return builtin_coefficients(name, d=cfg.d, **kwargs)
