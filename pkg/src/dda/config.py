"""Plain-text ``key = value`` configuration with ``[section]`` headers.

Values are typed by the schema below; unknown sections or keys are rejected
with the offending line number.  ``#`` starts a comment.
"""
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parse):
    def inner(text):
        return None if text.strip().lower() in ("", "none") else parse(text)
    return inner


def _tuple(parse):
    def inner(text):
        return tuple(parse(p) for p in text.replace(" ", "").split(",") if p)
    return inner


_str = str.strip
_opt_float = _optional(float)
_opt_str = _optional(str.strip)

# section -> key -> (parser, default)
SCHEMA = {
    "data": {
        "kind": (_str, "blades"),
        "seed": (int, 0),
        "count": (_optional(int), None),
        "train": (int, 300),
        "val": (int, 50),
        "test": (int, 50),
        "n": (_optional(int), None),
        "size": (int, 64),
        "noise_sd": (_opt_float, None),
        "radii": (_tuple(float), (1.0, 2.0)),
        "root": (_opt_str, None),
    },
    "losses": {
        "loss": (_str, "pdda_log"),
        "dda_kind": (_opt_str, None),
        "lambda_f": (_opt_float, None),
        "lambda_p": (_opt_float, None),
        "gamma": (float, 2.0),
        "alpha": (float, 0.25),
    },
    "network": {
        "arch": (_str, "mlp"),
        "hidden": (_tuple(int), (32, 32)),
        "channels": (_tuple(int), (8, 16)),
        "coords": (_bool, False),
    },
    "trainer": {
        "lr": (float, 1e-4),
        "batch_size": (int, 8),
        "max_epochs": (int, 50),
        "patience": (int, 3),
        "lr_factor": (float, 0.5),
        "plateau_tol": (float, 1e-4),
        "stop_after_reductions": (int, 3),
        "augment": (_bool, True),
        "seed": (int, 0),
        "dataset": (_opt_str, None),
        "output_dir": (_opt_str, None),
    },
    "eval": {
        "threshold_objective": (_str, "f1"),
        "grid_steps": (int, 256),
        "checkpoint": (_opt_str, None),
    },
    "sweep": {
        "values": (_tuple(float), (0.0001, 0.001, 0.01, 0.1, 1.0, 2.0)),
        "jobs": (int, 1),
        "baselines": (_bool, False),
    },
    "gradcheck": {
        "component": (_opt_str, None),
        "seed": (int, 0),
        "batches": (int, 100),
        "min_size": (int, 2),
        "max_size": (int, 64),
        "network_instances": (int, 4),
        "tolerance": (float, 1e-5),
    },
}


@dataclass
class Config:
    values: dict

    def __getitem__(self, section):
        return self.values[section]

    def get(self, dotted):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def flat(self):
        return {f"{s}.{k}": v for s, sec in self.values.items() for k, v in sec.items()}


def defaults():
    return Config({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def _assign(cfg, section, key, text, where):
    if section not in SCHEMA:
        raise ConfigError(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{where}: unknown key {key!r} in section [{section}]")
    parse = SCHEMA[section][key][0]
    try:
        cfg.values[section][key] = parse(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from None


def parse_text(text, name="<config>", cfg=None):
    cfg = cfg or defaults()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{name}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside of any [section]")
        key, value = (p.strip() for p in line.split("=", 1))
        _assign(cfg, section, key, value, where)
    return cfg


def load(path, cfg=None):
    with open(path) as fh:
        return parse_text(fh.read(), str(path), cfg)


def apply_overrides(cfg, overrides):
    """``overrides``: iterable of ``section.key=value`` strings."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        _assign(cfg, section, key, value, f"override {item!r}")
    return cfg


def dump(cfg):
    """Serialize back to the text format (round-trips through :func:`parse_text`)."""
    lines = []
    for section, keys in cfg.values.items():
        lines.append(f"[{section}]")
        for key, value in keys.items():
            if value is None:
                text = "none"
            elif isinstance(value, tuple):
                text = ", ".join(repr(v) for v in value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)


TRAIN_KEYS = {
    "losses": ("loss", "dda_kind", "lambda_f", "lambda_p", "gamma", "alpha"),
    "network": ("arch", "hidden", "channels", "coords"),
    "trainer": ("lr", "batch_size", "max_epochs", "patience", "lr_factor", "plateau_tol",
                "stop_after_reductions", "augment", "seed", "dataset", "output_dir"),
    "eval": ("threshold_objective", "grid_steps"),
}


def train_config_dict(cfg):
    return {key: cfg[section][key] for section, keys in TRAIN_KEYS.items() for key in keys}
