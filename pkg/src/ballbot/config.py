"""Run configuration: an INI file with ``model``, ``control``, ``sim``, ``opt`` and ``output`` sections.

Every key has a default, so an empty file is a valid configuration. Unknown
sections or keys and malformed values raise :class:`ConfigError` naming the
key and, when read from a file, its line.
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field, fields

from .control import (
    DEFAULT_Q_BALANCE, DEFAULT_Q_YAW, DEFAULT_R_BALANCE, DEFAULT_R_YAW, PHI_DOT_MAX, SCHEMES,
    ControlScheme, balance_gains,
)
from .metrics import BrakingWeights
from .model import RiderBallbotParams
from .trajopt import DEFAULT_SENSITIVITIES, DEFAULT_SWEEP_SCHEMES


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _words(text):
    return tuple(v for v in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _show(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_show(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_DEFAULT_PARAMS = RiderBallbotParams.default_rider()

# section -> key -> (parser, default)
SCHEMA = {
    "model": {f.name: (float, getattr(_DEFAULT_PARAMS, f.name)) for f in fields(RiderBallbotParams)},
    "control": {
        "scheme": (str, "baseline"),
        "nu": (float, 1.0),
        "nu_p": (float, 0.0),
        "nu_i": (float, 0.0),
        "nu_z": (float, 1.0),
        "phi_dot_max": (float, PHI_DOT_MAX),
        "integral_clamp": (_opt_float, None),
        "q_balance": (_floats, DEFAULT_Q_BALANCE),
        "r_balance": (float, DEFAULT_R_BALANCE),
        "q_yaw": (_floats, DEFAULT_Q_YAW),
        "r_yaw": (float, DEFAULT_R_YAW),
    },
    "sim": {
        "v0": (float, 1.4),
        "dt": (float, 1e-3),
        "t_end": (float, 5.0),
        "theta_limit": (float, 0.35),
        "tau_max": (_opt_float, 40.0),
        "rider": (str, "hold"),
    },
    "opt": {
        "v0": (float, 1.4),
        "segments": (int, 50),
        "zeta_bound": (float, 0.52),
        "theta_bound": (float, 0.30),
        "tau_R_max": (float, 60.0),
        "tau_max": (float, 40.0),
        "t_F_min": (float, 0.2),
        "t_F_max": (float, 10.0),
        "final_rest": (_bool, True),
        "tol": (float, 1e-6),
        "max_iter": (int, 200),
        "restarts": (int, 2),
        "seed": (int, 0),
        "workers": (int, 0),
        "schemes": (_words, DEFAULT_SWEEP_SCHEMES),
        "sensitivities": (_floats, DEFAULT_SENSITIVITIES),
        "effort_zeta_rom": (float, 0.52),
        "effort_distance": (float, 1.0),
        "effort_zeta_dot_max": (float, 2.0),
        "effort_tau_R_max": (float, 60.0),
    },
    "output": {
        "dir": (str, "out"),
        "plots": (_bool, True),
    },
}

RIDER_POLICIES = ("hold", "relaxed", "stiff")


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number."""
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.fullmatch(r"\[(.+)\]", s)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), i)
    return where


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {
        sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()
    })
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.values[section]

    # -- construction -------------------------------------------------------
    @classmethod
    def from_text(cls, text, source="<string>"):
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str  # keep key case: tau_R_max, t_F_min
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        lines = _key_lines(text)
        cfg = cls(source=source)
        for section in cp.sections():
            if section not in SCHEMA:
                line = lines.get((section, None), "?")
                raise ConfigError(f"{source}:{line}: unknown section [{section}]; expected one of {sorted(SCHEMA)}")
            for key, raw in cp.items(section):
                line = lines.get((section, key), "?")
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}]")
                parser = SCHEMA[section][key][0]
                try:
                    cfg.values[section][key] = parser(raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}:{line}: bad value for '{key}' in [{section}]: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, source=os.fspath(path))

    def override(self, section, key, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        self.values[section][key] = value
        return self

    def validate(self):
        """Check cross-field constraints by building every derived object once."""
        try:
            self.params()
            self.scheme()
            self.weights()
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from None
        if self["sim"]["rider"] not in RIDER_POLICIES:
            raise ConfigError(f"{self.source}: [sim] rider must be one of {RIDER_POLICIES}")
        for k in self["opt"]["schemes"]:
            if k not in SCHEMES:
                raise ConfigError(f"{self.source}: unknown scheme '{k}' in [opt] schemes")
        if len(self["control"]["q_balance"]) != 3 or len(self["control"]["q_yaw"]) != 2:
            raise ConfigError(f"{self.source}: q_balance needs 3 weights and q_yaw needs 2")

    # -- derived objects ----------------------------------------------------
    def params(self):
        return RiderBallbotParams(**self["model"])

    def gains(self):
        c = self["control"]
        return balance_gains(self.params(), c["q_balance"], c["r_balance"], c["q_yaw"], c["r_yaw"])

    def scheme(self):
        c = self["control"]
        return ControlScheme(
            kind=c["scheme"].lower().replace("-", ""), nu=c["nu"], nu_p=c["nu_p"], nu_i=c["nu_i"],
            phi_dot_max=c["phi_dot_max"], nu_z=c["nu_z"], integral_clamp=c["integral_clamp"],
        )

    def weights(self):
        o = self["opt"]
        return BrakingWeights.for_rider(
            o["effort_zeta_rom"], o["effort_distance"], o["effort_zeta_dot_max"], o["effort_tau_R_max"],
            self["model"]["r_s"],
        )

    def problem_kw(self):
        """Keyword arguments for :class:`~ballbot.trajopt.BrakingProblem` (all but the scheme)."""
        o = self["opt"]
        return dict(
            v0=o["v0"], weights=self.weights(), zeta_bound=o["zeta_bound"], theta_bound=o["theta_bound"],
            tau_R_max=o["tau_R_max"], tau_max=o["tau_max"], t_F_bounds=(o["t_F_min"], o["t_F_max"]),
            N=o["segments"], final_rest=o["final_rest"],
        )

    # -- serialization ------------------------------------------------------
    def to_text(self):
        """Effective configuration as INI text; parses back to an equal config."""
        out = []
        for section, keys in SCHEMA.items():
            out.append(f"[{section}]")
            out.extend(f"{k} = {_show(self.values[section][k])}" for k in keys)
            out.append("")
        return "\n".join(out)


def default_config_text():
    return RunConfig().to_text()
