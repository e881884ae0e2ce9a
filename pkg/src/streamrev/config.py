"""Plain-text session configs: one ``section.key = value`` per line.

``#`` starts a comment.  Seconds-valued revision settings (``policy.step``,
``policy.interval``) are converted to frames here, using ``encoder.frame_ms``;
``policy.step_frames``/``policy.interval_frames`` give frames directly.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import os
from pathlib import Path

from .encoder import EncoderConfig
from .errors import StreamrevError
from .harness import Mode, SessionConfig
from .scheduler import RevisionPolicy


class ConfigError(StreamrevError, ValueError):
    pass


INT_KEYS = {
    "encoder.layers",
    "encoder.heads",
    "encoder.d_model",
    "encoder.d_ff",
    "encoder.vocab",
    "encoder.d_in",
    "encoder.conv_kernel",
    "encoder.frame_ms",
    "policy.step_frames",
    "policy.interval_frames",
    "policy.final",
    "session.seed",
    "session.trace_window",
}
FLOAT_KEYS = {"policy.step", "policy.interval", "policy.theta"}
PATH_KEYS = {"session.features", "session.posteriors", "session.revised_posteriors", "session.weights"}
OTHER_KEYS = {"encoder.history", "session.mode", "session.reference"}
KNOWN_KEYS = INT_KEYS | FLOAT_KEYS | PATH_KEYS | OTHER_KEYS

DEFAULTS = {
    "session.mode": "revision",
    "session.seed": 0,
    "session.trace_window": 20,
    "policy.final": 0,
    "policy.theta": 0.3,
}


def parse_text(text: str, base_dir=".") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        set_value(values, key, value, base_dir, where=f"line {lineno}")
    return values


def set_value(values: dict, key: str, value: str, base_dir=".", where="override"):
    if key not in KNOWN_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        if key in INT_KEYS:
            values[key] = int(value)
        elif key in FLOAT_KEYS:
            values[key] = float(value)
        elif key in PATH_KEYS:
            values[key] = str((Path(base_dir) / value).resolve())
        elif key == "encoder.history":
            values[key] = None if value.lower() == "all" else int(value)
        elif key == "session.mode":
            values[key] = Mode(value.lower()).value
        elif key == "session.reference":
            values[key] = [int(v) for v in value.split()]
        else:
            values[key] = value
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {value!r}") from exc


def load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    return parse_text(text, path.parent)


def apply_env(values: dict) -> dict:
    if "STREAMREV_SEED" in os.environ:
        set_value(values, "session.seed", os.environ["STREAMREV_SEED"], where="STREAMREV_SEED")
    return values


def to_session(values: dict) -> tuple[SessionConfig, dict]:
    """Build a session from parsed values; returns it with the effective values."""
    v = {**DEFAULTS, **values}
    enc_kw = {k.split(".", 1)[1]: v[k] for k in v if k.startswith("encoder.")}
    try:
        enc = EncoderConfig(**enc_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"encoder: {exc}") from exc
    if "policy.step_frames" in v:
        sigma = v["policy.step_frames"]
    elif "policy.step" in v:
        sigma = round(v["policy.step"] * 1000 / enc.frame_ms)
    else:
        raise ConfigError("policy.step or policy.step_frames is required")
    if "policy.interval_frames" in v:
        nu = v["policy.interval_frames"]
    elif "policy.interval" in v:
        nu = max(1, round(v["policy.interval"] * 1000 / enc.frame_ms))
    else:
        raise ConfigError("policy.interval or policy.interval_frames is required")
    try:
        policy = RevisionPolicy(sigma=sigma, nu=nu, eta=v["policy.final"], theta=v["policy.theta"], history=enc.history)
    except ValueError as exc:
        raise ConfigError(f"policy: {exc}") from exc
    for key in PATH_KEYS:
        if key in v and not Path(v[key]).exists():
            raise ConfigError(f"{key}: no such file {v[key]}")
    try:
        session = SessionConfig(
            encoder=enc,
            policy=policy,
            mode=Mode(v["session.mode"]),
            seed=v["session.seed"],
            features=v.get("session.features"),
            posteriors=v.get("session.posteriors"),
            revised_posteriors=v.get("session.revised_posteriors"),
            weights=v.get("session.weights"),
            reference=v.get("session.reference"),
        )
    except ValueError as exc:
        raise ConfigError(f"session: {exc}") from exc
    effective = {f"encoder.{k}": getattr(enc, k) for k in enc.__dataclass_fields__}
    effective.update(
        {
            "policy.step_frames": sigma,
            "policy.interval_frames": nu,
            "policy.final": policy.eta,
            "policy.theta": policy.theta,
            "session.mode": session.mode.value,
            "session.seed": session.seed,
            "session.trace_window": v["session.trace_window"],
        }
    )
    for key in PATH_KEYS | {"session.reference"}:
        if v.get(key) is not None:
            effective[key] = v[key]
    return session, effective


def dump(effective: dict) -> str:
    lines = []
    for key in sorted(effective):
        value = effective[key]
        if value is None:
            value = "all"
        elif isinstance(value, list):
            value = " ".join(map(str, value))
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
