"""Reading and writing problem-instance files.

The format is UTF-8 text with one ``key = value`` per line and ``#``
comments.  Vectors are comma-separated; a matrix opens with ``key = [``,
lists one comma-separated row per line, and closes with ``]``::

    s = 10
    kappa = 0.0095, 0.0095
    eta = [
      0.2, 0.8
      0.5, 0.5
    ]

Missing keys take the values of :func:`chemoeda.model.default_instance`
for the file's ``s``, ``d`` and ``bits_per_dose``; unknown keys are an error.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .model import InstanceError, ProblemInstance, default_instance

__all__ = [
    "ParseError",
    "KEYS",
    "parse_instance",
    "load_instance",
    "dump_instance",
    "save_instance",
    "instance_hash",
    "apply_overrides",
    "DEFAULT_INSTANCE_PATH",
]

DEFAULT_INSTANCE_PATH = Path(__file__).with_name("data") / "default.inst"

# file key -> ProblemInstance field
KEYS = {
    "s": "s",
    "d": "d",
    "bits_per_dose": "bits_per_dose",
    "lambda": "lam",
    "theta": "theta",
    "n0": "n0",
    "kappa": "kappa",
    "eta": "eta",
    "delta_c": "delta_c",
    "dose_times": "dose_times",
    "c_max": "c_max",
    "c_cum": "c_cum",
    "n_max": "n_max",
    "c_seff": "c_seff",
    "penalties": "penalties",
}
_INTS = {"s", "d", "bits_per_dose"}
_SCALARS = {"lambda", "theta", "n0", "n_max"}


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _numbers(text, line):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"not a number list: {text.strip()!r}", line) from None


def parse_instance(text: str) -> ProblemInstance:
    """Parse instance-file text; raises ParseError or InstanceError."""
    raw = {}
    matrix_key = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if matrix_key is not None:
            if line == "]":
                raw[matrix_key] = np.array(rows, dtype=float)
                matrix_key = None
                continue
            rows.append(_numbers(line, lineno))
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"ragged row in {matrix_key!r}", lineno)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno)
        if value == "[":
            matrix_key, rows = key, []
            continue
        values = _numbers(value, lineno)
        if key in _INTS or key in _SCALARS:
            if len(values) != 1:
                raise ParseError(f"{key!r} takes a single value", lineno)
            v = values[0]
            if key in _INTS:
                if v != int(v):
                    raise ParseError(f"{key!r} must be an integer", lineno)
                v = int(v)
            raw[key] = v
        else:
            raw[key] = np.array(values)
    if matrix_key is not None:
        raise ParseError(f"unterminated matrix {matrix_key!r}")

    base = default_instance(
        raw.get("s", 10), raw.get("d", 10), raw.get("bits_per_dose", 4)
    )
    fields = {f: getattr(base, f) for f in KEYS.values()}
    for key, value in raw.items():
        fields[KEYS[key]] = value
    return ProblemInstance(**fields)


def load_instance(path=None) -> ProblemInstance:
    """Load an instance file; ``None`` or ``"default"`` gives the bundled one."""
    if path is None or str(path) == "default":
        path = DEFAULT_INSTANCE_PATH
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def _fmt(v) -> str:
    return repr(float(v))  # shortest repr round-trips exactly


def dump_instance(inst: ProblemInstance) -> str:
    """Serialise every field, so that ``parse_instance(dump_instance(x))`` equals ``x``."""
    out = []
    for key, attr in KEYS.items():
        value = getattr(inst, attr)
        if key == "eta":
            out.append("eta = [")
            out.extend("  " + ", ".join(_fmt(v) for v in row) for row in value)
            out.append("]")
        elif isinstance(value, np.ndarray):
            out.append(f"{key} = " + ", ".join(_fmt(v) for v in value))
        elif key in _INTS:
            out.append(f"{key} = {value}")
        else:
            out.append(f"{key} = {_fmt(value)}")
    return "\n".join(out) + "\n"


def save_instance(inst: ProblemInstance, path, header: str = "") -> None:
    text = "".join(f"# {line}\n" for line in header.splitlines()) + dump_instance(inst)
    Path(path).write_text(text, encoding="utf-8")


def instance_hash(inst: ProblemInstance) -> str:
    """Short content hash of an instance (stable across runs)."""
    return hashlib.sha256(dump_instance(inst).encode()).hexdigest()[:16]


__all__ += ["InstanceError"]


def apply_overrides(inst: ProblemInstance, overrides) -> ProblemInstance:
    """Return ``inst`` with ``key = value`` overrides applied (instance-file syntax).

    ``overrides`` is a mapping or a sequence of ``"key=value"`` strings.  The
    matrix ``eta`` cannot be overridden this way.
    """
    if not isinstance(overrides, dict):
        pairs = {}
        for item in overrides:
            key, sep, value = str(item).partition("=")
            if not sep:
                raise ParseError(f"expected key=value, got {item!r}")
            pairs[key.strip()] = value.strip()
        overrides = pairs
    lines = dump_instance(inst).splitlines()
    for key, value in overrides.items():
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}")
        if key == "eta":
            raise ParseError("'eta' cannot be overridden from the command line")
        prefix = f"{key} = "
        lines = [f"{prefix}{value}" if ln.startswith(prefix) else ln for ln in lines]
    return parse_instance("\n".join(lines) + "\n")
