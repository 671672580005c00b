"""Plain-text fractal and experiment configuration files.

Grammar (one statement per line, '#' starts a comment):

    preset = sierpinski-gasket          # shortcut, excludes the keys below
    dim = 2
    beta = 2.0
    map U = 1 0 0 1 ; gamma = 0 0       # row-major U entries, then the shift

Any other `key = value` line is returned to the caller for experiment
configuration. Parse errors cite the file line number.
"""

import os

import numpy as np

from .ifs import IFSSpec, preset, preset_names


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


def read_kv_lines(path):
    """Yield (lineno, key, value) for every statement in the file."""
    out = []
    with open(path, "r", encoding="utf8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("map ") or line == "map":
                out.append((lineno, "map", line[3:].strip()))
                continue
            if "=" not in line:
                raise ConfigError(f"expected `key = value`, got {line!r}", path, lineno)
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError("empty key", path, lineno)
            out.append((lineno, key, value.strip()))
    return out


def _floats(text, path, lineno):
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise ConfigError(f"bad number in {text!r}: {exc}", path, lineno) from None


def _parse_map_row(value, dim, path, lineno):
    parts = [p.strip() for p in value.split(";")]
    if len(parts) != 2:
        raise ConfigError("map row needs `U = ... ; gamma = ...`", path, lineno)
    fields = {}
    for part in parts:
        if "=" not in part:
            raise ConfigError(f"map component {part!r} lacks `=`", path, lineno)
        name, nums = part.split("=", 1)
        name = name.strip()
        if name in ("gamma", "γ"):
            name = "gamma"
        if name not in ("U", "gamma"):
            raise ConfigError(f"unknown map component {name!r} (want U, gamma)", path, lineno)
        fields[name] = _floats(nums, path, lineno)
    if set(fields) != {"U", "gamma"}:
        raise ConfigError("map row needs both U and gamma", path, lineno)
    if len(fields["U"]) != dim * dim:
        raise ConfigError(f"U needs {dim * dim} entries, got {len(fields['U'])}", path, lineno)
    if len(fields["gamma"]) != dim:
        raise ConfigError(f"gamma needs {dim} entries, got {len(fields['gamma'])}", path, lineno)
    U = np.array(fields["U"], dtype=float).reshape(dim, dim)
    return U, np.array(fields["gamma"], dtype=float)


def parse_fractal_file(path) -> IFSSpec:
    """Build an IFSSpec from a spec file; extra keys are errors here."""
    spec, extra = parse_fractal_lines(read_kv_lines(path), path)
    if extra:
        lineno, key, _ = extra[0]
        raise ConfigError(f"unknown key {key!r} in fractal file", path, lineno)
    return spec


def parse_fractal_lines(lines, path=None):
    """Split statements into an IFSSpec and leftover experiment keys.

    Returns (spec_or_none, leftover) where leftover keeps (lineno, key,
    value) of everything that is not fractal geometry.
    """
    preset_row = None
    dim = None
    beta = None
    dim_line = beta_line = None
    map_rows = []
    leftover = []
    for lineno, key, value in lines:
        if key == "preset":
            if preset_row is not None:
                raise ConfigError("duplicate preset", path, lineno)
            preset_row = (lineno, value)
        elif key == "dim":
            if dim is not None:
                raise ConfigError("duplicate dim", path, lineno)
            dim = int(_floats(value, path, lineno)[0])
            dim_line = lineno
        elif key == "beta":
            if beta is not None:
                raise ConfigError("duplicate beta", path, lineno)
            beta = _floats(value, path, lineno)[0]
            beta_line = lineno
        elif key == "map":
            map_rows.append((lineno, value))
        else:
            leftover.append((lineno, key, value))

    if preset_row is not None:
        lineno, name = preset_row
        if dim is not None or beta is not None or map_rows:
            raise ConfigError("preset excludes explicit dim/beta/map keys", path, lineno)
        if name not in preset_names():
            raise ConfigError(
                f"unknown preset {name!r}; known: {', '.join(preset_names())}", path, lineno
            )
        return preset(name), leftover

    if dim is None and beta is None and not map_rows:
        return None, leftover
    if dim is None:
        raise ConfigError("missing dim", path, beta_line or (map_rows and map_rows[0][0]) or 1)
    if beta is None:
        raise ConfigError("missing beta", path, dim_line)
    if len(map_rows) < 2:
        raise ConfigError("need at least 2 map rows", path, dim_line)
    maps = [_parse_map_row(value, dim, path, lineno) for lineno, value in map_rows]
    return IFSSpec(dim, beta, maps), leftover


def load_fractal(name_or_path) -> IFSSpec:
    """A preset name, or a path to a fractal spec file."""
    if name_or_path in preset_names():
        return preset(name_or_path)
    if os.path.exists(name_or_path):
        return parse_fractal_file(name_or_path)
    raise ConfigError(
        f"{name_or_path!r} is neither a preset ({', '.join(preset_names())}) nor a file"
    )
