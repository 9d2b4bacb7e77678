"""Text formats: extended XYZ systems, key = value run configs, CSV metrics."""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass, fields

import numpy as np

from .core import COINCIDENCE_TOL, REAL, UNIT_PROFILES, MDError, ParticleSystem, closest_pair
from .potentials import BACKEND_KINDS

BOX_MARGIN = 10.0


class ParseError(MDError, ValueError):
    """Malformed input file; ``lineno`` is 1-based (None when not tied to a line)."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        where = f"{path or '<input>'}" + (f":{lineno}" if lineno is not None else "")
        super().__init__(f"{where}: {message}")
        self.lineno = lineno
        self.path = path


def _floats(tokens, lineno, path, what):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"non-numeric {what}: {' '.join(tokens)!r}", lineno, path) from None


def _parse_box(comment: str, lineno: int, path):
    """Optional ``box = Lx Ly Lz`` inside the comment line."""
    if "box" not in comment:
        return None
    rest = comment.split("box", 1)[1].lstrip(" =:")
    values = _floats(rest.split()[:3], lineno, path, "box")
    if len(values) != 3 or min(values) <= 0:
        raise ParseError("box needs three positive edge lengths", lineno, path)
    return values


def parse_system(path, units=REAL) -> ParticleSystem:
    """Read an extended XYZ file.

    Layout: atom count, comment (may hold ``box = Lx Ly Lz``), one line per
    atom ``element x y z charge mass [vx vy vz]``, then optional
    ``BOND i j k r0`` lines with 0-based atom indices. Blank lines after the
    atoms are ignored.
    """
    path = os.fspath(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1, path)
    try:
        n = int(lines[0].split()[0])
    except (ValueError, IndexError):
        raise ParseError(f"first line must be the atom count, got {lines[0]!r}", 1, path) from None
    if n < 1:
        raise ParseError("atom count must be positive", 1, path)
    if len(lines) < 2:
        raise ParseError("missing comment line", 2, path)
    box = _parse_box(lines[1], 2, path)
    if len(lines) < n + 2:
        raise ParseError(f"expected {n} atom lines, found {len(lines) - 2}", len(lines) + 1, path)

    species, pos, vel, q, m = [], np.zeros((n, 3)), np.zeros((n, 3)), np.zeros(n), np.zeros(n)
    for a in range(n):
        lineno = a + 3
        tok = lines[a + 2].split()
        if len(tok) not in (6, 9):
            raise ParseError(f"atom line needs 6 or 9 fields, got {len(tok)}", lineno, path)
        if tok[0].upper() == "BOND":
            raise ParseError(f"BOND line before all {n} atoms were read", lineno, path)
        values = _floats(tok[1:], lineno, path, "atom field")
        if not np.all(np.isfinite(values)):
            raise ParseError("non-finite atom field", lineno, path)
        species.append(tok[0])
        pos[a], q[a], m[a] = values[0:3], values[3], values[4]
        if m[a] <= 0:
            raise ParseError(f"mass must be positive, got {m[a]}", lineno, path)
        if len(values) == 8:
            vel[a] = values[5:8]

    bonds = []
    for offset, raw in enumerate(lines[n + 2:]):
        lineno = n + 3 + offset
        tok = raw.split()
        if not tok:
            continue
        if tok[0].upper() != "BOND" or len(tok) != 5:
            raise ParseError(f"expected 'BOND i j k r0', got {raw.strip()!r}", lineno, path)
        try:
            i, j = int(tok[1]), int(tok[2])
        except ValueError:
            raise ParseError("bond indices must be integers", lineno, path) from None
        k, r0 = _floats(tok[3:], lineno, path, "bond parameter")
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"bond indices ({i}, {j}) out of range for {n} atoms", lineno, path)
        if k < 0 or r0 <= 0:
            raise ParseError("bond needs k >= 0 and r0 > 0", lineno, path)
        bonds.append((i, j, k, r0))

    if n > 1:
        i, j, r = closest_pair(pos)
        if r < COINCIDENCE_TOL:
            raise ParseError(f"atoms {i} and {j} coincide (lines {i + 3} and {j + 3})", max(i, j) + 3, path)
    if box is None:
        extent = pos.max(axis=0) - pos.min(axis=0)
        box = np.maximum(extent + BOX_MARGIN, 1.0)
    return ParticleSystem(pos, vel, q, m, box, tuple(bonds), tuple(species), units)


def format_system(system: ParticleSystem, comment: str = "") -> str:
    box = " ".join(repr(float(b)) for b in system.box)
    out = [str(system.n), f"{comment} box = {box}".strip()]
    for a in range(system.n):
        row = [system.species[a], *system.positions[a], system.charges[a], system.masses[a],
               *system.velocities[a]]
        out.append(" ".join([row[0]] + [repr(float(x)) for x in row[1:]]))
    for i, j, k, r0 in system.bonds:
        out.append(f"BOND {i} {j} {k!r} {r0!r}")
    return "\n".join(out) + "\n"


def write_system(path, system: ParticleSystem, comment: str = ""):
    with open(path, "w") as fh:
        fh.write(format_system(system, comment))


def append_frame(fh, species, positions, comment: str):
    """Plain XYZ frame (element x y z)."""
    fh.write(f"{len(positions)}\n{comment}\n")
    for s, p in zip(species, positions):
        fh.write(f"{s} {p[0]:.8f} {p[1]:.8f} {p[2]:.8f}\n")


# -- run configuration ------------------------------------------------------


@dataclass
class RunConfig:
    """Every knob of the command-line drivers. Names double as config keys and flags."""

    system: str | None = None
    units: str = "real"
    backend: str = "msm"
    cutoff: float = 12.0
    switch_on: float = 10.0
    wolf_alpha: float = 0.2
    msm_h: float = 2.0
    msm_levels: int | None = None
    coarse_backend: str = "cutoff"
    coarse_cutoff: float = 12.0
    lj: bool = True
    lj_cutoff: float = 10.0
    bonds: bool = True
    dt: float = 2.0
    steps: int = 1000
    stride: int = 0
    metrics_every: int = 1
    window: int = 16
    epsilon: float = 1e-3
    k_max: int | None = None
    windows: int = 1
    workers: int | None = None
    executor: str = "thread"
    reference: bool = True
    seed: int = 0
    output: str = "out"
    repeats: int = 10

    def validate(self) -> "RunConfig":
        """Check ranges before any compute; raises ParseError."""
        def bad(msg):
            raise ParseError(msg)

        if self.system is not None and not os.path.exists(self.system):
            bad(f"system file {self.system!r} does not exist")
        if self.units not in UNIT_PROFILES:
            bad(f"units must be one of {sorted(UNIT_PROFILES)}")
        for key in ("backend", "coarse_backend"):
            if getattr(self, key) not in BACKEND_KINDS:
                bad(f"{key} must be one of {', '.join(BACKEND_KINDS)}")
        for key in ("cutoff", "coarse_cutoff", "msm_h", "dt", "epsilon", "lj_cutoff", "wolf_alpha"):
            if not getattr(self, key) > 0:
                bad(f"{key} must be positive")
        if not 0 < self.switch_on < self.cutoff and "smoothed_cutoff" in (self.backend, self.coarse_backend):
            bad("switch_on must lie in (0, cutoff)")
        for key in ("steps", "metrics_every", "windows", "repeats"):
            if getattr(self, key) < 1:
                bad(f"{key} must be >= 1")
        if self.stride < 0:
            bad("stride must be >= 0")
        if self.window < 2:
            bad("window must be >= 2")
        if self.k_max is not None and self.k_max < 0:
            bad("k_max must be >= 0")
        if self.msm_levels is not None and self.msm_levels < 1:
            bad("msm_levels must be >= 1")
        if self.workers is not None and self.workers < 1:
            bad("workers must be >= 1")
        if self.executor not in ("thread", "process"):
            bad("executor must be 'thread' or 'process'")
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _field_types():
    hints = {}
    for f in fields(RunConfig):
        t = str(f.type)
        if t.startswith("bool"):
            hints[f.name] = bool
        elif t.startswith("int"):
            hints[f.name] = int
        elif t.startswith("float"):
            hints[f.name] = float
        else:
            hints[f.name] = str
    return hints


CONFIG_TYPES = _field_types()


def coerce_value(key: str, raw: str, lineno: int | None = None, path=None):
    kind = CONFIG_TYPES[key]
    text = raw.strip()
    if text.lower() in ("none", "") and kind is not bool:
        return None
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError
        return kind(text)
    except ValueError:
        raise ParseError(f"bad value for {key}: {raw!r}", lineno, path) from None


def parse_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    path = os.fspath(path)
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {line!r}", lineno, path)
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_TYPES:
                raise ParseError(f"unknown config key {key!r}", lineno, path)
            if key in values:
                raise ParseError(f"duplicate config key {key!r}", lineno, path)
            values[key] = coerce_value(key, value, lineno, path)
    if values.get("system"):
        base = os.path.dirname(os.path.abspath(path))
        if not os.path.isabs(values["system"]):
            values["system"] = os.path.join(base, values["system"])
    return values


def format_config(config: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.as_dict().items())


class CsvWriter:
    """CSV with a fixed column order set by the first call."""

    def __init__(self, path, columns):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)

    def row(self, values: dict):
        self._writer.writerow([_fmt(values.get(c, "")) for c in self.columns])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows: list[dict], columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with CsvWriter(path, columns) as w:
        for r in rows:
            w.row(r)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
