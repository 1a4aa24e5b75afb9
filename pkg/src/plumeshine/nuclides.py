"""Radionuclide gamma-line database and air photon-interaction data.

The database couples a per-nuclide gamma emission library with the air
attenuation / energy-absorption / buildup coefficients the dose kernel needs.
Everything is loaded from a single line-oriented text file (see
``data/air_gamma.txt`` for the shipped default and the format description)
and validated eagerly; instances are immutable after load and safe to share
across threads.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import TextIO

import numpy as np

__all__ = [
    "GammaLine",
    "NuclideRecord",
    "AirPhotonTable",
    "NuclideDB",
    "DataFormatError",
    "ValidationError",
    "normalize_name",
    "load_db",
    "load_default_db",
    "serialize_db",
    "attenuation",
    "buildup",
]

MIN_LINE_ENERGY_MEV = 0.01
MAX_LINE_ENERGY_MEV = 10.0


class DataFormatError(ValueError):
    """Raised when the data file cannot be parsed; carries the line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(ValueError):
    """Raised when parsed data violates a database invariant."""


_NAME_RE = re.compile(r"^([A-Za-z]{1,2})[-_ ]?(\d{1,3})$|^(\d{1,3})[-_ ]?([A-Za-z]{1,2})$")


def normalize_name(name: str) -> str:
    """Canonicalize a nuclide identifier to ``Sym-A`` form.

    "Cs-137", "137Cs", "cs137" and "CS 137" all map to "Cs-137".
    """
    m = _NAME_RE.match(name.strip())
    if not m:
        raise ValidationError(f"unrecognized nuclide name: {name!r}")
    if m.group(1) is not None:
        sym, mass = m.group(1), m.group(2)
    else:
        sym, mass = m.group(4), m.group(3)
    return f"{sym.capitalize()}-{int(mass)}"


@dataclass(frozen=True)
class GammaLine:
    """One gamma emission: photon energy in MeV and photons per decay."""

    energy: float
    yield_: float

    def validate(self, owner: str) -> None:
        if not (0.0 < self.energy <= MAX_LINE_ENERGY_MEV):
            raise ValidationError(f"{owner}: line energy {self.energy} MeV outside (0, {MAX_LINE_ENERGY_MEV}]")
        if self.energy < MIN_LINE_ENERGY_MEV:
            raise ValidationError(f"{owner}: line energy {self.energy} MeV below {MIN_LINE_ENERGY_MEV} MeV cutoff")
        if not (0.0 < self.yield_ <= 3.0):
            raise ValidationError(f"{owner}: line yield {self.yield_} outside (0, 3]")


@dataclass(frozen=True)
class NuclideRecord:
    """A gamma emitter: canonical name, half-life in seconds, gamma lines.

    Lines are kept sorted ascending by energy.
    """

    name: str
    half_life: float
    lines: tuple[GammaLine, ...]

    def validate(self) -> None:
        if self.half_life <= 0:
            raise ValidationError(f"{self.name}: half_life must be positive")
        if not self.lines:
            raise ValidationError(f"{self.name}: no gamma lines")
        energies = [ln.energy for ln in self.lines]
        if any(e2 <= e1 for e1, e2 in zip(energies, energies[1:])):
            raise ValidationError(f"{self.name}: lines must be strictly ascending in energy")
        for ln in self.lines:
            ln.validate(self.name)

    @property
    def max_energy(self) -> float:
        return self.lines[-1].energy


@dataclass(frozen=True)
class AirPhotonTable:
    """Air photon-interaction grid.

    energies: ascending photon energies, MeV.
    mu: linear attenuation coefficient at rho_air, 1/m.
    mu_a_over_rho: mass energy-absorption coefficient, m^2/kg.
    buildup_a, buildup_b: Berger-form coefficients, dimensionless.
    """

    energies: np.ndarray
    mu: np.ndarray
    mu_a_over_rho: np.ndarray
    buildup_a: np.ndarray
    buildup_b: np.ndarray
    rho_air: float
    # log-space copies for interpolation, derived once at construction
    _log_e: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        for name in ("energies", "mu", "mu_a_over_rho", "buildup_a", "buildup_b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "_log_e", np.log(self.energies))

    def validate(self) -> None:
        e = self.energies
        if e.ndim != 1 or e.size < 2:
            raise ValidationError("photon grid needs at least 2 energies")
        if np.any(np.diff(e) <= 0):
            raise ValidationError("photon grid energies must be strictly ascending")
        if e[0] < MIN_LINE_ENERGY_MEV:
            pass  # grid may extend below the line cutoff; lines themselves are cut at 0.01
        if np.any(self.mu <= 0) or np.any(self.mu_a_over_rho <= 0):
            raise ValidationError("mu and mu_a_over_rho must be positive everywhere")
        if not (1.0 <= self.rho_air <= 1.4):
            raise ValidationError(f"rho_air {self.rho_air} outside [1.0, 1.4] kg/m^3")
        if np.any(self.buildup_a <= 0) or np.any(self.buildup_b <= 0):
            raise ValidationError("Berger coefficients must be positive")

    def _loglog(self, table: np.ndarray, energy) -> np.ndarray | float:
        loge = np.log(energy)
        logv = np.interp(loge, self._log_e, np.log(table))
        return np.exp(logv)


@dataclass(frozen=True)
class NuclideDB:
    """Immutable nuclide database plus air photon table."""

    nuclides: dict[str, NuclideRecord]
    photon: AirPhotonTable

    def get(self, name: str) -> NuclideRecord:
        canon = normalize_name(name)
        try:
            return self.nuclides[canon]
        except KeyError:
            raise KeyError(f"nuclide {canon!r} not in database") from None

    def names(self) -> list[str]:
        return sorted(self.nuclides)


def _parse_floats(parts: list[str], n: int, lineno: int) -> list[float]:
    if len(parts) != n:
        raise DataFormatError(lineno, f"expected {n} fields, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise DataFormatError(lineno, str(exc)) from None


def load_db(source: TextIO) -> NuclideDB:
    """Parse and validate a nuclide/photon data stream.

    Raises DataFormatError with a line number on malformed input,
    ValidationError when a parsed value violates an invariant (the message
    names the offending nuclide or field), including the case of a gamma
    line whose energy exceeds the photon grid coverage.
    """
    photon_rows: list[list[float]] = []
    rho_air: float | None = None
    nuclides: dict[str, NuclideRecord] = {}
    section: str | None = None
    cur_name: str | None = None
    cur_half_life: float | None = None
    cur_lines: list[GammaLine] = []

    def flush_nuclide(lineno: int) -> None:
        nonlocal cur_name, cur_half_life, cur_lines
        if cur_name is None:
            return
        if cur_half_life is None:
            raise DataFormatError(lineno, f"nuclide {cur_name}: missing half_life_s")
        rec = NuclideRecord(cur_name, cur_half_life, tuple(sorted(cur_lines, key=lambda ln: ln.energy)))
        rec.validate()
        if rec.name in nuclides:
            raise ValidationError(f"duplicate nuclide {rec.name}")
        nuclides[rec.name] = rec
        cur_name, cur_half_life, cur_lines = None, None, []

    lineno = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise DataFormatError(lineno, f"unterminated section header: {line!r}")
            header = line[1:-1].strip()
            flush_nuclide(lineno)
            if header == "photon":
                section = "photon"
            elif header == "air":
                section = "air"
            elif header.startswith("nuclide"):
                section = "nuclide"
                cur_name = normalize_name(header[len("nuclide"):].strip())
            else:
                raise DataFormatError(lineno, f"unknown section {header!r}")
            continue
        parts = line.split()
        if section == "photon":
            photon_rows.append(_parse_floats(parts, 5, lineno))
        elif section == "air":
            if parts[0] != "rho_kg_m3":
                raise DataFormatError(lineno, f"unknown air key {parts[0]!r}")
            rho_air = _parse_floats(parts[1:], 1, lineno)[0]
        elif section == "nuclide":
            if parts[0] == "half_life_s":
                cur_half_life = _parse_floats(parts[1:], 1, lineno)[0]
            else:
                e, y = _parse_floats(parts, 2, lineno)
                cur_lines.append(GammaLine(e, y))
        else:
            raise DataFormatError(lineno, "data before any section header")
    flush_nuclide(lineno)

    if not photon_rows:
        raise ValidationError("missing [photon] section")
    if rho_air is None:
        raise ValidationError("missing [air] rho_kg_m3")
    if not nuclides:
        raise ValidationError("no nuclides defined")

    arr = np.asarray(photon_rows, dtype=float)
    photon = AirPhotonTable(
        energies=arr[:, 0], mu=arr[:, 1], mu_a_over_rho=arr[:, 2],
        buildup_a=arr[:, 3], buildup_b=arr[:, 4], rho_air=rho_air,
    )
    photon.validate()

    e_max_grid = photon.energies[-1]
    e_min_grid = photon.energies[0]
    for rec in nuclides.values():
        if rec.max_energy > e_max_grid:
            raise ValidationError(
                f"{rec.name}: line energy {rec.max_energy} MeV exceeds photon grid maximum {e_max_grid} MeV"
            )
        if rec.lines[0].energy < e_min_grid:
            raise ValidationError(
                f"{rec.name}: line energy {rec.lines[0].energy} MeV below photon grid minimum {e_min_grid} MeV"
            )

    return NuclideDB(nuclides=nuclides, photon=photon)


def load_default_db() -> NuclideDB:
    """Load the data file shipped with the package (17 nuclides)."""
    text = resources.files("plumeshine").joinpath("data/air_gamma.txt").read_text(encoding="utf-8")
    return load_db(io.StringIO(text))


def serialize_db(db: NuclideDB) -> str:
    """Write a database back to the text format in normalized form.

    Normalized means: photon rows in grid order, nuclides sorted by canonical
    name, lines ascending in energy, floats in repr form (exact round trip):
    load_db(serialize_db(db)) reproduces db.
    """
    out: list[str] = []
    out.append("[photon]")
    p = db.photon
    for i in range(p.energies.size):
        row = (p.energies[i], p.mu[i], p.mu_a_over_rho[i], p.buildup_a[i], p.buildup_b[i])
        out.append(" ".join(repr(float(v)) for v in row))
    out.append("")
    out.append("[air]")
    out.append(f"rho_kg_m3 {p.rho_air!r}")
    for name in sorted(db.nuclides):
        rec = db.nuclides[name]
        out.append("")
        out.append(f"[nuclide {rec.name}]")
        out.append(f"half_life_s {rec.half_life!r}")
        for ln in rec.lines:
            out.append(f"{ln.energy!r} {ln.yield_!r}")
    out.append("")
    return "\n".join(out)


def attenuation(db: NuclideDB, energy) -> tuple:
    """Interpolate (mu [1/m], mu_a/rho [m^2/kg]) at the given energy in MeV.

    Log-log linear interpolation on the photon grid; exact at grid knots.
    Scalar or array energy. Raises ValueError outside the grid span.
    """
    p = db.photon
    e = np.asarray(energy, dtype=float)
    if np.any(e < p.energies[0]) or np.any(e > p.energies[-1]):
        raise ValueError(
            f"energy outside photon grid [{p.energies[0]}, {p.energies[-1]}] MeV"
        )
    mu = p._loglog(p.mu, e)
    mua = p._loglog(p.mu_a_over_rho, e)
    if np.isscalar(energy) or e.ndim == 0:
        return float(mu), float(mua)
    return mu, mua


def buildup(db: NuclideDB, energy, mu_r):
    """Berger buildup factor B = 1 + a(E) * mu_r * exp(b(E) * mu_r).

    a and b are interpolated log-log in energy. B(E, 0) = 1 exactly and B is
    nondecreasing in mu_r. Total function for mu_r >= 0 and on-grid energy.
    """
    p = db.photon
    e = np.asarray(energy, dtype=float)
    if np.any(e < p.energies[0]) or np.any(e > p.energies[-1]):
        raise ValueError(
            f"energy outside photon grid [{p.energies[0]}, {p.energies[-1]}] MeV"
        )
    mu_r_arr = np.asarray(mu_r, dtype=float)
    if np.any(mu_r_arr < 0):
        raise ValueError("mu_r must be nonnegative")
    a = p._loglog(p.buildup_a, e)
    b = p._loglog(p.buildup_b, e)
    val = 1.0 + a * mu_r_arr * np.exp(b * mu_r_arr)
    if np.isscalar(mu_r) and (np.isscalar(energy) or e.ndim == 0):
        return float(val)
    return val


def line_energy_weighted_sum(rec: NuclideRecord) -> float:
    """Sum over lines of yield * energy (MeV per decay); positive and finite."""
    total = math.fsum(ln.energy * ln.yield_ for ln in rec.lines)
    return total
