"""Discretized single-boson spaces.

A :class:`ModeGrid` is a finite set of field modes, each with a strictly
positive energy and a positive quadrature weight.  Coupling functions live on
the grid as :class:`FormFactor` objects; pairings and norms are quadrature
sums against the weights, so grid refinement converges to the continuum
integrals.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gamma as _gamma


class Regularity(enum.Enum):
    REGULAR = "regular"
    SINGULAR = "singular"


class GridError(ValueError):
    """A grid (or a form factor against it) violates its invariants."""


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Mode energies ``omega`` and quadrature ``weight`` per mode.

    ``radius`` is the momentum magnitude of each mode (defaults to ``omega``);
    it is only used to select spatial windows and cutoffs.
    """

    omega: np.ndarray
    weight: np.ndarray
    dimension_d: int = 1
    radius: np.ndarray | None = None

    def __post_init__(self):
        omega = _frozen(self.omega, float)
        weight = _frozen(self.weight, float)
        radius = omega if self.radius is None else _frozen(self.radius, float)
        if omega.size == 0:
            raise GridError("grid has no modes")
        if weight.shape != omega.shape or radius.shape != omega.shape:
            raise GridError("omega, weight and radius must have equal length")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "radius", radius)
        self.validate()

    def validate(self):
        if not np.all(np.isfinite(self.omega)) or np.any(self.omega <= 0):
            raise GridError("mode energies must be finite and strictly positive")
        if not np.all(np.isfinite(self.weight)) or np.any(self.weight <= 0):
            raise GridError("quadrature weights must be finite and strictly positive")

    @property
    def size(self) -> int:
        return int(self.omega.size)

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.size)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.omega, self.weight, self.radius):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(self.dimension_d).encode())
        return h.hexdigest()[:16]

    def window(self, lo: float, hi: float) -> np.ndarray:
        """Indices of modes whose radius lies in the closed interval [lo, hi]."""
        return np.flatnonzero((self.radius >= lo) & (self.radius <= hi))

    def subgrid(self, indices) -> "ModeGrid":
        idx = np.asarray(indices, dtype=int)
        return ModeGrid(self.omega[idx], self.weight[idx], self.dimension_d, self.radius[idx])

    def descriptor(self) -> dict:
        return {"modes": self.size, "dimension_d": self.dimension_d, "grid_hash": self.digest()}


@dataclass(frozen=True, eq=False)
class Exterior:
    """Modes that are integrated out analytically rather than carried in a Fock basis."""

    omega: np.ndarray
    weight: np.ndarray
    amplitudes: np.ndarray

    def inner(self, other: "Exterior", s: float = 0.0) -> complex:
        """Weighted pairing sum w * omega^(2s) * conj(self) * other over the exterior modes."""
        if other.omega.shape != self.omega.shape:
            raise GridError("exterior mode sets differ")
        return complex(np.sum(self.weight * self.omega ** (2 * s) * np.conj(self.amplitudes) * other.amplitudes))


@dataclass(frozen=True, eq=False)
class FormFactor:
    """Complex amplitudes on a grid, tagged Regular or Singular.

    ``coupling`` is recorded for bookkeeping; the amplitudes already include it.
    A Singular tag marks a function whose continuum norm diverges even though
    every finite-grid sum is finite.
    """

    amplitudes: np.ndarray
    regularity: Regularity = Regularity.REGULAR
    coupling: float = 1.0
    exterior: Exterior | None = None

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes, complex))

    @property
    def size(self) -> int:
        return int(self.amplitudes.size)

    @property
    def is_regular(self) -> bool:
        return self.regularity is Regularity.REGULAR

    def with_regularity(self, regularity: Regularity) -> "FormFactor":
        return replace(self, regularity=regularity)

    def _combine(self, other: "FormFactor", a: complex, b: complex) -> "FormFactor":
        if other.size != self.size:
            raise GridError(f"form factors have {self.size} and {other.size} modes")
        if (self.exterior is None) != (other.exterior is None):
            raise GridError("cannot combine a form factor with exterior modes and one without")
        ext = None
        if self.exterior is not None:
            if self.exterior.omega.shape != other.exterior.omega.shape:
                raise GridError("exterior mode sets differ")
            ext = Exterior(self.exterior.omega, self.exterior.weight,
                           a * self.exterior.amplitudes + b * other.exterior.amplitudes)
        singular = not (self.is_regular and other.is_regular)
        return FormFactor(a * self.amplitudes + b * other.amplitudes,
                          Regularity.SINGULAR if singular else Regularity.REGULAR,
                          self.coupling, ext)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def scaled(self, c: complex) -> "FormFactor":
        """The function c*g (amplitudes multiplied by c)."""
        ext = None
        if self.exterior is not None:
            ext = Exterior(self.exterior.omega, self.exterior.weight, c * self.exterior.amplitudes)
        return FormFactor(c * self.amplitudes, self.regularity, self.coupling, ext)

    def restrict(self, grid: "ModeGrid", indices) -> tuple["FormFactor", ModeGrid]:
        """Keep the modes ``indices`` explicitly; the rest becomes the exterior.

        Returns the restricted form factor and the matching subgrid.  A Singular
        form factor has no finite exterior, so its exterior is dropped.
        """
        _check_size(self, grid)
        idx = np.asarray(indices, dtype=int)
        mask = np.ones(grid.size, dtype=bool)
        mask[idx] = False
        ext = None
        if self.is_regular:
            out_omega, out_weight, out_amp = grid.omega[mask], grid.weight[mask], self.amplitudes[mask]
            if self.exterior is not None:
                out_omega = np.concatenate([out_omega, self.exterior.omega])
                out_weight = np.concatenate([out_weight, self.exterior.weight])
                out_amp = np.concatenate([out_amp, self.exterior.amplitudes])
            ext = Exterior(_frozen(out_omega, float), _frozen(out_weight, float), _frozen(out_amp, complex))
        return FormFactor(self.amplitudes[idx], self.regularity, self.coupling, ext), grid.subgrid(idx)


def _amplitudes(v, grid: ModeGrid) -> np.ndarray:
    amp = v.amplitudes if isinstance(v, FormFactor) else np.asarray(v, dtype=complex).reshape(-1)
    if amp.size != grid.size:
        raise GridError(f"form factor has {amp.size} modes, grid has {grid.size}")
    return amp


def _check_size(v: FormFactor, grid: ModeGrid):
    _amplitudes(v, grid)


def weighted_norm_sq(v: FormFactor, grid: ModeGrid, s: float = 0.0, include_exterior: bool = True) -> float:
    """Quadrature sum  sum_j w_j omega_j^(2s) |v_j|^2.

    A Singular form factor has divergent norm; it is accepted only with
    ``s == 0`` and returns ``math.inf``.
    """
    grid.validate()
    amp = _amplitudes(v, grid)
    if isinstance(v, FormFactor) and not v.is_regular:
        if s != 0:
            raise ValueError("Singular form factors only admit the s=0 norm query")
        return math.inf
    total = float(np.sum(grid.weight * grid.omega ** (2 * s) * np.abs(amp) ** 2))
    if include_exterior and isinstance(v, FormFactor) and v.exterior is not None:
        total += v.exterior.inner(v.exterior, s).real
    return total


def dressed_factor(v: FormFactor, grid: ModeGrid, regularity: Regularity | None = None) -> FormFactor:
    """g = -v/omega, componentwise.  The regularity tag is inherited from v unless given."""
    grid.validate()
    amp = _amplitudes(v, grid)
    ext = None
    if v.exterior is not None:
        e = v.exterior
        ext = Exterior(e.omega, e.weight, _frozen(-e.amplitudes / e.omega, complex))
    tag = v.regularity if regularity is None else regularity
    return FormFactor(-amp / grid.omega, tag, v.coupling, ext)


def pairing(g, f, grid: ModeGrid) -> complex:
    """<g, f> = sum_j w_j conj(g_j) f_j, antilinear in g."""
    ga = _amplitudes(g, grid)
    fa = _amplitudes(f, grid)
    return complex(np.sum(grid.weight * np.conj(ga) * fa))


def omega_of(radius: np.ndarray, dispersion="massless") -> np.ndarray:
    """Dispersion relation.  ``"massless"`` gives |k|; ``{"kind": "massive", "mass": m}`` gives sqrt(k^2+m^2)."""
    if dispersion in (None, "massless"):
        return np.asarray(radius, float).copy()
    if isinstance(dispersion, dict) and dispersion.get("kind") == "massive":
        m = float(dispersion["mass"])
        return np.sqrt(np.asarray(radius, float) ** 2 + m * m)
    raise GridError(f"unknown dispersion {dispersion!r}")


def radial_grid(r_min: float, r_max: float, resolution: int, d: int = 3,
                breakpoints=(), dispersion="massless") -> ModeGrid:
    """Radial midpoint grid with geometric cells, ``resolution`` cells per decade.

    Cell edges include every breakpoint, so indicator cutoffs at those radii
    are resolved exactly.  Weights are the shell measure S_{d-1} r^(d-1) dr.
    """
    if r_min <= 0:
        raise GridError("the inner radius must be positive")
    if r_max <= r_min:
        raise GridError("r_max must exceed r_min")
    if resolution < 1:
        raise GridError("resolution must be at least one cell per decade")
    knots = sorted({float(r_min), float(r_max), *[float(b) for b in breakpoints if r_min < b < r_max]})
    edges = [knots[0]]
    for a, b in zip(knots[:-1], knots[1:]):
        cells = max(1, int(math.ceil(resolution * math.log10(b / a) - 1e-9)))
        edges.extend(np.geomspace(a, b, cells + 1)[1:])
    edges = np.asarray(edges)
    r = 0.5 * (edges[1:] + edges[:-1])
    dr = np.diff(edges)
    sphere = 2 * math.pi ** (d / 2) / _gamma(d / 2)
    return ModeGrid(omega_of(r, dispersion), sphere * r ** (d - 1) * dr, d, r)


@dataclass(frozen=True)
class PowerLawProfile:
    """v(r) = lam * r**exponent, cut off sharply at the stage radius."""

    lam: float
    exponent: float

    def __call__(self, radius: np.ndarray) -> np.ndarray:
        return self.lam * np.asarray(radius, float) ** self.exponent


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    """Form factors v_n = profile * 1_{r<n} on a common grid, with a declared limit.

    ``limit_regularity`` is a property of the continuum family and selects the
    kernel branch for the limit; it is never inferred from finite sums.
    """

    grid: ModeGrid
    profile: PowerLawProfile
    cutoff_values: tuple
    limit_regularity: Regularity
    supercritical: bool
    name: str = "family"
    ir_cut: float = 0.0
    norm_history: tuple = field(default=())

    def generator(self, n: float) -> FormFactor:
        amp = np.where(self.grid.radius < n, self.profile(self.grid.radius), 0.0)
        return FormFactor(amp, Regularity.REGULAR, self.profile.lam)

    def stages(self) -> list[FormFactor]:
        return [self.generator(n) for n in self.cutoff_values]

    @property
    def limit(self) -> FormFactor:
        # the limit agrees with every stage on the part of the grid below its cutoff
        return FormFactor(self.profile(self.grid.radius), self.limit_regularity, self.profile.lam)

    def limit_dressed(self) -> FormFactor:
        return dressed_factor(self.limit, self.grid, self.limit_regularity)

    def dressed_stage(self, n: float) -> FormFactor:
        return dressed_factor(self.generator(n), self.grid)

    def divergence_norms(self) -> np.ndarray:
        """||omega^-1 v_n||^2 along the cutoff values."""
        return np.array([weighted_norm_sq(self.generator(n), self.grid, -1.0) for n in self.cutoff_values])

    def monotone_divergence(self) -> bool:
        norms = self.divergence_norms()
        return bool(np.all(np.diff(norms) > 0))


def _check_cuts(ir_cut, uv_cuts):
    if ir_cut is None or ir_cut <= 0:
        raise GridError("ir_cut must be positive (a zero frequency is not allowed on the grid)")
    cuts = tuple(float(c) for c in uv_cuts)
    if not cuts:
        raise GridError("at least one UV cutoff is required")
    if any(b <= a for a, b in zip(cuts[:-1], cuts[1:])):
        raise GridError("uv_cuts must be strictly increasing")
    if cuts[0] <= ir_cut:
        raise GridError("every UV cutoff must exceed ir_cut")
    return cuts


def power_family(exponent: float, lam: float, ir_cut: float, uv_cuts, resolution: int = 40,
                 d: int = 3, dispersion="massless", r_max: float | None = None,
                 name: str = "power") -> CutoffFamily:
    """Sharp-cutoff power-law family v_n(r) = lam r^exponent 1_{r<n} on a radial grid.

    The limit of g_n = -v_n/omega is Regular when its continuum norm
    4 pi lam^2 int r^(2 exponent) dr converges at large r (massless dispersion).
    The grid extends to ``r_max`` (default: the largest cutoff).
    """
    cuts = _check_cuts(ir_cut, uv_cuts)
    top = cuts[-1] if r_max is None else max(float(r_max), cuts[-1])
    grid = radial_grid(ir_cut, top, resolution, d, breakpoints=cuts, dispersion=dispersion)
    # UV growth of ||omega^-1 v||^2 over the shell measure: integrand r^(2e - 2 + d - 1)
    uv_power = 2 * exponent - 2 + (d - 1)
    regular = uv_power < -1 and lam != 0
    supercritical = uv_power >= -1 and lam != 0
    tag = Regularity.REGULAR if (regular or lam == 0) else Regularity.SINGULAR
    fam = CutoffFamily(grid, PowerLawProfile(float(lam), float(exponent)), cuts, tag, supercritical,
                       name, float(ir_cut))
    return replace(fam, norm_history=tuple(fam.divergence_norms()))


def ww_family(d: int = 3, ir_cut: float = 0.1, uv_cuts=(1, 3, 10, 30, 100), lam: float = 1.0,
              resolution: int = 40, dispersion="massless") -> CutoffFamily:
    """Weisskopf-Wigner family v_n(r) = lam 1_{r<n} r^(-1/2) in three dimensions."""
    if d != 3:
        raise GridError("the Weisskopf-Wigner family is defined in three dimensions")
    if dispersion not in (None, "massless"):
        raise GridError("the Weisskopf-Wigner family uses the massless dispersion")
    fam = power_family(-0.5, lam, ir_cut, uv_cuts, resolution, d, dispersion, name="ww")
    if lam != 0:
        fam = replace(fam, limit_regularity=Regularity.SINGULAR, supercritical=True)
    return fam


def subcritical_family(lam: float = 0.5, ir_cut: float = 0.1, uv_cuts=(1, 3, 10, 30, 100),
                       resolution: int = 40, exponent: float = -2.0,
                       r_max: float | None = None) -> CutoffFamily:
    """A family whose v, omega^-1/2 v and omega^-1 v all stay square integrable.

    The grid reaches ten times beyond the last cutoff by default, so the limit
    differs from every stage.
    """
    cuts = _check_cuts(ir_cut, uv_cuts)
    r_max = 10 * cuts[-1] if r_max is None else r_max
    fam = power_family(exponent, lam, ir_cut, cuts, resolution, 3, "massless", r_max, "subcritical")
    if fam.supercritical:
        raise GridError(f"exponent {exponent} does not give a subcritical family")
    return fam
