"""Densities on uniform grids and the functionals the error bounds consume.

Conventions used throughout the package:

* grids are uniform, axis-aligned, node-centered; a field value lives at
  x = origin + (ix*hx, iy*hy, iz*hz) and integrals are plain cell sums
  (cell volume times a compensated total over node values);
* gradients are second-order central differences in the interior and
  one-sided at the boundary (what ``np.gradient`` does);
* the square-root and power gradients are set to zero at nodes where the
  density vanishes, so vacuum regions contribute nothing to kin / thg;
* ``theta`` and ``p`` are the exponents of the theta-gradient seminorm
  thg = integral |grad(rho^theta)|^p.

The analytic families (gaussian, compact-bump) carry closed-form or
radial-quadrature functionals so grid error never enters when an exact
reference is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate as _sciint


class GridFormatError(ValueError):
    """Raised when a grid file does not conform to the LDA-GRID v1 layout."""


class SupportError(ValueError):
    """Raised when a density carries non-negligible mass at the box boundary."""


class PreconditionError(ValueError):
    """Raised when an operation's mathematical precondition fails."""


_CHUNK = 4096


def _compensated_total(values):
    """Deterministic sum: pairwise inside fixed 4096 chunks, Neumaier across.

    Independent of numpy's internal blocking, so reruns are bit-identical.
    """
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    s = 0.0
    c = 0.0
    for start in range(0, flat.size, _CHUNK):
        x = float(np.sum(flat[start:start + _CHUNK]))
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(n) != n or n < 2 for n in self.dims):
            raise ValueError(f"dims must be three integers >= 2, got {self.dims}")
        if len(self.spacing) != 3 or any(not (h > 0) for h in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def cell_volume(self):
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def n_total(self):
        nx, ny, nz = self.dims
        return nx * ny * nz

    def axes(self):
        return tuple(
            self.origin[a] + self.spacing[a] * np.arange(self.dims[a])
            for a in range(3)
        )

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    @property
    def box_lengths(self):
        return tuple(self.spacing[a] * (self.dims[a] - 1) for a in range(3))


@dataclass
class ScalarField:
    """Values sampled on a GridSpec; shape (nx, ny, nz), axis order x, y, z."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.dims:
            raise ValueError(
                f"values shape {self.values.shape} != grid dims {self.spec.dims}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


def integrate(field):
    """Integral of a ScalarField over its box (cell volume times node sum)."""
    return field.spec.cell_volume * _compensated_total(field.values)


def gradient(field):
    """Tuple of three ScalarFields, central differences / one-sided edges."""
    gx, gy, gz = np.gradient(field.values, *field.spec.spacing)
    return tuple(ScalarField(field.spec, g) for g in (gx, gy, gz))


# ---------------------------------------------------------------------------
# density families


class Density:
    """Tagged density: an analytic family or a sampled grid field.

    Use the constructors; the tag decides which functional route is taken.
    """

    def __init__(self, family, **params):
        self.family = family
        self.params = params

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"Density.{self.family}({inner})"

    @classmethod
    def gaussian(cls, sigma, mass=1.0):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if mass < 0:
            raise ValueError(f"mass must be nonnegative, got {mass}")
        return cls("gaussian", sigma=float(sigma), mass=float(mass))

    @classmethod
    def compact_bump(cls, radius, mass=1.0):
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        if mass < 0:
            raise ValueError(f"mass must be nonnegative, got {mass}")
        return cls("compact_bump", radius=float(radius), mass=float(mass))

    @classmethod
    def smeared_tetra(cls, rho0, ell, delta):
        if rho0 < 0:
            raise ValueError(f"rho0 must be nonnegative, got {rho0}")
        if not (0 < delta < ell / 2):
            raise ValueError(f"need 0 < delta < ell/2, got delta={delta} ell={ell}")
        return cls("smeared_tetra", rho0=float(rho0), ell=float(ell),
                   delta=float(delta))

    @classmethod
    def grid(cls, field):
        if np.any(field.values < 0):
            raise ValueError("grid density has negative values")
        return cls("grid", field=field)

    def scaled(self, factor):
        """Pointwise multiple factor*rho (factor >= 0); family is preserved."""
        if factor < 0:
            raise ValueError("factor must be nonnegative")
        if self.family == "gaussian":
            return Density.gaussian(self.params["sigma"],
                                    factor * self.params["mass"])
        if self.family == "compact_bump":
            return Density.compact_bump(self.params["radius"],
                                        factor * self.params["mass"])
        if self.family == "smeared_tetra":
            p = dict(self.params)
            p["rho0"] *= factor
            return Density("smeared_tetra", **p)
        f = self.params["field"]
        return Density.grid(ScalarField(f.spec, factor * f.values))


@dataclass
class FunctionalSet:
    """The scalar functionals the certificates are built from.

    mass = int rho            l2  = int rho^2
    l43  = int rho^{4/3}      l53 = int rho^{5/3}
    kin  = int |grad sqrt(rho)|^2
    tv   = int |grad rho|
    thg  = int |grad rho^theta|^p
    hartree is filled in by the coulomb module when needed.
    """

    mass: float
    l2: float
    l43: float
    l53: float
    kin: float
    tv: float
    thg: float
    theta: float
    p: float
    hartree: float | None = None

    def with_hartree(self, value):
        return replace(self, hartree=value)


def _gaussian_power_integral(sigma, mass, s):
    # int rho^s for rho = mass * (2 pi sigma^2)^{-3/2} exp(-|x|^2/(2 sigma^2))
    if mass == 0.0:
        return 0.0
    return mass**s * (2.0 * math.pi * sigma**2) ** (1.5 * (1.0 - s)) * s**-1.5


def _gaussian_functionals(sigma, mass, theta, p):
    tp = theta * p
    if mass == 0.0:
        thg = 0.0
    else:
        amp = mass * (2.0 * math.pi * sigma**2) ** -1.5
        thg = (
            (theta / sigma**2) ** p
            * amp**tp
            * 2.0
            * math.pi
            * math.gamma((p + 3.0) / 2.0)
            * (2.0 * sigma**2 / tp) ** ((p + 3.0) / 2.0)
        )
    return FunctionalSet(
        mass=mass,
        l2=_gaussian_power_integral(sigma, mass, 2.0),
        l43=_gaussian_power_integral(sigma, mass, 4.0 / 3.0),
        l53=_gaussian_power_integral(sigma, mass, 5.0 / 3.0),
        kin=0.75 * mass / sigma**2,
        tv=2.0 * mass / sigma * math.sqrt(2.0 / math.pi),
        thg=thg,
        theta=theta,
        p=p,
    )


def gaussian_hartree(sigma, mass):
    """Closed-form self-interaction of the gaussian: mass^2/(2 sqrt(pi) sigma)."""
    return mass**2 / (2.0 * math.sqrt(math.pi) * sigma)


@lru_cache(maxsize=64)
def _bump_radial_table(radius, s_keys):
    # cached radial quadratures for the compact bump, keyed by exponent tuple
    out = {}
    for key, kind, a, b in s_keys:
        if kind == "pow":
            f = lambda u: math.exp(-a / (1.0 - u * u)) * u * u
        elif kind == "grad":
            # |d/dr rho^a|^b with rho = exp(-1/(1-u^2)) up to amplitude
            f = lambda u: (
                math.exp(-a * b / (1.0 - u * u))
                * (a * 2.0 * u / (1.0 - u * u) ** 2) ** b
                * u * u
            )
        val, _ = _sciint.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
        out[key] = 4.0 * math.pi * val
    return out


def _bump_functionals(radius, mass, theta, p):
    if mass == 0.0:
        return FunctionalSet(0, 0, 0, 0, 0, 0, 0, theta=theta, p=p)
    keys = (
        ("norm", "pow", 1.0, 0),
        ("l2", "pow", 2.0, 0),
        ("l43", "pow", 4.0 / 3.0, 0),
        ("l53", "pow", 5.0 / 3.0, 0),
        ("kin", "grad", 0.5, 2.0),
        ("tv", "grad", 1.0, 1.0),
        ("thg", "grad", theta, p),
    )
    tab = _bump_radial_table(radius, keys)
    # rho(r) = c * exp(-1/(1-(r/R)^2)), c fixed by the mass
    c = mass / (tab["norm"] * radius**3)
    return FunctionalSet(
        mass=mass,
        l2=c**2 * radius**3 * tab["l2"],
        l43=c ** (4.0 / 3.0) * radius**3 * tab["l43"],
        l53=c ** (5.0 / 3.0) * radius**3 * tab["l53"],
        # gradient quadratures carry one 1/R per derivative
        kin=c * radius * tab["kin"],
        tv=c * radius**2 * tab["tv"],
        thg=c ** (theta * p) * radius ** (3.0 - p) * tab["thg"],
        theta=theta,
        p=p,
    )


def _grid_functionals(field, theta, p):
    rho = field.values
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    vol = field.spec.cell_volume
    positive = rho > 0

    def power_grad_integral(expo, q):
        # int |grad rho^expo|^q with the vacuum-node override
        g = np.gradient(rho**expo, *field.spec.spacing)
        mag2 = g[0] ** 2 + g[1] ** 2 + g[2] ** 2
        mag2[~positive] = 0.0
        return vol * _compensated_total(mag2 ** (q / 2.0))

    gx, gy, gz = np.gradient(rho, *field.spec.spacing)
    tv = vol * _compensated_total(np.sqrt(gx**2 + gy**2 + gz**2))
    return FunctionalSet(
        mass=vol * _compensated_total(rho),
        l2=vol * _compensated_total(rho**2),
        l43=vol * _compensated_total(rho ** (4.0 / 3.0)),
        l53=vol * _compensated_total(rho ** (5.0 / 3.0)),
        kin=power_grad_integral(0.5, 2.0),
        tv=tv,
        thg=power_grad_integral(theta, p),
        theta=theta,
        p=p,
    )


def default_grid(rho, n=None):
    """The grid a density family is sampled on when none is given."""
    if rho.family == "gaussian":
        sigma = rho.params["sigma"]
        n = n or 96
        half = 8.0 * sigma
        h = 2.0 * half / (n - 1)
        return GridSpec((n, n, n), (h, h, h), (-half, -half, -half))
    if rho.family == "compact_bump":
        radius = rho.params["radius"]
        n = n or 96
        half = 1.05 * radius
        h = 2.0 * half / (n - 1)
        return GridSpec((n, n, n), (h, h, h), (-half, -half, -half))
    if rho.family == "smeared_tetra":
        ell, delta = rho.params["ell"], rho.params["delta"]
        # resolve the mollifier shell (width delta/10) with ~4 cells, capped
        h_target = delta / 40.0
        half = 0.55 * ell + delta
        n = n or min(192, max(48, int(round(2.0 * half / h_target)) + 1))
        h = 2.0 * half / (n - 1)
        return GridSpec((n, n, n), (h, h, h), (-half, -half, -half))
    if rho.family == "grid":
        return rho.params["field"].spec
    raise ValueError(f"unknown family {rho.family!r}")


def density_to_field(rho, spec=None):
    """Sample a density on a grid (its default one unless spec is given)."""
    if rho.family == "grid":
        field = rho.params["field"]
        if spec is not None and spec != field.spec:
            raise ValueError("grid densities carry their own GridSpec")
        return field
    spec = spec or default_grid(rho)
    X, Y, Z = spec.meshgrid()
    if rho.family == "gaussian":
        sigma, mass = rho.params["sigma"], rho.params["mass"]
        amp = mass * (2.0 * math.pi * sigma**2) ** -1.5
        vals = amp * np.exp(-(X**2 + Y**2 + Z**2) / (2.0 * sigma**2))
    elif rho.family == "compact_bump":
        radius, mass = rho.params["radius"], rho.params["mass"]
        keys = (("norm", "pow", 1.0, 0),)
        tab = _bump_radial_table(radius, keys)
        c = mass / (tab["norm"] * radius**3)
        r2 = (X**2 + Y**2 + Z**2) / radius**2
        vals = np.zeros_like(X)
        inside = r2 < 1.0
        vals[inside] = c * np.exp(-1.0 / (1.0 - r2[inside]))
    elif rho.family == "smeared_tetra":
        from . import tiling  # lazy: tiling needs this module's grid types

        cfg = tiling.TilingConfig(rho.params["ell"], rho.params["delta"])
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        vals = rho.params["rho0"] * tiling.xi_values(cfg, 1, pts).reshape(X.shape)
        vals = np.clip(vals, 0.0, None)
    else:
        raise ValueError(f"unknown family {rho.family!r}")
    return ScalarField(spec, vals)


def functionals(rho, theta=0.5, p=4.0):
    """FunctionalSet of a density; analytic families use exact routes."""
    if not (0 < theta < 1):
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if rho.family == "gaussian":
        return _gaussian_functionals(rho.params["sigma"], rho.params["mass"],
                                     theta, p)
    if rho.family == "compact_bump":
        return _bump_functionals(rho.params["radius"], rho.params["mass"],
                                 theta, p)
    if rho.family == "smeared_tetra":
        return _grid_functionals(density_to_field(rho), theta, p)
    if rho.family == "grid":
        return _grid_functionals(rho.params["field"], theta, p)
    raise ValueError(f"unknown family {rho.family!r}")


_SCALE_POWERS = {
    "mass": 1.0, "l2": 1.0, "l43": 1.0, "l53": 1.0,
    "kin": 1.0 / 3.0, "tv": 2.0 / 3.0, "hartree": 5.0 / 3.0,
}


def scale_functionals(F, N):
    """Functionals of the dilated density rho(x / N^{1/3}).

    Every Lebesgue power integral picks up N, kin picks up N^{1/3},
    tv N^{2/3}, thg N^{1-p/3}, hartree N^{5/3}.
    """
    if not N > 0:
        raise ValueError(f"N must be positive, got {N}")
    kw = {name: getattr(F, name) * N**pw for name, pw in _SCALE_POWERS.items()
          if name != "hartree"}
    kw["thg"] = F.thg * N ** (1.0 - F.p / 3.0)
    kw["theta"] = F.theta
    kw["p"] = F.p
    kw["hartree"] = None if F.hartree is None else F.hartree * N ** (5.0 / 3.0)
    return FunctionalSet(**kw)


# ---------------------------------------------------------------------------
# tetrahedron-domain Sobolev quotient


def _barycentric_inside(vertices, points, tol=1e-12):
    v = np.asarray(vertices, dtype=float)
    T = np.column_stack([v[1] - v[0], v[2] - v[0], v[3] - v[0]])
    lam = np.linalg.solve(T, (points - v[0]).T).T
    lam0 = 1.0 - lam.sum(axis=1)
    return (lam.min(axis=1) >= -tol) & (lam0 >= -tol)


def sobolev_ratio(u, p, ell, vertices=None):
    """sup_T |u|^p / (ell^{p-3} int_T |grad u|^p) on a tetrahedron T.

    The quotient is the one the uniform-bound step controls; it is only
    meaningful when u vanishes somewhere on the closed tile, so an
    everywhere-nonzero u raises PreconditionError.  u identically zero
    returns 0 by convention.
    """
    if not p > 3:
        raise ValueError(f"p must exceed 3, got {p}")
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    if vertices is None:
        from . import tiling

        vertices = ell * tiling.reference_tetra()
    spec = u.spec
    X, Y, Z = spec.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    mask = _barycentric_inside(vertices, pts).reshape(spec.dims)
    if not mask.any():
        raise PreconditionError("grid does not cover the tetrahedron")
    vals = np.abs(u.values[mask])
    umax = float(vals.max())
    if umax == 0.0:
        return 0.0
    if vals.min() > 1e-9 * umax:
        raise PreconditionError(
            "u must vanish somewhere on the tile (min |u| is "
            f"{vals.min():.3e} vs max {umax:.3e})"
        )
    gx, gy, gz = np.gradient(u.values, *spec.spacing)
    mag = (gx**2 + gy**2 + gz**2) ** (p / 2.0)
    mag[~mask] = 0.0
    denom = ell ** (p - 3.0) * spec.cell_volume * _compensated_total(mag)
    if denom == 0.0:
        raise PreconditionError("gradient vanishes on the tile")
    return umax**p / denom


# ---------------------------------------------------------------------------
# LDA-GRID v1 file format

_MAGIC = ("LDA-GRID", "v1")


def write_grid(field, path):
    """Write the LDA-GRID v1 text format (%.17g, x-fastest, round-trip exact)."""
    spec = field.spec
    header = "LDA-GRID v1 %d %d %d %.17g %.17g %.17g %.17g %.17g %.17g" % (
        *spec.dims, *spec.spacing, *spec.origin)
    flat = field.values.ravel(order="F")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for start in range(0, flat.size, 8):
            fh.write(" ".join("%.17g" % v for v in flat[start:start + 8]))
            fh.write("\n")


def read_grid(path):
    with open(path) as fh:
        content = fh.read()
    tokens = content.split()
    if len(tokens) < 11 or tokens[0] != _MAGIC[0] or tokens[1] != _MAGIC[1]:
        raise GridFormatError("missing LDA-GRID v1 header")
    try:
        nx, ny, nz = (int(t) for t in tokens[2:5])
        hx, hy, hz, ox, oy, oz = (float(t) for t in tokens[5:11])
    except ValueError as exc:
        raise GridFormatError(f"bad header field: {exc}") from None
    spec = GridSpec((nx, ny, nz), (hx, hy, hz), (ox, oy, oz))
    data = tokens[11:]
    if len(data) != spec.n_total:
        raise GridFormatError(
            f"expected {spec.n_total} values, found {len(data)}")
    try:
        flat = np.array(data, dtype=np.float64)
    except ValueError as exc:
        raise GridFormatError(f"bad value token: {exc}") from None
    if not np.all(np.isfinite(flat)):
        raise GridFormatError("non-finite value in grid data")
    return ScalarField(spec, flat.reshape(spec.dims, order="F"))
