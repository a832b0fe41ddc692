"""Electrostatic self-energy and related convolution integrals.

The direct (Hartree) term is computed spectrally on a zero-padded grid with
a spherically truncated Coulomb kernel: truncation radius R = the original
box diagonal removes all periodic images for densities supported inside the
box, so the only error left is discretization.  The same truncated kernel
backs the reciprocal-space moment integrals and the translation-averaged
localization identity.  The annulus convolution is an independent 1D radial
reduction used by the tiling error analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _sciint

from .field import (Density, ScalarField, SupportError, density_to_field,
                    default_grid)

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# spectral representation

@dataclass
class SpectralField:
    """Plain DFT of a zero-padded real field.

    coeffs follows the numpy transform convention scaled by the cell volume,
    so coeffs[j] approximates the continuum transform int rho e^{-ip.x} dx
    at p = 2*pi*fftfreq(padded shape, spacing) (up to the constant phase of
    the grid origin, which cancels in every |.|^2 expression used here).
    """

    spec: object
    pad: int
    coeffs: np.ndarray

    @property
    def padded_shape(self):
        return self.coeffs.shape

    def freqs(self):
        """Angular frequency axes of the padded reciprocal grid."""
        return tuple(
            _TWO_PI * np.fft.fftfreq(n, d=h)
            for n, h in zip(self.coeffs.shape, self.spec.spacing))

    def hermitian_asymmetry(self):
        """max |c(p) - conj(c(-p))| / max|c|; ~1e-16 for real input."""
        flipped = self.coeffs.copy()
        for ax in range(3):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        denom = float(np.max(np.abs(self.coeffs)))
        if denom == 0.0:
            return 0.0
        return float(np.max(np.abs(self.coeffs - np.conj(flipped)))) / denom


def spectral(field, pad=2):
    """Zero-padded plain transform of a ScalarField (pad >= 2 keeps the
    truncated-kernel convolution alias-free for in-box supports)."""
    if pad < 1 or int(pad) != pad:
        raise ValueError(f"pad must be a positive integer, got {pad}")
    spec = field.spec
    shape = tuple(pad * n for n in spec.dims)
    padded = np.zeros(shape, dtype=float)
    padded[: spec.dims[0], : spec.dims[1], : spec.dims[2]] = field.values
    coeffs = np.fft.fftn(padded) * spec.cell_volume
    return SpectralField(spec=spec, pad=pad, coeffs=coeffs)


def _truncation_radius(spec):
    # diagonal of the original (unpadded) box
    return float(np.linalg.norm(spec.box_lengths))


def _kernel_values(psq, radius):
    """(1 - cos(R|p|))/|p|^2 with the analytic value R^2/2 at p = 0."""
    out = np.empty_like(psq)
    nz = psq > 0.0
    out[nz] = (1.0 - np.cos(radius * np.sqrt(psq[nz]))) / psq[nz]
    out[~nz] = 0.5 * radius**2
    return out


def _check_support(field):
    """Boundary-layer mass must be negligible for the truncated kernel."""
    vals = np.abs(field.values)
    total = float(np.sum(vals))
    if total == 0.0:
        return
    boundary = (
        float(np.sum(vals[0, :, :])) + float(np.sum(vals[-1, :, :]))
        + float(np.sum(vals[:, 0, :])) + float(np.sum(vals[:, -1, :]))
        + float(np.sum(vals[:, :, 0])) + float(np.sum(vals[:, :, -1])))
    if boundary > 1e-6 * total:
        raise SupportError(
            f"boundary cells hold {boundary / total:.3e} of the mass; "
            "density support must stay inside the grid box")


def _as_field(rho, spec=None):
    if isinstance(rho, ScalarField):
        return rho
    if isinstance(rho, Density):
        return density_to_field(rho, spec if spec is not None else default_grid(rho))
    raise TypeError(f"expected Density or ScalarField, got {type(rho).__name__}")


def hartree(rho, spec=None):
    """Direct term D(rho) = (1/2) iint rho(x) rho(y)/|x-y| dx dy, >= 0.

    Spectral evaluation with the truncated kernel; raises SupportError when
    the density leaks into the boundary cell layer of its box.
    """
    field = _as_field(rho, spec)
    _check_support(field)
    gspec = field.spec
    n1, n2, n3 = gspec.dims
    padded = np.zeros((2 * n1, 2 * n2, 2 * n3), dtype=float)
    padded[:n1, :n2, :n3] = field.values
    radius = _truncation_radius(gspec)
    axes = [_TWO_PI * np.fft.fftfreq(2 * n, d=h)
            for n, h in zip(gspec.dims, gspec.spacing)]
    psq = (axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2
           + axes[2][None, None, :] ** 2)
    kernel = 4.0 * math.pi * _kernel_values(psq, radius)
    pot = np.fft.ifftn(np.fft.fftn(padded) * kernel).real[:n1, :n2, :n3]
    return 0.5 * gspec.cell_volume * float(np.sum(field.values * pot))


def kernel_moment(spectral_field, kvecs):
    """I(k) = int |rhohat(p)|^2 (1 - cos(R|p-k|))/|p-k|^2 dp for each row k.

    rhohat is the unitary-convention transform; 2*pi*I(0) reproduces the
    truncated-kernel Hartree value of the same field.
    """
    kvecs = np.atleast_2d(np.asarray(kvecs, dtype=float))
    if kvecs.shape[1] != 3:
        raise ValueError("kvecs must be (n, 3)")
    radius = _truncation_radius(spectral_field.spec)
    fx, fy, fz = spectral_field.freqs()
    asq = np.abs(spectral_field.coeffs) ** 2
    vol_pad = (spectral_field.spec.cell_volume
               * float(np.prod(spectral_field.padded_shape)))
    out = np.empty(len(kvecs))
    for i, k in enumerate(kvecs):
        psq = ((fx[:, None, None] - k[0]) ** 2
               + (fy[None, :, None] - k[1]) ** 2
               + (fz[None, None, :] - k[2]) ** 2)
        # (2 pi)^{-3} int |A|^2 K dp  ->  (1/V_pad) sum |A|^2 K
        out[i] = float(np.sum(asq * _kernel_values(psq, radius))) / vol_pad
    return out if out.size > 1 else float(out[0])


def _validate_mode_coeffs(f_coeffs):
    modes = {}
    for key, val in f_coeffs.items():
        m = tuple(int(c) for c in key)
        if len(m) != 3:
            raise ValueError(f"mode index {key!r} is not a 3-tuple")
        modes[m] = complex(val)
    for m, c in modes.items():
        neg = tuple(-c_ for c_ in m)
        conj = modes.get(neg, 0.0)
        scale = max(abs(c), abs(conj), 1e-30)
        if abs(c - np.conj(conj)) > 1e-12 * scale:
            raise ValueError(
                f"coefficients are not Hermitian at mode {m}: "
                f"{c} vs conj({conj})")
    return modes


def periodic_localization_identity(rho, f_coeffs, ell, spec=None, n_tau=8):
    """Translation average of D(f(.-tau) rho) against its reciprocal sum.

    f(x) = sum_m c_m exp(2i pi m.x/ell) with Hermitian coefficients
    (f real); lhs averages hartree(f(.-tau) rho) over the period cell with
    a tensor Gauss-Legendre rule (n_tau >= 8 nodes per axis), rhs is
    2 pi sum_m |c_m|^2 I(2 pi m/ell) with the same truncated kernel.
    Returns (lhs, rhs).
    """
    if n_tau < 8:
        raise ValueError(f"need at least 8 Gauss nodes per axis, got {n_tau}")
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    modes = _validate_mode_coeffs(f_coeffs)
    field = _as_field(rho, spec)
    _check_support(field)

    nodes, weights = np.polynomial.legendre.leggauss(n_tau)
    tau_ax = 0.5 * ell * (nodes + 1.0)
    w_ax = 0.5 * weights  # averages to 1 over [0, ell]

    xg, yg, zg = field.spec.meshgrid()
    mode_list = [(np.array(m, dtype=float), c) for m, c in modes.items()
                 if c != 0.0]

    lhs = 0.0
    for i1, t1 in enumerate(tau_ax):
        for i2, t2 in enumerate(tau_ax):
            for i3, t3 in enumerate(tau_ax):
                f_vals = np.zeros(field.spec.dims, dtype=complex)
                for m, c in mode_list:
                    phase = (_TWO_PI / ell) * (
                        m[0] * (xg - t1) + m[1] * (yg - t2) + m[2] * (zg - t3))
                    f_vals += c * np.exp(1j * phase)
                shifted = ScalarField(field.spec, f_vals.real * field.values)
                lhs += (w_ax[i1] * w_ax[i2] * w_ax[i3]) * hartree(shifted)

    sf = spectral(field)
    kvecs = np.array([(_TWO_PI / ell) * m for m, _ in mode_list])
    moments = np.atleast_1d(kernel_moment(sf, kvecs))
    rhs = _TWO_PI * float(
        sum(abs(c) ** 2 * mom for (_, c), mom in zip(mode_list, moments)))
    return lhs, rhs


# ---------------------------------------------------------------------------
# annulus convolution

def _annulus_bounds(alpha):
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2], got {alpha}")
    return 1.0 / (1.0 + alpha), 1.0 / (1.0 - alpha)


def _radial_integrand(s):
    return s * np.log((s + 1.0) / np.abs(s - 1.0))


def _segment_integral(p, q):
    """int_p^q s log((s+1)/|s-1|) ds with 1 not interior to (p, q).

    Near the logarithmic endpoint the substitution u = -log|s-1| makes the
    integrand smooth and exponentially decaying; away from it the direct
    form is already smooth.
    """
    if q <= p:
        return 0.0
    if min(abs(p - 1.0), abs(q - 1.0)) > 0.25:
        val, _ = _sciint.quad(_radial_integrand, p, q,
                              epsabs=1e-13, epsrel=1e-12)
        return val
    if q <= 1.0:
        u_lo = -math.log(1.0 - p)
        u_hi = math.inf if q == 1.0 else -math.log(1.0 - q)

        def g(u):
            e = math.exp(-u)
            s = 1.0 - e
            return s * (math.log(s + 1.0) + u) * e
    elif p >= 1.0:
        u_lo = -math.log(q - 1.0)
        u_hi = math.inf if p == 1.0 else -math.log(p - 1.0)

        def g(u):
            e = math.exp(-u)
            s = 1.0 + e
            return s * (math.log(s + 1.0) + u) * e
    else:
        raise ValueError("segment straddles the singular radius")
    val, _ = _sciint.quad(g, u_lo, u_hi, epsabs=1e-13, epsrel=1e-12)
    return val


def annulus_conv(r, alpha):
    """Convolution of the annulus indicator {1/(1+a) < |y| < 1/(1-a)} with
    |.|^{-2}, evaluated at radius r.

    Radial reduction: 2 pi r * int s log((s+1)/|s-1|) ds over
    [1/(r(1+a)), 1/(r(1-a))], split at the singular shell s = 1.
    """
    lo_r, hi_r = _annulus_bounds(alpha)
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    if r == 0.0:
        return 8.0 * math.pi * alpha / (1.0 - alpha**2)
    p, q = lo_r / r, hi_r / r
    if p < 1.0 < q:
        total = _segment_integral(p, 1.0) + _segment_integral(1.0, q)
    else:
        total = _segment_integral(p, q)
    return _TWO_PI * r * total


def annulus_conv_exact(r, alpha):
    """Closed antiderivative route: G(s) = ((s^2-1)/2) log((s+1)/|s-1|) + s
    (continuous across s = 1).  Kept as an independent cross-check of the
    quadrature path."""
    lo_r, hi_r = _annulus_bounds(alpha)
    if r == 0.0:
        return 8.0 * math.pi * alpha / (1.0 - alpha**2)

    def anti(s):
        if s == 1.0:
            return 1.0
        return 0.5 * (s * s - 1.0) * math.log((s + 1.0) / abs(s - 1.0)) + s

    return _TWO_PI * r * (anti(hi_r / r) - anti(lo_r / r))


def annulus_sup(alpha, r_grid):
    """Max of annulus_conv over the grid and its ratio to alpha*log(1/alpha).

    The grid must cover [0, 8] with spacing <= 0.01.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0:
        raise ValueError("r_grid is empty")
    if r_grid.min() > 0.0 or r_grid.max() < 8.0 or np.max(np.diff(np.sort(r_grid))) > 0.01 + 1e-12:
        raise ValueError("r_grid must cover [0, 8] with spacing <= 0.01")
    vals = np.array([annulus_conv_exact(r, alpha) for r in np.sort(r_grid)])
    sup = float(np.max(vals))
    return sup, sup / (alpha * math.log(1.0 / alpha))
