"""Periodic-box fields with spectral calculus and parabolic-cylinder quadrature.

All fields live on a uniform N^3 grid over the torus [0, L)^3 with
cell-centered collocation points.  Derivatives are Fourier multipliers,
so they are exact for band-limited data.  Space-time integrals over
parabolic cylinders use a binary ball mask (minimum-image distance)
in space and the trapezoid rule on the piecewise-linear-in-time
interpolant of the spatial integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteFieldError(ValueError):
    """A field contains NaN or Inf."""


class UnknownIntegrandError(ValueError):
    """Integrand name is not in the fixed catalog."""


class CylinderRangeError(ValueError):
    """Cylinder does not fit in the box or the recorded time span."""


class RescaleError(ValueError):
    """Unsupported rescaling factor."""


def _check_finite(values: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(values)):
        bad = int(np.size(values) - np.count_nonzero(np.isfinite(values)))
        raise NonFiniteFieldError(f"{what} has {bad} non-finite entries")


class Grid:
    """Uniform periodic grid on [0, L)^3 with N cells per axis.

    Holds the Fourier wavenumbers, the squared-wavenumber symbol and the
    2/3-rule dealiasing mask used by every spectral operation.
    """

    def __init__(self, n: int, box_length: float, dt: float = 1.0):
        if n < 8 or n % 2 != 0:
            raise ValueError(f"need even N >= 8, got {n}")
        if box_length <= 0 or dt <= 0:
            raise ValueError("box_length and dt must be positive")
        self.n = int(n)
        self.box_length = float(box_length)
        self.dt = float(dt)
        self.h = self.box_length / self.n

        k1 = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        self.kx = k1.reshape(-1, 1, 1)
        self.ky = k1.reshape(1, -1, 1)
        self.kz = k1.reshape(1, 1, -1)
        self.k_sq = self.kx**2 + self.ky**2 + self.kz**2
        k_max = np.max(np.abs(k1))
        self.dealias_mask = (
            (np.abs(self.kx) <= (2.0 / 3.0) * k_max)
            & (np.abs(self.ky) <= (2.0 / 3.0) * k_max)
            & (np.abs(self.kz) <= (2.0 / 3.0) * k_max)
        )
        x1 = self.h * np.arange(self.n)
        self.x = x1.reshape(-1, 1, 1)
        self.y = x1.reshape(1, -1, 1)
        self.z = x1.reshape(1, 1, -1)
        self.cell_volume = self.h**3

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.box_length == other.box_length
            and self.dt == other.dt
        )

    def __hash__(self):
        return hash((self.n, self.box_length, self.dt))

    def __repr__(self):
        return f"Grid(n={self.n}, box_length={self.box_length}, dt={self.dt})"

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable cell-center coordinate arrays."""
        return self.x, self.y, self.z

    def min_image_distance_sq(self, x0: Sequence[float]) -> np.ndarray:
        """Squared periodic distance from every cell center to x0."""
        L = self.box_length
        out = np.zeros((self.n, self.n, self.n))
        for c, x0i in zip(self.coords(), x0):
            d = np.mod(c - x0i + 0.5 * L, L) - 0.5 * L
            out = out + d * d
        return out


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,) * 3:
            raise ValueError(f"bad field shape {self.values.shape}")
        _check_finite(self.values, "scalar field")


@dataclass
class VectorField:
    grid: Grid
    components: tuple[ScalarField, ScalarField, ScalarField]

    def __post_init__(self):
        if any(c.grid != self.grid for c in self.components):
            raise ValueError("components must share one grid")

    @classmethod
    def from_arrays(cls, grid: Grid, ux, uy, uz) -> "VectorField":
        return cls(grid, tuple(ScalarField(grid, a) for a in (ux, uy, uz)))

    def as_array(self) -> np.ndarray:
        """Stacked (3, N, N, N) view of the components."""
        return np.stack([c.values for c in self.components])


@dataclass(frozen=True)
class ParabolicCylinder:
    """Q_r(z0) = B_r(x0) x (t0 - r^2, t0), or the time-shifted variant
    Q* = B_r x (t0 - (7/8) r^2, t0 + (1/8) r^2)."""

    center_x: tuple[float, float, float]
    center_t: float
    radius: float
    shifted: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center_x", tuple(float(v) for v in self.center_x))

    def time_interval(self) -> tuple[float, float]:
        r2 = self.radius**2
        if self.shifted:
            return (self.center_t - 0.875 * r2, self.center_t + 0.125 * r2)
        return (self.center_t - r2, self.center_t)

    def check_fits(self, grid: Grid) -> None:
        if 2.0 * self.radius > 0.5 * grid.box_length:
            raise CylinderRangeError(
                f"cylinder radius {self.radius} too large for box {grid.box_length}"
            )


# ---------------------------------------------------------------------------
# spectral calculus
# ---------------------------------------------------------------------------

def _spectral_derivative(grid: Grid, values: np.ndarray, axis: int) -> np.ndarray:
    k = (grid.kx, grid.ky, grid.kz)[axis]
    return np.real(np.fft.ifftn(1j * k * np.fft.fftn(values)))


def gradient(f: ScalarField) -> VectorField:
    """Spectral gradient; exact for band-limited fields."""
    _check_finite(f.values, "gradient input")
    fh = np.fft.fftn(f.values)
    g = f.grid
    comps = [np.real(np.fft.ifftn(1j * k * fh)) for k in (g.kx, g.ky, g.kz)]
    return VectorField.from_arrays(g, *comps)


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    out = np.zeros((g.n,) * 3)
    for axis, comp in enumerate(v.components):
        _check_finite(comp.values, "divergence input")
        out = out + _spectral_derivative(g, comp.values, axis)
    return ScalarField(g, out)


def laplacian(f: ScalarField) -> ScalarField:
    _check_finite(f.values, "laplacian input")
    g = f.grid
    return ScalarField(g, np.real(np.fft.ifftn(-g.k_sq * np.fft.fftn(f.values))))


def hessian_components(f: ScalarField) -> dict[tuple[int, int], np.ndarray]:
    """All nine second derivatives d_i d_j f (symmetric; computed once per pair)."""
    g = f.grid
    fh = np.fft.fftn(f.values)
    ks = (g.kx, g.ky, g.kz)
    out = {}
    for i in range(3):
        for j in range(i, 3):
            arr = np.real(np.fft.ifftn(-ks[i] * ks[j] * fh))
            out[(i, j)] = arr
            out[(j, i)] = arr
    return out


def leray_project(v: VectorField) -> VectorField:
    """Remove the gradient part: P u = u - grad(Delta^-1 div u)."""
    g = v.grid
    hats = []
    for comp in v.components:
        _check_finite(comp.values, "projection input")
        hats.append(np.fft.fftn(comp.values))
    ks = (g.kx, g.ky, g.kz)
    div_hat = sum(1j * k * h for k, h in zip(ks, hats))
    inv_ksq = np.zeros_like(g.k_sq)
    nonzero = g.k_sq > 0
    inv_ksq[nonzero] = 1.0 / g.k_sq[nonzero]
    phi_hat = div_hat * inv_ksq
    # subtract the gradient part: u_j - k_j (k . u)/|k|^2 with k.u = -i div
    comps = [np.real(np.fft.ifftn(h + 1j * k * phi_hat)) for k, h in zip(ks, hats)]
    return VectorField.from_arrays(g, *comps)


def dealias(grid: Grid, values: np.ndarray) -> np.ndarray:
    """2/3-rule truncation of a physical-space array."""
    return np.real(np.fft.ifftn(grid.dealias_mask * np.fft.fftn(values)))


def spectral_upsample(grid: Grid, values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation of a field onto a factor-times-finer grid."""
    if factor == 1:
        return np.array(values)
    n, m = grid.n, grid.n * factor
    fh = np.fft.fftn(values)
    out = np.zeros((m, m, m), dtype=complex)
    idx = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    out[np.ix_(idx, idx, idx)] = fh
    return np.real(np.fft.ifftn(out)) * factor**3


# ---------------------------------------------------------------------------
# cylinder quadrature
# ---------------------------------------------------------------------------

def ball_mask(grid: Grid, x0: Sequence[float], radius: float) -> np.ndarray:
    """Binary in/out mask of B_r(x0) under the minimum-image convention."""
    if 2.0 * radius > 0.5 * grid.box_length:
        raise CylinderRangeError(
            f"ball radius {radius} exceeds box_length/4 = {grid.box_length / 4}"
        )
    return grid.min_image_distance_sq(x0) < radius**2


#: Fixed integrand catalog: name -> (state, power) -> pointwise array.
#: Powers are applied by the caller; bases are the |.| quantities of the
#: cylinder functionals.
INTEGRAND_NAMES = (
    "abs_u",
    "grad_u_sq",
    "abs_grad_sqrt_c",
    "hess_sqrt_c_sq",
    "sqrt_n",
    "grad_sqrt_n_sq",
    "abs_p",
    "abs_n_ln_n",
    "entropy_quartic",
)


def _integrand_array(state, name: str, power: float) -> np.ndarray:
    if name not in INTEGRAND_NAMES:
        raise UnknownIntegrandError(f"unknown integrand {name!r}")
    base = state.derived(name)
    if power == 1.0:
        return base
    return base**power


def _interval_segments(
    times: np.ndarray, t_lo: float, t_hi: float
) -> list[tuple[int, float, float]]:
    """Segments (i, w_i, w_{i+1}) so that the integral of the linear
    interpolant of g over [t_lo, t_hi] is sum(w_i g_i + w_{i+1} g_{i+1})."""
    eps = 1e-12 * max(1.0, abs(times[-1] - times[0]))
    if t_lo < times[0] - eps or t_hi > times[-1] + eps:
        raise CylinderRangeError(
            f"time window ({t_lo}, {t_hi}) outside recorded span "
            f"({times[0]}, {times[-1]})"
        )
    out = []
    for i in range(len(times) - 1):
        a = max(times[i], t_lo)
        b = min(times[i + 1], t_hi)
        if b <= a:
            continue
        delta = times[i + 1] - times[i]
        la = (a - times[i]) / delta
        lb = (b - times[i]) / delta
        mid = 0.5 * (la + lb)
        out.append((i, (b - a) * (1.0 - mid), (b - a) * mid))
    if not out:
        raise CylinderRangeError("no snapshots overlap the cylinder time window")
    return out


def cylinder_time_integral(traj, Q: ParabolicCylinder, spatial: Callable) -> float:
    """Time integral over Q's window of ``spatial(state, mask)``.

    ``spatial`` maps a snapshot plus the ball mask to one real number;
    the time rule integrates its piecewise-linear interpolant.
    """
    grid = traj.grid
    Q.check_fits(grid)
    mask = ball_mask(grid, Q.center_x, Q.radius)
    times = traj.times
    t_lo, t_hi = Q.time_interval()
    segments = _interval_segments(times, t_lo, t_hi)
    needed = sorted({i for seg in segments for i in (seg[0], seg[0] + 1)})
    g = {i: float(spatial(traj.states[i], mask)) for i in needed}
    return sum(w0 * g[i] + w1 * g[i + 1] for i, w0, w1 in segments)


def integrate_cylinder(traj, field_expr: str, Q: ParabolicCylinder, p: float = 1.0) -> float:
    """Space-time integral of a catalog integrand to the power p over Q."""
    vol = traj.grid.cell_volume

    def spatial(state, mask):
        return np.sum(_integrand_array(state, field_expr, p)[mask]) * vol

    return cylinder_time_integral(traj, Q, spatial)


def sup_over_time(traj, field_expr: str, Q: ParabolicCylinder, p: float = 1.0) -> float:
    """Max over recorded snapshots in Q's window of the ball integral."""
    grid = traj.grid
    Q.check_fits(grid)
    mask = ball_mask(grid, Q.center_x, Q.radius)
    t_lo, t_hi = Q.time_interval()
    times = traj.times
    eps = 1e-12 * max(1.0, abs(times[-1] - times[0]))
    idx = [i for i, t in enumerate(times) if t_lo - eps <= t <= t_hi + eps]
    if not idx:
        raise CylinderRangeError("no snapshots in the cylinder time window")
    vol = grid.cell_volume
    return max(
        float(np.sum(_integrand_array(traj.states[i], field_expr, p)[mask]) * vol)
        for i in idx
    )
