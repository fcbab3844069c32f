"""IMEX pseudo-spectral time integration of the chemotaxis-Navier-Stokes system.

The stiff diffusion is integrated exactly in Fourier space (integrating
factor); advection, chemotaxis, consumption and buoyancy are explicit.
Cell advection is stepped in divergence form, so the total cell mass is
conserved to rounding before positivity clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid_fields import Grid, dealias, gradient, leray_project, ScalarField, VectorField
from .state import InitialNorms, State, Trajectory

NEG_TOL = 1e-12


class CFLError(RuntimeError):
    """Advective CFL limit exceeded; carries a suggested stable dt."""

    def __init__(self, cfl: float, suggested_dt: float):
        super().__init__(
            f"CFL number {cfl:.3f} > 0.5; reduce dt to <= {suggested_dt:.3e}"
        )
        self.suggested_dt = suggested_dt


def _polyder(coeffs: Sequence[float]) -> np.ndarray:
    return np.polynomial.polynomial.polyder(np.asarray(coeffs, dtype=float))


@dataclass
class PhysParams:
    """Coupling coefficients and their norms.

    chi is a polynomial in the oxygen concentration (coefficients low to
    high); the consumption rate is tied to it by kappa(s) = theta0 * s * chi(s).
    The buoyancy force is -n grad_phi with constant grad_phi = (0, 0, -gravity)
    unless an explicit field is supplied.
    """

    theta0: float = 1.0
    chi_coeffs: tuple[float, ...] = (1.0,)
    gravity: float = 0.0
    c0_max: float = 1.0
    grad_phi_field: Optional[VectorField] = None

    def __post_init__(self):
        if self.theta0 <= 0:
            raise ValueError("theta0 must be positive")
        self.chi_coeffs = tuple(float(a) for a in self.chi_coeffs)
        self.validate_structure()

    # -- coupling functions -------------------------------------------------
    def chi_eval(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("chi argument must be nonnegative")
        return np.polynomial.polynomial.polyval(s, self.chi_coeffs)

    def kappa_eval(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("kappa argument must be nonnegative")
        return self.theta0 * s * self.chi_eval(s)

    def validate_structure(self, samples: int = 1000) -> None:
        """Sampled check of chi >= 0 and kappa convex nondecreasing on
        [0, c0_max]."""
        s = np.linspace(0.0, max(self.c0_max, 1e-12), samples)
        if np.any(self.chi_eval(s) < -1e-12):
            raise ValueError("chi(s) must be nonnegative on [0, c0_max]")
        kappa = np.array([0.0] + [self.theta0 * a for a in self.chi_coeffs])
        dk = np.polynomial.polynomial.polyval(s, _polyder(kappa))
        ddk = np.polynomial.polynomial.polyval(s, _polyder(_polyder(kappa)))
        if np.any(dk < -1e-12) or np.any(ddk < -1e-12):
            raise ValueError("kappa must be nondecreasing and convex on [0, c0_max]")

    # -- cached norms -------------------------------------------------------
    @property
    def chi_norm(self) -> float:
        s = np.linspace(0.0, max(self.c0_max, 1e-12), 1000)
        c = np.asarray(self.chi_coeffs)
        total = 0.0
        for _ in range(3):
            total += float(np.max(np.abs(np.polynomial.polynomial.polyval(s, c))))
            c = _polyder(c) if len(c) > 1 else np.zeros(1)
        return total

    @property
    def kappa_norm(self) -> float:
        s = np.linspace(0.0, max(self.c0_max, 1e-12), 1000)
        c = np.array([0.0] + [self.theta0 * a for a in self.chi_coeffs])
        total = 0.0
        for _ in range(3):
            total += float(np.max(np.abs(np.polynomial.polynomial.polyval(s, c))))
            c = _polyder(c) if len(c) > 1 else np.zeros(1)
        return total

    @property
    def gradphi_max(self) -> float:
        if self.grad_phi_field is not None:
            return float(np.max(np.sqrt(np.sum(self.grad_phi_field.as_array() ** 2, axis=0))))
        return abs(self.gravity)

    def grad_phi_arrays(self, grid: Grid) -> np.ndarray:
        if self.grad_phi_field is not None:
            return self.grad_phi_field.as_array()
        out = np.zeros((3, grid.n, grid.n, grid.n))
        out[2] = -self.gravity
        return out


def _rhs_hats(grid: Grid, n, c, u, params: PhysParams):
    """Fourier transforms of the explicit (non-diffusive) tendencies."""
    gp = params.grad_phi_arrays(grid)
    chi_c = params.chi_eval(np.maximum(c, 0.0))
    kappa_c = params.kappa_eval(np.maximum(c, 0.0))
    grad_c = gradient(ScalarField(grid, c)).as_array()

    # n: divergence-form flux of advection + chemotaxis
    flux = np.array([dealias(grid, n * u[i] + chi_c * n * grad_c[i]) for i in range(3)])
    ks = (grid.kx, grid.ky, grid.kz)
    fn_hat = -sum(1j * k * np.fft.fftn(flux[i]) for i, k in enumerate(ks))

    # c: advection + consumption
    adv_c = dealias(grid, sum(u[i] * grad_c[i] for i in range(3)))
    fc_hat = np.fft.fftn(-adv_c - dealias(grid, kappa_c * n))

    # u: advection + buoyancy
    fu_hat = []
    for j in range(3):
        grad_uj = gradient(ScalarField(grid, u[j])).as_array()
        adv = dealias(grid, sum(u[i] * grad_uj[i] for i in range(3)))
        fu_hat.append(np.fft.fftn(-adv - dealias(grid, n * gp[j])))
    return fn_hat, fc_hat, fu_hat


def _project_hats(grid: Grid, u_hats):
    ks = (grid.kx, grid.ky, grid.kz)
    div_hat = sum(1j * k * h for k, h in zip(ks, u_hats))
    inv = np.zeros_like(grid.k_sq)
    nz = grid.k_sq > 0
    inv[nz] = 1.0 / grid.k_sq[nz]
    phi = div_hat * inv
    return [h + 1j * k * phi for k, h in zip(ks, u_hats)]


def step(s: State, params: PhysParams, dt: float, order: int = 1) -> State:
    """One IMEX step; returns a new State with a ``step_log`` dict attached.

    Diffusion uses the exact integrating factor exp(-|k|^2 dt); the
    velocity is re-projected divergence-free; c is clamped to [0, c0_max]
    and n at zero, with the clamped mass logged.
    """
    grid = s.grid
    max_u = float(np.max(np.sqrt(np.sum(s.u**2, axis=0))))
    cfl = max_u * dt / grid.h
    if cfl > 0.5:
        raise CFLError(cfl, 0.5 * grid.h / max_u)

    E = np.exp(-grid.k_sq * dt)
    n_hat = np.fft.fftn(s.n)
    c_hat = np.fft.fftn(s.c)
    u_hats = [np.fft.fftn(comp) for comp in s.u]

    fn, fc, fu = _rhs_hats(grid, s.n, s.c, s.u, params)
    if order == 1:
        n_new = E * (n_hat + dt * fn)
        c_new = E * (c_hat + dt * fc)
        u_new = [E * (h + dt * f) for h, f in zip(u_hats, fu)]
    elif order == 2:
        # Heun on the integrating-factor variables
        n_pred = np.real(np.fft.ifftn(E * (n_hat + dt * fn)))
        c_pred = np.real(np.fft.ifftn(E * (c_hat + dt * fc)))
        u_pred_h = _project_hats(grid, [E * (h + dt * f) for h, f in zip(u_hats, fu)])
        u_pred = np.array([np.real(np.fft.ifftn(h)) for h in u_pred_h])
        fn2, fc2, fu2 = _rhs_hats(grid, np.maximum(n_pred, 0.0),
                                  np.clip(c_pred, 0.0, params.c0_max), u_pred, params)
        n_new = E * n_hat + 0.5 * dt * (E * fn + fn2)
        c_new = E * c_hat + 0.5 * dt * (E * fc + fc2)
        u_new = [E * h + 0.5 * dt * (E * f + f2)
                 for h, f, f2 in zip(u_hats, fu, fu2)]
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")

    u_new = _project_hats(grid, u_new)
    u_arr = np.array([np.real(np.fft.ifftn(h)) for h in u_new])
    n_arr = np.real(np.fft.ifftn(n_new))
    c_arr = np.real(np.fft.ifftn(c_new))

    vol = grid.cell_volume
    clamp_mass = float(-np.sum(np.minimum(n_arr, 0.0)) * vol)
    c_overshoot = max(0.0, float(np.max(c_arr)) - params.c0_max)
    n_arr = np.maximum(n_arr, 0.0)
    c_arr = np.clip(c_arr, 0.0, params.c0_max)

    from .pressure import solve_pressure

    new = State(grid, n_arr, c_arr, u_arr, np.zeros_like(n_arr), s.time + dt)
    new.p = solve_pressure(new, params).values
    new.step_log = {
        "clamp_mass": clamp_mass,
        "c_overshoot_preclamp": c_overshoot,
        "cfl": cfl,
    }
    return new


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class SimulationConfig:
    grid_n: int = 32
    grid_l: float = 2.0 * math.pi
    dt: float = 1e-3
    t_end: float = 0.1
    output_stride: int = 10
    theta0: float = 1.0
    chi_coeffs: tuple[float, ...] = (1.0,)
    gravity: float = 0.0
    seed: int = 0
    order: int = 1
    init: dict = field(default_factory=lambda: {"preset": "zero"})
    start_time: float = 0.0


def initial_state(cfg: SimulationConfig, params: PhysParams) -> State:
    grid = Grid(cfg.grid_n, cfg.grid_l, cfg.dt)
    shape = (grid.n,) * 3
    preset = cfg.init.get("preset", "zero")
    n = np.zeros(shape)
    c = np.zeros(shape)
    u = np.zeros((3,) + shape)

    if preset == "zero":
        pass
    elif preset == "gaussian":
        amp = float(cfg.init.get("amplitude", 1.0))
        width = float(cfg.init.get("width", grid.box_length / 8.0))
        center = [0.5 * grid.box_length] * 3
        d2 = grid.min_image_distance_sq(center)
        n = amp * np.exp(-d2 / (2.0 * width**2))
        c = np.full(shape, float(cfg.init.get("c0", 1.0)))
    elif preset == "taylor_green":
        amp = float(cfg.init.get("amplitude", 1.0))
        k = 2.0 * np.pi / grid.box_length
        x, y, _ = grid.coords()
        u[0] = amp * np.cos(k * x) * np.sin(k * y)
        u[1] = -amp * np.sin(k * x) * np.cos(k * y)
    elif preset == "random_smooth":
        rng = np.random.default_rng(cfg.seed)
        amp = float(cfg.init.get("amplitude", 0.1))
        c0 = float(cfg.init.get("c0", 1.0))
        modes = int(cfg.init.get("modes", 2))
        n_mean = float(cfg.init.get("n_mean", 1.2 * amp))
        n = n_mean + amp * _band_limited(rng, grid, modes)
        n = np.maximum(n, 0.0)
        c = np.clip(c0 * (0.75 + 0.25 * amp * _band_limited(rng, grid, modes)),
                    0.0, c0)
        raw = np.array([amp * _band_limited(rng, grid, modes) for _ in range(3)])
        proj = leray_project(VectorField.from_arrays(grid, *raw))
        u = proj.as_array()
    elif preset == "restart":
        from .snapshot import read_snapshot

        s = read_snapshot(cfg.init["path"], dt=cfg.dt)
        if s.grid.n != grid.n or s.grid.box_length != grid.box_length:
            raise ValueError("restart snapshot grid does not match config")
        return s
    else:
        raise ValueError(f"unknown init preset {preset!r}")

    st = State(grid, n, c, u, np.zeros(shape), cfg.start_time)
    from .pressure import solve_pressure

    st.p = solve_pressure(st, params).values
    return st


def _band_limited(rng, grid: Grid, modes: int) -> np.ndarray:
    """Random real field supported on |k_i| <= modes wavenumber indices."""
    out = np.zeros((grid.n,) * 3)
    x, y, z = grid.coords()
    k0 = 2.0 * np.pi / grid.box_length
    for kx in range(-modes, modes + 1):
        for ky in range(-modes, modes + 1):
            for kz in range(-modes, modes + 1):
                if kx == ky == kz == 0:
                    continue
                a, b = rng.normal(size=2) / (1.0 + kx * kx + ky * ky + kz * kz)
                phase = k0 * (kx * x + ky * y + kz * z)
                out += a * np.cos(phase) + b * np.sin(phase)
    return out / max(1.0, float(np.max(np.abs(out))))


def simulate(cfg: SimulationConfig, params: Optional[PhysParams] = None,
             out_dir=None) -> Trajectory:
    """Run the solver and collect snapshots every ``output_stride`` steps.

    When ``out_dir`` is given, snapshots are persisted in the CNS1 format
    as the run proceeds.
    """
    if params is None:
        params = PhysParams(
            theta0=cfg.theta0,
            chi_coeffs=cfg.chi_coeffs,
            gravity=cfg.gravity,
            c0_max=float(cfg.init.get("c0", 1.0)),
        )
    s = initial_state(cfg, params)
    states = [s]
    n_steps = int(round((cfg.t_end - cfg.start_time) / cfg.dt))
    mass0 = float(np.sum(s.n) * s.grid.cell_volume)
    run_log = {"clamp_mass_total": 0.0, "c_overshoot_max": 0.0, "mass_drift_max": 0.0}
    for i in range(1, n_steps + 1):
        s = step(s, params, cfg.dt, order=cfg.order)
        run_log["clamp_mass_total"] += s.step_log["clamp_mass"]
        run_log["c_overshoot_max"] = max(
            run_log["c_overshoot_max"], s.step_log["c_overshoot_preclamp"]
        )
        if mass0 > 0:
            mass = float(np.sum(s.n) * s.grid.cell_volume)
            # drift before crediting back the clamped (negative) mass
            drift = abs(mass - run_log["clamp_mass_total"] - mass0) / mass0
            run_log["mass_drift_max"] = max(run_log["mass_drift_max"], drift)
        if i % cfg.output_stride == 0 or i == n_steps:
            states.append(s)
    traj = Trajectory(states, params=params)
    traj.run_log = run_log
    if out_dir is not None:
        from .snapshot import write_trajectory

        write_trajectory(out_dir, traj)
    return traj
