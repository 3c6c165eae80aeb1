"""Coupled time loop (pressure -> Darcy velocity -> implicit transport per
step), the four built-in test configurations, error measurement against the
analytical radial solution, and convergence suites."""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import assembly, linalg
from .assembly import DirichletBC, discretize_sources
from .gd import TimeGrid, scheme_a, scheme_b
from .mesh import build_cartesian, build_dual, build_structured_triangulation, \
    load_mesh
from .physics import AnalyticalRadialSolution, DispersionParams, \
    MobilityTensor, ViscosityModel, five_spot_sources, radial_test_sources

TESTS = ("analytic1", "analytic2", "lit1", "lit2")
SCHEMES = ("a", "b")

# per-test physics defaults: side length, final time, mobility ratio,
# molecular diffusion, dispersion lengths, porosity, permeability, well rate
_TEST_DEFAULTS = {
    "analytic1": dict(side=1.0, t_final=0.4, m_ratio=1.0, dm=0.05,
                      dl=0.0, dt_disp=0.0, phi=1.0, perm=1.0, rate=None),
    "analytic2": dict(side=1.0, t_final=0.4, m_ratio=40.0, dm=0.001,
                      dl=0.0, dt_disp=0.0, phi=1.0, perm=1.0, rate=None),
    "lit1": dict(side=1000.0, t_final=1080.0, m_ratio=1.0, dm=10.0,
                 dl=0.0, dt_disp=0.0, phi=0.1, perm=80.0, rate=30.0),
    "lit2": dict(side=1000.0, t_final=1080.0, m_ratio=41.0, dm=0.0,
                 dl=50.0, dt_disp=5.0, phi=0.1, perm=80.0, rate=30.0),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    test: str
    scheme: str = "a"
    variant: str = "centred"
    n: int = None            # Cartesian cells per side (scheme a)
    reps: int = None         # pattern replications (scheme b)
    mesh_file: str = None    # external triangulation (scheme b)
    dt: float = None
    t_final: float = None
    m_ratio: float = None
    dm: float = None
    dl: float = None
    dt_disp: float = None
    phi: float = None
    perm: float = None
    out_dir: str = "out"
    vtk_every: int = 0

    def resolved(self):
        """Fill unset physics fields from the test defaults and validate."""
        if self.test not in TESTS:
            raise ConfigError(f"unknown test {self.test!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.variant not in assembly.VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        d = _TEST_DEFAULTS[self.test]
        updates = {k: d[k] for k in
                   ("t_final", "m_ratio", "dm", "dl", "dt_disp", "phi", "perm")
                   if getattr(self, k) is None}
        cfg = replace(self, **updates)
        if cfg.dt is None or cfg.dt <= 0:
            raise ConfigError("a positive time step dt is required")
        n_steps = round(cfg.t_final / cfg.dt)
        if n_steps < 1 or abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * cfg.t_final:
            raise ConfigError(
                f"dt={cfg.dt} does not divide t_final={cfg.t_final}")
        if cfg.scheme == "a":
            if cfg.n is None:
                raise ConfigError("scheme a needs the cell count n")
        elif cfg.reps is None and cfg.mesh_file is None:
            raise ConfigError("scheme b needs reps or mesh_file")
        return cfg

    @property
    def side(self):
        return _TEST_DEFAULTS[self.test]["side"]

    @property
    def n_steps(self):
        return round(self.t_final / self.dt)

    @property
    def mesh_label(self):
        if self.scheme == "a":
            return f"{self.n}x{self.n}"
        if self.mesh_file is not None:
            return self.mesh_file
        return f"tri{self.reps}"


@dataclass
class ErrorReport:
    l1: float
    l2: float
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0

    def max_picard_iters(self):
        return max((d["picard_iters"] for d in self.diagnostics), default=0)


@dataclass
class State:
    gd: object
    p: np.ndarray
    c: np.ndarray
    U: np.ndarray
    t: float


def build_discretisation(config):
    if config.scheme == "a":
        return scheme_a(build_cartesian(config.n, config.side))
    if config.mesh_file is not None:
        mesh = load_mesh(config.mesh_file)
    else:
        mesh = build_structured_triangulation(config.reps, config.side)
    return scheme_b(mesh, build_dual(mesh))


@dataclass(frozen=True)
class Problem:
    gd: object
    mobility: MobilityTensor
    params: DispersionParams
    dsrc: assembly.DiscreteSources
    exact: AnalyticalRadialSolution = None
    dirichlet_dofs: np.ndarray = None  # concentration constraints

    def dirichlet_at(self, t):
        if self.dirichlet_dofs is None:
            return None
        vals = self.exact.concentration(self.gd.anchors[self.dirichlet_dofs], t)
        return DirichletBC(dofs=self.dirichlet_dofs, values=np.atleast_1d(vals))


def _radial_dirichlet_dofs(gd):
    """Dofs on the two boundary edges through the origin (corner included,
    far endpoints excluded)."""
    x, y = gd.anchors[:, 0], gd.anchors[:, 1]
    tol = 1e-12
    on_bottom = (np.abs(y) < tol) & (x < 1.0 - tol)
    on_left = (np.abs(x) < tol) & (y < 1.0 - tol)
    return np.flatnonzero(on_bottom | on_left)


def build_problem(config):
    config = config.resolved()
    gd = build_discretisation(config)
    mobility = MobilityTensor(
        k=config.perm,
        viscosity_model=ViscosityModel(mu0=1.0, M=config.m_ratio))
    params = DispersionParams(phi=config.phi, dm=config.dm,
                              dl=config.dl, dt_=config.dt_disp)
    if config.test in ("analytic1", "analytic2"):
        sources = radial_test_sources()
        # production acts on the Dirichlet edges; the constrained rows
        # replace the reaction term in the transport equation
        dsrc = discretize_sources(gd, sources, production_in_transport=False)
        exact = AnalyticalRadialSolution(dm=config.dm)
        dirichlet = _radial_dirichlet_dofs(gd)
    else:
        sources = five_spot_sources(config.side, _TEST_DEFAULTS[config.test]["rate"])
        dsrc = discretize_sources(gd, sources)
        exact = None
        dirichlet = None
    return Problem(gd=gd, mobility=mobility, params=params, dsrc=dsrc,
                   exact=exact, dirichlet_dofs=dirichlet)


def error_norms(gd, c, exact, t):
    """Cellwise L1/L2 distances between the reconstructed concentration and
    the exact solution evaluated at the dof anchors."""
    diff = gd.pi(c) - exact.concentration(gd.anchors, t)
    l1 = float(gd.recon_measures @ np.abs(diff))
    l2 = float(np.sqrt(gd.recon_measures @ diff ** 2))
    return l1, l2


def run_coupled(config, c0=None, snapshot_cb=None, problem=None):
    """Execute the coupled scheme and return (final State, ErrorReport).

    The pressure step uses the previous concentration (explicit coupling);
    the transport step is implicit.  ``c0`` overrides the initial
    concentration (callable on points or dof array); ``snapshot_cb`` is
    called as (step, t, state) after selected steps.
    """
    config = config.resolved()
    if problem is None:
        problem = build_problem(config)
    gd = problem.gd
    tg = TimeGrid.uniform(config.t_final, config.n_steps)

    if c0 is None:
        c = np.zeros(gd.ndof)
    elif callable(c0):
        c = gd.interpolate(c0)
    else:
        c = np.asarray(c0, dtype=float).copy()

    constant_mobility = problem.mobility.viscosity_model.M == 1.0
    cached_pressure = None
    transport_cache = linalg.FactorizationCache()
    diagnostics = []
    start = time.perf_counter()
    p = np.zeros(gd.ndof)
    U = np.zeros((gd.n_grad_cells, 2))
    t = 0.0
    neumann = problem.dirichlet_dofs is None

    for n in range(tg.n_steps):
        dt = tg.steps[n]
        t_next = tg.t[n + 1]
        try:
            if cached_pressure is None:
                p, U, p_info = assembly.solve_pressure(
                    gd, c, problem.mobility, problem.dsrc)
                if constant_mobility:
                    cached_pressure = (p, U, p_info)
            else:
                p, U, p_info = cached_pressure
            c_prev = c
            c, t_info = assembly.transport_step(
                gd, U, c_prev, dt, problem.dsrc, problem.params,
                config.variant, dirichlet=problem.dirichlet_at(t_next),
                cache=transport_cache)
        except (linalg.SolverError, assembly.PicardError) as exc:
            exc.args = (f"step {n + 1} (t={t_next:g}): {exc.args[0]}",) \
                + exc.args[1:]
            raise
        row = {
            "step": n + 1,
            "t": float(t_next),
            "pressure_mean": p_info["pressure_mean"],
            "pressure_rhs_norm": p_info["rhs_norm"],
            "picard_iters": t_info["picard_iters"],
            "picard_residual": t_info["picard_residual"],
            "cmin": float(gd.pi(c).min()),
            "cmax": float(gd.pi(c).max()),
            "mass_residual": (assembly.mass_balance_residual(
                gd, c_prev, c, dt, problem.dsrc, problem.params)
                if neumann else float("nan")),
        }
        diagnostics.append(row)
        t = t_next
        if snapshot_cb is not None and config.vtk_every > 0 \
                and (n + 1) % config.vtk_every == 0:
            snapshot_cb(n + 1, t, State(gd=gd, p=p, c=c, U=U, t=t))

    wall = time.perf_counter() - start
    if problem.exact is not None:
        l1, l2 = error_norms(gd, c, problem.exact, config.t_final)
    else:
        l1 = l2 = float("nan")
    report = ErrorReport(l1=l1, l2=l2, diagnostics=diagnostics,
                         wall_time=wall)
    return State(gd=gd, p=p, c=c, U=U, t=t), report


def convergence_suite(test, scheme, variant, levels):
    """Run one table column: ``levels`` pairs a mesh parameter with a time
    step; returns one row dict per level with inter-level L1 ratios."""
    rows = []
    for mesh_param, dt in levels:
        if scheme == "a":
            config = RunConfig(test=test, scheme="a", variant=variant,
                               n=mesh_param, dt=dt)
        else:
            config = RunConfig(test=test, scheme="b", variant=variant,
                               reps=mesh_param, dt=dt)
        _, report = run_coupled(config)
        rows.append({
            "scheme": scheme, "variant": variant,
            "mesh": config.mesh_label, "dt": dt,
            "l1": report.l1, "l2": report.l2,
            "ratio_l1": (rows[-1]["l1"] / report.l1 if rows else float("nan")),
            "max_picard": report.max_picard_iters(),
        })
    return rows


# mesh/time-step pairings of the published error tables
TABLE1_A = ((25, 0.02), (50, 0.005), (100, 0.00125))
TABLE1_B = ((16, 0.02), (32, 0.005), (64, 0.00125))
TABLE2_A = ((25, 0.02), (50, 0.01), (100, 0.005))
TABLE2_B = ((16, 0.02), (32, 0.01), (64, 0.005))
