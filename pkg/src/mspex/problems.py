"""Problem catalog: coefficient fields, sources, reaction terms,
diffusion nonlinearities, and the nine experiment presets (E1-E9).

The high-contrast fields are procedural (seeded channel generators); the
presets pin seeds so every run is reproducible.  Initial conditions
default to zero, with dynamics driven by the source term; presets record
that assumption in their notes.
"""

import numpy as np

from . import assembly
from .exceptions import ConfigError
from .fieldio import grid_to_cellfield, read_matrix


# ---------------------------------------------------------------------------
# coefficient fields

def _cell_centers(nf):
    c = (np.arange(nf) + 0.5) / nf
    return np.meshgrid(c, c)  # x[cy, cx], y[cy, cx]


def generate_channel_kappa(nf, seed, contrast, n_channels, complexity="simple"):
    """Background-1 field with high-contrast channel strips (width 2 cells).

    Channels alternate orientation; every third one grows a
    perpendicular leg (an L shape).  complexity='complex' doubles the
    channel count and forces periodic full crossings.
    """
    if contrast < 1:
        raise ConfigError(f"contrast must be >= 1, got {contrast}")
    if n_channels < 0:
        raise ConfigError(f"n_channels must be >= 0, got {n_channels}")
    if complexity not in ("simple", "complex"):
        raise ConfigError(f"complexity must be 'simple' or 'complex', got {complexity!r}")
    count = n_channels if complexity == "simple" else 2 * n_channels
    field = np.ones((nf, nf))
    if count == 0 or contrast == 1:
        if count and nf < 10:
            raise ConfigError(f"channels need nf >= 10, got nf={nf}")
        return field.ravel()
    if nf < 10:
        raise ConfigError(f"channels need nf >= 10, got nf={nf}")

    rng = np.random.default_rng(seed)
    for k in range(count):
        horizontal = bool(rng.integers(0, 2))
        pos = int(rng.integers(2, nf - 4))
        full_span = complexity == "complex" and k % 3 == 0
        if full_span:
            s0, s1 = 0, nf
        else:
            length = int(nf * rng.uniform(0.4, 0.9))
            s0 = int(rng.integers(0, nf - length + 1))
            s1 = s0 + length
        if horizontal:
            field[pos:pos + 2, s0:s1] = contrast
        else:
            field[s0:s1, pos:pos + 2] = contrast
        if k % 3 == 2 and not full_span:
            leg = int(nf * rng.uniform(0.2, 0.5))
            tip = min(max(s1 - 2, 0), nf - 2)
            if horizontal:
                field[pos:min(pos + leg, nf), tip:tip + 2] = contrast
            else:
                field[tip:tip + 2, pos:min(pos + leg, nf)] = contrast
    return field.ravel()


def load_kappa(path, nf=None):
    """Read a coefficient field from the plain-text matrix format."""
    arr = read_matrix(path)
    field = grid_to_cellfield(arr)
    if nf is not None and arr.shape[0] != nf:
        raise ConfigError(
            f"{path}: field is {arr.shape[0]}x{arr.shape[1]}, expected {nf}x{nf}"
        )
    bad = np.argwhere(arr <= 0)
    if bad.size:
        r, c = bad[0]
        raise ConfigError(
            f"{path}: nonpositive value {arr[r, c]} at row {r + 1}, col {c + 1}"
        )
    return field


def make_source(nf, kind, magnitude=1000.0, cell=None):
    """Source fields: 'singular' = one-cell indicator (integral
    magnitude/nf^2), 'smooth' = 10 sin(pi x) sin(pi y) at cell centers."""
    if kind == "singular":
        field = np.zeros((nf, nf))
        cx, cy = (nf // 2, nf // 2) if cell is None else cell
        if not (0 <= cx < nf and 0 <= cy < nf):
            raise ConfigError(f"source cell ({cx}, {cy}) outside the {nf}x{nf} grid")
        field[cy, cx] = magnitude
        return field.ravel()
    if kind == "smooth":
        x, y = _cell_centers(nf)
        return (10.0 * np.sin(np.pi * x) * np.sin(np.pi * y)).ravel()
    raise ConfigError(f"source kind must be 'singular' or 'smooth', got {kind!r}")


def make_oscillation(nf, amplitude=2.0, frequency=20.0):
    """Cellwise-constant oscillating reaction coefficient field."""
    x, y = _cell_centers(nf)
    return (amplitude * np.cos(frequency * np.pi * x)
            * np.cos(frequency * np.pi * y)).ravel()


# ---------------------------------------------------------------------------
# reactions and diffusion nonlinearities

class Reaction:
    """Pointwise reaction g with cellwise parameters and a spatial source.

    value/deriv/energy_density operate on (n_cells, n_quad) arrays of
    solution values; the sign convention is g = core(u) - g0 with the
    energy density the antiderivative of g.
    """

    def __init__(self, kind, g0, scale=10.0, a1=None):
        if kind not in ("none", "cubic", "cosine"):
            raise ConfigError(f"unknown reaction kind {kind!r}")
        if kind == "cosine" and a1 is None:
            raise ConfigError("cosine reaction requires the oscillation field a1")
        self.kind = kind
        self.g0 = np.asarray(g0, dtype=float)
        self.scale = float(scale)
        self.a1 = None if a1 is None else np.asarray(a1, dtype=float)

    def _core(self, u):
        if self.kind == "cubic":
            return -self.scale * u * (u * u - 1.0)
        if self.kind == "cosine":
            return -(1.0 + np.cos(self.a1[:, None] * u))
        return np.zeros_like(u)

    def value(self, u):
        return self._core(u) - self.g0[:, None]

    def deriv(self, u):
        if self.kind == "cubic":
            return -self.scale * (3.0 * u * u - 1.0)
        if self.kind == "cosine":
            a = self.a1[:, None]
            return a * np.sin(a * u)
        return np.zeros_like(u)

    def energy_density(self, u):
        if self.kind == "cubic":
            core = -self.scale * (0.25 * u**4 - 0.5 * u * u)
        elif self.kind == "cosine":
            a = self.a1[:, None]
            # sin(a u)/a with the a -> 0 limit handled by sinc
            core = -(u + u * np.sinc(a * u / np.pi))
        else:
            core = np.zeros_like(u)
        return core - self.g0[:, None] * u


ALPHA_FUNCS = {
    "linear": None,
    "one_plus_u_sq": lambda u: 1.0 + u * u,
    "two_plus_cos": lambda u: 2.0 + np.cos(u),
}


# ---------------------------------------------------------------------------
# problem bundles

class ProblemSpec:
    """Continuous-problem data sampled onto one fine grid."""

    def __init__(self, kappa, reaction="none", g0=None, alpha="linear",
                 reaction_scale=10.0, a1=None, u0=None):
        self.kappa = np.asarray(kappa, dtype=float)
        if np.min(self.kappa) <= 0:
            raise ConfigError("kappa must be positive everywhere")
        n_cells = self.kappa.size
        self.g0 = np.zeros(n_cells) if g0 is None else np.asarray(g0, dtype=float)
        if self.g0.size != n_cells:
            raise ConfigError("g0 and kappa must live on the same cell grid")
        if alpha not in ALPHA_FUNCS:
            raise ConfigError(f"unknown alpha {alpha!r}, options: {sorted(ALPHA_FUNCS)}")
        self.alpha = alpha
        self.reaction_kind = reaction
        self.reaction_scale = reaction_scale
        self.a1 = a1
        if reaction == "cosine" and a1 is None:
            raise ConfigError("cosine reaction requires a1")
        self.u0 = u0  # None (zero), callable (x, y) -> value, or dof array

    @property
    def contrast(self):
        return float(self.kappa.max() / self.kappa.min())

    def make_reaction(self):
        return Reaction(self.reaction_kind, self.g0, self.reaction_scale, self.a1)


class DiscreteProblem:
    """Grid plus assembled operators for time stepping."""

    def __init__(self, grid, spec):
        self.grid = grid
        self.spec = spec
        if spec.kappa.size != grid.n_cells:
            raise ConfigError(
                f"kappa has {spec.kappa.size} cells, grid has {grid.n_cells}"
            )
        self.kappa = spec.kappa
        self.M = assembly.assemble_mass(grid)
        self.A = assembly.assemble_stiffness(grid, spec.kappa)
        self.reaction = spec.make_reaction()
        self.alpha = ALPHA_FUNCS[spec.alpha]
        self.u0 = self._initial_field(spec.u0)

    def _initial_field(self, u0):
        if u0 is None:
            return np.zeros(self.grid.n_dofs)
        if callable(u0):
            g = self.grid
            x = g.node_x[g.node_of_dof]
            y = g.node_y[g.node_of_dof]
            return np.asarray(u0(x, y), dtype=float)
        u0 = np.asarray(u0, dtype=float)
        if u0.size != self.grid.n_dofs:
            raise ConfigError("initial field has the wrong number of dofs")
        return u0

    @property
    def linear_diffusion(self):
        return self.alpha is None

    def stiffness_at(self, u):
        if self.linear_diffusion:
            return self.A
        return assembly.assemble_stiffness(self.grid, self.kappa, (u, self.alpha))

    def reaction_terms(self, u):
        return assembly.assemble_reaction(self.grid, self.reaction, u)

    def dirichlet_energy(self, u):
        """kappa energy 0.5 int kappa alpha(u) |grad u|^2 (diagnostic when
        the diffusion is nonlinear)."""
        return 0.5 * float(u @ (self.stiffness_at(u) @ u))

    def reaction_energy(self, u):
        u_cq = assembly.field_quad_values(self.grid, u)
        return assembly.integrate_quad(self.grid, self.reaction.energy_density(u_cq))


# ---------------------------------------------------------------------------
# presets

# preset field seeds: picked so the slow space of the resulting geometry
# keeps its energy ratio near the simple-field level; badly compartmented
# channel layouts push the explicit component outside the stable range at
# the preset step size
_SIMPLE_KAPPA = dict(seed=11, n_channels=6, complexity="simple")
_COMPLEX_KAPPA = dict(seed=28, n_channels=6, complexity="complex")
_DEFAULT_CONTRAST = 1.0e4

ALL_SCHEMES = ("fine_be", "cem", "cem_plus", "pexp")


class Preset:
    def __init__(self, name, kappa_kind, source_kind, reaction, alpha,
                 dt, g_mode, notes):
        self.name = name
        self.nc = 10
        self.nf = 100
        self.t_final = 0.05
        self.dt = dt
        self.kappa_kind = kappa_kind
        self.source_kind = source_kind
        self.reaction_kind = reaction
        self.alpha = alpha
        self.g_mode = g_mode
        self.schemes = ALL_SCHEMES
        # two fast modes per element keep the slow-space energy ratio low
        # enough that the preset time step sits inside the admissible range
        self.n_fast_modes = 2
        self.n_slow_modes = 1
        self.layers = 2
        self.notes = notes + " Initial condition u0=0 (assumed, not stated)."
        n = int(round(self.t_final / dt))
        assert abs(n * dt - self.t_final) < 1e-12

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    def build_spec(self, contrast=_DEFAULT_CONTRAST, nf=None):
        nf = self.nf if nf is None else nf
        params = _SIMPLE_KAPPA if self.kappa_kind == "simple" else _COMPLEX_KAPPA
        kappa = generate_channel_kappa(nf, contrast=contrast, **params)
        g0 = make_source(nf, self.source_kind)
        a1 = make_oscillation(nf) if self.reaction_kind == "cosine" else None
        return ProblemSpec(kappa, reaction=self.reaction_kind, g0=g0,
                           alpha=self.alpha, a1=a1)


_PRESETS = {
    "E1": Preset("E1", "simple", "singular", "cubic", "linear", 1e-4,
                 "fully_explicit",
                 "Cubic reaction, singular source; split scheme should track"
                 " the enriched implicit one."),
    "E2": Preset("E2", "simple", "smooth", "cubic", "linear", 1e-4,
                 "fully_explicit",
                 "Smooth source; error curves of the enriched schemes coincide."),
    "E3": Preset("E3", "complex", "singular", "cubic", "linear", 1e-4,
                 "fully_explicit",
                 "More channels; enriched curves coincide."),
    "E4": Preset("E4", "complex", "smooth", "cubic", "linear", 1e-4,
                 "fully_explicit",
                 "Plain coarse scheme is already accurate here."),
    "E5": Preset("E5", "simple", "singular", "cosine", "linear", 1e-4,
                 "fully_explicit",
                 "Oscillatory reaction coefficient; energy error gains most"
                 " from enrichment."),
    "E6": Preset("E6", "complex", "singular", "cosine", "linear", 1e-4,
                 "fully_explicit",
                 "Oscillatory reaction on the complex field."),
    "E7": Preset("E7", "simple", "singular", "cubic", "one_plus_u_sq", 1e-4,
                 "semi_implicit",
                 "Quadratic diffusion nonlinearity; frozen-coefficient iteration."),
    "E8": Preset("E8", "simple", "singular", "cubic", "two_plus_cos", 0.05 / 1500,
                 "semi_implicit",
                 "Bounded diffusion nonlinearity, finer time step."),
    "E9": Preset("E9", "complex", "singular", "cubic", "two_plus_cos", 0.05 / 1500,
                 "semi_implicit",
                 "Bounded nonlinearity on the complex field."),
}


def preset(name):
    try:
        return _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; valid names: {', '.join(sorted(_PRESETS))}"
        )
