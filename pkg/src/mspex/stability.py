"""Stability quantities for the split scheme, and discrete energy
tracking along trajectories.

The admissible time step combines the slow-space energy ratio, the
space angle, and reaction curvature bounds.  For linear diffusion the
tracked Dirichlet-plus-reaction energy with the lagged-difference term
is a certificate (it must not increase under the admissible step); for
nonlinear diffusion the same quantity is reported as a diagnostic only.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import assembly
from .problems import ALPHA_FUNCS
from .spaces import compute_gamma

_DENSE_LIMIT = 600


def energy_ratio(space, A, M):
    """sup over the space of (energy norm)^2 / (L2 norm)^2.

    space=None means the full fine space.  Largest generalized
    eigenvalue; dense for small problems, Lanczos otherwise.
    """
    if space is None:
        n = A.shape[0]
        if n <= _DENSE_LIMIT:
            vals = sla.eigh(A.toarray(), M.toarray(), eigvals_only=True)
            return float(vals[-1])
        vals = spla.eigsh(A.tocsc(), k=1, M=M.tocsc(), which="LA",
                          return_eigenvectors=False, maxiter=10000)
        return float(vals[0])
    if space.n_basis == 0:
        raise ValueError("energy ratio of an empty space is undefined")
    Z = space.basis
    Ar = (Z.T @ (A @ Z)).toarray()
    Mr = (Z.T @ (M @ Z)).toarray()
    vals = sla.eigh(0.5 * (Ar + Ar.T), 0.5 * (Mr + Mr.T), eigvals_only=True)
    return float(vals[-1])


def admissible_dt(gamma, lam_slow, B=0.0, cbar=1.0, C2bar=1.0):
    """Largest stable time step:
    (1 - gamma) / (C2bar^2 lam_slow / (2 cbar) + (1 + gamma) B / 2)."""
    if gamma >= 1.0:
        raise ValueError(
            f"spaces are not transversal (gamma = {gamma} >= 1); no admissible step"
        )
    den = C2bar**2 * lam_slow / (2.0 * cbar) + (1.0 + gamma) * B / 2.0
    if den <= 0.0:
        return np.inf
    return (1.0 - gamma) / den


def estimate_reaction_bounds(reaction, u_range=(-1.0, 1.0), n_samples=1000):
    """(B, bbar): max |g'| and max(0, -min g') over a uniform sampling
    of the solution range (and over all cells for cellwise parameters)."""
    lo, hi = u_range
    u = np.linspace(lo, hi, n_samples)[None, :]
    d = np.asarray(reaction.deriv(u), dtype=float)
    return float(np.abs(d).max()), float(max(0.0, -d.min()))


class StabilityReport:
    FIELDS = ("gamma", "lam_slow", "lam_full", "B", "bbar", "cbar", "C2bar",
              "dt_star_example1", "dt_star_general", "contrast", "dt", "passes")

    def __init__(self, **kw):
        for k in self.FIELDS:
            setattr(self, k, kw.pop(k))
        self.notes = kw.pop("notes", [])
        assert not kw, f"unexpected report fields: {sorted(kw)}"

    def to_text(self):
        lines = []
        for k in self.FIELDS:
            v = getattr(self, k)
            if isinstance(v, bool):
                lines.append(f"{k} = {'PASS' if v else 'FAIL'}")
            elif v is None:
                lines.append(f"{k} = n/a")
            else:
                lines.append(f"{k} = {v:.12g}")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"

    @classmethod
    def csv_header(cls):
        return ",".join(cls.FIELDS)

    def to_csv_row(self):
        out = []
        for k in self.FIELDS:
            v = getattr(self, k)
            if isinstance(v, bool):
                out.append("PASS" if v else "FAIL")
            elif v is None:
                out.append("")
            else:
                out.append("%.12g" % v)
        return ",".join(out)


def build_stability_report(problem, space_fast, space_slow, dt,
                           u_range=(-1.0, 1.0), lam_full=None):
    """Evaluate every stability quantity for a built space pair."""
    notes = []
    gamma = compute_gamma(space_fast, space_slow, problem.M)
    if lam_full is None:
        lam_full = energy_ratio(None, problem.A, problem.M)
    B, bbar = estimate_reaction_bounds(problem.reaction, u_range)
    if problem.linear_diffusion:
        cbar, C2bar = 1.0, 1.0
    else:
        u = np.linspace(u_range[0], u_range[1], 1000)
        a_vals = ALPHA_FUNCS[problem.spec.alpha](u)
        cbar, C2bar = float(a_vals.min()), float(a_vals.max())
        notes.append(
            "cbar/C2bar estimated as min/max of alpha over "
            f"u in [{u_range[0]}, {u_range[1]}] (heuristic for nonlinear diffusion)"
        )
    if space_slow.n_basis == 0:
        notes.append("slow space is empty: energy ratio undefined, the split "
                     "scheme degenerates to the implicit coarse scheme")
        lam_slow = None
        dt_ex1 = None
        dt_gen = None
        passes = True
    else:
        lam_slow = energy_ratio(space_slow, problem.A, problem.M)
        if gamma >= 1.0:
            notes.append("gamma >= 1: spaces not transversal")
            dt_ex1 = None
            dt_gen = None
            passes = False
        else:
            dt_ex1 = admissible_dt(gamma, lam_slow)
            dt_gen = admissible_dt(gamma, lam_slow, B, cbar, C2bar)
            passes = dt <= dt_gen
    return StabilityReport(
        gamma=gamma, lam_slow=lam_slow, lam_full=lam_full, B=B, bbar=bbar,
        cbar=cbar, C2bar=C2bar, dt_star_example1=dt_ex1,
        dt_star_general=dt_gen, contrast=problem.spec.contrast, dt=dt,
        passes=passes, notes=notes,
    )


class EnergyTrace:
    """F (Dirichlet), G (reaction), and the lagged-difference energy per step."""

    def __init__(self, ts, dirichlet, reaction, lyapunov, kind):
        self.ts = np.asarray(ts)
        self.dirichlet = np.asarray(dirichlet)
        self.reaction = np.asarray(reaction)
        self.lyapunov = np.asarray(lyapunov)
        self.kind = kind  # 'certificate' or 'diagnostic'


def track_energy(traj, problem, dt, gamma=0.0, spaces=None):
    """Recompute the discrete energies of a stored trajectory.

    For split trajectories the lagged term gamma/(2 dt) sum_i
    ||u_i^n - u_i^{n-1}||^2 is added from the stored component
    coefficients; monolithic trajectories report F + G.
    """
    M = problem.M
    F, G, lyap = [], [], []
    kind = "certificate" if problem.linear_diffusion else "diagnostic"
    split = traj.split and spaces is not None and traj.c2 and traj.c2[0] is not None
    for n, u in enumerate(traj.fields):
        Fn = problem.dirichlet_energy(u)
        Gn = problem.reaction_energy(u)
        F.append(Fn)
        G.append(Gn)
        extra = 0.0
        if split and n > 0:
            Z1, Z2 = spaces[0].basis, spaces[1].basis
            d1 = np.asarray(Z1 @ (traj.c1[n] - traj.c1[n - 1])).ravel()
            extra = gamma / (2.0 * dt) * float(d1 @ (M @ d1))
            if traj.c2[n].size:
                d2 = np.asarray(Z2 @ (traj.c2[n] - traj.c2[n - 1])).ravel()
                extra += gamma / (2.0 * dt) * float(d2 @ (M @ d2))
        lyap.append(Fn + Gn + extra)
    return EnergyTrace(traj.ts, F, G, lyap, kind)
