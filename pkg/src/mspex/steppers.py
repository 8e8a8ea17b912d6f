"""Time integration.

Four schemes share one Newton driver:

  FineBackwardEuler   reference solver, fully implicit on the fine grid
                      (Newton for linear diffusion, frozen-coefficient
                      Picard-Newton when the diffusion is nonlinear).
  FineForwardEuler    fully explicit fine solver (consistent mass kept);
                      unstable time steps are caught by the transient
                      driver's blow-up monitor.
  ImplicitReduced     Galerkin restriction of backward Euler to a coarse
                      space; nonlinear terms assembled on the fine grid
                      from the reconstructed field.
  PartiallyExplicit   split scheme: the fast component is advanced
                      implicitly, the slow one by a single coarse mass
                      solve with lagged cross-coupling terms.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConfigError, ConvergenceError
from .linsolve import SpdFactor


@dataclass
class NewtonConfig:
    max_iter: int = 25
    atol: float = 1e-10
    rtol: float = 1e-10
    divergence_factor: float = 1e4

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError(f"newton max_iter must be >= 1, got {self.max_iter}")
        if self.atol <= 0 or self.rtol < 0:
            raise ConfigError("newton tolerances must be positive")


@dataclass
class NewtonInfo:
    iterations: int
    residuals: list


def _default_linear_solve(J, r):
    if sp.issparse(J):
        return spla.splu(J.tocsc()).solve(r)
    return sla.solve(np.atleast_2d(J), np.atleast_1d(r))


def newton_solve(residual, jacobian, u0, cfg=None, linear_solve=None):
    """Newton iteration u <- u - J(u)^{-1} r(u) down to atol/rtol.

    Returns (u, NewtonInfo); raises ConvergenceError on divergence or
    iteration exhaustion, carrying the last residual norm.
    """
    cfg = cfg or NewtonConfig()
    solve = linear_solve or _default_linear_solve
    u = np.array(u0, dtype=float, copy=True)
    r = np.atleast_1d(residual(u))
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    if rnorm <= cfg.atol:
        return u, NewtonInfo(0, history)
    for m in range(1, cfg.max_iter + 1):
        du = solve(jacobian(u), r)
        u = u - du
        r = np.atleast_1d(residual(u))
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        if rnorm <= cfg.atol or rnorm <= cfg.rtol * history[0]:
            return u, NewtonInfo(m, history)
        if rnorm > cfg.divergence_factor * (history[0] + cfg.atol):
            raise ConvergenceError(
                f"Newton diverged at iteration {m} (residual {rnorm:.3e})",
                residual=rnorm, iterations=m,
            )
    raise ConvergenceError(
        f"Newton did not converge in {cfg.max_iter} iterations "
        f"(last residual {rnorm:.3e})",
        residual=rnorm, iterations=cfg.max_iter,
    )


@dataclass
class SchemeState:
    step: int
    t: float
    u: np.ndarray
    u_prev: np.ndarray
    c1: np.ndarray = None
    c2: np.ndarray = None
    c1_prev: np.ndarray = None
    c2_prev: np.ndarray = None
    newton_iterations: int = 0


class _OperatorCache:
    """Per-iterate cache so residual and Jacobian closures assemble once."""

    def __init__(self, builder):
        self._builder = builder
        self._key = None
        self._value = None

    def at(self, u):
        key = u.tobytes()
        if key != self._key:
            self._value = self._builder(u)
            self._key = key
        return self._value


class FineBackwardEuler:
    name = "fine_be"

    def __init__(self, problem, dt, newton=None):
        self.dp = problem
        self.dt = float(dt)
        self.newton = newton or NewtonConfig()
        self._linear_lu = None
        if problem.linear_diffusion:
            self._m_plus = (problem.M + self.dt * problem.A).tocsc()
            if getattr(problem.reaction, "kind", None) == "none":
                # reaction contributes only a constant source: the whole
                # step is one prefactored solve
                self._linear_lu = spla.splu(self._m_plus)
                self._const_g = problem.reaction_terms(problem.u0 * 0.0)[0]

    def initial_state(self, u0=None):
        u0 = self.dp.u0 if u0 is None else np.asarray(u0, dtype=float)
        return SchemeState(step=0, t=0.0, u=u0.copy(), u_prev=u0.copy())

    def step(self, state):
        dp, dt = self.dp, self.dt
        un = state.u
        if self._linear_lu is not None:
            u_new = self._linear_lu.solve(dp.M @ un - dt * self._const_g)
            self.last_newton_info = NewtonInfo(1, [])
            return SchemeState(step=state.step + 1, t=state.t + dt, u=u_new,
                               u_prev=un, newton_iterations=1)
        cache = _OperatorCache(
            lambda u: (dp.stiffness_at(u), *dp.reaction_terms(u))
        )

        def residual(u):
            Amat, gvec, _ = cache.at(u)
            return dp.M @ (u - un) + dt * (Amat @ u + gvec)

        def jacobian(u):
            Amat, _, jg = cache.at(u)
            if dp.linear_diffusion:
                return (self._m_plus + dt * jg).tocsc()
            return (dp.M + dt * Amat + dt * jg).tocsc()

        u_new, info = newton_solve(residual, jacobian, un, self.newton)
        self.last_newton_info = info
        return SchemeState(step=state.step + 1, t=state.t + dt, u=u_new,
                           u_prev=un, newton_iterations=info.iterations)


class FineForwardEuler:
    name = "fine_fe"

    def __init__(self, problem, dt):
        self.dp = problem
        self.dt = float(dt)
        self._mass = SpdFactor(problem.M.tocsc())

    def initial_state(self, u0=None):
        u0 = self.dp.u0 if u0 is None else np.asarray(u0, dtype=float)
        return SchemeState(step=0, t=0.0, u=u0.copy(), u_prev=u0.copy())

    def step(self, state):
        dp, dt = self.dp, self.dt
        u = state.u
        fterm = dp.stiffness_at(u) @ u
        gvec, _ = dp.reaction_terms(u)
        u_new = u - dt * self._mass.solve(fterm + gvec)
        return SchemeState(step=state.step + 1, t=state.t + dt,
                           u=u_new, u_prev=u)


def project_l2(spaces_or_basis, M, u):
    """L2-orthogonal projection coefficients of u onto a basis."""
    Z = spaces_or_basis.basis if hasattr(spaces_or_basis, "basis") else spaces_or_basis
    if Z.shape[1] == 0:
        return np.zeros(0)
    G = (Z.T @ (M @ Z)).toarray()
    return sla.solve(G, np.asarray(Z.T @ (M @ u)).ravel(), assume_a="pos")


class ImplicitReduced:
    """Backward Euler restricted to span of the given space."""

    def __init__(self, problem, space, dt, newton=None, name="cem"):
        self.dp = problem
        self.space = space
        self.Z = space.basis
        self.dt = float(dt)
        self.newton = newton or NewtonConfig()
        self.name = name
        M, Z = problem.M, self.Z
        self.Mr = (Z.T @ (M @ Z)).toarray()
        if problem.linear_diffusion:
            self.Ar = (Z.T @ (problem.A @ Z)).toarray()

    def initial_state(self, u0=None):
        u0 = self.dp.u0 if u0 is None else np.asarray(u0, dtype=float)
        if not np.any(u0):
            c0 = np.zeros(self.Z.shape[1])
        else:
            c0 = project_l2(self.Z, self.dp.M, u0)
        u = np.asarray(self.Z @ c0).ravel()
        return SchemeState(step=0, t=0.0, u=u, u_prev=u.copy(),
                           c1=c0, c1_prev=c0.copy())

    def step(self, state):
        dp, dt, Z = self.dp, self.dt, self.Z
        cn = state.c1
        cache = _OperatorCache(
            lambda c: self._assemble(np.asarray(Z @ c).ravel())
        )

        def residual(c):
            Amat, gvec, _, u = cache.at(c)
            return self.Mr @ (c - cn) + dt * np.asarray(Z.T @ (Amat @ u + gvec)).ravel()

        def jacobian(c):
            Amat, _, jg, _ = cache.at(c)
            if dp.linear_diffusion:
                Fr = self.Ar
            else:
                Fr = (Z.T @ (Amat @ Z)).toarray()
            return self.Mr + dt * (Fr + (Z.T @ (jg @ Z)).toarray())

        c_new, info = newton_solve(residual, jacobian, cn, self.newton)
        self.last_newton_info = info
        u_new = np.asarray(Z @ c_new).ravel()
        return SchemeState(step=state.step + 1, t=state.t + dt, u=u_new,
                           u_prev=state.u, c1=c_new, c1_prev=cn,
                           newton_iterations=info.iterations)

    def _assemble(self, u):
        Amat = self.dp.stiffness_at(u)
        gvec, jg = self.dp.reaction_terms(u)
        return Amat, gvec, jg, u


class PartiallyExplicit:
    """Split time stepping on a fast/slow space pair.

    The fast equation is solved implicitly (Newton, with the diffusion
    coefficient frozen at the previous iterate when nonlinear); the slow
    equation is one coarse mass solve.  Cross-coupling time differences
    enter with a one-step lag.  The lagged differences need a
    predecessor state, so the first step solves the coupled implicit
    system on the combined space (with the scheme's own reaction
    treatment); every later step uses the split equations.
    """

    name = "pexp"

    def __init__(self, problem, space_fast, space_slow, dt, newton=None,
                 g_mode="fully_explicit"):
        if g_mode not in ("fully_explicit", "semi_implicit"):
            raise ConfigError(f"unknown g_mode {g_mode!r}")
        self.dp = problem
        self.fast = space_fast
        self.slow = space_slow
        self.Z1 = space_fast.basis
        self.Z2 = space_slow.basis
        self.dt = float(dt)
        self.newton = newton or NewtonConfig()
        self.g_mode = g_mode
        M = problem.M
        self.M11 = (self.Z1.T @ (M @ self.Z1)).toarray()
        self.n2 = self.Z2.shape[1]
        if self.n2:
            self.M22 = (self.Z2.T @ (M @ self.Z2)).toarray()
            self.X12 = (self.Z1.T @ (M @ self.Z2)).toarray()
            self._m22_chol = sla.cho_factor(self.M22)
            self.Zs = sp.hstack([self.Z1, self.Z2], format="csc")
        else:
            self.Zs = self.Z1
        self.Gs = (self.Zs.T @ (M @ self.Zs)).toarray()
        if problem.linear_diffusion:
            self.A11 = (self.Z1.T @ (problem.A @ self.Z1)).toarray()
            self.As = (self.Zs.T @ (problem.A @ self.Zs)).toarray()

    def initial_state(self, u0=None):
        u0 = self.dp.u0 if u0 is None else np.asarray(u0, dtype=float)
        n1 = self.Z1.shape[1]
        if not np.any(u0):
            c1 = np.zeros(n1)
            c2 = np.zeros(self.n2)
        elif self.n2:
            Z = sp.hstack([self.Z1, self.Z2], format="csc")
            c = project_l2(Z, self.dp.M, u0)
            c1, c2 = c[:n1], c[n1:]
        else:
            c1 = project_l2(self.Z1, self.dp.M, u0)
            c2 = np.zeros(0)
        u = self._reconstruct(c1, c2)
        return SchemeState(step=0, t=0.0, u=u, u_prev=u.copy(),
                           c1=c1, c2=c2, c1_prev=c1.copy(), c2_prev=c2.copy())

    def _reconstruct(self, c1, c2):
        u = np.asarray(self.Z1 @ c1).ravel()
        if self.n2:
            u = u + np.asarray(self.Z2 @ c2).ravel()
        return u

    def step(self, state):
        if state.step == 0:
            return self._startup_step(state)
        dp, dt, Z1, Z2 = self.dp, self.dt, self.Z1, self.Z2
        c1n, c2n = state.c1, state.c2
        u2n = np.asarray(Z2 @ c2n).ravel() if self.n2 else 0.0
        lag1 = self.X12 @ (c2n - state.c2_prev) if self.n2 else 0.0

        if self.g_mode == "fully_explicit":
            g_n, _ = dp.reaction_terms(state.u)
            g1_explicit = np.asarray(Z1.T @ g_n).ravel()

        cache = _OperatorCache(lambda c1: self._assemble(c1, u2n))

        def residual(c1):
            Amat, gvec, _, w = cache.at(c1)
            r = self.M11 @ (c1 - c1n) + lag1 + dt * np.asarray(Z1.T @ (Amat @ w)).ravel()
            if self.g_mode == "fully_explicit":
                return r + dt * g1_explicit
            return r + dt * np.asarray(Z1.T @ gvec).ravel()

        def jacobian(c1):
            Amat, _, jg, _ = cache.at(c1)
            if dp.linear_diffusion:
                J = self.M11 + dt * self.A11
            else:
                J = self.M11 + dt * (Z1.T @ (Amat @ Z1)).toarray()
            if self.g_mode == "semi_implicit":
                J = J + dt * (Z1.T @ (jg @ Z1)).toarray()
            return J

        c1_new, info = newton_solve(residual, jacobian, c1n, self.newton)
        self.last_newton_info = info

        if self.n2:
            Amat, gvec, _, w = cache.at(c1_new)
            f2 = np.asarray(Z2.T @ (Amat @ w)).ravel()
            if self.g_mode == "fully_explicit":
                g2 = np.asarray(Z2.T @ g_n).ravel()
            else:
                g2 = np.asarray(Z2.T @ gvec).ravel()
            lag2 = self.X12.T @ (c1n - state.c1_prev)
            rhs = self.M22 @ c2n - lag2 - dt * (f2 + g2)
            c2_new = sla.cho_solve(self._m22_chol, rhs)
        else:
            c2_new = np.zeros(0)

        u_new = self._reconstruct(c1_new, c2_new)
        return SchemeState(step=state.step + 1, t=state.t + dt, u=u_new,
                           u_prev=state.u, c1=c1_new, c2=c2_new,
                           c1_prev=c1n, c2_prev=c2n,
                           newton_iterations=info.iterations)

    def _assemble(self, c1, u2n):
        w = np.asarray(self.Z1 @ c1).ravel() + u2n
        Amat = self.dp.stiffness_at(w)
        if self.g_mode == "semi_implicit":
            gvec, jg = self.dp.reaction_terms(w)
        else:
            gvec, jg = None, None
        return Amat, gvec, jg, w

    def _startup_step(self, state):
        """Coupled implicit solve on the combined space, keeping the
        scheme's reaction treatment (frozen at the old state for the
        fully explicit mode, Newton otherwise)."""
        dp, dt, Zs = self.dp, self.dt, self.Zs
        n1 = self.Z1.shape[1]
        cn = np.concatenate([state.c1, state.c2]) if self.n2 else state.c1
        if self.g_mode == "fully_explicit":
            g_n, _ = dp.reaction_terms(state.u)
            gs = np.asarray(Zs.T @ g_n).ravel()
        cache = _OperatorCache(lambda c: self._assemble_coupled(c))

        def residual(c):
            Amat, gvec, _, u = cache.at(c)
            r = self.Gs @ (c - cn) + dt * np.asarray(Zs.T @ (Amat @ u)).ravel()
            if self.g_mode == "fully_explicit":
                return r + dt * gs
            return r + dt * np.asarray(Zs.T @ gvec).ravel()

        def jacobian(c):
            Amat, _, jg, _ = cache.at(c)
            if dp.linear_diffusion:
                J = self.Gs + dt * self.As
            else:
                J = self.Gs + dt * (Zs.T @ (Amat @ Zs)).toarray()
            if self.g_mode == "semi_implicit":
                J = J + dt * (Zs.T @ (jg @ Zs)).toarray()
            return J

        c_new, info = newton_solve(residual, jacobian, cn, self.newton)
        self.last_newton_info = info
        c1_new = c_new[:n1]
        c2_new = c_new[n1:]
        u_new = self._reconstruct(c1_new, c2_new)
        return SchemeState(step=state.step + 1, t=state.t + dt, u=u_new,
                           u_prev=state.u, c1=c1_new, c2=c2_new,
                           c1_prev=state.c1, c2_prev=state.c2,
                           newton_iterations=info.iterations)

    def _assemble_coupled(self, c):
        u = np.asarray(self.Zs @ c).ravel()
        Amat = self.dp.stiffness_at(u)
        if self.g_mode == "semi_implicit":
            gvec, jg = self.dp.reaction_terms(u)
        else:
            gvec, jg = None, None
        return Amat, gvec, jg, u


# ---------------------------------------------------------------------------
# transient driver

class Trajectory:
    """Per-step record of a transient run."""

    def __init__(self, scheme, dt, split=False):
        self.scheme = scheme
        self.dt = dt
        self.split = split
        self.ts = []
        self.fields = []
        self.c1 = []
        self.c2 = []
        self.newton_iterations = []
        self.status = "complete"
        self.failed_step = None
        self.error = None

    def record(self, state, store_field=True):
        self.ts.append(state.t)
        if store_field:
            self.fields.append(state.u.copy())
        if self.split:
            self.c1.append(None if state.c1 is None else state.c1.copy())
            self.c2.append(None if state.c2 is None else state.c2.copy())
        self.newton_iterations.append(state.newton_iterations)

    @property
    def n_steps(self):
        return len(self.ts) - 1

    def final_field(self):
        return self.fields[-1]


def resolve_steps(dt, n_steps=None, t_final=None):
    if n_steps is None:
        if t_final is None:
            raise ConfigError("need n_steps or t_final")
        n_steps = int(round(t_final / dt))
        if abs(n_steps * dt - t_final) > 1e-12 * max(1.0, abs(t_final)):
            raise ConfigError(
                f"t_final={t_final} is not an integer multiple of dt={dt}"
            )
    return n_steps


def run_transient(stepper, n_steps=None, t_final=None, observers=(),
                  state=None, store_fields=True, blowup_limit=1e10):
    """Advance a stepper, recording every step and invoking observers.

    Blow-up (non-finite or sup-norm above blowup_limit) and step failures
    flag the trajectory and stop the run; the partial series is returned.
    """
    n_steps = resolve_steps(stepper.dt, n_steps, t_final)
    if state is None:
        state = stepper.initial_state()
    traj = Trajectory(getattr(stepper, "name", "scheme"), stepper.dt,
                      split=state.c1 is not None)
    traj.record(state, store_fields)
    for n in range(1, n_steps + 1):
        try:
            state = stepper.step(state)
        except ConvergenceError as err:
            traj.status = "failed"
            traj.failed_step = n
            traj.error = err
            break
        if not np.all(np.isfinite(state.u)) or np.max(np.abs(state.u)) > blowup_limit:
            traj.record(state, store_fields)
            traj.status = "blowup"
            traj.failed_step = n
            break
        traj.record(state, store_fields)
        for obs in observers:
            obs(n, state.t, state)
    return traj


# single-step convenience entry points (operator bundles are rebuilt per
# call; the classes above are what the driver uses)

def step_backward_euler_fine(state, problem, dt, newton=None):
    return FineBackwardEuler(problem, dt, newton).step(state)


def step_forward_euler_fine(state, problem, dt):
    return FineForwardEuler(problem, dt).step(state)


def step_implicit_reduced(state, problem, space, dt, newton=None):
    return ImplicitReduced(problem, space, dt, newton).step(state)


def step_partially_explicit(state, problem, space_fast, space_slow, dt,
                            newton=None, g_mode="fully_explicit"):
    return PartiallyExplicit(problem, space_fast, space_slow, dt, newton,
                             g_mode).step(state)
