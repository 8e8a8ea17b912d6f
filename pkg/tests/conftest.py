"""Shared fixtures.

The paper-scale objects (preset grids, spaces, full scheme runs) are
expensive, so they are built once per session and shared between the
unit tests that need them and the acceptance suite.
"""

import numpy as np
import pytest

from mspex import build_grids
from mspex import problems, spaces, steppers


class PresetRun:
    """Error series and run metadata for every scheme of one preset."""

    def __init__(self, name):
        pre = problems.preset(name)
        self.preset = pre
        self.grid = build_grids(pre.nc, pre.nf)
        self.spec = pre.build_spec()
        self.dp = problems.DiscreteProblem(self.grid, self.spec)
        self.cem, self.slow, self.aux, self.aux2 = spaces.build_space_pair(
            self.grid, self.spec.kappa, pre.n_fast_modes, pre.n_slow_modes,
            pre.layers,
        )
        self.gamma = spaces.compute_gamma(self.cem, self.slow, self.dp.M)
        dt, n = pre.dt, pre.n_steps
        ref = steppers.run_transient(
            steppers.FineBackwardEuler(self.dp, dt), n_steps=n
        )
        assert ref.status == "complete"
        M, A = self.dp.M, self.dp.A
        self.rel_l2 = {}
        self.rel_energy = {}
        self.max_newton = {"fine_be": max(ref.newton_iterations[1:])}
        self.final_fields = {"fine_be": ref.final_field()}
        run_list = [
            ("cem", steppers.ImplicitReduced(self.dp, self.cem, dt, name="cem")),
            ("cem_plus", steppers.ImplicitReduced(
                self.dp, spaces.direct_sum(self.cem, self.slow), dt,
                name="cem_plus")),
            ("pexp", steppers.PartiallyExplicit(
                self.dp, self.cem, self.slow, dt, g_mode=pre.g_mode)),
        ]
        for nm, stepper in run_list:
            traj = steppers.run_transient(stepper, n_steps=n)
            assert traj.status == "complete", f"{name}/{nm}: {traj.status}"
            rl2 = np.empty(n)
            ren = np.empty(n)
            for k in range(1, n + 1):
                e = ref.fields[k] - traj.fields[k]
                r = ref.fields[k]
                rl2[k - 1] = np.sqrt((e @ (M @ e)) / (r @ (M @ r)))
                ren[k - 1] = np.sqrt((e @ (A @ e)) / (r @ (A @ r)))
            self.rel_l2[nm] = rl2
            self.rel_energy[nm] = ren
            self.max_newton[nm] = max(traj.newton_iterations[1:])
            self.final_fields[nm] = traj.final_field()


@pytest.fixture(scope="session")
def preset_runs():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = PresetRun(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def e1_spaces_l3():
    """Preset E1 coefficient field with the L=3, J=1, layers=2 space build."""
    import time

    pre = problems.preset("E1")
    grid = build_grids(pre.nc, pre.nf)
    spec = pre.build_spec()
    t0 = time.time()
    cem, slow, aux, aux2 = spaces.build_space_pair(grid, spec.kappa, 3, 1, 2)
    return dict(grid=grid, spec=spec, cem=cem, slow=slow, aux=aux, aux2=aux2,
                build_seconds=time.time() - t0)
