"""Command line interface.

Subcommands: run (transient comparison), stability (space analysis
only), kappa (field generate/inspect), sweep (parameter sweeps).  Runs
are configured by an INI file; every artifact a run writes is
deterministic for a fixed config (12 significant digits in CSVs).
"""

import argparse
import configparser
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, fieldio, problems, spaces, stability, steppers
from .exceptions import ConfigError
from .grid import build_grids

_FMT = "%.12g"
REDUCED_SCHEMES = ("cem", "cem_plus", "pexp")
ALL_SCHEMES = ("fine_be", "fine_fe") + REDUCED_SCHEMES


class RunConfig:
    """Resolved configuration for one run."""

    def __init__(self):
        self.nc = 10
        self.nf = 100
        self.preset = None
        self.kappa_file = None
        self.kappa_seed = 11
        self.kappa_channels = 6
        self.kappa_complexity = "simple"
        self.contrast = 1e4
        self.source = "singular"
        self.source_file = None
        self.source_magnitude = 1000.0
        self.reaction = "none"
        self.reaction_scale = 10.0
        self.alpha = "linear"
        self.fast_modes = 3
        self.slow_modes = 1
        self.layers = 2
        self.weight_variant = "h2"
        self.dt = 1e-4
        self.t_final = 0.05
        self.schemes = ("fine_be",)
        self.reference = "fine_be"
        self.g_mode = "fully_explicit"
        self.snapshot_stride = 0
        self.newton = steppers.NewtonConfig()
        self.config_text = ""

    @property
    def needs_spaces(self):
        return any(s in REDUCED_SCHEMES for s in self.schemes)


def _get(cp, section, key, cast, default):
    if cp.has_option(section, key):
        raw = cp.get(section, key)
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {cast.__name__}")
    return default


def load_config(path, seed_override=None):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as f:
        text = f.read()
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}")
    cfg = RunConfig()
    cfg.config_text = text

    preset_name = _get(cp, "problem", "preset", str, None)
    if preset_name:
        pre = problems.preset(preset_name)
        cfg.preset = pre.name
        cfg.nc, cfg.nf = pre.nc, pre.nf
        cfg.dt, cfg.t_final = pre.dt, pre.t_final
        cfg.reaction = pre.reaction_kind
        cfg.alpha = pre.alpha
        cfg.source = pre.source_kind
        cfg.g_mode = pre.g_mode
        cfg.fast_modes = pre.n_fast_modes
        cfg.slow_modes = pre.n_slow_modes
        cfg.layers = pre.layers
        cfg.schemes = pre.schemes
        kp = problems._SIMPLE_KAPPA if pre.kappa_kind == "simple" else problems._COMPLEX_KAPPA
        cfg.kappa_seed = kp["seed"]
        cfg.kappa_channels = kp["n_channels"]
        cfg.kappa_complexity = kp["complexity"]

    cfg.nc = _get(cp, "grid", "nc", int, cfg.nc)
    cfg.nf = _get(cp, "grid", "nf", int, cfg.nf)
    cfg.kappa_file = _get(cp, "problem", "kappa_file", str, cfg.kappa_file)
    cfg.kappa_seed = _get(cp, "problem", "kappa_seed", int, cfg.kappa_seed)
    cfg.kappa_channels = _get(cp, "problem", "kappa_channels", int, cfg.kappa_channels)
    cfg.kappa_complexity = _get(cp, "problem", "kappa_complexity", str, cfg.kappa_complexity)
    cfg.contrast = _get(cp, "problem", "contrast", float, cfg.contrast)
    cfg.source = _get(cp, "problem", "source", str, cfg.source)
    cfg.source_file = _get(cp, "problem", "source_file", str, cfg.source_file)
    cfg.source_magnitude = _get(cp, "problem", "source_magnitude", float, cfg.source_magnitude)
    cfg.reaction = _get(cp, "problem", "reaction", str, cfg.reaction)
    cfg.reaction_scale = _get(cp, "problem", "reaction_scale", float, cfg.reaction_scale)
    cfg.alpha = _get(cp, "problem", "alpha", str, cfg.alpha)
    cfg.fast_modes = _get(cp, "spaces", "fast_modes", int, cfg.fast_modes)
    cfg.slow_modes = _get(cp, "spaces", "slow_modes", int, cfg.slow_modes)
    cfg.layers = _get(cp, "spaces", "layers", int, cfg.layers)
    cfg.weight_variant = _get(cp, "spaces", "weight_variant", str, cfg.weight_variant)
    cfg.dt = _get(cp, "time", "dt", float, cfg.dt)
    cfg.t_final = _get(cp, "time", "t_final", float, cfg.t_final)
    if cp.has_option("run", "schemes"):
        cfg.schemes = tuple(
            s.strip() for s in cp.get("run", "schemes").split(",") if s.strip()
        )
    cfg.reference = _get(cp, "run", "reference", str, cfg.reference)
    cfg.g_mode = _get(cp, "run", "g_mode", str, cfg.g_mode)
    cfg.snapshot_stride = _get(cp, "run", "snapshot_stride", int, cfg.snapshot_stride)
    cfg.newton = steppers.NewtonConfig(
        max_iter=_get(cp, "newton", "max_iter", int, 25),
        atol=_get(cp, "newton", "atol", float, 1e-10),
        rtol=_get(cp, "newton", "rtol", float, 1e-10),
    )
    if seed_override is not None:
        cfg.kappa_seed = seed_override

    if not cfg.schemes:
        raise ConfigError("scheme set must not be empty")
    for s in cfg.schemes:
        if s not in ALL_SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}; options: {', '.join(ALL_SCHEMES)}")
    if cfg.reference not in ALL_SCHEMES:
        raise ConfigError(f"unknown reference scheme {cfg.reference!r}")
    for fpath in (cfg.kappa_file, cfg.source_file):
        if fpath is not None and not os.path.exists(fpath):
            raise ConfigError(f"referenced file does not exist: {fpath}")
    steppers.resolve_steps(cfg.dt, t_final=cfg.t_final)
    return cfg


def build_problem(cfg):
    grid = build_grids(cfg.nc, cfg.nf)
    if cfg.kappa_file:
        kappa = problems.load_kappa(cfg.kappa_file, nf=cfg.nf)
    else:
        kappa = problems.generate_channel_kappa(
            cfg.nf, cfg.kappa_seed, cfg.contrast, cfg.kappa_channels,
            cfg.kappa_complexity,
        )
    if cfg.source_file:
        arr = fieldio.read_matrix(cfg.source_file)
        if arr.shape[0] != cfg.nf:
            raise ConfigError(
                f"{cfg.source_file}: source is {arr.shape[0]}x{arr.shape[1]}, "
                f"expected {cfg.nf}x{cfg.nf}"
            )
        g0 = fieldio.grid_to_cellfield(arr)
    elif cfg.source == "none":
        g0 = np.zeros(grid.n_cells)
    else:
        g0 = problems.make_source(cfg.nf, cfg.source, magnitude=cfg.source_magnitude)
    a1 = problems.make_oscillation(cfg.nf) if cfg.reaction == "cosine" else None
    spec = problems.ProblemSpec(kappa, reaction=cfg.reaction, g0=g0,
                                alpha=cfg.alpha, reaction_scale=cfg.reaction_scale,
                                a1=a1)
    return grid, problems.DiscreteProblem(grid, spec)


def build_run_spaces(cfg, grid, dp):
    cem, slow, aux, aux2 = spaces.build_space_pair(
        grid, dp.kappa, cfg.fast_modes, cfg.slow_modes, cfg.layers,
        cfg.weight_variant,
    )
    return cem, slow


def make_stepper(name, cfg, dp, cem, slow):
    if name == "fine_be":
        return steppers.FineBackwardEuler(dp, cfg.dt, cfg.newton)
    if name == "fine_fe":
        return steppers.FineForwardEuler(dp, cfg.dt)
    if name == "cem":
        return steppers.ImplicitReduced(dp, cem, cfg.dt, cfg.newton, name="cem")
    if name == "cem_plus":
        return steppers.ImplicitReduced(dp, spaces.direct_sum(cem, slow), cfg.dt,
                                        cfg.newton, name="cem_plus")
    if name == "pexp":
        return steppers.PartiallyExplicit(dp, cem, slow, cfg.dt, cfg.newton,
                                          cfg.g_mode)
    raise ConfigError(f"unknown scheme {name!r}")


def error_series(traj, ref, dp):
    """Relative L2 and energy error against the reference trajectory."""
    M, A = dp.M, dp.A
    n = min(len(traj.fields), len(ref.fields))
    rows = []
    for k in range(1, n):
        e = ref.fields[k] - traj.fields[k]
        r = ref.fields[k]
        rl2 = np.sqrt(max(e @ (M @ e), 0.0) / max(r @ (M @ r), 1e-300))
        ren = np.sqrt(max(e @ (A @ e), 0.0) / max(r @ (A @ r), 1e-300))
        rows.append((k, k * traj.dt, rl2, ren))
    return rows


def _module_versions():
    import scipy

    from . import kernels

    parts = [f"numpy {np.__version__}", f"scipy {scipy.__version__}"]
    if kernels.USING_NUMBA:
        import numba
        parts.append(f"numba {numba.__version__}")
    else:
        parts.append("numba off")
    return ", ".join(parts)


def _write_manifest(outdir, cfg, status, outputs, notes=()):
    h = hashlib.sha256(cfg.config_text.encode()).hexdigest()
    with open(os.path.join(outdir, "MANIFEST"), "w") as f:
        f.write(f"package: mspex {__version__}\n")
        f.write(f"modules: {_module_versions()}\n")
        f.write(f"config_hash: {h}\n")
        f.write(f"status: {status}\n")
        f.write(f"schemes: {','.join(cfg.schemes)}\n")
        f.write(f"outputs: {','.join(outputs)}\n")
        for note in notes:
            f.write(f"note: {note}\n")


def cmd_run(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    grid, dp = build_problem(cfg)
    cem = slow = None
    if cfg.needs_spaces:
        cem, slow = build_run_spaces(cfg, grid, dp)
    n_steps = steppers.resolve_steps(cfg.dt, t_final=cfg.t_final)

    outputs, notes = [], []
    status = "complete"
    trajectories = {}
    gamma = spaces.compute_gamma(cem, slow, dp.M) if cem is not None else 0.0

    order = [cfg.reference] + [s for s in cfg.schemes if s != cfg.reference]
    for name in order:
        try:
            st = make_stepper(name, cfg, dp, cem, slow)
            traj = steppers.run_transient(st, n_steps=n_steps)
            trajectories[name] = traj
            if traj.status != "complete":
                notes.append(f"scheme {name}: {traj.status} at step {traj.failed_step}")
                status = "partial"
        except Exception as err:  # noqa: BLE001 - per-scheme isolation
            notes.append(f"scheme {name} failed: {err}")
            status = "partial"

    ref = trajectories.get(cfg.reference)
    err_path = os.path.join(outdir, "errors.csv")
    with open(err_path, "w") as f:
        f.write("step,t,scheme,rel_l2,rel_energy\n")
        for name in cfg.schemes:
            traj = trajectories.get(name)
            if traj is None or ref is None:
                continue
            for k, t, rl2, ren in error_series(traj, ref, dp):
                f.write(f"{k},{_FMT % t},{name},{_FMT % rl2},{_FMT % ren}\n")
    outputs.append("errors.csv")

    en_path = os.path.join(outdir, "energy.csv")
    with open(en_path, "w") as f:
        f.write("step,t,scheme,dirichlet_energy,reaction_energy,lyapunov\n")
        for name in cfg.schemes:
            traj = trajectories.get(name)
            if traj is None:
                continue
            sp_pair = (cem, slow) if name == "pexp" else None
            trace = stability.track_energy(traj, dp, cfg.dt, gamma, sp_pair)
            for n in range(len(trace.ts)):
                f.write(f"{n},{_FMT % trace.ts[n]},{name},"
                        f"{_FMT % trace.dirichlet[n]},{_FMT % trace.reaction[n]},"
                        f"{_FMT % trace.lyapunov[n]}\n")
    outputs.append("energy.csv")

    if cem is not None:
        rep = stability.build_stability_report(dp, cem, slow, cfg.dt)
        with open(os.path.join(outdir, "stability_report.txt"), "w") as f:
            f.write(rep.to_text())
        outputs.append("stability_report.txt")

    if cfg.snapshot_stride > 0:
        for name, traj in trajectories.items():
            for n in range(0, len(traj.fields), cfg.snapshot_stride):
                p = os.path.join(outdir, f"snapshot_{name}_{n:06d}.txt")
                fieldio.write_node_field(p, grid, traj.fields[n])
                outputs.append(os.path.basename(p))

    _write_manifest(outdir, cfg, status, outputs, notes)
    return 0 if status == "complete" else 1


def cmd_stability(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    grid, dp = build_problem(cfg)
    cem, slow = build_run_spaces(cfg, grid, dp)
    rep = stability.build_stability_report(dp, cem, slow, cfg.dt)
    path = os.path.join(outdir, "stability_report.txt")
    with open(path, "w") as f:
        f.write(rep.to_text())
    _write_manifest(cfg=cfg, outdir=outdir, status="complete",
                    outputs=["stability_report.txt"])
    print(rep.to_text(), end="")
    return 0


def cmd_kappa_generate(args):
    field = problems.generate_channel_kappa(
        args.nf, args.seed, args.contrast, args.channels, args.complexity
    )
    fieldio.write_matrix(args.out, fieldio.cellfield_to_grid(field, args.nf))
    print(f"wrote {args.out} ({args.nf}x{args.nf}, contrast {args.contrast:g})")
    return 0


def cmd_kappa_inspect(path):
    field = problems.load_kappa(path)
    mn, mx = float(field.min()), float(field.max())
    frac = float(np.mean(field > mn)) if mx > mn else 0.0
    print(f"min = {_FMT % mn}")
    print(f"max = {_FMT % mx}")
    print(f"contrast = {_FMT % (mx / mn)}")
    print(f"channel_fraction = {_FMT % frac}")
    return 0


def _sweep_value(args):
    cfg_path, axis, value, outdir, seed = args
    cfg = load_config(cfg_path, seed_override=seed)
    if axis == "contrast":
        cfg.contrast = float(value)
    elif axis == "dt":
        cfg.dt = float(value)
        n = max(1, int(round(cfg.t_final / cfg.dt)))
        cfg.t_final = n * cfg.dt
    elif axis == "layers":
        cfg.layers = int(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    row = {"axis": axis, "value": value, "status": "ok"}
    try:
        grid, dp = build_problem(cfg)
        cem, slow = build_run_spaces(cfg, grid, dp)
        rep = stability.build_stability_report(dp, cem, slow, cfg.dt)
        for k in stability.StabilityReport.FIELDS:
            row[k] = getattr(rep, k)
        n_steps = steppers.resolve_steps(cfg.dt, t_final=cfg.t_final)
        ref = None
        for name in [cfg.reference] + [s for s in cfg.schemes if s != cfg.reference]:
            st = make_stepper(name, cfg, dp, cem, slow)
            traj = steppers.run_transient(st, n_steps=n_steps)
            if name == cfg.reference:
                ref = traj
            row[f"status_{name}"] = traj.status
            if traj.status == "complete" and ref is not None and name in cfg.schemes:
                series = error_series(traj, ref, dp)
                if series:
                    row[f"final_rel_l2_{name}"] = series[-1][2]
                    row[f"final_rel_energy_{name}"] = series[-1][3]
    except Exception as err:  # noqa: BLE001 - recorded per row
        row["status"] = f"error: {err}"
    return row


def cmd_sweep(cfg_path, outdir, axis, values, threads, seed):
    cfg = load_config(cfg_path, seed_override=seed)  # validate early
    os.makedirs(outdir, exist_ok=True)
    tasks = [(cfg_path, axis, v, outdir, seed) for v in values]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_value, tasks))
    else:
        rows = [_sweep_value(t) for t in tasks]
    keys = ["axis", "value", "status"] + list(stability.StabilityReport.FIELDS)
    extra = sorted({k for row in rows for k in row} - set(keys))
    keys += extra
    path = os.path.join(outdir, "sweep.csv")
    with open(path, "w") as f:
        f.write(",".join(keys) + "\n")
        for row in rows:
            out = []
            for k in keys:
                v = row.get(k, "")
                if isinstance(v, bool):
                    v = "PASS" if v else "FAIL"
                elif isinstance(v, float):
                    v = _FMT % v
                out.append(str(v))
            f.write(",".join(out) + "\n")
    _write_manifest(outdir, cfg, "complete", ["sweep.csv"])
    print(f"wrote {path}")
    return 0


def main(argv=None):
    p = argparse.ArgumentParser(prog="mspex",
                                description="partially explicit multiscale solver")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run configured schemes, write error/energy CSVs")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--threads", type=int, default=1)
    pr.add_argument("--seed", type=int, default=None)

    ps = sub.add_parser("stability", help="build spaces and report stability quantities")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--seed", type=int, default=None)

    pk = sub.add_parser("kappa", help="generate or inspect coefficient fields")
    ksub = pk.add_subparsers(dest="kappa_command", required=True)
    kg = ksub.add_parser("generate")
    kg.add_argument("--out", required=True)
    kg.add_argument("--nf", type=int, default=100)
    kg.add_argument("--seed", type=int, default=0)
    kg.add_argument("--contrast", type=float, default=1e4)
    kg.add_argument("--channels", type=int, default=6)
    kg.add_argument("--complexity", default="simple", choices=["simple", "complex"])
    ki = ksub.add_parser("inspect")
    ki.add_argument("path")

    pw = sub.add_parser("sweep", help="stability/error rows over a parameter axis")
    pw.add_argument("--config", required=True)
    pw.add_argument("--out", required=True)
    pw.add_argument("--axis", required=True, choices=["contrast", "dt", "layers"])
    pw.add_argument("--values", required=True,
                    help="comma-separated axis values")
    pw.add_argument("--threads", type=int, default=1)
    pw.add_argument("--seed", type=int, default=None)

    args = p.parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config, seed_override=args.seed)
            return cmd_run(cfg, args.out)
        if args.command == "stability":
            cfg = load_config(args.config, seed_override=args.seed)
            return cmd_stability(cfg, args.out)
        if args.command == "kappa":
            if args.kappa_command == "generate":
                return cmd_kappa_generate(args)
            return cmd_kappa_inspect(args.path)
        if args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            return cmd_sweep(args.config, args.out, args.axis, values,
                             args.threads, args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
