"""Batch front end: config parsing, initial data, run/verify/sweep commands.

A run is fully specified by one config file plus a seed.  The config format
is flat sectioned key-value text::

    [model]
    potential = g1          # g1 | g2 | g3
    c = 1.0
    u = 0.0
    o_star = 0.0            # defaults: 0/1 for g1,g3 and 0.05/0.95 for g2
    iota_star = 1.0
    mobility = kobayashi    # kobayashi | constant
    kappa = 0.01            # safeguard floor (kobayashi)
    a0 = 1.0                # constant mobility values
    a = 1.0
    b = 1.0

    [grid]
    dim = 1
    shape = 64              # or 32x32 for dim = 2
    dx = 1.0

    [scheme]
    h_frac = 0.5            # h as a fraction of h*; or give h directly
    nu = 0.1
    n_steps = 100
    record_every = 10
    # optional solver tolerances: outer_tol, inner_tol, gap_tol

    [init]
    kind = random           # wells | random | grains
    seed = 1234
    amplitude = 0.8
    n_grains = 4

    [output]
    directory = out
    formats = csv           # csv or csv,raw

Lines starting with ``#`` and inline ``#`` comments are ignored; values may
be quoted.  Subcommands: run, verify, sweep-nu, probe-contraction.  Exit
status is nonzero when a requested check fails.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from .grid import GridSpec, PhaseState, ScalarField, save_field, save_field_raw
from .model import MobilityKind, MobilitySpec, ModelSpec, Potential, PotentialSpec
from .scheme import SchemeParams, h_star, run as scheme_run, validate_initial
from .thetastep import ThetaStepParams
from .verify import (
    check_box,
    check_dissipation,
    check_energy_bound,
    check_gamma_sandwich,
    check_linfty,
    check_theta_oracle,
    nu_limit_study,
    random_admissible_v,
    random_grains_field,
    random_smooth_field,
)
from .vstep import VStepParams, v_step

__all__ = ["RunConfig", "parse_config", "make_initial", "main"]


class ConfigError(ValueError):
    pass


class RunConfig:
    """Parsed config: section dicts plus a digest of the canonical text
    (the init seed is kept out of the digest and reported alongside it)."""

    def __init__(self, sections, path="<memory>"):
        self.sections = sections
        self.path = path

    def get(self, section, key, default=None, cast=str):
        try:
            raw = self.sections[section][key]
        except KeyError:
            if default is not None or self._optional(section, key):
                return default
            raise ConfigError(f"{section}.{key}: missing required key") from None
        try:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({err})") from None

    @staticmethod
    def _optional(section, key):
        return True  # presence errors are raised by callers passing default=None

    def has(self, section, key):
        return section in self.sections and key in self.sections[section]

    @property
    def digest(self) -> str:
        """Hash of the canonicalized mathematical configuration (the output
        section and the seed identify nothing about the computation)."""
        lines = []
        for sec in sorted(self.sections):
            if sec == "output":
                continue
            for key in sorted(self.sections[sec]):
                if (sec, key) == ("init", "seed"):
                    continue
                lines.append(f"{sec}.{key}={self.sections[sec][key]}")
        blob = "\n".join(lines).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return self.get("init", "seed", default=0, cast=int)


def parse_config(path) -> RunConfig:
    sections = {}
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip().lower()
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            if current is None:
                raise ConfigError(f"{path}:{lineno}: key outside any [section]")
            key, value = (t.strip() for t in line.split("=", 1))
            value = value.strip("\"'")
            sections[current][key.lower()] = value
    return RunConfig(sections, path=str(path))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_model(cfg: RunConfig) -> ModelSpec:
    try:
        setting = Potential.from_token(cfg.get("model", "potential", default="g1"))
    except ValueError as err:
        raise ConfigError(f"model section: {err}") from None
    if setting is Potential.LOGARITHMIC:
        o_def, i_def = 0.05, 0.95
    else:
        o_def, i_def = 0.0, 1.0
    try:
        potential = PotentialSpec(
            setting=setting,
            c=cfg.get("model", "c", default=1.0, cast=float),
            u=cfg.get("model", "u", default=0.0, cast=float),
            o_star=cfg.get("model", "o_star", default=o_def, cast=float),
            iota_star=cfg.get("model", "iota_star", default=i_def, cast=float),
        )
        kind = MobilityKind.from_token(cfg.get("model", "mobility", default="kobayashi"))
        mobility = MobilitySpec(
            kind=kind,
            kappa=cfg.get("model", "kappa", default=1e-2, cast=float),
            a0=cfg.get("model", "a0", default=1.0, cast=float),
            a=cfg.get("model", "a", default=1.0, cast=float),
            b=cfg.get("model", "b", default=1.0, cast=float),
        )
    except ValueError as err:
        raise ConfigError(f"model section: {err}") from None
    return ModelSpec(potential, mobility)


def build_grid(cfg: RunConfig) -> GridSpec:
    dim = cfg.get("grid", "dim", default=1, cast=int)
    shape_tok = cfg.get("grid", "shape", default=None)
    if shape_tok is None:
        raise ConfigError("grid.shape: missing required key")
    shape = tuple(int(t) for t in shape_tok.lower().split("x"))
    try:
        return GridSpec(dim, shape, cfg.get("grid", "dx", default=1.0, cast=float))
    except ValueError as err:
        raise ConfigError(f"grid section: {err}") from None


def build_scheme_params(cfg: RunConfig, model: ModelSpec, override_h_gate=False) -> SchemeParams:
    has_h = cfg.has("scheme", "h")
    has_frac = cfg.has("scheme", "h_frac")
    if has_h == has_frac:
        raise ConfigError("scheme: give exactly one of h / h_frac")
    if has_h:
        h = cfg.get("scheme", "h", cast=float)
    else:
        frac = cfg.get("scheme", "h_frac", cast=float)
        if not (0.0 < frac < 1.0):
            raise ConfigError(f"scheme.h_frac: must be in (0, 1), got {frac}")
        h = frac * h_star(model)
    vstep = VStepParams(
        h=h,
        outer_tol=cfg.get("scheme", "outer_tol", default=None, cast=float),
        inner_tol=cfg.get("scheme", "inner_tol", default=None, cast=float),
    )
    theta = ThetaStepParams(
        h=h,
        gap_tol=cfg.get("scheme", "gap_tol", default=1e-10, cast=float),
    )
    return SchemeParams(
        h=h,
        nu=cfg.get("scheme", "nu", default=0.0, cast=float),
        n_steps=cfg.get("scheme", "n_steps", default=1, cast=int),
        record_every=cfg.get("scheme", "record_every", default=1, cast=int),
        override_h_gate=override_h_gate or cfg.get("scheme", "override_h_gate",
                                                   default=False, cast=bool),
        vstep=vstep,
        thetastep=theta,
    )


def make_initial(kind: str, grid: GridSpec, model: ModelSpec, seed: int,
                 amplitude: float = 0.8, n_grains: int = 4) -> PhaseState:
    """Admissible initial data: 'wells' (constants at a well bottom),
    'random' (smooth seeded fields inside the boxes), or 'grains' (piecewise
    constant orientation on Voronoi cells, order parameters near 1)."""
    rng = np.random.default_rng(seed)
    o, i = model.o_star, model.iota_star
    kind = kind.strip().lower()
    if kind == "wells":
        w = ScalarField(grid, np.full(grid.shape, i))
        e = ScalarField(grid, np.ones(grid.shape))
        th = ScalarField(grid, np.zeros(grid.shape))
    elif kind == "random":
        w, e = random_admissible_v(grid, model, rng)
        th = random_smooth_field(grid, rng, amplitude=amplitude)
    elif kind == "grains":
        th = random_grains_field(grid, rng, n_grains=n_grains, amplitude=amplitude)
        w = ScalarField(grid, np.full(grid.shape, o + 0.95 * (i - o)))
        e = ScalarField(grid, np.full(grid.shape, 0.95))
    else:
        raise ConfigError(f"init.kind: unknown kind {kind!r}")
    state = PhaseState(w, e, th)
    report = validate_initial(state, model, nu=1.0)
    bad = [c for c in report.failures() if not c.name.startswith("mobility floor")]
    if bad:
        raise ConfigError("generated initial data failed validation:\n" + str(report))
    return state


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------

ENERGY_COLUMNS = ("step,t,dirichlet_v,gamma,g,wtv,nu_dirichlet,total,diss_v,"
                  "diss_theta,v_outer_iters,theta_iters,max_box_violation,linf_theta")


class OutputSink:
    """Writes the energy log as rows arrive and field snapshots on record
    steps.  Numbers are written with repr so re-parsing is bitwise exact."""

    def __init__(self, outdir, digest, seed, formats=("csv",)):
        self.outdir = outdir
        self.digest = digest
        self.seed = seed
        self.formats = formats
        os.makedirs(outdir, exist_ok=True)
        self.energy_path = os.path.join(outdir, "energy.csv")
        self._fh = open(self.energy_path, "w")
        self._fh.write(f"# config {digest} seed {seed}\n")
        self._fh.write(ENERGY_COLUMNS + "\n")

    def write_initial(self, state: PhaseState, energy):
        self._row(0, 0.0, energy, 0.0, 0.0, 0, 0, 0.0,
                  float(np.abs(state.theta.values).max()))
        self.snapshot(0, state)

    def on_step(self, rep, energy):
        self._row(rep.step, rep.t, energy, rep.diss_v, rep.diss_theta,
                  rep.v_outer_iters, rep.theta_iters, rep.box_violation,
                  rep.linf_theta)

    def _row(self, step, t, energy, diss_v, diss_theta, v_outer, theta_iters,
             box, linf):
        cells = [str(step), repr(t), repr(energy.dirichlet_v), repr(energy.gamma_term),
                 repr(energy.g_term), repr(energy.wtv_term),
                 repr(energy.nu_dirichlet_term), repr(energy.total), repr(diss_v),
                 repr(diss_theta), str(v_outer), str(theta_iters), repr(box),
                 repr(linf)]
        self._fh.write(",".join(cells) + "\n")

    def on_snapshot(self, step, state: PhaseState):
        self.snapshot(step, state)

    def snapshot(self, step, state: PhaseState):
        header = (f"config {self.digest} seed {self.seed} step {step}",)
        for name, fld in (("w", state.w), ("eta", state.eta), ("theta", state.theta)):
            base = os.path.join(self.outdir, f"step_{step:06d}_{name}")
            if "csv" in self.formats:
                save_field(base + ".csv", fld, extra_header_lines=header)
            if "raw" in self.formats:
                save_field_raw(base + ".raw", fld,
                               extra_meta_lines=[f"config = {self.digest}",
                                                 f"seed = {self.seed}",
                                                 f"step = {step}"])

    def close(self):
        self._fh.close()


def _write_checks_csv(path, digest, seed, results):
    with open(path, "w") as fh:
        fh.write(f"# config {digest} seed {seed}\n")
        fh.write("name,passed,worst_violation,tolerance,context\n")
        for r in results:
            fh.write(f"\"{r.name}\",{int(r.passed)},{r.worst_violation!r},"
                     f"{r.tolerance!r},\"{r.context}\"\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _setup(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.sections.setdefault("init", {})["seed"] = str(args.seed)
    if args.out is not None:
        cfg.sections.setdefault("output", {})["directory"] = args.out
    model = build_model(cfg)
    grid = build_grid(cfg)
    params = build_scheme_params(cfg, model, override_h_gate=args.override_h_gate)
    outdir = cfg.get("output", "directory", default="out")
    formats = tuple(
        t.strip() for t in cfg.get("output", "formats", default="csv").split(",")
    )
    return cfg, model, grid, params, outdir, formats


def _initial_state(cfg, grid, model):
    return make_initial(
        cfg.get("init", "kind", default="random"),
        grid,
        model,
        seed=cfg.seed,
        amplitude=cfg.get("init", "amplitude", default=0.8, cast=float),
        n_grains=cfg.get("init", "n_grains", default=4, cast=int),
    )


def cmd_run(args) -> int:
    cfg, model, grid, params, outdir, formats = _setup(args)
    state = _initial_state(cfg, grid, model)
    sink = OutputSink(outdir, cfg.digest, cfg.seed, formats)
    try:
        from .energy import free_energy

        sink.write_initial(state, free_energy(state, model, params.nu))
        traj = scheme_run(state, model, params, sink=sink)
    finally:
        sink.close()
    flag = " (outside theorem hypotheses)" if traj.outside_hypotheses else ""
    print(f"run complete: {traj.n_steps} steps, final energy "
          f"{traj.energies[-1].total:.6e}{flag}")
    print(f"energy log: {sink.energy_path}")
    return 0


def cmd_verify(args) -> int:
    cfg, model, grid, params, outdir, formats = _setup(args)
    state = _initial_state(cfg, grid, model)
    sink = OutputSink(outdir, cfg.digest, cfg.seed, formats)
    try:
        from .energy import free_energy

        sink.write_initial(state, free_energy(state, model, params.nu))
        traj = scheme_run(state, model, params, sink=sink)
    finally:
        sink.close()
    results = [
        check_dissipation(traj),
        check_box(traj),
        check_linfty(traj),
        check_energy_bound(traj, model, grid),
    ]
    if model.mobility.delta1 > 0:
        results.append(check_gamma_sandwich(model, params.nu, n_samples=100,
                                            seed=cfg.seed))
    n_oracle = cfg.get("verify", "n_oracle", default=6, cast=int)
    results.append(check_theta_oracle(n_instances=n_oracle, seed=cfg.seed))
    _write_checks_csv(os.path.join(outdir, "checks.csv"), cfg.digest, cfg.seed, results)
    for r in results:
        print(r)
    return 0 if all(r.passed for r in results) else 1


def cmd_sweep_nu(args) -> int:
    cfg, model, grid, params, outdir, formats = _setup(args)
    state = _initial_state(cfg, grid, model)
    if cfg.has("sweep", "nus"):
        schedule = [float(t) for t in cfg.get("sweep", "nus").split(",")]
    else:
        schedule = [2.0**-k for k in range(1, 9)]
    report = nu_limit_study(state, model, schedule, params)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "sweep.csv")
    with open(path, "w") as fh:
        fh.write(f"# config {cfg.digest} seed {cfg.seed}\n")
        fh.write("nu,nu_dirichlet_aggregate,wtv_aggregate\n")
        for nu, agg, wtv in zip(report.nus, report.nu_dirichlet_aggregates,
                                report.wtv_aggregates):
            fh.write(f"{nu!r},{agg!r},{wtv!r}\n")
    print(report)
    print(f"sweep table: {path}")
    return 0 if report.passed else 1


def cmd_probe_contraction(args) -> int:
    cfg, model, grid, params, outdir, formats = _setup(args)
    n_probes = cfg.get("probe", "n_probes", default=20, cast=int)
    hs = h_star(model)
    bound = params.h * model.c2_norm * (1.0 + 1e-6)
    os.makedirs(outdir, exist_ok=True)
    rows = []
    ok = True
    tight = VStepParams(h=params.h, inner_tol=1e-13 * np.sqrt(grid.volume))
    for j in range(n_probes):
        seed = cfg.seed + j
        st = make_initial("random", grid, model, seed=seed)
        _, rep = v_step((st.w, st.eta), st.theta, model, params.nu, tight)
        rows.append((params.h, seed, rep.final_contraction_ratio, bound, False))
        ok = ok and rep.final_contraction_ratio <= bound
    if args.override_h_gate:
        h_big = 2.0 * hs
        big = VStepParams(h=h_big, inner_tol=1e-13 * np.sqrt(grid.volume),
                          max_outer=2000)
        for j in range(max(3, n_probes // 4)):
            seed = cfg.seed + 1000 + j
            st = make_initial("random", grid, model, seed=seed)
            _, rep = v_step((st.w, st.eta), st.theta, model, params.nu, big)
            rows.append((h_big, seed, rep.final_contraction_ratio,
                         h_big * model.c2_norm, True))
    path = os.path.join(outdir, "contraction.csv")
    with open(path, "w") as fh:
        fh.write(f"# config {cfg.digest} seed {cfg.seed}\n")
        fh.write("h,seed,measured_ratio,guarantee_hL,outside_hypotheses\n")
        for h, seed, ratio, guard, flagged in rows:
            fh.write(f"{h!r},{seed},{ratio!r},{guard!r},{int(flagged)}\n")
    for h, seed, ratio, guard, flagged in rows:
        tag = "probe(out-of-hypothesis)" if flagged else "probe"
        note = " exceeds guarantee" if ratio > guard else ""
        print(f"{tag}: h={h:.6g} seed={seed} ratio={ratio:.6g} "
              f"guarantee={guard:.6g}{note}")
    print(f"contraction table: {path}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="grainflow",
        description="Batch solver and verification harness for the coupled "
                    "phase-field / weighted-TV grain boundary system.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", cmd_run),
        ("verify", cmd_verify),
        ("sweep-nu", cmd_sweep_nu),
        ("probe-contraction", cmd_probe_contraction),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--override-h-gate", action="store_true")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
