"""Command-line front end.

Grammar: matchctl <command> --config <path> [--out <dir>] [--seed <u64>].
Exit codes are a stable contract: 0 success, 1 a verification or
simulation failed, 2 the configuration is invalid.  All randomness is
seeded and all report formatting is fixed-width decimal, so identical
configs and seeds give byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import (COMMANDS, RunConfig, load_config, override_key,
                     parse_config, with_overrides)
from .errors import BlowUpError, ConfigError, MatchctlError
from .geometry import State
from .matching import (RatioField, matching_residual, rank_condition,
                       transport_residual)
from .synthesis import (linearize_closed_loop, lyapunov_audit,
                        matched_controller, shaped_energy, simulate,
                        trajectory_csv)
from .systems.rigidity import basic_jet_residual, rigidity_probe


def _emit(cfg: RunConfig, name: str, text: str) -> None:
    sys.stdout.write(text)
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        with open(os.path.join(cfg.output_dir, name), "w",
                  encoding="utf-8") as fh:
            fh.write(text)


def _sample_points(cfg: RunConfig, rng) -> np.ndarray:
    box = cfg.fixture.system.domain
    if box is not None:
        return box.sample(rng, cfg.run.samples)
    center = (cfg.run.center if cfg.run.center is not None
              else cfg.fixture.equilibrium)
    return center + rng.uniform(-cfg.run.radius, cfg.run.radius,
                                size=(cfg.run.samples, cfg.fixture.system.n))


def _offset_ratio(ratio: RatioField, offset: float) -> RatioField:
    """Corruption probe: shift one off-leading entry of the first row."""
    def val(x):
        r = ratio.value(x).copy()
        r[0, 1] += offset
        return r
    return RatioField(val, ratio.derivative)


def cmd_verify(cfg: RunConfig) -> int:
    run = cfg.run
    rng = np.random.default_rng(run.require_seed("verify"))
    bundle = cfg.fixture
    ratio = bundle.ratio
    if run.ratio_offset != 0.0:
        ratio = _offset_ratio(ratio, run.ratio_offset)
    points = _sample_points(cfg, rng)

    worst_t, where_t = -1.0, (0, 0, 0)
    at_t = None
    for x in points:
        res = np.abs(transport_residual(bundle.system, ratio, x))
        k = np.unravel_index(int(np.argmax(res)), res.shape)
        if res[k] > worst_t:
            worst_t, where_t, at_t = float(res[k]), k, x

    lines = ["fixture: %s" % bundle.name,
             "samples: %d  tolerance: %.3e" % (run.samples, run.tolerance),
             "transport residual: max %.6e at component (k=%d, a=%d, b=%d)"
             % (worst_t, where_t[0], where_t[1], where_t[2]),
             "  worst point: [%s]" % ", ".join("%.6f" % v for v in at_t)]
    worst = worst_t

    if bundle.target is not None:
        worst_m = -1.0
        for x in points:
            v = rng.standard_normal(bundle.system.n)
            res = np.max(np.abs(matching_residual(bundle.system, ratio,
                                                  bundle.target, State(x, v))))
            worst_m = max(worst_m, float(res))
        lines.append("matching residual: max %.6e over unactuated axes"
                     % worst_m)
        worst = max(worst, worst_m)

    if bundle.overlap is not None:
        worst_j = -1.0
        for x in points:
            worst_j = max(worst_j, basic_jet_residual(
                bundle.system, x, ratio, bundle.overlap))
        lines.append("jet residual: max %.6e" % worst_j)
        worst = max(worst, worst_j)

    ok = worst <= run.tolerance
    lines.append("verdict: %s (worst %.6e vs tolerance %.3e)"
                 % ("pass" if ok else "FAIL", worst, run.tolerance))
    _emit(cfg, "verify-report.txt", "\n".join(lines) + "\n")
    return 0 if ok else 1


def cmd_synthesize(cfg: RunConfig) -> int:
    ratio, target = cfg.resolved_target()
    bundle = cfg.fixture
    x_star = (cfg.run.center if cfg.run.center is not None
              else bundle.equilibrium)
    lin = linearize_closed_loop(bundle.system, target, x_star)
    lines = ["fixture: %s" % bundle.name,
             "rest point: [%s]" % ", ".join("%.6f" % v for v in x_star),
             "closed-loop spectrum:"]
    for ev in lin.spectrum:
        lines.append("  %+.9e %+.9ej" % (ev.real, ev.imag))
    lines.append("stable: %s" % ("yes" if lin.stable else "NO"))
    _emit(cfg, "synthesize-report.txt", "\n".join(lines) + "\n")
    return 0 if lin.stable else 1


def cmd_simulate(cfg: RunConfig) -> int:
    run = cfg.run
    bundle = cfg.fixture
    ratio, target = cfg.resolved_target()
    n = bundle.system.n
    x0 = (run.initial_position if run.initial_position is not None
          else bundle.equilibrium.copy())
    v0 = (run.initial_velocity if run.initial_velocity is not None
          else np.zeros(n))
    if run.perturbation > 0.0:
        rng = np.random.default_rng(run.require_seed("simulate"))
        nudge = rng.standard_normal(2 * n)
        nudge *= run.perturbation / np.linalg.norm(nudge)
        x0 = x0 + nudge[:n]
        v0 = v0 + nudge[n:]
    s0 = State(x0, v0)

    controller = matched_controller(bundle.system, target)
    try:
        plant = simulate(bundle.system, s0, run.horizon, run.dt,
                         controller=controller)
        reference = simulate(target, s0, run.horizon, run.dt)
    except BlowUpError as exc:
        last = np.concatenate((exc.state.x, exc.state.xdot))
        sys.stdout.write("blow-up at t=%.6g, last state [%s]\n"
                         % (exc.t, ", ".join("%.6e" % v for v in last)))
        return 1

    energy = lambda s: shaped_energy(target, s)
    deviation = float(np.max(np.abs(plant.states - reference.states)))
    audit = lyapunov_audit(target, plant)
    e0, e1 = audit.energies[0], audit.energies[-1]

    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        trajectory_csv(plant, energy,
                       os.path.join(cfg.output_dir, "plant.csv"))
        trajectory_csv(reference, energy,
                       os.path.join(cfg.output_dir, "target.csv"))
    lines = ["fixture: %s" % bundle.name,
             "dt: %.3e  horizon: %.3f  nodes: %d"
             % (run.dt, run.horizon, plant.times.size),
             "max |plant - target| deviation: %.6e" % deviation,
             "shaped energy: start %.9e  end %.9e" % (e0, e1),
             "energy identity defect: max %.6e" % audit.max_defect,
             "largest one-step energy rise: %.6e (non-increasing to 1e-6: %s)"
             % (audit.monotone_drop,
                "yes" if audit.monotone_drop <= 1e-6 else "NO")]
    _emit(cfg, "simulate-report.txt", "\n".join(lines) + "\n")
    return 0


def cmd_rank_scan(cfg: RunConfig) -> int:
    run = cfg.run
    rng = np.random.default_rng(run.require_seed("rank-scan"))
    bundle = cfg.fixture
    center = (run.center if run.center is not None else bundle.equilibrium)
    points = center + rng.uniform(-run.radius, run.radius,
                                  size=(run.samples, bundle.system.n))
    verdict = rank_condition(bundle.system, center, list(points),
                             radius=run.radius)
    lines = ["fixture: %s" % bundle.name,
             "center: [%s]" % ", ".join("%.6f" % v for v in center),
             "samples: %d within radius %.3f" % (run.samples, run.radius),
             "rank at center: %d" % verdict.point_rank,
             "max rank nearby: %d" % verdict.sample_max_rank,
             "rank profile: %s" % np.bincount(
                 np.asarray(verdict.sample_ranks)).tolist(),
             "drop at center: %s" % ("yes" if verdict.drop else "no")]
    _emit(cfg, "rank-scan-report.txt", "\n".join(lines) + "\n")
    return 0


def cmd_rigidity(cfg: RunConfig) -> int:
    run = cfg.run
    bundle = cfg.fixture
    if bundle.overlap is None:
        raise ConfigError("rigidity runs on the double-pendulum fixture "
                          "(it needs the constant-ratio family)")
    rng = np.random.default_rng(run.require_seed("rigidity"))
    points = _sample_points(cfg, rng)
    reports = rigidity_probe(bundle.system, points)
    worst_res = max(basic_jet_residual(bundle.system, x, bundle.ratio,
                                       bundle.overlap) for x in points)
    lines = ["fixture: %s" % bundle.name,
             "points: %d  basic-family jet residual: max %.6e"
             % (len(points), worst_res)]
    bad = 0
    for x, rep in zip(points, reports):
        flag = ""
        if run.expect_dimension is not None and not rep.warnings:
            if rep.dimension != run.expect_dimension:
                bad += 1
                flag = "  <-- expected %d" % run.expect_dimension
        lines.append("  [%s] %s%s"
                     % (", ".join("%.4f" % v for v in x), rep, flag))
    if run.expect_dimension is not None:
        lines.append("off-locus mismatches: %d" % bad)
    _emit(cfg, "rigidity-report.txt", "\n".join(lines) + "\n")
    return 1 if bad else 0


def cmd_sweep(cfg: RunConfig, config_path: str) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep command needs a sweep block in the config")
    worst = 0
    summary = ["sweep over %s (%d values) running '%s'"
               % (cfg.sweep.key, len(cfg.sweep.values), cfg.sweep.command)]
    for i, value in enumerate(cfg.sweep.values):
        doc = override_key(cfg.raw, cfg.sweep.key, value)
        doc.pop("sweep", None)
        sub = parse_config(doc, source="%s[%s=%r]"
                           % (config_path, cfg.sweep.key, value))
        sub_out = None
        if cfg.output_dir:
            sub_out = os.path.join(cfg.output_dir, "sweep-%02d" % i)
        sub = with_overrides(sub, seed=cfg.run.seed, out=sub_out)
        code = _DISPATCH[cfg.sweep.command](sub)
        summary.append("  %s = %r -> exit %d" % (cfg.sweep.key, value, code))
        worst = max(worst, code)
    summary.append("sweep exit: %d" % worst)
    _emit(cfg, "sweep-report.txt", "\n".join(summary) + "\n")
    return worst


_DISPATCH = {
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "rank-scan": cmd_rank_scan,
    "rigidity": cmd_rigidity,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchctl",
        description="Assemble and check matching control laws for "
                    "underactuated plants.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run document")
        p.add_argument("--out", default=None, help="artifact directory")
        p.add_argument("--seed", type=int, default=None,
                       help="overrides run.seed")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = with_overrides(cfg, seed=args.seed, out=args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.config)
        return _DISPATCH[args.command](cfg)
    except ConfigError as exc:
        sys.stderr.write("config error: %s\n" % exc)
        return 2
    except BlowUpError as exc:
        sys.stderr.write("simulation blow-up: %s\n" % exc)
        return 1
    except MatchctlError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
