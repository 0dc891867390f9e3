"""Command-line front end: synth, sim, check, and bundled case studies.

Exit codes: 0 success, 2 invalid input, 3 layer-compatibility (P, Q)
infeasible, 4 synthesis infeasible, 5 empirical bound violated,
6 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import simulation, synthesis
from .sdp import lmi_margin
from .synthesis import Assumption2Error, InterfaceDesign, SynthesisError
from .systems import ArchitectureSpec, ConfigError, load_config

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ASSUMPTION2 = 3
EXIT_SYNTHESIS = 4
EXIT_EMPIRICAL = 5
EXIT_VERIFICATION = 6

CASE_NAMES = ("uav", "hexacopter")
TRIAL_EXPORT_COUNT = 20


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layersynth",
        description=(
            "Design and validate interface controllers between a coarse "
            "upper-layer and a detailed lower-layer stochastic linear system."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize a design from a config")
    p_synth.add_argument("--config", required=True, help="architecture config JSON")
    p_synth.add_argument("--out", required=True, help="design artifact JSON to write")
    p_synth.add_argument("--lambda-grid", help="comma-separated grid override")
    p_synth.add_argument(
        "--spectral-R", action="store_true", help="minimize the exact spectral norm for R"
    )

    p_sim = sub.add_parser("sim", help="Monte Carlo validation of a design")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--design", required=True, help="design artifact JSON")
    p_sim.add_argument("--out", required=True, help="summary CSV to write")
    p_sim.add_argument("--trials", type=int)
    p_sim.add_argument("--horizon", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--traces", help="directory for a per-trial CSV")

    p_check = sub.add_parser("check", help="re-verify a design artifact")
    p_check.add_argument("--config", required=True)
    p_check.add_argument("--design", required=True)

    p_case = sub.add_parser("case", help="run a bundled case study end to end")
    p_case.add_argument("name", choices=None, help="uav or hexacopter")
    p_case.add_argument("--out", required=True, help="output directory")
    p_case.add_argument("--trials", type=int)
    p_case.add_argument("--horizon", type=int)
    p_case.add_argument("--seed", type=int)
    p_case.add_argument("--lambda-grid", dest="lambda_grid")
    p_case.add_argument("--spectral-R", action="store_true", dest="spectral_R")
    return parser


def _load_arch(path: str) -> ArchitectureSpec:
    text = Path(path).read_text(encoding="utf-8")
    return load_config(text)


def _apply_sim_overrides(arch: ArchitectureSpec, args) -> ArchitectureSpec:
    sim = arch.sim
    if getattr(args, "trials", None) is not None:
        sim = replace(sim, trials=args.trials)
    if getattr(args, "horizon", None) is not None:
        sim = replace(sim, horizon=args.horizon)
    if getattr(args, "seed", None) is not None:
        sim = replace(sim, seed=args.seed)
    return replace(arch, sim=sim)


def _apply_synth_overrides(arch: ArchitectureSpec, args) -> ArchitectureSpec:
    grid = getattr(args, "lambda_grid", None)
    if grid:
        values = tuple(float(x) for x in grid.split(",") if x.strip())
        if not values or any(not 0.0 < v < 1.0 for v in values):
            raise ConfigError(f"invalid lambda grid override {grid!r}")
        arch = replace(arch, synth=replace(arch.synth, lambda_grid=values))
    return arch


def _design_matches(arch: ArchitectureSpec, design: InterfaceDesign) -> bool:
    n1, n2 = arch.upper.n, arch.lower.n
    m1, m2 = arch.upper.m, arch.lower.m
    est1, est2 = design.estimators
    return (
        design.maps.P.shape == (n2, n1)
        and design.maps.Q.shape == (m2, n1)
        and design.R.shape == (m2, m1)
        and design.cert.K.shape == (m2, n2)
        and design.cert.M.shape == (n2, n2)
        and est1.L.shape == (n1, arch.upper.p)
        and est2.L.shape == (n2, arch.lower.p)
    )


def _run_synth(arch: ArchitectureSpec, spectral_r: bool) -> InterfaceDesign:
    return synthesis.design_pipeline(arch, spectral_r=spectral_r)


def cmd_synth(args) -> int:
    try:
        arch = _apply_synth_overrides(_load_arch(args.config), args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        design = _run_synth(arch, args.spectral_R)
    except Assumption2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION2
    except SynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    Path(args.out).write_text(synthesis.design_to_json(design), encoding="utf-8")
    c = design.cert
    print(
        f"synth ok: lambda={c.lam:.6g} rho={c.rho:.6g} alpha={c.alpha:.6g} "
        f"epsilon={c.epsilon:.6g} -> {args.out}"
    )
    return EXIT_OK


def _run_sim(
    arch: ArchitectureSpec,
    design: InterfaceDesign,
    out_csv: str,
    traces_dir: str | None,
):
    keep = TRIAL_EXPORT_COUNT if traces_dir else 0
    summary, traces = simulation.monte_carlo(arch, design, keep_traces=keep)
    simulation.write_summary_csv(out_csv, summary)
    if traces_dir:
        out = Path(traces_dir)
        out.mkdir(parents=True, exist_ok=True)
        simulation.write_trials_csv(out / "trials.csv", traces)
    return summary


def cmd_sim(args) -> int:
    try:
        arch = _apply_sim_overrides(_load_arch(args.config), args)
        design = synthesis.design_from_json(
            Path(args.design).read_text(encoding="utf-8")
        )
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not _design_matches(arch, design):
        print("error: design dimensions do not match the config", file=sys.stderr)
        return EXIT_INPUT
    summary = _run_sim(arch, design, args.out, args.traces)
    worst = float(np.max(summary.mean_dist - summary.ci95_halfwidth))
    print(
        f"sim ok: max_t mean_dist={summary.max_over_t_mean_dist:.6g} "
        f"vs epsilon={summary.epsilon:.6g} ({summary.trials} trials) -> {args.out}"
    )
    if worst > summary.epsilon:
        print(
            f"error: empirical bound violated: max_t (mean_dist - ci95) = "
            f"{worst:.6g} > epsilon = {summary.epsilon:.6g}",
            file=sys.stderr,
        )
        return EXIT_EMPIRICAL
    return EXIT_OK


def _check_lines(arch: ArchitectureSpec, design: InterfaceDesign) -> list[tuple[str, bool]]:
    upper, lower = arch.upper, arch.lower
    maps, cert = design.maps, design.cert
    est1, est2 = design.estimators
    checks: list[tuple[str, bool]] = []

    r_cp = float(np.linalg.norm(lower.C @ maps.P - upper.C, "fro"))
    r_paq = float(
        np.linalg.norm(maps.P @ upper.A - lower.A @ maps.P - lower.B @ maps.Q, "fro")
    )
    checks.append(
        ("interface map residual C2 P = C1",
         r_cp <= 1e-6 * (1.0 + np.linalg.norm(upper.C, "fro")))
    )
    checks.append(
        ("interface map residual P A1 = A2 P + B2 Q",
         r_paq <= 1e-6 * (1.0 + np.linalg.norm(upper.A, "fro")))
    )

    checks.append(("lambda in (0, 1)", 0.0 < cert.lam < 1.0))
    rho_ok = (
        0.0 < cert.lam < 1.0
        and abs(cert.rho - (1.0 - cert.lam) / (1.0 - 0.5 * cert.lam)) <= 1e-12
    )
    checks.append(("rho = (1 - lambda)/(1 - lambda/2)", rho_ok))

    try:
        margin = lmi_margin(synthesis.lemma_blocks(lower, cert.M, cert.K, cert.lam))
        checks.append(("certificate LMI margins >= -1e-7", margin >= -1e-7))
    except Exception:
        checks.append(("certificate LMI margins >= -1e-7", False))

    for label, sys_, est in (("upper", upper, est1), ("lower", lower, est2)):
        alc = sys_.A - est.L @ sys_.C
        resid = np.linalg.norm(
            est.Sigma_e
            - (alc @ est.Sigma_e @ alc.T + sys_.Sigma_w + est.L @ sys_.Sigma_v @ est.L.T),
            "fro",
        )
        ok = resid <= 1e-8 * (1.0 + np.linalg.norm(est.Sigma_e, "fro"))
        checks.append((f"{label} filter Riccati residual", bool(ok)))
        gain = sys_.A @ est.Sigma_e @ sys_.C.T @ np.linalg.pinv(
            sys_.C @ est.Sigma_e @ sys_.C.T + sys_.Sigma_v, rcond=1e-10
        )
        ok = np.linalg.norm(gain - est.L, "fro") <= 1e-6 * (1.0 + np.linalg.norm(est.L, "fro"))
        checks.append((f"{label} filter gain consistency", bool(ok)))

    tr_s = float(
        np.trace(upper.C @ est1.Sigma_e @ upper.C.T)
        + np.trace(lower.C @ est2.Sigma_e @ lower.C.T)
    )
    checks.append(("trace_S consistency", abs(tr_s - cert.trace_S) <= 1e-8 * (1.0 + tr_s)))

    if 0.0 < cert.lam < 1.0 and cert.rho < 1.0:
        z0 = lower.mu0 - maps.P @ upper.mu0
        v0 = float(z0 @ cert.M @ z0) + cert.trace_S
        rhs = max(v0, cert.alpha / (1.0 - cert.rho))
        lhs = cert.epsilon**2 - float(np.trace(upper.Sigma_v) + np.trace(lower.Sigma_v))
        checks.append(
            ("epsilon self-consistency", abs(lhs - rhs) <= 1e-9 * (1.0 + abs(rhs)))
        )
        checks.append(("alpha positive", cert.alpha > 0))
    else:
        checks.append(("epsilon self-consistency", False))
        checks.append(("alpha positive", cert.alpha > 0))
    return checks


def cmd_check(args) -> int:
    try:
        arch = _load_arch(args.config)
        design = synthesis.design_from_json(
            Path(args.design).read_text(encoding="utf-8")
        )
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not _design_matches(arch, design):
        print("error: design dimensions do not match the config", file=sys.stderr)
        return EXIT_INPUT
    checks = _check_lines(arch, design)
    all_ok = True
    for label, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
        all_ok = all_ok and ok
    if not all_ok:
        return EXIT_VERIFICATION
    print("check ok: all verification checks passed")
    return EXIT_OK


def bundled_config_text(name: str) -> str:
    """Raw JSON for one of the packaged case-study configs."""
    if name not in CASE_NAMES:
        raise ConfigError(f"unknown case {name!r}; available: {', '.join(CASE_NAMES)}")
    return (
        resources.files("layersynth") / "configs" / f"{name}.json"
    ).read_text(encoding="utf-8")


def cmd_case(args) -> int:
    try:
        arch = load_config(bundled_config_text(args.name))
        arch = _apply_sim_overrides(arch, args)
        arch = _apply_synth_overrides(arch, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        design = _run_synth(arch, args.spectral_R)
    except Assumption2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION2
    except SynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    design_path = out_dir / f"{args.name}_design.json"
    design_path.write_text(synthesis.design_to_json(design), encoding="utf-8")

    summary, traces = simulation.monte_carlo(
        arch, design, keep_traces=TRIAL_EXPORT_COUNT
    )
    simulation.write_summary_csv(out_dir / f"{args.name}_summary.csv", summary)
    simulation.write_trials_csv(out_dir / f"{args.name}_trials.csv", traces)
    plot_lines = ["t,mean_dist,epsilon"]
    for i, t in enumerate(summary.t):
        plot_lines.append(
            f"{int(t)},{float(summary.mean_dist[i])!r},{float(summary.epsilon)!r}"
        )
    (out_dir / f"{args.name}_plot.csv").write_text(
        "\n".join(plot_lines) + "\n", encoding="utf-8"
    )

    c = design.cert
    print(
        f"case {args.name}: lambda={c.lam:.6g} epsilon={c.epsilon:.6g} "
        f"max_t mean_dist={summary.max_over_t_mean_dist:.6g} "
        f"({summary.trials} trials, T={arch.sim.horizon}) -> {out_dir}"
    )
    worst = float(np.max(summary.mean_dist - summary.ci95_halfwidth))
    if worst > summary.epsilon:
        print(
            f"error: empirical bound violated: {worst:.6g} > {summary.epsilon:.6g}",
            file=sys.stderr,
        )
        return EXIT_EMPIRICAL
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth":
        return cmd_synth(args)
    if args.command == "sim":
        return cmd_sim(args)
    if args.command == "check":
        return cmd_check(args)
    if args.command == "case":
        if args.name not in CASE_NAMES:
            print(
                f"error: unknown case {args.name!r}; "
                f"available: {', '.join(CASE_NAMES)}",
                file=sys.stderr,
            )
            return EXIT_INPUT
        return cmd_case(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
