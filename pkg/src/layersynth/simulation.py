"""Closed-loop Monte Carlo engine for the two-layer architecture.

The upper system runs its LQG controller (certainty-equivalent state
feedback on the Kalman estimate, radially saturated to the u_max ball);
the lower system runs the interface controller. Noise is generated from
counter-based Philox streams keyed by (master_seed, trial, stream), so
trials are bitwise reproducible and independent of execution order or
parallelism degree.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimation import estimate_step
from .matops import solve_control_dare, sym_sqrt
from .synthesis import InterfaceDesign, evaluate_V
from .systems import ArchitectureSpec, LinearSystemSpec, UpperControllerCfg

__all__ = [
    "SimulationError",
    "TrialTrace",
    "McSummary",
    "ContractionReport",
    "lqg_gain",
    "saturate",
    "interface_control",
    "simulate_trial",
    "monte_carlo",
    "contraction_report",
    "write_summary_csv",
    "write_trials_csv",
]

# noise/initial-state substream identifiers within one trial
_STREAM_X0_1 = 0
_STREAM_X0_2 = 1
_STREAM_W1 = 2
_STREAM_V1 = 3
_STREAM_W2 = 4
_STREAM_V2 = 5

THREADS_ENV = "LAYERSYNTH_THREADS"


class SimulationError(RuntimeError):
    """A trial produced non-finite state (diverging closed loop)."""


@dataclass(frozen=True)
class TrialTrace:
    """Full per-step record of one closed-loop trial, t = 0..T."""

    trial: int
    x1: np.ndarray
    xhat1: np.ndarray
    y1: np.ndarray
    u1: np.ndarray
    x2: np.ndarray
    xhat2: np.ndarray
    y2: np.ndarray
    u2: np.ndarray
    dist: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class McSummary:
    """Per-time-step aggregates over trials plus the certificate bound."""

    t: np.ndarray
    mean_dist: np.ndarray
    std_dist: np.ndarray
    ci95_halfwidth: np.ndarray
    mean_V: np.ndarray
    std_V: np.ndarray
    epsilon: float
    trials: int
    seed: int
    max_over_t_mean_dist: float
    v0: float  # V evaluated at the initial means


@dataclass(frozen=True)
class ContractionReport:
    """Empirical slack of the one-step and unrolled contraction bounds."""

    step_slack: np.ndarray  # mean_V[t+1] - (rho * mean_V[t] + alpha)
    recursion_slack: np.ndarray  # mean_V[t] - unrolled bound at t
    flagged_steps: tuple[int, ...]
    flagged_recursion: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.flagged_steps and not self.flagged_recursion


def lqg_gain(upper: LinearSystemSpec, cfg: UpperControllerCfg) -> np.ndarray:
    """Certainty-equivalence LQR gain for the upper layer."""
    _, k = solve_control_dare(upper.A, upper.B, cfg.P_Q, cfg.P_R)
    return k


def saturate(u: np.ndarray, u_max: float) -> np.ndarray:
    """Radial projection onto the Euclidean ball of radius u_max."""
    if not u_max > 0:
        raise ValueError("u_max must be positive")
    u = np.asarray(u, dtype=float)
    norm = float(np.linalg.norm(u))
    if norm <= u_max:
        return u
    return u * (u_max / norm)


def interface_control(
    design: InterfaceDesign,
    u1: np.ndarray,
    xhat1: np.ndarray,
    xhat2: np.ndarray,
) -> np.ndarray:
    """Exact affine law R u1 + Q xhat1 + K (xhat2 - P xhat1), never saturated."""
    u1 = np.asarray(u1, dtype=float)
    xhat1 = np.asarray(xhat1, dtype=float)
    xhat2 = np.asarray(xhat2, dtype=float)
    p = design.maps.P
    if (
        u1.shape != (design.R.shape[1],)
        or xhat1.shape != (p.shape[1],)
        or xhat2.shape != (p.shape[0],)
    ):
        raise ValueError(
            f"dimension mismatch: u1 {u1.shape}, xhat1 {xhat1.shape}, "
            f"xhat2 {xhat2.shape}"
        )
    return design.R @ u1 + design.maps.Q @ xhat1 + design.K @ (xhat2 - p @ xhat1)


def _stream(master_seed: int, trial: int, stream: int) -> np.random.Generator:
    key = int(master_seed) + (int(trial) << 64) + (int(stream) << 96)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_trial(
    arch: ArchitectureSpec,
    design: InterfaceDesign,
    trial_index: int,
    master_seed: int,
    k_lqr: np.ndarray | None = None,
) -> TrialTrace:
    """One closed-loop trial over the configured horizon.

    Initial states are drawn from Gaussian(mu0, Sigma_e) so the constant
    Kalman gain is exact from t = 0; estimates start at mu0. The LQG
    gain is recomputed unless supplied (monte_carlo passes it in).
    """
    upper, lower = arch.upper, arch.lower
    est1, est2 = design.estimators
    horizon = arch.sim.horizon
    if k_lqr is None:
        k_lqr = lqg_gain(upper, arch.upper_controller)

    sqrt_e1 = sym_sqrt(est1.Sigma_e)
    sqrt_e2 = sym_sqrt(est2.Sigma_e)
    sqrt_w1 = sym_sqrt(upper.Sigma_w)
    sqrt_v1 = sym_sqrt(upper.Sigma_v)
    sqrt_w2 = sym_sqrt(lower.Sigma_w)
    sqrt_v2 = sym_sqrt(lower.Sigma_v)

    rng_w1 = _stream(master_seed, trial_index, _STREAM_W1)
    rng_v1 = _stream(master_seed, trial_index, _STREAM_V1)
    rng_w2 = _stream(master_seed, trial_index, _STREAM_W2)
    rng_v2 = _stream(master_seed, trial_index, _STREAM_V2)

    x1 = upper.mu0 + sqrt_e1 @ _stream(
        master_seed, trial_index, _STREAM_X0_1
    ).standard_normal(upper.n)
    x2 = lower.mu0 + sqrt_e2 @ _stream(
        master_seed, trial_index, _STREAM_X0_2
    ).standard_normal(lower.n)
    xh1 = upper.mu0.copy()
    xh2 = lower.mu0.copy()

    steps = horizon + 1
    tr_x1 = np.empty((steps, upper.n))
    tr_xh1 = np.empty((steps, upper.n))
    tr_y1 = np.empty((steps, upper.p))
    tr_u1 = np.empty((steps, upper.m))
    tr_x2 = np.empty((steps, lower.n))
    tr_xh2 = np.empty((steps, lower.n))
    tr_y2 = np.empty((steps, lower.p))
    tr_u2 = np.empty((steps, lower.m))
    tr_dist = np.empty(steps)
    tr_v = np.empty(steps)

    for t in range(steps):
        y1 = upper.C @ x1 + sqrt_v1 @ rng_v1.standard_normal(upper.p)
        y2 = lower.C @ x2 + sqrt_v2 @ rng_v2.standard_normal(lower.p)
        u1 = saturate(-k_lqr @ xh1, arch.u_max)
        u2 = interface_control(design, u1, xh1, xh2)
        if not (
            np.all(np.isfinite(x1))
            and np.all(np.isfinite(x2))
            and np.all(np.isfinite(u2))
        ):
            raise SimulationError(
                f"trial {trial_index} diverged (non-finite state) at step {t}"
            )
        tr_x1[t], tr_xh1[t], tr_y1[t], tr_u1[t] = x1, xh1, y1, u1
        tr_x2[t], tr_xh2[t], tr_y2[t], tr_u2[t] = x2, xh2, y2, u2
        tr_dist[t] = np.linalg.norm(y1 - y2)
        tr_v[t] = evaluate_V(design.cert, design.maps, xh1, xh2)
        if t == horizon:
            break
        x1 = upper.A @ x1 + upper.B @ u1 + sqrt_w1 @ rng_w1.standard_normal(upper.n)
        x2 = lower.A @ x2 + lower.B @ u2 + sqrt_w2 @ rng_w2.standard_normal(lower.n)
        xh1 = estimate_step(upper, est1, xh1, u1, y1)
        xh2 = estimate_step(lower, est2, xh2, u2, y2)

    return TrialTrace(
        trial=trial_index,
        x1=tr_x1, xhat1=tr_xh1, y1=tr_y1, u1=tr_u1,
        x2=tr_x2, xhat2=tr_xh2, y2=tr_y2, u2=tr_u2,
        dist=tr_dist, V=tr_v,
    )


def _max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        workers = 1
    return max(1, workers)


def monte_carlo(
    arch: ArchitectureSpec,
    design: InterfaceDesign,
    keep_traces: int = 0,
) -> tuple[McSummary, list[TrialTrace]]:
    """Run the configured number of trials and aggregate per-step stats.

    ``keep_traces`` retains the first that many full traces for plotting
    or per-trial export. Aggregation indexes by trial number, so the
    result is independent of execution order and thread count.
    """
    trials, seed = arch.sim.trials, arch.sim.seed
    k_lqr = lqg_gain(arch.upper, arch.upper_controller)

    def run(idx: int) -> TrialTrace:
        return simulate_trial(arch, design, idx, seed, k_lqr=k_lqr)

    workers = _max_workers()
    if workers == 1:
        traces = [run(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(run, range(trials)))
    traces.sort(key=lambda tr: tr.trial)

    dist = np.stack([tr.dist for tr in traces])  # (trials, T+1)
    vs = np.stack([tr.V for tr in traces])
    ddof = 1 if trials > 1 else 0
    std_dist = dist.std(axis=0, ddof=ddof)
    std_v = vs.std(axis=0, ddof=ddof)
    mean_dist = dist.mean(axis=0)
    summary = McSummary(
        t=np.arange(dist.shape[1]),
        mean_dist=mean_dist,
        std_dist=std_dist,
        ci95_halfwidth=1.96 * std_dist / np.sqrt(trials),
        mean_V=vs.mean(axis=0),
        std_V=std_v,
        epsilon=design.cert.epsilon,
        trials=trials,
        seed=seed,
        max_over_t_mean_dist=float(mean_dist.max()),
        v0=evaluate_V(design.cert, design.maps, arch.upper.mu0, arch.lower.mu0),
    )
    return summary, traces[: max(0, keep_traces)]


def contraction_report(summary: McSummary, design: InterfaceDesign) -> ContractionReport:
    """Check the one-step and unrolled contraction inequalities empirically.

    A step is flagged only when the empirical mean exceeds the bound by
    more than 3 standard errors of mean_V.
    """
    cert = design.cert
    rho, alpha = cert.rho, cert.alpha
    mv = summary.mean_V
    se = 3.0 * summary.std_V / np.sqrt(summary.trials)
    step_slack = mv[1:] - (rho * mv[:-1] + alpha)
    ts = np.arange(mv.size)
    unrolled = rho**ts * summary.v0 + alpha * (1.0 - rho**ts) / (1.0 - rho)
    recursion_slack = mv - unrolled
    flagged_steps = tuple(int(t) for t in np.nonzero(step_slack > se[1:])[0])
    flagged_rec = tuple(int(t) for t in np.nonzero(recursion_slack > se)[0])
    return ContractionReport(
        step_slack=step_slack,
        recursion_slack=recursion_slack,
        flagged_steps=flagged_steps,
        flagged_recursion=flagged_rec,
    )


def write_summary_csv(path, summary: McSummary) -> None:
    """One row per time step: t, mean_dist, std_dist, ci95, mean_V, epsilon."""
    lines = ["t,mean_dist,std_dist,ci95,mean_V,epsilon"]
    for i, t in enumerate(summary.t):
        fields = (
            summary.mean_dist[i], summary.std_dist[i],
            summary.ci95_halfwidth[i], summary.mean_V[i], summary.epsilon,
        )
        lines.append(f"{int(t)}," + ",".join(repr(float(x)) for x in fields))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trials_csv(path, traces: list[TrialTrace]) -> None:
    """One row per (trial, t): trial, t, dist, V, norm_y1, norm_y2."""
    lines = ["trial,t,dist,V,norm_y1,norm_y2"]
    for tr in traces:
        for t in range(tr.dist.size):
            fields = (
                tr.dist[t], tr.V[t],
                np.linalg.norm(tr.y1[t]), np.linalg.norm(tr.y2[t]),
            )
            lines.append(
                f"{tr.trial},{t}," + ",".join(repr(float(x)) for x in fields)
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
