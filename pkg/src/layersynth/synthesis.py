"""Interface-controller synthesis and the output-distance certificate.

Given validated upper/lower systems with steady-state Kalman estimators,
this module computes the interface maps (P, Q), the correction gain K
with its quadratic certificate matrix M and contraction parameter
lambda, the feed-through R, and the resulting a-priori bound epsilon on
the expected output distance between the two closed loops.

The (M, K) pair is found per lambda by a semidefinite program in the
inverse variable M~ = M^{-1} (Schur-complement linearization of the
contraction condition); a Lyapunov-based constructive fallback covers
the case where every grid point is infeasible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .estimation import EstimatorSpec, build_estimator
from .matops import (
    minnorm_lstsq,
    solve_control_dare,
    spectral_radius,
    sym_sqrt,
)
from .sdp import SdpProblem, SdpSolution, lmi_margin, solve
from .systems import ArchitectureSpec, LinearSystemSpec, check_stabilizable

__all__ = [
    "SynthesisError",
    "Assumption2Error",
    "InterfaceMaps",
    "Certificate",
    "InterfaceDesign",
    "solve_interface_maps",
    "build_sdp",
    "recover_MK",
    "synthesize_constructive",
    "compute_R",
    "compute_certificate",
    "evaluate_V",
    "lemma_blocks",
    "design_pipeline",
    "design_to_json",
    "design_from_json",
]

MAP_RESIDUAL_TOL = 1e-6
LEMMA_MARGIN_TOL = 1e-7
MAX_R_SWEEPS = 3


class SynthesisError(RuntimeError):
    """Synthesis failure: infeasible assumptions or no usable design."""


class Assumption2Error(SynthesisError):
    """No (P, Q) satisfies the layer-compatibility equations."""


@dataclass(frozen=True)
class InterfaceMaps:
    """State/input embeddings P, Q with their equation residuals."""

    P: np.ndarray
    Q: np.ndarray
    residual_CP: float
    residual_PAQ: float


@dataclass(frozen=True)
class Certificate:
    """Simulation-function certificate (M, K, lambda, rho, alpha, epsilon)."""

    M: np.ndarray
    K: np.ndarray
    lam: float
    rho: float
    alpha: float
    trace_S: float
    epsilon: float


@dataclass(frozen=True)
class InterfaceDesign:
    maps: InterfaceMaps
    R: np.ndarray
    cert: Certificate
    estimators: tuple[EstimatorSpec, EstimatorSpec]
    meta: dict

    @property
    def K(self) -> np.ndarray:
        return self.cert.K


def solve_interface_maps(
    upper: LinearSystemSpec, lower: LinearSystemSpec
) -> InterfaceMaps:
    """Solve C2 P = C1 and P A1 = A2 P + B2 Q jointly, minimum norm.

    Both equations are vectorized into one linear system in
    (vec P, vec Q); an unresolvable residual means the structural
    compatibility assumption between the layers fails.
    """
    a1, a2, b2 = upper.A, lower.A, lower.B
    c1, c2 = upper.C, lower.C
    n1, n2, m2, p = upper.n, lower.n, lower.m, upper.p
    top = np.hstack([np.kron(np.eye(n1), c2), np.zeros((p * n1, m2 * n1))])
    bot = np.hstack(
        [
            np.kron(a1.T, np.eye(n2)) - np.kron(np.eye(n1), a2),
            -np.kron(np.eye(n1), b2),
        ]
    )
    rhs = np.concatenate([c1.flatten(order="F"), np.zeros(n2 * n1)])
    sol = minnorm_lstsq(np.vstack([top, bot]), rhs.reshape(-1, 1))[:, 0]
    pmat = sol[: n2 * n1].reshape((n2, n1), order="F")
    qmat = sol[n2 * n1 :].reshape((m2, n1), order="F")
    r_cp = float(np.linalg.norm(c2 @ pmat - c1, "fro"))
    r_paq = float(np.linalg.norm(pmat @ a1 - a2 @ pmat - b2 @ qmat, "fro"))
    if r_cp > MAP_RESIDUAL_TOL * (1 + np.linalg.norm(c1, "fro")) or r_paq > (
        MAP_RESIDUAL_TOL * (1 + np.linalg.norm(a1, "fro"))
    ):
        raise Assumption2Error(
            "layer compatibility (Assumption 2) infeasible: "
            f"output-map residual {r_cp:.3e}, dynamics residual {r_paq:.3e}"
        )
    return InterfaceMaps(P=pmat, Q=qmat, residual_CP=r_cp, residual_PAQ=r_paq)


def _mismatch_matrices(
    upper: LinearSystemSpec,
    lower: LinearSystemSpec,
    maps: InterfaceMaps,
    estimators: tuple[EstimatorSpec, EstimatorSpec],
    r: np.ndarray,
) -> list[np.ndarray]:
    """The X_j whose M-weighted norms enter the additive scalar alpha."""
    est1, est2 = estimators
    e1 = maps.P @ est1.L @ upper.C
    e2 = est2.L @ lower.C
    return [
        lower.B @ r - maps.P @ upper.B,
        e1 @ sym_sqrt(est1.Sigma_e),
        e2 @ sym_sqrt(est2.Sigma_e),
        maps.P @ est1.L @ sym_sqrt(upper.Sigma_v),
        est2.L @ sym_sqrt(lower.Sigma_v),
    ]


def _trace_S(
    upper: LinearSystemSpec,
    lower: LinearSystemSpec,
    estimators: tuple[EstimatorSpec, EstimatorSpec],
) -> float:
    est1, est2 = estimators
    return float(
        np.trace(upper.C @ est1.Sigma_e @ upper.C.T)
        + np.trace(lower.C @ est2.Sigma_e @ lower.C.T)
    )


def _output_noise_floor(
    upper: LinearSystemSpec,
    lower: LinearSystemSpec,
    estimators: tuple[EstimatorSpec, EstimatorSpec],
    lam: float,
) -> float:
    """The lambda/(2-lambda)-weighted output estimation-error constant."""
    est1, est2 = estimators
    total = 0.0
    for sys, est in ((upper, estimators[0]), (lower, estimators[1])):
        total += np.linalg.norm(sys.C @ sym_sqrt(est.Sigma_e), "fro") ** 2
    return lam / (2.0 - lam) * total


def build_sdp(
    upper: LinearSystemSpec,
    lower: LinearSystemSpec,
    maps: InterfaceMaps,
    estimators: tuple[EstimatorSpec, EstimatorSpec],
    lam: float,
    u_max: float,
    mu0_gap: np.ndarray,
    r: np.ndarray,
    strict_eps: float = 1e-6,
) -> SdpProblem:
    """Assemble the epsilon-minimizing SDP for a fixed lambda.

    Decision variables are M~ = M^{-1}, K~ = K M~, the epigraph scalar
    gamma, and one auxiliary T block per mismatch matrix X_j bounding
    trace(X_j^T M X_j).
    """
    if not 0.0 < lam < 1.0:
        raise SynthesisError(f"lambda {lam} outside (0, 1)")
    a2, b2, c2 = lower.A, lower.B, lower.C
    n2, m2, p = lower.n, lower.m, lower.p
    xs = _mismatch_matrices(upper, lower, maps, estimators, r)
    tr_s = _trace_S(upper, lower, estimators)
    z0 = np.asarray(mu0_gap, dtype=float).reshape(-1)

    prob = SdpProblem()
    mt = prob.add_symmetric("M_tilde", n2)
    kt = prob.add_matrix("K_tilde", m2, n2)
    gam = prob.add_scalar("gamma")
    ts = [
        prob.add_symmetric(f"T_{j}", x.shape[1]) for j, x in enumerate(xs)
    ]

    prob.add_psd_block(mt - strict_eps * np.eye(n2))
    prob.add_psd_block(cp.bmat([[np.eye(p), c2 @ mt], [mt @ c2.T, mt]]))
    closed = a2 @ mt + b2 @ kt
    prob.add_psd_block(cp.bmat([[mt, closed], [closed.T, (1.0 - lam) * mt]]))
    prob.add_psd_block(
        cp.bmat(
            [
                [cp.reshape(gam - tr_s, (1, 1), order="C"), z0.reshape(1, -1)],
                [z0.reshape(-1, 1), mt],
            ]
        )
    )
    for x, t in zip(xs, ts):
        prob.add_psd_block(cp.bmat([[t, x.T], [x, mt]]))
    alpha_bar = (
        (2.0 * u_max**2 / lam) * cp.trace(ts[0])
        + cp.trace(ts[1])
        + cp.trace(ts[2])
        + cp.trace(ts[3])
        + cp.trace(ts[4])
        + _output_noise_floor(upper, lower, estimators, lam)
    )
    prob.add_psd_block(cp.reshape(gam - (2.0 - lam) / lam * alpha_bar, (1, 1), order="C"))
    prob.set_objective(gam)
    return prob


def lemma_blocks(
    lower: LinearSystemSpec, m: np.ndarray, k: np.ndarray, lam: float
) -> list[np.ndarray]:
    """The two matrix-inequality blocks certifying (M, K, lambda)."""
    a_k = lower.A + lower.B @ k
    return [
        m - lower.C.T @ lower.C,
        -(a_k.T @ m @ a_k - m + lam * m),
    ]


def recover_MK(
    sol: SdpSolution,
    lower: LinearSystemSpec,
    lam: float,
    margin_tol: float = LEMMA_MARGIN_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Invert the SDP change of variables and re-verify the certificate."""
    if sol.status != "optimal":
        raise SynthesisError(f"cannot recover (M, K) from status {sol.status!r}")
    mt = np.asarray(sol.values["M_tilde"])
    kt = np.asarray(sol.values["K_tilde"])
    mt_inv = np.linalg.inv(mt)
    m = (mt_inv + mt_inv.T) / 2.0
    k = kt @ mt_inv
    margin = lmi_margin(lemma_blocks(lower, m, k, lam))
    if margin < -margin_tol:
        raise SynthesisError(
            f"recovered (M, K) violates certificate inequalities: margin {margin:.3e}"
        )
    return m, k


def synthesize_constructive(
    lower: LinearSystemSpec,
    lambda_grid: tuple[float, ...],
    margin_tol: float = LEMMA_MARGIN_TOL,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lyapunov-based (M, K, lambda), independent of the SDP route.

    K stabilizes via a unit-weight LQR; lambda is the largest grid value
    keeping A_K / sqrt(1-lambda) Schur stable; M = N + C^T C with N
    solving a Lyapunov equation against a dominating PSD right-hand side.
    """
    if not check_stabilizable(lower.A, lower.B):
        raise SynthesisError("lower system is not stabilizable")
    n2, m2 = lower.n, lower.m
    _, k_lqr = solve_control_dare(lower.A, lower.B, np.eye(n2), np.eye(m2))
    k = -k_lqr
    a_k = lower.A + lower.B @ k
    rho_k = spectral_radius(a_k)
    lam = None
    for cand in sorted(lambda_grid, reverse=True):
        if rho_k / np.sqrt(1.0 - cand) < 1.0 - 1e-6:
            lam = cand
            break
    if lam is None:
        raise SynthesisError(
            "no lambda in the grid keeps the scaled closed loop Schur stable"
        )
    a_kl = a_k / np.sqrt(1.0 - lam)
    ctc = lower.C.T @ lower.C
    # any PSD dominator of A_kl^T C^T C A_kl - C^T C works; this one is
    # always valid since A^T C^T C A <= ||C A||^2 I
    dom = (np.linalg.norm(lower.C @ a_kl, 2) ** 2 + 1e-9) * np.eye(n2) + ctc
    n_mat = _lyapunov_psd(a_kl, dom)
    m = n_mat + ctc
    m = (m + m.T) / 2.0
    margin = lmi_margin(lemma_blocks(lower, m, k, lam))
    if margin < -margin_tol:
        raise SynthesisError(
            f"constructive certificate margin {margin:.3e} below -{margin_tol:.1e}"
        )
    return m, k, lam


def _lyapunov_psd(f: np.ndarray, q: np.ndarray) -> np.ndarray:
    from .matops import solve_discrete_lyapunov

    return solve_discrete_lyapunov(f, q)


def compute_R(
    m: np.ndarray,
    p: np.ndarray,
    b1: np.ndarray,
    b2: np.ndarray,
    spectral: bool = False,
    sdp_tol: float = 1e-8,
) -> np.ndarray:
    """Feed-through R minimizing the M-weighted input-mismatch norm.

    Default minimizes the Frobenius norm of M^{1/2}(B2 R - P B1), which
    has a closed form and upper-bounds the spectral objective. With
    ``spectral=True`` the spectral norm is minimized exactly through a
    small epigraph SDP.
    """
    mh = sym_sqrt(m)
    r_frob = minnorm_lstsq(mh @ b2, mh @ p @ b1)
    if not spectral:
        return r_frob
    m2, m1 = b2.shape[1], b1.shape[1]
    prob = SdpProblem()
    r_var = prob.add_matrix("R", m2, m1)
    t = prob.add_scalar("t")
    y = mh @ (b2 @ r_var) - mh @ (p @ b1)
    n_rows = y.shape[0]
    prob.add_psd_block(
        cp.bmat([[t * np.eye(n_rows), y], [y.T, t * np.eye(m1)]])
    )
    prob.set_objective(t)
    sol = solve(prob, sdp_tol)
    if sol.status != "optimal":
        return r_frob
    return np.asarray(sol.values["R"]).reshape(m2, m1)


def compute_certificate(
    arch: ArchitectureSpec,
    maps: InterfaceMaps,
    estimators: tuple[EstimatorSpec, EstimatorSpec],
    m: np.ndarray,
    k: np.ndarray,
    lam: float,
    r: np.ndarray,
) -> Certificate:
    """Assemble (rho, alpha, trace_S, epsilon) for a given (M, K, lambda, R)."""
    if not 0.0 < lam < 1.0:
        raise SynthesisError(f"lambda {lam} outside (0, 1)")
    upper, lower = arch.upper, arch.lower
    rho = (1.0 - lam) / (1.0 - 0.5 * lam)
    mh = sym_sqrt(m)
    xs = _mismatch_matrices(upper, lower, maps, estimators, r)
    alpha = (2.0 / lam) * np.linalg.norm(mh @ xs[0], 2) ** 2 * arch.u_max**2
    alpha += sum(np.linalg.norm(mh @ x, "fro") ** 2 for x in xs[1:])
    alpha += _output_noise_floor(upper, lower, estimators, lam)
    tr_s = _trace_S(upper, lower, estimators)
    z0 = lower.mu0 - maps.P @ upper.mu0
    v0 = float(z0 @ m @ z0) + tr_s
    noise = float(np.trace(upper.Sigma_v) + np.trace(lower.Sigma_v))
    eps = float(np.sqrt(max(v0, alpha / (1.0 - rho)) + noise))
    return Certificate(
        M=m, K=k, lam=float(lam), rho=float(rho), alpha=float(alpha),
        trace_S=tr_s, epsilon=eps,
    )


def evaluate_V(
    cert: Certificate, maps: InterfaceMaps, xhat1: np.ndarray, xhat2: np.ndarray
) -> float:
    """Quadratic gap energy plus the output estimation-error constant."""
    xhat1 = np.asarray(xhat1, dtype=float)
    xhat2 = np.asarray(xhat2, dtype=float)
    if xhat1.shape != (maps.P.shape[1],) or xhat2.shape != (maps.P.shape[0],):
        raise ValueError(
            f"dimension mismatch: xhat1 {xhat1.shape}, xhat2 {xhat2.shape}"
        )
    d = xhat2 - maps.P @ xhat1
    return float(d @ cert.M @ d) + cert.trace_S


def design_pipeline(arch: ArchitectureSpec, spectral_r: bool = False) -> InterfaceDesign:
    """End-to-end design: estimators, maps, lambda search, certificate.

    For each lambda grid point the SDP is solved with a provisional R
    (from M = I), R is then refit to the recovered M and the certificate
    re-evaluated; up to MAX_R_SWEEPS rebuild sweeps run while they lower
    epsilon. The grid point minimizing epsilon wins, smaller lambda
    breaking ties. When every grid point fails and the fallback is
    enabled, the constructive route supplies the design.
    """
    if not check_stabilizable(arch.lower.A, arch.lower.B):
        raise SynthesisError("lower system is not stabilizable")
    estimators = (build_estimator(arch.upper), build_estimator(arch.lower))
    maps = solve_interface_maps(arch.upper, arch.lower)
    z0 = arch.lower.mu0 - maps.P @ arch.upper.mu0
    r_provisional = compute_R(
        np.eye(arch.lower.n), maps.P, arch.upper.B, arch.lower.B, spectral=spectral_r
    )

    statuses: dict[float, str] = {}
    best: tuple[Certificate, np.ndarray] | None = None
    for lam in arch.synth.lambda_grid:
        r = r_provisional
        candidate: tuple[Certificate, np.ndarray] | None = None
        status = "optimal"
        for _ in range(MAX_R_SWEEPS):
            prob = build_sdp(
                arch.upper, arch.lower, maps, estimators, lam,
                arch.u_max, z0, r, arch.synth.strict_eps,
            )
            sol = solve(prob, arch.synth.sdp_tol)
            if sol.status != "optimal":
                status = sol.status
                break
            try:
                m, k = recover_MK(sol, arch.lower, lam)
            except SynthesisError:
                status = "margin_violation"
                break
            r_new = compute_R(m, maps.P, arch.upper.B, arch.lower.B, spectral=spectral_r)
            cert = compute_certificate(arch, maps, estimators, m, k, lam, r_new)
            if candidate is not None and cert.epsilon >= candidate[0].epsilon - 1e-12 * (
                1.0 + candidate[0].epsilon
            ):
                break
            candidate = (cert, r_new)
            r = r_new
        if candidate is None:
            statuses[lam] = status
            continue
        statuses[lam] = "optimal"
        if best is None or candidate[0].epsilon < best[0].epsilon:
            best = candidate

    fallback_used = False
    if best is None:
        if not arch.synth.use_constructive_fallback:
            raise SynthesisError(
                "synthesis infeasible at every lambda grid point "
                f"(statuses: {statuses})"
            )
        m, k, lam = synthesize_constructive(arch.lower, arch.synth.lambda_grid)
        r = compute_R(m, maps.P, arch.upper.B, arch.lower.B, spectral=spectral_r)
        best = (compute_certificate(arch, maps, estimators, m, k, lam, r), r)
        fallback_used = True

    cert, r = best
    meta = {
        "lambda_grid_used": [float(x) for x in arch.synth.lambda_grid],
        "sdp_status_per_lambda": {repr(k_): v for k_, v in statuses.items()},
        "fallback_used": fallback_used,
    }
    return InterfaceDesign(maps=maps, R=r, cert=cert, estimators=estimators, meta=meta)


def _tolist(m: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(m)]


def design_to_json(design: InterfaceDesign) -> str:
    est1, est2 = design.estimators
    doc = {
        "P": _tolist(design.maps.P),
        "Q": _tolist(design.maps.Q),
        "R": _tolist(design.R),
        "K": _tolist(design.cert.K),
        "M": _tolist(design.cert.M),
        "lambda": design.cert.lam,
        "rho": design.cert.rho,
        "alpha": design.cert.alpha,
        "trace_S": design.cert.trace_S,
        "epsilon": design.cert.epsilon,
        "L1": _tolist(est1.L),
        "L2": _tolist(est2.L),
        "Sigma_e1": _tolist(est1.Sigma_e),
        "Sigma_e2": _tolist(est2.Sigma_e),
        "meta": {
            **design.meta,
            "residual_CP": design.maps.residual_CP,
            "residual_PAQ": design.maps.residual_PAQ,
        },
    }
    return json.dumps(doc, indent=2)


def design_from_json(text: str) -> InterfaceDesign:
    doc = json.loads(text)
    meta = dict(doc.get("meta", {}))
    maps = InterfaceMaps(
        P=np.asarray(doc["P"], dtype=float),
        Q=np.asarray(doc["Q"], dtype=float),
        residual_CP=float(meta.pop("residual_CP", float("nan"))),
        residual_PAQ=float(meta.pop("residual_PAQ", float("nan"))),
    )
    cert = Certificate(
        M=np.asarray(doc["M"], dtype=float),
        K=np.asarray(doc["K"], dtype=float),
        lam=float(doc["lambda"]),
        rho=float(doc["rho"]),
        alpha=float(doc["alpha"]),
        trace_S=float(doc["trace_S"]),
        epsilon=float(doc["epsilon"]),
    )
    estimators = (
        EstimatorSpec(
            L=np.asarray(doc["L1"], dtype=float),
            Sigma_e=np.asarray(doc["Sigma_e1"], dtype=float),
        ),
        EstimatorSpec(
            L=np.asarray(doc["L2"], dtype=float),
            Sigma_e=np.asarray(doc["Sigma_e2"], dtype=float),
        ),
    )
    return InterfaceDesign(
        maps=maps,
        R=np.asarray(doc["R"], dtype=float),
        cert=cert,
        estimators=estimators,
        meta=meta,
    )
