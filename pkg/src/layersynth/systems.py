"""Two-layer architecture specs: system matrices, noise, bounds, config IO.

The JSON config format accepts either discrete matrices ("A", "B") or
continuous-time ones ("Ac", "Bc") together with a sampling period "dt",
in which case forward-Euler discretization is applied on load. Diagonal
covariances may be given as flat arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .matops import MatrixError, as_matrix, check_sym_psd

__all__ = [
    "ConfigError",
    "LinearSystemSpec",
    "UpperControllerCfg",
    "SynthCfg",
    "SimCfg",
    "ArchitectureSpec",
    "validate",
    "check_stabilizable",
    "discretize_forward_euler",
    "load_config",
    "serialize",
]


class ConfigError(ValueError):
    """Config parsing or validation failure."""


@dataclass(frozen=True)
class LinearSystemSpec:
    """One partially observed stochastic linear system."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Sigma_w: np.ndarray
    Sigma_v: np.ndarray
    mu0: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class UpperControllerCfg:
    kind: str
    P_Q: np.ndarray
    P_R: np.ndarray


@dataclass(frozen=True)
class SynthCfg:
    lambda_grid: tuple[float, ...]
    sdp_tol: float = 1e-7
    strict_eps: float = 1e-6
    use_constructive_fallback: bool = True


@dataclass(frozen=True)
class SimCfg:
    horizon: int
    trials: int
    seed: int


@dataclass(frozen=True)
class ArchitectureSpec:
    upper: LinearSystemSpec
    lower: LinearSystemSpec
    u_max: float
    upper_controller: UpperControllerCfg
    sim: SimCfg
    synth: SynthCfg


def _check_system(sys: LinearSystemSpec, label: str) -> None:
    n, m, p = sys.n, sys.m, sys.p
    if sys.A.shape != (n, n):
        raise ConfigError(f"{label}.A must be square, got {sys.A.shape}")
    if sys.B.shape[0] != n:
        raise ConfigError(f"{label}.B has {sys.B.shape[0]} rows, expected {n}")
    if sys.C.shape != (p, n):
        raise ConfigError(f"{label}.C must be {p}x{n}, got {sys.C.shape}")
    if sys.mu0.shape != (n,):
        raise ConfigError(f"{label}.mu0 must have length {n}, got {sys.mu0.shape}")
    for name, mat in (("A", sys.A), ("B", sys.B), ("C", sys.C)):
        if not np.all(np.isfinite(mat)):
            raise ConfigError(f"{label}.{name} contains non-finite entries")
    if not np.all(np.isfinite(sys.mu0)):
        raise ConfigError(f"{label}.mu0 contains non-finite entries")
    try:
        check_sym_psd(sys.Sigma_w, 1e-10, f"{label}.Sigma_w")
    except MatrixError as exc:
        raise ConfigError(str(exc)) from exc
    if sys.Sigma_w.shape != (n, n):
        raise ConfigError(f"{label}.Sigma_w must be {n}x{n}")
    try:
        check_sym_psd(sys.Sigma_v, 1e-10, f"{label}.Sigma_v")
    except MatrixError as exc:
        raise ConfigError(str(exc)) from exc
    if sys.Sigma_v.shape != (p, p):
        raise ConfigError(f"{label}.Sigma_v must be {p}x{p}")
    if np.linalg.eigvalsh((sys.Sigma_v + sys.Sigma_v.T) / 2).min() <= 0:
        raise ConfigError(f"{label}.Sigma_v must be positive definite")


def validate(spec: ArchitectureSpec) -> ArchitectureSpec:
    """Check all type invariants; returns the spec unchanged on success."""
    _check_system(spec.upper, "upper")
    _check_system(spec.lower, "lower")
    if spec.upper.p != spec.lower.p:
        raise ConfigError(
            f"output dimension mismatch: upper p={spec.upper.p}, lower p={spec.lower.p}"
        )
    if not spec.u_max > 0:
        raise ConfigError("u_max must be positive")
    uc = spec.upper_controller
    if uc.kind != "lqg":
        raise ConfigError(f"unknown upper controller kind {uc.kind!r}")
    n1, m1 = spec.upper.n, spec.upper.m
    if uc.P_Q.shape != (n1, n1):
        raise ConfigError(f"upper_controller.P_Q must be {n1}x{n1}")
    if uc.P_R.shape != (m1, m1):
        raise ConfigError(f"upper_controller.P_R must be {m1}x{m1}")
    try:
        check_sym_psd(uc.P_Q, 1e-10, "upper_controller.P_Q")
        check_sym_psd(uc.P_R, 1e-10, "upper_controller.P_R")
    except MatrixError as exc:
        raise ConfigError(str(exc)) from exc
    if np.linalg.eigvalsh((uc.P_R + uc.P_R.T) / 2).min() <= 0:
        raise ConfigError("upper_controller.P_R must be positive definite")
    if spec.sim.horizon <= 0 or spec.sim.trials <= 0:
        raise ConfigError("sim.horizon and sim.trials must be positive")
    if spec.sim.seed < 0:
        raise ConfigError("sim.seed must be a nonnegative integer")
    if not spec.synth.lambda_grid:
        raise ConfigError("synth.lambda_grid must be nonempty")
    for lam in spec.synth.lambda_grid:
        if not 0.0 < lam < 1.0:
            raise ConfigError(f"lambda value {lam} outside (0, 1)")
    if spec.synth.sdp_tol <= 0 or spec.synth.strict_eps <= 0:
        raise ConfigError("synth.sdp_tol and synth.strict_eps must be positive")
    return spec


def check_stabilizable(a, b, tol: float = 1e-8) -> bool:
    """PBH test: rank([A - lam*I, B]) = n at every unstable eigenvalue."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if abs(lam) >= 1.0:
            pbh = np.hstack([a - lam * np.eye(n), b.astype(complex)])
            sv = np.linalg.svd(pbh, compute_uv=False)
            if sv.size == 0 or sv[-1] <= tol * sv[0]:
                return False
            if np.sum(sv > tol * sv[0]) < n:
                return False
    return True


def discretize_forward_euler(ac, bc, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """A = I + dt*Ac, B = dt*Bc."""
    ac = as_matrix(ac, "Ac")
    bc = as_matrix(bc, "Bc")
    if ac.shape[0] != ac.shape[1]:
        raise ConfigError(f"Ac must be square, got {ac.shape}")
    if dt <= 0:
        raise ConfigError("dt must be positive")
    return np.eye(ac.shape[0]) + dt * ac, dt * bc


def _parse_matrix(obj, name: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ConfigError(f"{name} must be a nonempty array of arrays")
    width = len(obj[0])
    if any(len(r) != width for r in obj):
        raise ConfigError(f"{name} has ragged rows")
    try:
        return as_matrix(obj, name)
    except (MatrixError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _parse_cov(obj, name: str) -> np.ndarray:
    # flat array means a diagonal covariance
    if isinstance(obj, list) and obj and not isinstance(obj[0], list):
        return np.diag(np.asarray(obj, dtype=float))
    return _parse_matrix(obj, name)


def _parse_vector(obj, name: str) -> np.ndarray:
    if not isinstance(obj, list) or any(isinstance(x, list) for x in obj):
        raise ConfigError(f"{name} must be a flat array of numbers")
    return np.asarray(obj, dtype=float)


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing field {key!r} in {where}")
    return d[key]


def _parse_system(d: dict, label: str) -> LinearSystemSpec:
    if not isinstance(d, dict):
        raise ConfigError(f"{label} must be an object")
    has_discrete = "A" in d or "B" in d
    has_continuous = "Ac" in d or "Bc" in d
    if has_discrete and has_continuous:
        raise ConfigError(f"{label}: mixing discrete (A,B) and continuous (Ac,Bc) matrices")
    if has_continuous:
        ac = _parse_matrix(_require(d, "Ac", label), f"{label}.Ac")
        bc = _parse_matrix(_require(d, "Bc", label), f"{label}.Bc")
        dt = _require(d, "dt", label)
        a, b = discretize_forward_euler(ac, bc, float(dt))
    elif has_discrete:
        if "dt" in d:
            raise ConfigError(f"{label}: 'dt' is only valid with continuous matrices")
        a = _parse_matrix(_require(d, "A", label), f"{label}.A")
        b = _parse_matrix(_require(d, "B", label), f"{label}.B")
    else:
        raise ConfigError(f"{label}: needs either (A,B) or (Ac,Bc,dt)")
    return LinearSystemSpec(
        A=a,
        B=b,
        C=_parse_matrix(_require(d, "C", label), f"{label}.C"),
        Sigma_w=_parse_cov(_require(d, "Sigma_w", label), f"{label}.Sigma_w"),
        Sigma_v=_parse_cov(_require(d, "Sigma_v", label), f"{label}.Sigma_v"),
        mu0=_parse_vector(_require(d, "mu0", label), f"{label}.mu0"),
    )


def load_config(text: str) -> ArchitectureSpec:
    """Parse and validate a JSON architecture config."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    uc_raw = _require(raw, "upper_controller", "config")
    sim_raw = _require(raw, "sim", "config")
    synth_raw = _require(raw, "synth", "config")
    spec = ArchitectureSpec(
        upper=_parse_system(_require(raw, "upper", "config"), "upper"),
        lower=_parse_system(_require(raw, "lower", "config"), "lower"),
        u_max=float(_require(raw, "u_max", "config")),
        upper_controller=UpperControllerCfg(
            kind=str(_require(uc_raw, "kind", "upper_controller")),
            P_Q=_parse_cov(_require(uc_raw, "P_Q", "upper_controller"), "upper_controller.P_Q"),
            P_R=_parse_cov(_require(uc_raw, "P_R", "upper_controller"), "upper_controller.P_R"),
        ),
        sim=SimCfg(
            horizon=int(_require(sim_raw, "horizon", "sim")),
            trials=int(_require(sim_raw, "trials", "sim")),
            seed=int(_require(sim_raw, "seed", "sim")),
        ),
        synth=SynthCfg(
            lambda_grid=tuple(float(x) for x in _require(synth_raw, "lambda_grid", "synth")),
            sdp_tol=float(_require(synth_raw, "sdp_tol", "synth")),
            strict_eps=float(_require(synth_raw, "strict_eps", "synth")),
            use_constructive_fallback=bool(
                _require(synth_raw, "use_constructive_fallback", "synth")
            ),
        ),
    )
    return validate(spec)


def _mat_to_list(m: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(m)]


def _system_to_dict(sys: LinearSystemSpec) -> dict:
    return {
        "A": _mat_to_list(sys.A),
        "B": _mat_to_list(sys.B),
        "C": _mat_to_list(sys.C),
        "Sigma_w": _mat_to_list(sys.Sigma_w),
        "Sigma_v": _mat_to_list(sys.Sigma_v),
        "mu0": [float(x) for x in sys.mu0],
    }


def serialize(spec: ArchitectureSpec) -> str:
    """Emit a JSON config (always in discrete-matrix form)."""
    doc = {
        "upper": _system_to_dict(spec.upper),
        "lower": _system_to_dict(spec.lower),
        "u_max": float(spec.u_max),
        "upper_controller": {
            "kind": spec.upper_controller.kind,
            "P_Q": _mat_to_list(spec.upper_controller.P_Q),
            "P_R": _mat_to_list(spec.upper_controller.P_R),
        },
        "sim": {
            "horizon": spec.sim.horizon,
            "trials": spec.sim.trials,
            "seed": spec.sim.seed,
        },
        "synth": {
            "lambda_grid": list(spec.synth.lambda_grid),
            "sdp_tol": spec.synth.sdp_tol,
            "strict_eps": spec.synth.strict_eps,
            "use_constructive_fallback": spec.synth.use_constructive_fallback,
        },
    }
    return json.dumps(doc, indent=2)
