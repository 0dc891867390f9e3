"""Small semidefinite programs: linear objective over LMI blocks.

Thin layer over cvxpy/CLARABEL. The contract is residual-based: a
solution reported optimal must leave every constraint block PSD within
the requested tolerance, verifiable independently through lmi_margin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

__all__ = ["SdpError", "SdpProblem", "SdpSolution", "solve", "lmi_margin"]


class SdpError(ValueError):
    """Malformed problem (unknown variable, asymmetric block)."""


@dataclass
class SdpProblem:
    """Named decision variables, PSD constraint blocks, linear objective."""

    variables: dict[str, cp.Variable] = field(default_factory=dict)
    blocks: list[cp.Expression] = field(default_factory=list)
    objective: cp.Expression | float = 0.0

    def add_scalar(self, name: str) -> cp.Variable:
        return self._register(name, cp.Variable(name=name))

    def add_matrix(self, name: str, rows: int, cols: int) -> cp.Variable:
        return self._register(name, cp.Variable((rows, cols), name=name))

    def add_symmetric(self, name: str, dim: int) -> cp.Variable:
        return self._register(name, cp.Variable((dim, dim), symmetric=True, name=name))

    def _register(self, name: str, var: cp.Variable) -> cp.Variable:
        if name in self.variables:
            raise SdpError(f"variable {name!r} already declared")
        self.variables[name] = var
        return var

    def add_psd_block(self, expr) -> None:
        """Require the affine symmetric-valued expression to be PSD."""
        expr = cp.Constant(np.atleast_2d(np.asarray(expr, dtype=float))) \
            if not isinstance(expr, cp.Expression) else expr
        if expr.ndim == 0:
            expr = cp.reshape(expr, (1, 1), order="C")
        if expr.shape[0] != expr.shape[1]:
            raise SdpError(f"constraint block must be square, got {expr.shape}")
        self.blocks.append(expr)

    def set_objective(self, expr) -> None:
        self.objective = expr


@dataclass
class SdpSolution:
    values: dict[str, np.ndarray | float]
    objective: float
    status: str  # optimal | infeasible | max_iters
    min_block_eigenvalue: float


def lmi_margin(blocks, tol: float = 1e-9) -> float:
    """Minimum over blocks of the smallest eigenvalue."""
    margin = np.inf
    for blk in blocks:
        b = np.atleast_2d(np.asarray(blk, dtype=float))
        scale = 1.0 + np.linalg.norm(b, "fro")
        if np.linalg.norm(b - b.T, "fro") > tol * scale:
            raise SdpError("asymmetric constraint block")
        margin = min(margin, float(np.linalg.eigvalsh((b + b.T) / 2).min()))
    return margin


def _evaluate_margin(problem: SdpProblem) -> float:
    return lmi_margin([blk.value for blk in problem.blocks])


def solve(problem: SdpProblem, tol: float = 1e-7) -> SdpSolution:
    """Solve the SDP; reported optimal implies block margins >= -tol."""
    if tol <= 0:
        raise SdpError("tol must be positive")
    constraints = []
    for blk in problem.blocks:
        if blk.shape == (1, 1):
            constraints.append(blk[0, 0] >= 0)
        else:
            constraints.append(blk >> 0)

    if not problem.variables:
        # constant problem: feasibility is a pure margin check
        margin = lmi_margin([blk.value for blk in problem.blocks])
        status = "optimal" if margin >= -tol else "infeasible"
        obj = problem.objective
        obj = float(obj.value) if isinstance(obj, cp.Expression) else float(obj)
        return SdpSolution({}, obj, status, margin)

    prob = cp.Problem(cp.Minimize(problem.objective), constraints)
    try:
        # accuracy is re-verified below by an explicit eigenvalue margin
        # check, so the solver's own inaccuracy warning is redundant
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        return SdpSolution({}, float("nan"), "max_iters", float("-inf"))

    if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SdpSolution({}, float("nan"), "infeasible", float("-inf"))
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return SdpSolution({}, float("nan"), "max_iters", float("-inf"))

    values: dict[str, np.ndarray | float] = {}
    for name, var in problem.variables.items():
        v = var.value
        values[name] = float(v) if np.ndim(v) == 0 else np.asarray(v, dtype=float)
    margin = _evaluate_margin(problem)
    status = "optimal" if margin >= -tol else "max_iters"
    return SdpSolution(values, float(prob.value), status, margin)
