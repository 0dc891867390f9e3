"""Shared fixtures: bundled case configs and small handmade architectures."""

from __future__ import annotations

import numpy as np
import pytest

from layersynth.cli import bundled_config_text
from layersynth.systems import (
    ArchitectureSpec,
    LinearSystemSpec,
    SimCfg,
    SynthCfg,
    UpperControllerCfg,
    load_config,
)


@pytest.fixture(scope="session")
def uav_arch() -> ArchitectureSpec:
    return load_config(bundled_config_text("uav"))


@pytest.fixture(scope="session")
def hexa_arch() -> ArchitectureSpec:
    return load_config(bundled_config_text("hexacopter"))


@pytest.fixture(scope="session")
def uav_design(uav_arch):
    from layersynth.synthesis import design_pipeline

    return design_pipeline(uav_arch)


@pytest.fixture(scope="session")
def hexa_design(hexa_arch):
    from layersynth.synthesis import design_pipeline

    return design_pipeline(hexa_arch)


def make_scalar_system(
    a: float,
    b: float = 1.0,
    c: float = 1.0,
    sw: float = 0.01,
    sv: float = 0.01,
    mu0: float = 1.0,
) -> LinearSystemSpec:
    return LinearSystemSpec(
        A=np.array([[a]]),
        B=np.array([[b]]),
        C=np.array([[c]]),
        Sigma_w=np.array([[sw]]),
        Sigma_v=np.array([[sv]]),
        mu0=np.array([mu0]),
    )


def make_arch(
    upper: LinearSystemSpec,
    lower: LinearSystemSpec,
    u_max: float = 4.0,
    lambda_grid: tuple[float, ...] = tuple(k / 11 for k in range(1, 11)),
    horizon: int = 20,
    trials: int = 8,
    seed: int = 7,
    fallback: bool = True,
) -> ArchitectureSpec:
    n1, m1 = upper.n, upper.m
    return ArchitectureSpec(
        upper=upper,
        lower=lower,
        u_max=u_max,
        upper_controller=UpperControllerCfg(
            kind="lqg", P_Q=np.eye(n1), P_R=0.1 * np.eye(m1)
        ),
        sim=SimCfg(horizon=horizon, trials=trials, seed=seed),
        synth=SynthCfg(lambda_grid=lambda_grid, use_constructive_fallback=fallback),
    )


def make_scalar_arch(
    a1: float = 0.6,
    a2: float = 0.8,
    b1: float = 1.0,
    b2: float = 1.0,
    sw: float = 0.005,
    sv: float = 0.01,
    mu1: float = 1.0,
    mu2: float = 1.0,
    **kwargs,
) -> ArchitectureSpec:
    return make_arch(
        make_scalar_system(a1, b1, sw=sw, sv=sv, mu0=mu1),
        make_scalar_system(a2, b2, sw=sw, sv=sv, mu0=mu2),
        **kwargs,
    )


def random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    w = rng.standard_normal((n, n))
    return scale * (w @ w.T) / n
