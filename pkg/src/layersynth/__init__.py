"""Layered control synthesis for partially observed stochastic linear systems.

Given a coarse upper-layer system with an existing LQG controller and a
detailed lower-layer system, the toolkit designs an interface controller
u2 = R u1 + Q xhat1 + K (xhat2 - P xhat1), certifies an a-priori bound
epsilon on the expected output distance between the two closed loops,
and validates the bound by Monte Carlo simulation.
"""

from .estimation import EstimatorSpec, build_estimator, estimate_step, innovation
from .matops import (
    MatrixError,
    check_sym_psd,
    minnorm_lstsq,
    solve_control_dare,
    solve_discrete_lyapunov,
    solve_filter_dare,
    spectral_radius,
    sym_sqrt,
)
from .sdp import SdpError, SdpProblem, SdpSolution, lmi_margin
from .simulation import (
    McSummary,
    TrialTrace,
    contraction_report,
    interface_control,
    lqg_gain,
    monte_carlo,
    saturate,
    simulate_trial,
)
from .synthesis import (
    Assumption2Error,
    Certificate,
    InterfaceDesign,
    InterfaceMaps,
    SynthesisError,
    compute_R,
    compute_certificate,
    design_from_json,
    design_pipeline,
    design_to_json,
    evaluate_V,
    solve_interface_maps,
    synthesize_constructive,
)
from .systems import (
    ArchitectureSpec,
    ConfigError,
    LinearSystemSpec,
    SimCfg,
    SynthCfg,
    UpperControllerCfg,
    discretize_forward_euler,
    load_config,
    serialize,
    validate,
)

__version__ = "0.1.0"
