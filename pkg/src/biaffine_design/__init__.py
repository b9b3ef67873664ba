"""Bi-affine physical design: adjoint gradients, descent experiments, random
ensembles, and orthogonal-group moment calculus."""

from .conditions import (
    ConditionReport,
    ScalingFit,
    aggregate_and_fit,
    check_conditions,
    condition_study,
    fit_scaling,
    spectral_norm,
)
from .core import (
    DOMAIN_TOLERANCE,
    DesignProblem,
    PhysicalSystem,
    StateVectors,
    SystemMatrix,
    adjoint_solve,
    assemble_system,
    cost_gradient,
    domain_check,
    finite_difference_gradient,
    forward_solve,
    solve_state,
)
from .costs import CostSpec, cost_eval, verify_convexity_envelope
from .ensembles import (
    EnsembleSpec,
    GeneratedProblem,
    SpectrumProfile,
    generate_problem,
    make_spectrum,
    mix_seed,
    sample_gaussian_problem,
    sample_haar_orthogonal,
    sample_haar_orthogonal_batch,
    sample_sparse_vector,
    sample_svd_problem,
    substream,
)
from .experiments import (
    ExperimentConfig,
    ResonanceAudit,
    RunRecord,
    ScalingStudyResult,
    contraction_fit,
    emit_plot_data,
    emit_resonance_data,
    log_affine_fit,
    run_convergence_study,
    run_resonance_audit,
    run_single,
    steps_to_gap,
)
from .problem_io import dumps_problem, load_problem, write_problem
from .solver import (
    GDConfig,
    ResonanceSummary,
    Trajectory,
    default_step_size,
    descent_certificate,
    resonance_summary,
    run_gd,
    write_trace_csv,
)
from .weingarten import (
    GaussianMomentReport,
    Pairing,
    WeingartenTable,
    chi_eq,
    chi_ueq,
    enumerate_pairings,
    fourth_moment_pairing_sum,
    fourth_moment_printed,
    gaussian_moment_suite,
    k2_closed_form_candidate,
    loop_count,
    mc_orthogonal_moment,
    pairing_delta,
    second_moment_closed,
    weingarten_table,
)

__version__ = "0.1.0"
