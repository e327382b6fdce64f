"""Agreement models for three raters classifying items into n categories.

Exact (``Fraction``) and float tensors, the six model families, pairwise
Cohen's kappa, polynomial invariants, geometric predicates and fitting.
"""

from .agreement import (
    KappaTriple,
    SweepGrid,
    cohen_kappa,
    kappa_pmix_uniform,
    kappa_pqi_uniform,
    pairwise_kappas,
    sweep,
    sweep_csv,
)
from .errors import *  # noqa: F401,F403
from .estimation import CountTensor, FitResult, em_fit, fit, ipf_fit, loglik
from .geometry import (
    Direction,
    LinearVarietyId,
    WitnessReport,
    boundary_counterexample,
    hadamard,
    mix_to_qi,
    toric_membership,
    variety_equations,
    variety_membership,
)
from .invariants import (
    MonomialMatrix,
    catalog,
    evaluate,
    fiber_dimension,
    generate_mixn_invariants,
    generate_qin_invariants,
    matrix_criterion,
    monomial_matrix,
    occurrence_matrix,
    rho,
    sigma_set,
)
from .models import (
    CommonQIParams,
    MixParams,
    PairwiseMixParams,
    PairwiseQIParams,
    QIParams,
    UniformMixParams,
    materialize,
    sample_params,
)
from .polynomial import SparsePolynomial
from .tensor import CellClass, ProbabilityTensor, TwoWayTable, classify_cell, marginalize

__version__ = "0.1.0"
