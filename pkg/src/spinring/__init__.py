"""Robustness versus transfer fidelity for bias-controlled spin rings."""
from .fidelity import projective_error, transfer_probability, windowed_probability
from .mu import (
    ClosedPlant,
    GeneralizedPlant,
    MuResult,
    SingularPlantError,
    assemble_plant,
    close_controller,
    mu_lower_bound,
    orth_complement,
    upper_lft,
)
from .pipeline import CaseResult, CaseSpec, MetricPair, TransferSummary, run_case, summarize_transfer
from .ring_model import (
    BiasController,
    PerturbationKind,
    PerturbationSpec,
    RingSpec,
    build_hamiltonian,
    perturbed_hamiltonian,
)
from .sensitivity import SensitivityResult, log_sensitivity, probability_derivative
from .spectral import SpectralDecomposition, decompose, evolve
from .stats import RankCorrelationResult, StoufferResult, kendall_tau, rank_correlation, stouffer, z_score
from .synthesis import SynthesisOptions, SynthesisReport, synthesize

__version__ = "0.1.0"
