"""psytext: psychometric scoring of text corpora with LLM raters.

Declare latent constructs with multi-item rating prompt pools, score
texts through pluggable rating providers, and assess the resulting
ratings for reliability (factor structure, internal consistency) and
validity (criterion correlations).
"""

from .cfa import CFAFit, CFAModelSpec, cfa_fit, fit_indices, with_fit_indices
from .corpus import TextRecord, load_corpus
from .exploratory import efa
from .errors import (
    ArtifactMissingError,
    ConvergenceError,
    InstrumentError,
    InsufficientDataError,
    ParseAmbiguityError,
    ParseFailure,
    ProviderError,
    PsytextError,
)
from .factor_model import FactorModel
from .instrument import (
    Construct,
    Instrument,
    PromptTemplate,
    ResponseScale,
    ScaleItem,
    load_scale_spec,
    render_prompt,
    validate_instrument,
)
from .raters import (
    HttpChatProvider,
    RatingRecord,
    ResponseCache,
    RetryPolicy,
    SimulatedRaterProvider,
    SimulatedRaterSpec,
    batch_score,
    parse_response,
    score_one,
    simulate_rater,
)
from .ratings import (
    CovarianceResult,
    RatingMatrix,
    SplitSpec,
    apply_keying,
    assemble_matrix,
    covariance,
    split_holdout,
)
from .reliability import (
    ItemDiagnostic,
    ReliabilityReport,
    cronbach_alpha,
    item_diagnostics,
    mcdonald_omega,
)
from .retention import kaiser_rule, parallel_analysis
from .validity import (
    CriterionSeries,
    ValidityReport,
    aggregate_scores,
    disattenuate,
    validity_correlations,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactMissingError",
    "CFAFit",
    "CFAModelSpec",
    "Construct",
    "ConvergenceError",
    "CovarianceResult",
    "CriterionSeries",
    "FactorModel",
    "HttpChatProvider",
    "Instrument",
    "InstrumentError",
    "InsufficientDataError",
    "ItemDiagnostic",
    "ParseAmbiguityError",
    "ParseFailure",
    "PromptTemplate",
    "ProviderError",
    "PsytextError",
    "RatingMatrix",
    "RatingRecord",
    "ReliabilityReport",
    "ResponseCache",
    "ResponseScale",
    "RetryPolicy",
    "ScaleItem",
    "SimulatedRaterProvider",
    "SimulatedRaterSpec",
    "SplitSpec",
    "TextRecord",
    "ValidityReport",
    "aggregate_scores",
    "apply_keying",
    "assemble_matrix",
    "batch_score",
    "cfa_fit",
    "covariance",
    "cronbach_alpha",
    "disattenuate",
    "efa",
    "fit_indices",
    "item_diagnostics",
    "kaiser_rule",
    "load_corpus",
    "load_scale_spec",
    "mcdonald_omega",
    "parallel_analysis",
    "parse_response",
    "render_prompt",
    "score_one",
    "simulate_rater",
    "split_holdout",
    "validate_instrument",
    "with_fit_indices",
]
