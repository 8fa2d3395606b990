from .decoder import (
    ConstraintSystem,
    DecodeFailure,
    DecodeResult,
    InactivationDecoder,
    gf2_rank,
    inactivation_decode,
    incidence_matrix,
)
from .profile import (
    IdealCode,
    OverheadProfile,
    code_system,
    estimate_pf,
    estimate_profile,
    optimize_soliton,
)
from .raptor import (
    RaptorCodeSpec,
    build_raptor,
    derive_parameters,
    lt_encode,
    min_overhead,
    received_threshold,
)
from .soliton import DegreeDistribution, LTCode, RobustSolitonParams, robust_soliton
