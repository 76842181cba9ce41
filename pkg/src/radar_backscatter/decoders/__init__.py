"""Semi-blind decoders, their block updates and the reference baselines."""

from .alternating import (
    DECODERS,
    DecodeResult,
    DecoderSettings,
    asce_d_decode,
    asce_decode,
    decode_with_mask,
    r_asce_d_decode,
    r_asce_decode,
    structured_decode,
    unstructured_decode,
)
from .baselines import (
    AmbiguityError,
    InfeasibleError,
    lmmse_baseline_decode,
    ml_csi_decode,
    plain_als_baseline_decode,
)
from .updates import (
    build_left_factors,
    objective,
    update_delay_and_v,
    update_g,
    update_U_exhaustive,
    update_U_relaxed,
    update_V,
)
