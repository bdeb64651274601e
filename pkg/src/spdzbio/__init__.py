"""Two-party SPDZ online phase with a trusted dealer, secure comparison and
privacy-preserving iris, face and fused biometric matching."""

from .dealer import Counts, PreprocessingBundle, deal, estimate, read_bundle, write_bundle
from .engine import PartySession, run_local
from .errors import (
    BundleFormatError,
    FieldMismatchError,
    FramingError,
    MacCheckFailed,
    PreprocessingExhausted,
    RangeFitError,
    SessionAborted,
    SpdzError,
    TemplateError,
    TransportError,
)
from .field import DEFAULT_PRIME, EntropySource, FieldElement, FieldParams
from .protocols import (
    Decision,
    FaceSetup,
    FaceTemplate,
    FusionParams,
    IrisSetup,
    IrisTemplate,
    MultimodalSetup,
    quantize_fusion,
)
from .runner import ClientInputs, RunResult, ServerInputs, run_protocol
from .shares import AuthShare, MacKeyShare, reconstruct

__version__ = "0.1.0"
