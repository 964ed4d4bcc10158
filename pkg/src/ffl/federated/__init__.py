"""Backbone-only federated averaging with site-local heads, in-process or over TCP."""
from .aggregate import aggregate
from .config import Aggregation, FederationConfig, SiteSpec
from .orchestrate import Aggregator, FederationResult, Observer, RoundRecord, run_federated, run_local
from .site import (
    SiteState,
    SiteWorker,
    adopt_backbone,
    fine_tune,
    init_site,
    mean_loss,
    predict_proba,
    site_local_round,
)
from .tcp import AggregatorServer, SiteFailure, parse_address, run_federated_tcp, run_site
from .wire import (
    BadMagicError,
    BadVersionError,
    ConnectionClosed,
    EnterFineTune,
    GlobalBackbone,
    LocalBackbone,
    MalformedPayloadError,
    ProtocolError,
    Register,
    RoundMessage,
    Shutdown,
    TruncatedFrameError,
    UnknownMessageTypeError,
    decode_message,
    encode_message,
)

__all__ = [
    "Aggregation",
    "Aggregator",
    "AggregatorServer",
    "BadMagicError",
    "BadVersionError",
    "ConnectionClosed",
    "EnterFineTune",
    "FederationConfig",
    "FederationResult",
    "GlobalBackbone",
    "LocalBackbone",
    "MalformedPayloadError",
    "Observer",
    "ProtocolError",
    "Register",
    "RoundMessage",
    "RoundRecord",
    "Shutdown",
    "SiteFailure",
    "SiteSpec",
    "SiteState",
    "SiteWorker",
    "TruncatedFrameError",
    "UnknownMessageTypeError",
    "adopt_backbone",
    "aggregate",
    "decode_message",
    "encode_message",
    "fine_tune",
    "init_site",
    "mean_loss",
    "parse_address",
    "predict_proba",
    "run_federated",
    "run_federated_tcp",
    "run_local",
    "run_site",
    "site_local_round",
]
