"""One-time passkey authentication: gateway, client SDK, and attack drills."""

from .agent import AuthAgent, AuthChallenge, SessionTicket, UserRecord, UserStatus, UserStore
from .client import ChainSession, OtpkClient, TransportError
from .errors import ApiError, ErrorCode
from .gateway import Gateway, GatewayConfig, GatewayStartupError, serve
from .hashchain import Digest, HashAlg, Passkey, chain, chain_digest, hash_once, verify_step
from .mining import ClusteringResult, Dataset, MiningError, kmeans, parse_dataset
from .transcript import Transcript, TranscriptEntry
from .trust import TrustRule, TrustStore, load_trust_file, save_trust_file

__version__ = "0.1.0"

__all__ = [
    "ApiError",
    "AuthAgent",
    "AuthChallenge",
    "ChainSession",
    "ClusteringResult",
    "Dataset",
    "Digest",
    "ErrorCode",
    "Gateway",
    "GatewayConfig",
    "GatewayStartupError",
    "HashAlg",
    "MiningError",
    "OtpkClient",
    "Passkey",
    "SessionTicket",
    "Transcript",
    "TranscriptEntry",
    "TransportError",
    "TrustRule",
    "TrustStore",
    "UserRecord",
    "UserStatus",
    "UserStore",
    "chain",
    "chain_digest",
    "hash_once",
    "kmeans",
    "load_trust_file",
    "parse_dataset",
    "save_trust_file",
    "serve",
    "verify_step",
]
