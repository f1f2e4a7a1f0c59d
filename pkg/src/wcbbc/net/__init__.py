from .frames import ACK, CERT, PROOF_REQUEST, PROOF_RESPONSE, VOTE, Frame, ProofRequest, decode_frame
from .link import PeerLink
from .local import LocalRun, NodeRun, spawn_local
from .node import NodeOptions, NodeRuntime, draw_proposal, node_main, parse_result_line, serve
from .proxy import LossyProxy
from .wal import Wal, WalCorrupted, WalRecord, read_wal, wal_replay

__all__ = [
    "ACK", "CERT", "Frame", "LocalRun", "LossyProxy", "NodeOptions", "NodeRun", "NodeRuntime",
    "PROOF_REQUEST", "PROOF_RESPONSE", "PeerLink", "ProofRequest", "VOTE", "Wal", "WalCorrupted",
    "WalRecord", "decode_frame", "draw_proposal", "node_main", "parse_result_line", "read_wal",
    "serve", "spawn_local", "wal_replay",
]
