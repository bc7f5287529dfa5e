"""Sum-DoF calculus and end-to-end simulation of retrospective interference alignment
for the K-user MISO interference channel with delayed local CSIT."""

from .dof_calculus import (
    ASYMPTOTE,
    CountTable,
    DofBreakdown,
    ReplicationPlan,
    a2_closed,
    appendix_b_path,
    asymptote_check,
    big_o,
    comparator,
    counts,
    dof_m_recursive,
    replication_plan,
    sum_dof,
)
from .decoder import DecodeReport, backward_decode
from .protocol_engine import ProtocolEngine, Transcript, run_full

__all__ = [
    "ASYMPTOTE",
    "CountTable",
    "DecodeReport",
    "DofBreakdown",
    "ProtocolEngine",
    "ReplicationPlan",
    "Transcript",
    "a2_closed",
    "appendix_b_path",
    "asymptote_check",
    "backward_decode",
    "big_o",
    "comparator",
    "counts",
    "dof_m_recursive",
    "replication_plan",
    "run_full",
    "sum_dof",
]
