"""Tensor-network contraction simulator for 2D random quantum circuits.

Pipeline: generate an fSim-based random circuit on a hardware topology,
convert it to a tensor network, search a sliced contraction order under a
memory bound, contract slices with a fused permute-multiply kernel, and
sample or verify bitstrings via linear XEB against the Porter-Thomas model.
"""

from .analysis import (
    SampleResult,
    XebReport,
    dilute_to_fidelity,
    frugal_sample,
    parse_bitstrings,
    porter_thomas_cdf,
    porter_thomas_pdf,
    statevector_simulate,
    verify_bitstrings,
    xeb_fidelity,
)
from .circuit import Circuit, generate_rqc, parse_circuit, serialize_circuit
from .config import RunConfig, load_config, parse_config
from .engine import AmplitudeBatch, amplitudes_batch, contract_slice, execute
from .gates import FsimParams, GateMatrix, fsim, single_qubit_gate
from .network import TensorNetwork, circuit_to_network, export_einsum, simplify
from .order import (
    ContractionPlan,
    cost,
    exhaustive_order,
    find_order,
    load_plan,
    partition_search,
    save_plan,
    slice_and_reconfigure,
)
from .tensor import Tensor, contract_fused, contract_naive, dump_tensor, load_tensor
from .topology import Topology, builtin_topology, grid_topology, parse_topology

__version__ = "0.1.0"

__all__ = [
    "AmplitudeBatch",
    "Circuit",
    "ContractionPlan",
    "FsimParams",
    "GateMatrix",
    "RunConfig",
    "SampleResult",
    "Tensor",
    "TensorNetwork",
    "Topology",
    "XebReport",
    "amplitudes_batch",
    "builtin_topology",
    "circuit_to_network",
    "contract_fused",
    "contract_naive",
    "contract_slice",
    "cost",
    "dilute_to_fidelity",
    "dump_tensor",
    "execute",
    "exhaustive_order",
    "export_einsum",
    "find_order",
    "frugal_sample",
    "fsim",
    "generate_rqc",
    "grid_topology",
    "load_config",
    "load_plan",
    "load_tensor",
    "parse_bitstrings",
    "parse_circuit",
    "parse_config",
    "parse_topology",
    "partition_search",
    "porter_thomas_cdf",
    "porter_thomas_pdf",
    "save_plan",
    "serialize_circuit",
    "simplify",
    "single_qubit_gate",
    "slice_and_reconfigure",
    "statevector_simulate",
    "verify_bitstrings",
    "xeb_fidelity",
]
