"""Cross-chain atomic swaps with signature-count timelocks, plus an
adversarial discrete-event simulator to exercise them."""
from .checker import OutcomeClass, check_equilibrium, check_uniformity, classify, payoff
from .contract import ContractState, SwapContract
from .graph import Arc, LeaderSet, SwapDigraph, diameter, feedback_vertex_set, is_strongly_connected
from .metrics import ComplexityReport, baselines, measure
from .parties import Phase, Role, SimResult, deviation_catalog, simulate

__all__ = [
    "Arc", "ComplexityReport", "ContractState", "LeaderSet", "OutcomeClass", "Phase", "Role",
    "SimResult", "SwapContract", "SwapDigraph", "baselines", "check_equilibrium",
    "check_uniformity", "classify", "deviation_catalog", "diameter", "feedback_vertex_set",
    "is_strongly_connected", "measure", "payoff", "simulate",
]
__version__ = "0.1.0"
