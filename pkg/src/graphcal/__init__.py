"""Post-hoc confidence calibration for node-classification GNNs.

The package works on frozen logits: load a graph, labels, logits and a split,
fit a calibrator (temperature, vector or ensemble temperature scaling, a
calibration GCN, or graph attention temperature scaling) on the validation
nodes and score it on the test nodes.
"""

from .data import Dataset, Manifest, write_dataset
from .graph import Graph, build_graph
from .metrics import EvalResult, evaluate
from .trainer import NodeMask, SplitPlan, stratified_split

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Manifest", "write_dataset", "Graph", "build_graph", "EvalResult", "evaluate",
    "NodeMask", "SplitPlan", "stratified_split", "__version__",
]
