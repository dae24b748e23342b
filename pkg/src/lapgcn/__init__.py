"""Graph-spectral classifier for unordered, partially corrupted feature
sequences: adaptive sparse graph embedding, Laplacian high-pass
pre-filtering, graph-convolutional aggregation, dual-level sparsity, and
a corruption-robustness benchmark harness."""

from .errors import ConfigError, NumericalError, ShapeError
from .graph_embed import SparseAdjacency, adaptive_threshold, build_affinity, build_graph
from .metrics import MetricReport, compute_metrics
from .model import (
    ForwardTrace,
    ModelConfig,
    ModelParams,
    forward,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .numkit import Rng, matmul, relu, softmax_rows, sym_eigen
from .simdata import (
    GeneratorConfig,
    PerturbationSpec,
    SequenceSample,
    apply_local_perturbation,
    apply_masking,
    gen_dataset,
    perturb,
    shuffle_frames,
)
from .spectral import (
    NormalizedLaplacian,
    PropagationOperator,
    add_self_loops,
    cascade_response,
    laplacian_prefilter,
    normalized_laplacian,
    propagation_operator,
)
from .train import (
    AdamState,
    LossBreakdown,
    TrainSchedule,
    adam_step,
    backward,
    grad_check,
    loss,
    train_loop,
)

__version__ = "0.1.0"
