"""Token prune-and-reconstruct laboratory on a deterministic toy encoder."""

from .analysis import (
    BoundReport,
    SmoothnessStats,
    delta_smoothness_stats,
    estimate_lipschitz,
    final_output_perturbation,
    hausdorff,
    measure_reconstruction_error,
)
from .baselines import AblationVariant, run_variant
from .compressor import (
    CompressedTrace,
    CompressionConfig,
    NeighborMap,
    PrunePartition,
    downstream_prune,
    find_neighbors,
    naive_prune_forward,
    reconstruct_removed,
    run_compressed,
    score_tokens,
    select_topk,
    stabilized_forward,
)
from .cost import CostReport, count_flops
from .encoder import (
    Encoder,
    EncoderConfig,
    LayerTrace,
    SyntheticInputSpec,
    build_encoder,
    forward_full,
    forward_subset,
    make_synthetic_input,
)
from .errors import ConfigError, ContractViolation, EstimationFailed, UndefinedSimilarity
from .numerics import Rng
from .runspec import RunSpec, load_spec, parse_spec_text, read_report, write_report

__version__ = "0.1.0"
