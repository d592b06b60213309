"""One-stage hypergraph message passing with Laplacian-mixed attention."""

from .autodiff import AdamState, Params, Tensor, adam_step, backward, grad_check
from .baselines import (
    generic_one_stage,
    hypersage_one_stage,
    hypersage_two_stage,
    unigcn_one_stage,
    unigcn_two_stage,
    verify_equivalence,
)
from .data import Dataset, generate_synthetic, load_dataset, save_dataset
from .hypergraph import (
    Hypergraph,
    compute_degrees,
    from_edge_list,
    incidence_dense,
    laplacian,
    neighborhood,
)
from .model import HGraphormer, ModelConfig, init_params, model_forward
from .training import cross_validate, evaluate, make_folds, sweep, train_one_fold

__version__ = "0.1.0"
