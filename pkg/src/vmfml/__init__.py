"""Deep metric learning on the hypersphere with von Mises-Fisher distributions."""

__version__ = "0.1.0"

from .directional import (
    VmfParams,
    estimate_kappa,
    estimate_mean_direction,
    log_bessel_i,
    log_normalizer,
    log_vmf_density,
    normalize,
    sample_vmf,
    sphere_surface_area,
)
from .objective import (
    LossReport,
    PrototypeSet,
    class_posterior,
    normalize_backward,
    vmf_loss,
    vmf_loss_grad_embedding,
)
from .network import Network, NetworkConfig, OptimizerState, backward, embed, forward, init_network, sgd_step
from .trainer import TrainConfig, TrainLog, train, update_prototypes
from .evaluation import accuracy, diagnostics, nmi, predict, recall_at_k
from .clustering import movmf_em, spherical_kmeans
from .data import LabeledDataset, load_csv, load_idx
