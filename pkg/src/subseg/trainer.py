"""End-to-end training of the autoencoder plus concept bank.

One model is trained per activity class.  Every epoch walks the pooled
segments of all videos in a PRNG-shuffled order, in mini-batches; each
batch takes one Adam step on the combined objective

    total = recon_weight * reconstruction + contrast_weight * contrastive

with the reconstruction term itself split into feature and positional
parts.  Toggles switch off the feature loss, the positional loss, the
contrastive branch, the skip connections, or the positional encodings
(the last replaces the encoding with zeros everywhere it appears).
Training is bit-deterministic given (dataset, config).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import concepts as concepts_mod
from . import embedding as embed_mod
from .concepts import ConceptBank
from .embedding import EmbeddingNet
from .errors import ConfigError, ContractError, DivergenceError, IngestionError
from .numerics import AdamState, adam_step, mse, mse_backward
from .rng import STREAM_INIT, STREAM_SHUFFLE, make_rng


@dataclass(frozen=True)
class TrainConfig:
    concept_count: int
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-4
    seed: int = 0
    latent_dim: int = 1024
    recon_weight: float = 1.0      # multiplies the reconstruction term
    contrast_weight: float = 1.0   # multiplies the contrastive term
    position_weight: float = 1.0   # weights positional vs feature MSE
    use_feature_loss: bool = True
    use_position_loss: bool = True
    use_contrastive: bool = True
    use_skip: bool = True
    use_pe: bool = True

    def __post_init__(self):
        if self.concept_count < 2:
            raise ConfigError(f"concept count must be >= 2, got {self.concept_count}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.latent_dim < 1:
            raise ConfigError(f"latent dim must be >= 1, got {self.latent_dim}")
        if self.recon_weight < 0.0 or self.contrast_weight < 0.0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class EpochLoss:
    epoch: int
    recon: float
    contrast: float
    total: float


@dataclass
class TrainedModel:
    net: EmbeddingNet
    bank: ConceptBank
    config: TrainConfig
    loss_trace: list = field(default_factory=list)


def _batch_loss(net, bank, features, encodings, cfg, frozen_best=None):
    """Forward + backward for one batch; accumulates gradients in place.

    Returns (recon term, contrastive term, total).  `encodings` must
    already be zeroed by the caller when positional encodings are off.
    """
    fwd = embed_mod.forward_batch(net, features, encodings)
    loss_recon = 0.0
    d_out = np.zeros_like(fwd.output)
    if cfg.use_feature_loss:
        loss_recon += mse(features, fwd.recon_features)
        d_out[:, : net.feature_dim] = cfg.recon_weight * mse_backward(
            features, fwd.recon_features)
    if cfg.use_position_loss:
        loss_recon += cfg.position_weight * mse(encodings, fwd.recon_encodings)
        d_out[:, net.feature_dim:] = cfg.recon_weight * cfg.position_weight * mse_backward(
            encodings, fwd.recon_encodings)

    loss_contrast = 0.0
    d_latent_extra = None
    if cfg.use_contrastive:
        queries = np.concatenate([fwd.latent, encodings], axis=1)
        cfwd = concepts_mod.forward_batch(bank, queries, frozen_best=frozen_best)
        loss_contrast = float(np.mean(cfwd.losses))
        scale = cfg.contrast_weight / queries.shape[0]
        d_queries = concepts_mod.backward_batch(bank, cfwd, queries, scale)
        d_latent_extra = d_queries[:, : net.latent_dim]

    embed_mod.backward_batch(net, fwd, d_out, d_latent_extra=d_latent_extra)
    total = cfg.recon_weight * loss_recon + cfg.contrast_weight * loss_contrast
    return loss_recon, loss_contrast, total


def total_loss(net, bank, features_row, encoding_row, cfg, frozen_best=None):
    """Single-segment objective; gradients accumulate into net and bank."""
    features_row = np.atleast_2d(np.asarray(features_row, dtype=float))
    encoding_row = np.atleast_2d(np.asarray(encoding_row, dtype=float))
    if not cfg.use_pe:
        encoding_row = np.zeros_like(encoding_row)
    _, _, total = _batch_loss(net, bank, features_row, encoding_row, cfg,
                              frozen_best=frozen_best)
    return total


def _pooled_segments(dataset):
    if not dataset:
        raise ContractError("training needs at least one sequence")
    dim = dataset[0].features.shape[1]
    pe_dim = dataset[0].pos_encodings.shape[1]
    for seq in dataset:
        if seq.features.shape[1] != dim or seq.pos_encodings.shape[1] != pe_dim:
            raise IngestionError(
                f"sequence {seq.video_id!r} dims ({seq.features.shape[1]}, "
                f"{seq.pos_encodings.shape[1]}) differ from ({dim}, {pe_dim})"
            )
    features = np.concatenate([seq.features for seq in dataset], axis=0)
    encodings = np.concatenate([seq.pos_encodings for seq in dataset], axis=0)
    return features, encodings


def train(dataset, cfg: TrainConfig) -> TrainedModel:
    """Fit autoencoder + concept bank on the pooled segments of one activity."""
    features, encodings = _pooled_segments(dataset)
    if not cfg.use_pe:
        encodings = np.zeros_like(encodings)
    feature_dim = features.shape[1]
    pe_dim = encodings.shape[1]

    init_rng = make_rng(cfg.seed, STREAM_INIT)
    net = EmbeddingNet.build(feature_dim, pe_dim, latent_dim=cfg.latent_dim,
                             rng=init_rng, skip_enabled=cfg.use_skip)
    bank = ConceptBank.build(cfg.concept_count, cfg.latent_dim + pe_dim, init_rng)
    params = net.params() + bank.params()
    grads = net.grads() + bank.grads()
    adam = AdamState(params, lr=cfg.lr)
    shuffle_rng = make_rng(cfg.seed, STREAM_SHUFFLE)

    total_rows = features.shape[0]
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(total_rows)
        sums = np.zeros(3)
        for start in range(0, total_rows, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            recon, contrast, batch_total = _batch_loss(
                net, bank, features[idx], encodings[idx], cfg)
            if not np.isfinite(batch_total):
                raise DivergenceError(
                    f"non-finite loss {batch_total} at epoch {epoch}, "
                    f"batch starting at segment {start}"
                )
            adam_step(params, grads, adam)
            sums += len(idx) * np.array([recon, contrast, batch_total])
        means = sums / total_rows
        trace.append(EpochLoss(epoch=epoch, recon=float(means[0]),
                               contrast=float(means[1]), total=float(means[2])))
    return TrainedModel(net=net, bank=bank, config=replace(cfg), loss_trace=trace)
