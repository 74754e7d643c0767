"""Joint visual-temporal autoencoder.

The encoder maps the concatenation [features; positional encoding] through
three affine layers (ReLU between them) to a latent vector; the decoder
mirrors it and reconstructs the same concatenation.  Additive skip
connections feed the two encoder hidden activations into the matching
decoder stages.  Reconstruction is penalized with a dual mean-squared
error: feature term plus `beta` times the positional term.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .numerics import (
    LinearLayer,
    linear_backward_batch,
    linear_forward,
    linear_forward_batch,
    mse,
    relu,
)


class EmbeddingNet:
    """Three-layer encoder/decoder pair with optional additive skips."""

    def __init__(self, encoder_layers, decoder_layers, feature_dim, pe_dim, skip_enabled=True):
        self.encoder_layers = list(encoder_layers)
        self.decoder_layers = list(decoder_layers)
        self.feature_dim = feature_dim
        self.pe_dim = pe_dim
        self.skip_enabled = skip_enabled
        if len(self.encoder_layers) != 3 or len(self.decoder_layers) != 3:
            raise DimensionError("embedding net wants exactly 3 encoder and 3 decoder layers")
        if self.decoder_layers[2].out_dim != self.input_dim:
            raise DimensionError(
                f"decoder output {self.decoder_layers[2].out_dim} != input dim {self.input_dim}"
            )
        # skip pairing: encoder hidden i feeds decoder stage 2 - i
        for i in (0, 1):
            enc_out = self.encoder_layers[i].out_dim
            dec_out = self.decoder_layers[1 - i].out_dim
            if enc_out != dec_out:
                raise DimensionError(
                    f"skip widths differ: encoder layer {i} out {enc_out} vs "
                    f"decoder layer {1 - i} out {dec_out}"
                )

    @classmethod
    def build(cls, feature_dim, pe_dim, latent_dim=1024, rng=None, skip_enabled=True,
              hidden_dim=None):
        hidden = latent_dim if hidden_dim is None else hidden_dim
        input_dim = feature_dim + pe_dim
        enc = [
            LinearLayer.initialized(hidden, input_dim, rng),
            LinearLayer.initialized(hidden, hidden, rng),
            LinearLayer.initialized(latent_dim, hidden, rng),
        ]
        dec = [
            LinearLayer.initialized(hidden, latent_dim, rng),
            LinearLayer.initialized(hidden, hidden, rng),
            LinearLayer.initialized(input_dim, hidden, rng),
        ]
        return cls(enc, dec, feature_dim, pe_dim, skip_enabled=skip_enabled)

    @property
    def input_dim(self) -> int:
        return self.feature_dim + self.pe_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder_layers[2].out_dim

    def layers(self):
        return self.encoder_layers + self.decoder_layers

    def params(self):
        out = []
        for layer in self.layers():
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def grads(self):
        out = []
        for layer in self.layers():
            out.append(layer.grad_weight)
            out.append(layer.grad_bias)
        return out

    def zero_grad(self):
        for layer in self.layers():
            layer.zero_grad()


@dataclass
class EmbedForward:
    """Intermediates of one batched forward pass, kept for the backward."""

    joined: np.ndarray      # (B, D + pe)
    pre1: np.ndarray
    hid1: np.ndarray
    pre2: np.ndarray
    hid2: np.ndarray
    latent: np.ndarray
    dec_pre1: np.ndarray    # decoder stage inputs after skip addition
    dec_hid1: np.ndarray
    dec_pre2: np.ndarray
    dec_hid2: np.ndarray
    output: np.ndarray
    recon_features: np.ndarray
    recon_encodings: np.ndarray


def forward_batch(net: EmbeddingNet, features: np.ndarray, encodings: np.ndarray) -> EmbedForward:
    """Encode and decode a batch of rows; returns all intermediates."""
    if features.shape[1] != net.feature_dim or encodings.shape[1] != net.pe_dim:
        raise DimensionError(
            f"batch dims ({features.shape[1]}, {encodings.shape[1]}) vs net "
            f"({net.feature_dim}, {net.pe_dim})"
        )
    enc1, enc2, enc3 = net.encoder_layers
    dec1, dec2, dec3 = net.decoder_layers
    joined = np.concatenate([features, encodings], axis=1)
    pre1 = linear_forward_batch(enc1, joined)
    hid1 = relu(pre1)
    pre2 = linear_forward_batch(enc2, hid1)
    hid2 = relu(pre2)
    latent = linear_forward_batch(enc3, hid2)

    dec_pre1 = linear_forward_batch(dec1, latent)
    if net.skip_enabled:
        dec_pre1 = dec_pre1 + hid2
    dec_hid1 = relu(dec_pre1)
    dec_pre2 = linear_forward_batch(dec2, dec_hid1)
    if net.skip_enabled:
        dec_pre2 = dec_pre2 + hid1
    dec_hid2 = relu(dec_pre2)
    output = linear_forward_batch(dec3, dec_hid2)
    return EmbedForward(
        joined=joined, pre1=pre1, hid1=hid1, pre2=pre2, hid2=hid2, latent=latent,
        dec_pre1=dec_pre1, dec_hid1=dec_hid1, dec_pre2=dec_pre2, dec_hid2=dec_hid2,
        output=output,
        recon_features=output[:, : net.feature_dim],
        recon_encodings=output[:, net.feature_dim:],
    )


def backward_batch(net: EmbeddingNet, fwd: EmbedForward, d_output: np.ndarray,
                   d_latent_extra=None) -> None:
    """Accumulate parameter gradients for upstream d_output (and an optional
    extra gradient arriving directly at the latent, e.g. from the attention
    branch)."""
    enc1, enc2, enc3 = net.encoder_layers
    dec1, dec2, dec3 = net.decoder_layers

    d_dec_hid2 = linear_backward_batch(dec3, fwd.dec_hid2, d_output)
    d_dec_pre2 = np.where(fwd.dec_pre2 > 0.0, d_dec_hid2, 0.0)
    d_hid1_skip = d_dec_pre2 if net.skip_enabled else 0.0
    d_dec_hid1 = linear_backward_batch(dec2, fwd.dec_hid1, d_dec_pre2)
    d_dec_pre1 = np.where(fwd.dec_pre1 > 0.0, d_dec_hid1, 0.0)
    d_hid2_skip = d_dec_pre1 if net.skip_enabled else 0.0
    d_latent = linear_backward_batch(dec1, fwd.latent, d_dec_pre1)
    if d_latent_extra is not None:
        d_latent = d_latent + d_latent_extra

    d_hid2 = linear_backward_batch(enc3, fwd.hid2, d_latent) + d_hid2_skip
    d_pre2 = np.where(fwd.pre2 > 0.0, d_hid2, 0.0)
    d_hid1 = linear_backward_batch(enc2, fwd.hid1, d_pre2) + d_hid1_skip
    d_pre1 = np.where(fwd.pre1 > 0.0, d_hid1, 0.0)
    linear_backward_batch(enc1, fwd.joined, d_pre1)


def encode(net: EmbeddingNet, features: np.ndarray, encoding: np.ndarray):
    """Vector-path encode; returns (latent, skip_cache)."""
    x = np.concatenate([np.asarray(features, float), np.asarray(encoding, float)])
    if x.shape[0] != net.input_dim:
        raise DimensionError(f"encode input length {x.shape[0]} != {net.input_dim}")
    enc1, enc2, enc3 = net.encoder_layers
    hid1 = relu(linear_forward(enc1, x))
    hid2 = relu(linear_forward(enc2, hid1))
    latent = linear_forward(enc3, hid2)
    return latent, (hid1, hid2)


def decode(net: EmbeddingNet, latent: np.ndarray, skip_cache=None):
    """Vector-path decode; returns (reconstructed features, reconstructed encoding)."""
    dec1, dec2, dec3 = net.decoder_layers
    if net.skip_enabled:
        if skip_cache is None:
            raise ContractError("decode with skip connections enabled needs the skip cache")
        hid1, hid2 = skip_cache
        stage1 = relu(linear_forward(dec1, latent) + hid2)
        stage2 = relu(linear_forward(dec2, stage1) + hid1)
    else:
        stage1 = relu(linear_forward(dec1, latent))
        stage2 = relu(linear_forward(dec2, stage1))
    out = linear_forward(dec3, stage2)
    return out[: net.feature_dim], out[net.feature_dim:]


def reconstruction_loss(x, x_hat, enc, enc_hat, beta,
                        use_feature_loss=True, use_position_loss=True) -> float:
    """Dual reconstruction loss: feature MSE plus beta * positional MSE.
    A toggled-off term contributes an exact zero."""
    total = 0.0
    if use_feature_loss:
        total += mse(x, x_hat)
    if use_position_loss:
        total += beta * mse(enc, enc_hat)
    return float(total)


def attention_input(latent: np.ndarray, encoding: np.ndarray) -> np.ndarray:
    """Concatenate latent and positional encoding into the attention input."""
    return np.concatenate([np.asarray(latent, float), np.asarray(encoding, float)])
