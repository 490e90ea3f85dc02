"""Minimal deterministic transformer encoder ("toy ViT").

Pre-norm residual blocks, bidirectional multi-head attention, ReLU FFN,
no positional encoding (which makes the forward pass permutation
equivariant -- handy for oracle tests, and a documented limitation).

Hidden-state indexing: states[l] is the INPUT to block l, so a depth-T
encoder produces a trace of T+1 matrices and states[T] is the final output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation
from .numerics import Matrix, Rng, as_matrix, layer_norm, matmul, softmax_rows


@dataclass(frozen=True)
class EncoderConfig:
    depth: int
    dim: int
    heads: int
    ffn_mult: int
    seed: int
    eps: float = 1e-5

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.heads < 1 or self.dim < self.heads:
            raise ConfigError("need dim >= heads >= 1")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim={self.dim} not divisible by heads={self.heads}")
        if self.ffn_mult < 1:
            raise ConfigError("ffn_mult must be >= 1")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")


@dataclass
class BlockWeights:
    wq: Matrix
    wk: Matrix
    wv: Matrix
    wo: Matrix
    w1: Matrix
    w2: Matrix
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray


@dataclass
class LayerTrace:
    states: list  # [H_0 ... H_T], each L x D

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class SyntheticInputSpec:
    num_tokens: int
    num_clusters: int
    cluster_spread: float
    seed: int
    dim: int = 64

    def validate(self) -> None:
        if self.num_clusters < 1 or self.num_tokens < self.num_clusters:
            raise ConfigError("need num_tokens >= num_clusters >= 1")
        if self.cluster_spread < 0:
            raise ConfigError("cluster_spread must be >= 0")


def _glorot(rng: Rng, fan_in: int, fan_out: int) -> Matrix:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_in, fan_out))


class Encoder:
    def __init__(self, cfg: EncoderConfig, blocks: list):
        self.cfg = cfg
        self.blocks = blocks

    @property
    def depth(self) -> int:
        return self.cfg.depth

    # -- sublayers ---------------------------------------------------------

    def _mha(self, block: BlockWeights, nq: Matrix, nkv: Matrix) -> Matrix:
        """Multi-head attention of normalized queries nq over context nkv."""
        d = self.cfg.dim
        h = self.cfg.heads
        dh = d // h
        q = matmul(nq, block.wq)
        k = matmul(nkv, block.wk)
        v = matmul(nkv, block.wv)
        out = np.empty((nq.shape[0], d))
        scale = 1.0 / np.sqrt(dh)
        for i in range(h):
            sl = slice(i * dh, (i + 1) * dh)
            scores = matmul(q[:, sl], k[:, sl].T) * scale
            out[:, sl] = matmul(softmax_rows(scores), v[:, sl])
        return matmul(out, block.wo)

    def attn_sublayer(self, l: int, h: Matrix) -> Matrix:
        """H + MHA(LN1(H)) with the full sequence as queries and context."""
        block = self.blocks[l]
        n = layer_norm(h, block.ln1_gain, block.ln1_bias, self.cfg.eps)
        return h + self._mha(block, n, n)

    def attn_sublayer_subset_queries(self, l: int, h_full: Matrix, q_rows: np.ndarray) -> Matrix:
        """Like attn_sublayer but only rows q_rows act as queries.

        Returns the updated q_rows slice (residual included); context is
        the full sequence.
        """
        block = self.blocks[l]
        n = layer_norm(h_full, block.ln1_gain, block.ln1_bias, self.cfg.eps)
        return h_full[q_rows] + self._mha(block, n[q_rows], n)

    def ffn_sublayer(self, l: int, h: Matrix) -> Matrix:
        block = self.blocks[l]
        n = layer_norm(h, block.ln2_gain, block.ln2_bias, self.cfg.eps)
        hidden = np.maximum(matmul(n, block.w1), 0.0)
        return h + matmul(hidden, block.w2)

    def block_forward(self, l: int, h: Matrix) -> Matrix:
        return self.ffn_sublayer(l, self.attn_sublayer(l, h))


def build_encoder(cfg: EncoderConfig) -> Encoder:
    """Materialize weights; fully determined by cfg.seed."""
    cfg.validate()
    d, m = cfg.dim, cfg.ffn_mult * cfg.dim
    blocks = []
    for l in range(cfg.depth):
        rng = Rng(cfg.seed, stream=l)
        blocks.append(
            BlockWeights(
                wq=_glorot(rng, d, d),
                wk=_glorot(rng, d, d),
                wv=_glorot(rng, d, d),
                wo=_glorot(rng, d, d),
                w1=_glorot(rng, d, m),
                w2=_glorot(rng, m, d),
                ln1_gain=np.ones(d),
                ln1_bias=np.zeros(d),
                ln2_gain=np.ones(d),
                ln2_bias=np.zeros(d),
            )
        )
    return Encoder(cfg, blocks)


def forward_full(enc: Encoder, x: Matrix) -> LayerTrace:
    """Vanilla forward pass recording the input of every block."""
    x = as_matrix(x)
    if x.shape[1] != enc.cfg.dim:
        raise ContractViolation(
            f"input width {x.shape[1]} != encoder dim {enc.cfg.dim}"
        )
    states = [x]
    h = x
    for l in range(enc.depth):
        h = enc.block_forward(l, h)
        states.append(h)
    return LayerTrace(states)


def forward_subset(enc: Encoder, x_sub: Matrix, from_layer: int, to_layer: int) -> list:
    """Run blocks [from_layer, to_layer) on a token subset.

    Returns the state list of length to_layer - from_layer + 1; an empty
    range returns [x_sub] unchanged.
    """
    if not (0 <= from_layer <= to_layer <= enc.depth):
        raise ContractViolation(
            f"bad layer range [{from_layer}, {to_layer}) for depth {enc.depth}"
        )
    x_sub = as_matrix(x_sub)
    if x_sub.shape[1] != enc.cfg.dim:
        raise ContractViolation("input width mismatch")
    states = [x_sub]
    h = x_sub
    for l in range(from_layer, to_layer):
        h = enc.block_forward(l, h)
        states.append(h)
    return states


def make_synthetic_input(spec: SyntheticInputSpec) -> Matrix:
    """Cluster centers plus Gaussian jitter; token i belongs to cluster i mod C."""
    spec.validate()
    rng = Rng(spec.seed, stream=0)
    centers = rng.normal((spec.num_clusters, spec.dim))
    assignment = np.arange(spec.num_tokens) % spec.num_clusters
    noise = rng.normal((spec.num_tokens, spec.dim)) * spec.cluster_spread
    return centers[assignment] + noise
