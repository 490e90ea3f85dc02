"""Ablation variants toggling the pipeline's components individually.

copy-nearest replaces the update-transfer reconstruction with a plain copy
of the nearest kept token at the target layer, reusing the same frozen
neighbor map so only the reconstruction idea changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compressor import (
    CompressionConfig,
    NeighborMap,
    _scatter,
    find_neighbors,
    reconstruct_removed,
    score_tokens,
    select_topk,
    stabilized_forward,
)
from .encoder import Encoder
from .errors import ConfigError
from .numerics import Matrix, as_matrix


@dataclass(frozen=True)
class AblationVariant:
    use_as: bool
    use_reintegration: bool
    reconstruction: str = "ngr"  # or "copy-nearest"

    def validate(self) -> None:
        if self.reconstruction not in ("ngr", "copy-nearest"):
            raise ConfigError(f"unknown reconstruction {self.reconstruction!r}")


def copy_nearest(anchor_rem: Matrix, anchor_keep: Matrix, h_keep_l: Matrix, nmap: NeighborMap) -> Matrix:
    """Substitute each removed token with its nearest kept token at layer l."""
    if nmap.rem.size == 0:
        return as_matrix(anchor_rem).copy()
    return h_keep_l[nmap.neighbor_pos[:, 0]].copy()


def run_variant(enc: Encoder, x: Matrix, cfg: CompressionConfig, variant: AblationVariant) -> Matrix:
    """Pipeline with components toggled.

    Returns L x D when reintegration is on, K x D otherwise.
    """
    variant.validate()
    x = as_matrix(x)
    cfg.validate(enc.depth, x.shape[0])
    kept = cfg.resolve_k(x.shape[0])
    recon = reconstruct_removed if variant.reconstruction == "ngr" else copy_nearest

    h = x
    h_prev = None
    for l in range(cfg.l_p):
        h_prev = h
        h = enc.block_forward(l, h)

    if kept == x.shape[0]:
        for l in range(cfg.l_p, enc.depth):
            h = enc.block_forward(l, h)
        return h

    partition = select_topk(score_tokens(h, h_prev), kept)
    anchor_keep = h[partition.keep]
    anchor_rem = h[partition.rem]
    nmap = find_neighbors(anchor_rem, anchor_keep, partition, cfg.k)

    if variant.use_as:
        h_keep = stabilized_forward(
            enc, anchor_keep, anchor_rem, partition, nmap, cfg, reconstruct=recon
        )[-1]
        resume = cfg.l_p + cfg.delta_l_max
    else:
        h_keep = anchor_keep
        resume = cfg.l_p
    for l in range(resume, enc.depth):
        h_keep = enc.block_forward(l, h_keep)

    if not variant.use_reintegration:
        return h_keep
    h_rem = recon(anchor_rem, anchor_keep, h_keep, nmap)
    return _scatter(partition, h_keep, h_rem)
