"""Prune-and-reconstruct pipeline on top of the toy encoder.

Stages: feature-difference scoring at block l_p, top-K pruning, a
stabilization window of delta_l_max blocks where removed tokens are
reconstructed from their neighbors and rejoin attention (but skip the FFN),
keep-only blocks for the rest of the encoder, and a final reintegration
step that restores the original sequence length and ordering.

All tie-breaking is by smaller original index, so every result is a total
deterministic function of (encoder, input, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import Encoder, forward_full
from .errors import ConfigError, ContractViolation
from .numerics import Matrix, as_matrix, l2_norm_rows


@dataclass(frozen=True)
class CompressionConfig:
    l_p: int
    retain: float  # ratio in (0, 1] if float, absolute K if int
    delta_l_max: int
    k: int
    as_mode: str = "full-query"  # or "kv-only"

    def resolve_k(self, num_tokens: int) -> int:
        """Number of tokens kept. Ratio converts as ceil(retain * L)."""
        if isinstance(self.retain, int) and not isinstance(self.retain, bool):
            return self.retain
        return math.ceil(self.retain * num_tokens)

    def validate(self, depth: int, num_tokens: int) -> None:
        if not 1 <= self.l_p <= depth - 1:
            raise ConfigError(f"l_p={self.l_p} outside [1, {depth - 1}]")
        if self.delta_l_max < 0:
            raise ConfigError("delta_l_max must be >= 0")
        if self.l_p + self.delta_l_max > depth:
            raise ConfigError(
                f"stabilization window [{self.l_p}, {self.l_p + self.delta_l_max}) "
                f"exceeds depth {depth}"
            )
        if isinstance(self.retain, float) and not 0 < self.retain <= 1:
            raise ConfigError("retain ratio must lie in (0, 1]")
        kept = self.resolve_k(num_tokens)
        if not 1 <= kept <= num_tokens:
            raise ConfigError(f"resolved K={kept} outside [1, {num_tokens}]")
        if not 1 <= self.k <= kept:
            raise ConfigError(f"neighbor count k={self.k} outside [1, K={kept}]")
        if self.as_mode not in ("full-query", "kv-only"):
            raise ConfigError(f"unknown as_mode {self.as_mode!r}")


@dataclass
class PrunePartition:
    keep: np.ndarray  # sorted ascending
    rem: np.ndarray   # sorted ascending
    original_len: int


@dataclass
class NeighborMap:
    """k nearest kept neighbors per removed token, frozen at layer l_p.

    Row order follows rem ascending. neighbor_pos indexes into the kept
    matrix; neighbor_idx carries the original token indices.
    """

    rem: np.ndarray            # (R,) removed original indices, ascending
    neighbor_pos: np.ndarray   # (R, k) positions within the kept matrix
    neighbor_idx: np.ndarray   # (R, k) original indices of those neighbors
    distances: np.ndarray      # (R, k) non-decreasing within each row


@dataclass
class CompressedTrace:
    partition: PrunePartition
    neighbor_map: NeighborMap
    anchor_keep: Matrix          # kept rows at l_p
    anchor_rem: Matrix           # removed rows at l_p
    keep_states: list            # kept-token states at blocks l_p .. T
    final_full: Matrix           # L x D, original order, post-reintegration

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization used for reproducibility checks."""
        parts = [
            self.partition.keep.astype(np.int64).tobytes(),
            self.partition.rem.astype(np.int64).tobytes(),
            self.neighbor_map.neighbor_idx.astype(np.int64).tobytes(),
            self.neighbor_map.distances.tobytes(),
            self.anchor_keep.tobytes(),
            self.anchor_rem.tobytes(),
            self.final_full.tobytes(),
        ]
        parts.extend(s.tobytes() for s in self.keep_states)
        return b"".join(parts)


def score_tokens(h_lp: Matrix, h_lp_prev: Matrix) -> np.ndarray:
    """Per-token feature-difference score: l2 norm of the one-block change."""
    h_lp = as_matrix(h_lp)
    h_lp_prev = as_matrix(h_lp_prev)
    if h_lp.shape != h_lp_prev.shape:
        raise ContractViolation("score_tokens shape mismatch")
    return l2_norm_rows(h_lp - h_lp_prev)


def select_topk(scores: np.ndarray, kept: int) -> PrunePartition:
    """Keep the kept largest-score indices; ties go to the smaller index."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if not 1 <= kept <= n:
        raise ContractViolation(f"K={kept} outside [1, {n}]")
    order = np.lexsort((np.arange(n), -scores))
    keep = np.sort(order[:kept])
    rem = np.sort(order[kept:])
    return PrunePartition(keep=keep, rem=rem, original_len=n)


def find_neighbors(h_rem_lp: Matrix, h_keep_lp: Matrix, partition: PrunePartition, k: int) -> NeighborMap:
    """Exhaustive k-NN of each removed token among kept tokens at l_p.

    Distance ties break toward the smaller kept original index.
    """
    h_rem_lp = as_matrix(h_rem_lp)
    h_keep_lp = as_matrix(h_keep_lp)
    n_keep = h_keep_lp.shape[0]
    if k > n_keep:
        raise ContractViolation(f"k={k} exceeds |keep|={n_keep}")
    r = h_rem_lp.shape[0]
    pos = np.empty((r, k), dtype=np.int64)
    dist = np.empty((r, k))
    for i in range(r):
        diff = h_keep_lp - h_rem_lp[i]
        d = np.sqrt((diff * diff).sum(axis=1))
        order = np.lexsort((partition.keep, d))[:k]
        pos[i] = order
        dist[i] = d[order]
    return NeighborMap(
        rem=partition.rem.copy(),
        neighbor_pos=pos,
        neighbor_idx=partition.keep[pos] if r else np.empty((0, k), dtype=np.int64),
        distances=dist,
    )


def reconstruct_removed(anchor_rem: Matrix, anchor_keep: Matrix, h_keep_l: Matrix, nmap: NeighborMap) -> Matrix:
    """Rebuild removed tokens at layer l by transferring neighbor updates.

    Each removed token gets its frozen l_p embedding plus the mean update
    (h_keep_l - anchor_keep) of its k nearest kept neighbors. At l = l_p the
    updates are exactly zero and the anchors come back unchanged.
    """
    anchor_rem = as_matrix(anchor_rem)
    anchor_keep = as_matrix(anchor_keep)
    h_keep_l = as_matrix(h_keep_l)
    if anchor_keep.shape != h_keep_l.shape:
        raise ContractViolation("anchor_keep / h_keep_l shape mismatch")
    if nmap.neighbor_pos.shape[0] != anchor_rem.shape[0]:
        raise ContractViolation("neighbor map inconsistent with removed set")
    if anchor_rem.shape[0] == 0:
        return anchor_rem.copy()
    if nmap.neighbor_pos.size and nmap.neighbor_pos.max() >= anchor_keep.shape[0]:
        raise ContractViolation("neighbor map references rows outside kept set")
    delta = h_keep_l - anchor_keep
    return anchor_rem + delta[nmap.neighbor_pos].mean(axis=1)


def _scatter(partition: PrunePartition, h_keep: Matrix, h_rem: Matrix) -> Matrix:
    full = np.empty((partition.original_len, h_keep.shape[1]))
    full[partition.keep] = h_keep
    full[partition.rem] = h_rem
    return full


def stabilized_forward(
    enc: Encoder,
    anchor_keep: Matrix,
    anchor_rem: Matrix,
    partition: PrunePartition,
    nmap: NeighborMap,
    cfg: CompressionConfig,
    reconstruct=reconstruct_removed,
) -> list:
    """Run the stabilization window [l_p, l_p + delta_l_max).

    Per layer: reconstruct removed tokens, scatter everyone back to original
    positions, run the attention sublayer over the full sequence, slice the
    kept rows, and run the FFN sublayer on those rows only. Reconstructed
    rows never see the FFN and their attention outputs are discarded.

    Returns kept states at blocks l_p .. l_p + delta_l_max (inclusive ends).
    `reconstruct` is swappable so ablations can substitute copy-nearest.
    """
    states = [anchor_keep]
    h_keep = anchor_keep
    for l in range(cfg.l_p, cfg.l_p + cfg.delta_l_max):
        h_rem = reconstruct(anchor_rem, anchor_keep, h_keep, nmap)
        h_full = _scatter(partition, h_keep, h_rem)
        if cfg.as_mode == "full-query":
            h_keep = enc.attn_sublayer(l, h_full)[partition.keep]
        else:  # kv-only: removed rows contribute context but never query
            h_keep = enc.attn_sublayer_subset_queries(l, h_full, partition.keep)
        h_keep = enc.ffn_sublayer(l, h_keep)
        states.append(h_keep)
    return states


def run_compressed(enc: Encoder, x: Matrix, cfg: CompressionConfig) -> CompressedTrace:
    """Full pipeline: vanilla blocks, prune, stabilize, keep-only tail, reintegrate."""
    x = as_matrix(x)
    depth = enc.depth
    cfg.validate(depth, x.shape[0])
    kept = cfg.resolve_k(x.shape[0])

    # vanilla forward up to block l_p (need l_p - 1 and l_p states for scoring)
    h = x
    h_prev = None
    for l in range(cfg.l_p):
        h_prev = h
        h = enc.block_forward(l, h)

    if kept == x.shape[0]:
        # nothing to prune: finish the vanilla forward
        states = [h]
        for l in range(cfg.l_p, depth):
            h = enc.block_forward(l, h)
            states.append(h)
        partition = PrunePartition(
            keep=np.arange(x.shape[0]), rem=np.empty(0, dtype=np.int64),
            original_len=x.shape[0],
        )
        nmap = NeighborMap(
            rem=np.empty(0, dtype=np.int64),
            neighbor_pos=np.empty((0, cfg.k), dtype=np.int64),
            neighbor_idx=np.empty((0, cfg.k), dtype=np.int64),
            distances=np.empty((0, cfg.k)),
        )
        return CompressedTrace(
            partition=partition,
            neighbor_map=nmap,
            anchor_keep=states[0],
            anchor_rem=np.empty((0, x.shape[1])),
            keep_states=states,
            final_full=states[-1],
        )

    scores = score_tokens(h, h_prev)
    partition = select_topk(scores, kept)
    anchor_keep = h[partition.keep]
    anchor_rem = h[partition.rem]
    nmap = find_neighbors(anchor_rem, anchor_keep, partition, cfg.k)

    keep_states = stabilized_forward(enc, anchor_keep, anchor_rem, partition, nmap, cfg)
    h_keep = keep_states[-1]
    for l in range(cfg.l_p + cfg.delta_l_max, depth):
        h_keep = enc.block_forward(l, h_keep)
        keep_states.append(h_keep)

    h_rem_final = reconstruct_removed(anchor_rem, anchor_keep, h_keep, nmap)
    final_full = _scatter(partition, h_keep, h_rem_final)
    return CompressedTrace(
        partition=partition,
        neighbor_map=nmap,
        anchor_keep=anchor_keep,
        anchor_rem=anchor_rem,
        keep_states=keep_states,
        final_full=final_full,
    )


def naive_prune_forward(enc: Encoder, x: Matrix, cfg: CompressionConfig) -> Matrix:
    """Same pruning, but removed tokens vanish immediately and stay gone."""
    x = as_matrix(x)
    cfg.validate(enc.depth, x.shape[0])
    kept = cfg.resolve_k(x.shape[0])
    h = x
    h_prev = None
    for l in range(cfg.l_p):
        h_prev = h
        h = enc.block_forward(l, h)
    if kept == x.shape[0]:
        partition = PrunePartition(
            keep=np.arange(x.shape[0]), rem=np.empty(0, dtype=np.int64),
            original_len=x.shape[0],
        )
    else:
        partition = select_topk(score_tokens(h, h_prev), kept)
    h_keep = h[partition.keep]
    for l in range(cfg.l_p, enc.depth):
        h_keep = enc.block_forward(l, h_keep)
    return h_keep


def downstream_prune(tokens: Matrix, strategy: str, budget: int) -> Matrix:
    """Simplified stand-in for an LLM-side pruner consuming the full sequence.

    Always preserves the original row order of the selected subset.
    """
    tokens = as_matrix(tokens)
    n = tokens.shape[0]
    if not 0 < budget <= n:
        raise ContractViolation(f"budget={budget} outside [1, {n}]")
    if strategy == "keep-prefix":
        return tokens[:budget].copy()
    if strategy == "norm-topk":
        norms = l2_norm_rows(tokens)
        order = np.lexsort((np.arange(n), -norms))
        return tokens[np.sort(order[:budget])]
    raise ContractViolation(f"unknown downstream strategy {strategy!r}")
