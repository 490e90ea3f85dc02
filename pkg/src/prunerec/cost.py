"""Closed-form FLOPs accounting for the three forward variants.

Conventions (multiply-add = 2 FLOPs, exact integer arithmetic):

* attention projections: Q, K, V, O cost 2*n*D^2 each, with the query-side
  row count n_q distinguished from the context-side n_kv in kv-only mode
  (Q and O scale with n_q, K and V with n_kv);
* attention scores + apply: 4 * n_q * n_kv * D;
* FFN: 4 * n * D * (ffn_mult * D);
* neighbor-transfer overhead: 2 * |rem| * |keep| * D for the one-time
  neighbor search at l_p, plus |rem| * k * D additions per reconstruction
  call (one per stabilization layer, one at reintegration).

Excluded as O(n*D) noise: layer norm, residual adds, softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

from .compressor import CompressionConfig
from .encoder import EncoderConfig
from .errors import ContractViolation

EXCLUDED_TERMS = ("layer_norm", "residual_add", "softmax")

VARIANTS = ("vanilla", "naive", "ipcv")


@dataclass
class BlockCost:
    block: int
    attn_proj: int
    attn_scores: int
    ffn: int
    ngr: int

    @property
    def total(self) -> int:
        return self.attn_proj + self.attn_scores + self.ffn + self.ngr


@dataclass
class CostReport:
    variant: str
    num_tokens: int
    blocks: list  # BlockCost per encoder block
    total: int
    vanilla_total: int
    ratio_vs_vanilla: float


def _attn_proj(n_q: int, n_kv: int, dim: int) -> int:
    return 2 * n_q * dim * dim * 2 + 2 * n_kv * dim * dim * 2  # Q,O + K,V


def _attn_scores(n_q: int, n_kv: int, dim: int) -> int:
    return 4 * n_q * n_kv * dim


def _ffn(n: int, dim: int, ffn_mult: int) -> int:
    return 4 * n * dim * (ffn_mult * dim)


def count_flops(
    enc_cfg: EncoderConfig,
    num_tokens: int,
    comp_cfg: CompressionConfig | None,
    variant: str,
) -> CostReport:
    """Exact per-block FLOPs for one pipeline variant."""
    enc_cfg.validate()
    if variant not in VARIANTS:
        raise ContractViolation(f"unknown variant {variant!r}")
    if variant != "vanilla":
        if comp_cfg is None:
            raise ContractViolation(f"variant {variant!r} requires a compression config")
        comp_cfg.validate(enc_cfg.depth, num_tokens)

    d = enc_cfg.dim
    mult = enc_cfg.ffn_mult
    big_l = num_tokens
    blocks = []
    if variant == "vanilla":
        for b in range(enc_cfg.depth):
            blocks.append(BlockCost(b, _attn_proj(big_l, big_l, d), _attn_scores(big_l, big_l, d), _ffn(big_l, d, mult), 0))
    else:
        kept = comp_cfg.resolve_k(big_l)
        rem = big_l - kept
        l_p = comp_cfg.l_p
        for b in range(enc_cfg.depth):
            ngr = 0
            if b < l_p:
                n_q = n_kv = n_ffn = big_l
            elif variant == "ipcv" and b < l_p + comp_cfg.delta_l_max:
                n_kv = big_l
                n_q = kept if comp_cfg.as_mode == "kv-only" else big_l
                n_ffn = kept
                ngr = rem * comp_cfg.k * d  # one reconstruction per window layer
                if b == l_p:
                    ngr += 2 * rem * kept * d  # one-time neighbor search
            else:
                n_q = n_kv = n_ffn = kept
            if variant == "ipcv" and b == enc_cfg.depth - 1:
                ngr += rem * comp_cfg.k * d  # reintegration reconstruction
            blocks.append(BlockCost(b, _attn_proj(n_q, n_kv, d), _attn_scores(n_q, n_kv, d), _ffn(n_ffn, d, mult), ngr))
        if variant == "ipcv" and comp_cfg.delta_l_max == 0 and rem > 0:
            # no window layer carried the search; charge it at l_p
            blocks[l_p].ngr += 2 * rem * kept * d

    total = sum(b.total for b in blocks)
    vanilla_total = enc_cfg.depth * (
        _attn_proj(big_l, big_l, d) + _attn_scores(big_l, big_l, d) + _ffn(big_l, d, mult)
    )
    return CostReport(
        variant=variant,
        num_tokens=num_tokens,
        blocks=blocks,
        total=total,
        vanilla_total=vanilla_total,
        ratio_vs_vanilla=total / vanilla_total,
    )
