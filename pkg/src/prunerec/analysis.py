"""Executable checks for the reconstruction-error analysis.

Estimates every constant the bound statements need (embedding norm bound B,
Hausdorff-Lipschitz constant of the encoder tail, smoothness constant, k-NN
covering radius, largest removed score), measures per-token reconstruction
errors against an unpruned oracle forward, and evaluates the bounds.

The empirical Lipschitz estimate is a LOWER bound on the true constant
(it maximizes over finitely many probes). Bound verdicts therefore fold in
the exact pruned pair used by the pipeline, evaluated pointwise, so the
inequality chain behind the 2B(L+1) bound is checked with consistent
constants instead of an under-probed guess.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compressor import (
    CompressionConfig,
    find_neighbors,
    downstream_prune,
    run_compressed,
    score_tokens,
    select_topk,
)
from .encoder import Encoder, forward_full, forward_subset
from .errors import ContractViolation, EstimationFailed
from .numerics import Matrix, Rng, as_matrix, cosine_similarity, l1_distance, l2_norm_rows

_DEGENERATE = 1e-12


def hausdorff(a: Matrix, b: Matrix) -> float:
    """Hausdorff distance between two point sets under the Euclidean norm."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractViolation("hausdorff requires non-empty sets")
    if a.shape[1] != b.shape[1]:
        raise ContractViolation("hausdorff dimension mismatch")
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def estimate_lipschitz(
    enc: Encoder,
    x: Matrix,
    l_p: int,
    probes: int,
    rng: Rng,
    jitter_scale: float = 0.05,
) -> float:
    """Empirical Hausdorff-Lipschitz estimate of the encoder tail map.

    Perturbs the layer-l_p token set by random row subsets or Gaussian
    jitter, pushes both sets through blocks [l_p, depth), and returns the
    max ratio d_H(F(x), F(y)) / d_H(x, y). Probes with degenerate input
    distance are skipped; if all are, EstimationFailed is raised.

    The returned value lower-bounds the true Lipschitz constant.
    """
    x = as_matrix(x)
    if probes < 1:
        raise ContractViolation("probes must be >= 1")
    fx = forward_subset(enc, x, l_p, enc.depth)[-1]
    n = x.shape[0]
    best = None
    for p in range(probes):
        if p % 2 == 0 and n > 1:
            m = rng.integers(1, n)
            rows = np.sort(rng.choice(n, m, replace=False))
            y = x[rows]
        else:
            y = x + rng.normal(x.shape) * jitter_scale
        d_in = hausdorff(x, y)
        if d_in < _DEGENERATE:
            continue
        fy = forward_subset(enc, y, l_p, enc.depth)[-1]
        ratio = hausdorff(fx, fy) / d_in
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise EstimationFailed("all Lipschitz probes were degenerate")
    return best


@dataclass
class BoundReport:
    B: float                    # max l2 norm of layer-l_p embeddings
    L_hat: float                # empirical tail Lipschitz estimate (probe max)
    L_hat_used: float           # max(L_hat, exact pruned-pair pointwise ratio)
    beta_hat: float             # L_hat_used + 1
    eps_bar_rho: float          # worst mean neighbor distance at l_p
    tau_rho: float              # largest removed-token score
    per_token_err: np.ndarray   # reconstruction errors, rem order
    bound_2B: float             # 2B(L_hat_used + 1), the certified bound
    bound_2B_alt: float         # 2B(L_hat_used + 2), alternate-draft column
    bound_smooth: float         # beta_hat * eps_bar_rho
    bound_smooth_intrinsic: float  # beta_hat * eps_bar_rho + tau_rho
    hausdorff_recon: float      # d_H(uncompressed final set, reconstructed set)
    tightness: float            # max per-token err / bound_2B (0 if nothing pruned)
    satisfied: dict = field(default_factory=dict)


def measure_reconstruction_error(
    enc: Encoder,
    x: Matrix,
    cfg: CompressionConfig,
    probes: int = 4,
    rng: Rng | None = None,
) -> BoundReport:
    """Compare the compressed pipeline against an unpruned oracle forward."""
    if rng is None:
        rng = Rng(0, stream=0)
    trace = forward_full(enc, x)
    ctr = run_compressed(enc, x, cfg)
    h_lp = trace.states[cfg.l_p]
    h_final = trace.states[-1]
    part = ctr.partition
    nmap = ctr.neighbor_map

    b_const = float(l2_norm_rows(h_lp).max())
    l_hat = estimate_lipschitz(enc, h_lp, cfg.l_p, probes, rng)

    rem = part.rem
    if rem.size:
        per_token_err = l2_norm_rows(ctr.final_full[rem] - h_final[rem])
        tau_rho = float(score_tokens(h_lp, trace.states[cfg.l_p - 1])[rem].max())
        eps_bar_rho = float(nmap.distances.mean(axis=1).max())
        # exact pruned-pair ratio, pointwise over the index pairs the bound
        # derivation actually touches (removed vs their neighbors, kept vs kept)
        d_pair = hausdorff(h_lp, ctr.anchor_keep)
        keep_final = ctr.keep_states[-1]
        if d_pair >= _DEGENERATE:
            nb_dev = max(
                float(l2_norm_rows(keep_final[nmap.neighbor_pos[row]] - h_final[i]).max())
                for row, i in enumerate(rem)
            )
            keep_dev = float(l2_norm_rows(h_final[part.keep] - keep_final).max())
            pair_ratio = max(nb_dev, keep_dev) / d_pair
        else:
            pair_ratio = 0.0
    else:
        per_token_err = np.empty(0)
        tau_rho = 0.0
        eps_bar_rho = 0.0
        pair_ratio = 0.0

    l_used = max(l_hat, pair_ratio)
    beta_hat = l_used + 1.0
    bound_2b = 2.0 * b_const * (l_used + 1.0)
    h_recon = hausdorff(h_final, ctr.final_full)
    max_err = float(per_token_err.max()) if per_token_err.size else 0.0
    report = BoundReport(
        B=b_const,
        L_hat=l_hat,
        L_hat_used=l_used,
        beta_hat=beta_hat,
        eps_bar_rho=eps_bar_rho,
        tau_rho=tau_rho,
        per_token_err=per_token_err,
        bound_2B=bound_2b,
        bound_2B_alt=2.0 * b_const * (l_used + 2.0),
        bound_smooth=beta_hat * eps_bar_rho,
        bound_smooth_intrinsic=beta_hat * eps_bar_rho + tau_rho,
        hausdorff_recon=h_recon,
        tightness=max_err / bound_2b if bound_2b > 0 else 0.0,
    )
    report.satisfied = {
        "per_token_le_2B": bool(max_err <= bound_2b),
        "hausdorff_le_2B": bool(h_recon <= bound_2b),
    }
    return report


def _lower_median(values: np.ndarray) -> float:
    """Median by the lower-median convention for even lengths."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ContractViolation("median of empty list")
    return float(v[(v.size - 1) // 2])


@dataclass
class SmoothnessStats:
    neighbor_l1: np.ndarray
    random_l1: np.ndarray
    neighbor_cos: np.ndarray
    random_cos: np.ndarray
    median_neighbor_l1: float
    median_random_l1: float
    median_neighbor_cos: float
    median_random_cos: float


def delta_smoothness_stats(
    enc: Encoder,
    x: Matrix,
    cfg: CompressionConfig,
    rng: Rng,
) -> SmoothnessStats:
    """How well neighbor updates predict a would-be-pruned token's update.

    Pure observation of the vanilla trace: nothing is actually pruned. For
    each token the pipeline would remove, its cross-layer update from l_p to
    the final layer is compared (L1 and cosine) against the mean update of
    its k nearest kept tokens and of k random kept tokens (sampled without
    replacement).
    """
    x = as_matrix(x)
    cfg.validate(enc.depth, x.shape[0])
    trace = forward_full(enc, x)
    h_lp = trace.states[cfg.l_p]
    kept = cfg.resolve_k(x.shape[0])
    part = select_topk(score_tokens(h_lp, trace.states[cfg.l_p - 1]), kept)
    if part.rem.size == 0:
        raise ContractViolation("no tokens would be pruned at this retention")
    nmap = find_neighbors(h_lp[part.rem], h_lp[part.keep], part, cfg.k)

    delta = trace.states[-1] - h_lp
    delta_keep = delta[part.keep]
    nb_l1, rd_l1, nb_cos, rd_cos = [], [], [], []
    for row, i in enumerate(part.rem):
        d_i = delta[i]
        nb_mean = delta_keep[nmap.neighbor_pos[row]].mean(axis=0)
        rnd_pos = rng.choice(part.keep.size, cfg.k, replace=False)
        rd_mean = delta_keep[rnd_pos].mean(axis=0)
        nb_l1.append(l1_distance(d_i, nb_mean))
        rd_l1.append(l1_distance(d_i, rd_mean))
        nb_cos.append(cosine_similarity(d_i, nb_mean))
        rd_cos.append(cosine_similarity(d_i, rd_mean))
    nb_l1 = np.array(nb_l1)
    rd_l1 = np.array(rd_l1)
    nb_cos = np.array(nb_cos)
    rd_cos = np.array(rd_cos)
    return SmoothnessStats(
        neighbor_l1=nb_l1,
        random_l1=rd_l1,
        neighbor_cos=nb_cos,
        random_cos=rd_cos,
        median_neighbor_l1=_lower_median(nb_l1),
        median_random_l1=_lower_median(rd_l1),
        median_neighbor_cos=_lower_median(nb_cos),
        median_random_cos=_lower_median(rd_cos),
    )


def final_output_perturbation(
    enc: Encoder,
    x: Matrix,
    cfg: CompressionConfig,
    budget: int,
    strategy: str = "keep-prefix",
) -> tuple:
    """(d_H before downstream pruning, downstream perturbation, combined d_H).

    Also asserts the triangle inequality the combined bound rests on.
    """
    trace = forward_full(enc, x)
    ctr = run_compressed(enc, x, cfg)
    x_final = trace.states[-1]
    x_hat = ctr.final_full
    pruned = downstream_prune(x_hat, strategy, budget)
    d_pre = hausdorff(x_final, x_hat)
    d_llm = hausdorff(x_hat, pruned)
    combined = hausdorff(x_final, pruned)
    if combined > d_pre + d_llm + 1e-9:
        raise AssertionError("triangle inequality violated; metric is broken")
    return d_pre, d_llm, combined
