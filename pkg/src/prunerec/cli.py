"""Experiment harness CLI.

Subcommands: forward, compress, bounds, stats, flops, ablate, sweep.
Common flags: --spec <path>, --out <path>, --format csv|json, --seed <int>,
and --no-plot to suppress the figures rendered next to the report.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import plots
from .analysis import delta_smoothness_stats, hausdorff, measure_reconstruction_error
from .baselines import AblationVariant, run_variant
from .compressor import run_compressed
from .cost import count_flops
from .encoder import build_encoder, forward_full, make_synthetic_input
from .errors import ConfigError, ContractViolation
from .numerics import Rng
from .runspec import (
    RunSpec,
    base_meta,
    fmt_cell,
    load_spec,
    with_overrides,
    write_report,
)

SWEEP_AXES = ("l_p", "delta_l_max", "k", "retain")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve 2 for config
        raise UsageError(message)


def _trial_inputs(spec: RunSpec):
    enc = build_encoder(spec.encoder_config())
    for t in range(spec.trials):
        yield t, enc, make_synthetic_input(spec.input_spec(t))


# -- subcommand implementations (pure in (spec)) -----------------------------

def cmd_forward(spec: RunSpec):
    columns = ["trial", "num_tokens", "dim", "depth", "final_frobenius", "final_max_abs"]
    rows = []
    for t, enc, x in _trial_inputs(spec):
        h = forward_full(enc, x).states[-1]
        rows.append([t, x.shape[0], x.shape[1], enc.depth,
                     float(np.sqrt((h * h).sum())), float(np.abs(h).max())])
    return base_meta("forward", spec), columns, rows, None


def cmd_compress(spec: RunSpec):
    cfg = spec.compression_config()
    columns = ["trial", "num_tokens", "kept", "removed", "final_frobenius", "trace_sha256"]
    rows = []
    for t, enc, x in _trial_inputs(spec):
        ctr = run_compressed(enc, x, cfg)
        h = ctr.final_full
        rows.append([
            t, x.shape[0], ctr.partition.keep.size, ctr.partition.rem.size,
            float(np.sqrt((h * h).sum())),
            hashlib.sha256(ctr.canonical_bytes()).hexdigest(),
        ])
    return base_meta("compress", spec), columns, rows, None


_BOUND_COLS = [
    "trial", "B", "L_hat", "L_hat_used", "beta_hat", "eps_bar_rho", "tau_rho",
    "max_per_token_err", "bound_2B", "bound_2B_alt", "bound_smooth",
    "bound_smooth_intrinsic", "hausdorff_recon", "tightness",
    "per_token_le_2B", "hausdorff_le_2B",
]


def cmd_bounds(spec: RunSpec):
    cfg = spec.compression_config()
    rows = []
    last = None
    for t, enc, x in _trial_inputs(spec):
        rep = measure_reconstruction_error(
            enc, x, cfg, probes=spec.probes, rng=Rng(spec.seed, stream=t)
        )
        last = rep
        max_err = float(rep.per_token_err.max()) if rep.per_token_err.size else 0.0
        rows.append([
            t, rep.B, rep.L_hat, rep.L_hat_used, rep.beta_hat, rep.eps_bar_rho,
            rep.tau_rho, max_err, rep.bound_2B, rep.bound_2B_alt, rep.bound_smooth,
            rep.bound_smooth_intrinsic, rep.hausdorff_recon, rep.tightness,
            rep.satisfied["per_token_le_2B"], rep.satisfied["hausdorff_le_2B"],
        ])
    summary = ["summary"] + ["" for _ in _BOUND_COLS[1:]]
    summary[_BOUND_COLS.index("tightness")] = max(r[_BOUND_COLS.index("tightness")] for r in rows)
    summary[_BOUND_COLS.index("per_token_le_2B")] = all(
        r[_BOUND_COLS.index("per_token_le_2B")] for r in rows
    )
    summary[_BOUND_COLS.index("hausdorff_le_2B")] = all(
        r[_BOUND_COLS.index("hausdorff_le_2B")] for r in rows
    )
    rows.append(summary)
    fig = None
    if last is not None and last.per_token_err.size:
        fig = ("bounds", last)
    return base_meta("bounds", spec), _BOUND_COLS, rows, fig


def cmd_stats(spec: RunSpec):
    cfg = spec.compression_config()
    columns = [
        "trial", "removed", "median_neighbor_l1", "median_random_l1",
        "median_neighbor_cos", "median_random_cos",
    ]
    rows = []
    pooled = {"nl1": [], "rl1": [], "ncos": [], "rcos": []}
    for t, enc, x in _trial_inputs(spec):
        st = delta_smoothness_stats(enc, x, cfg, Rng(spec.seed, stream=t))
        rows.append([
            t, st.neighbor_l1.size, st.median_neighbor_l1, st.median_random_l1,
            st.median_neighbor_cos, st.median_random_cos,
        ])
        pooled["nl1"].append(st.neighbor_l1)
        pooled["rl1"].append(st.random_l1)
        pooled["ncos"].append(st.neighbor_cos)
        pooled["rcos"].append(st.random_cos)
    fig = ("stats", {k: np.concatenate(v) for k, v in pooled.items()})
    return base_meta("stats", spec), columns, rows, fig


def cmd_flops(spec: RunSpec):
    enc_cfg = spec.encoder_config()
    cfg = spec.compression_config()
    columns = ["variant", "attn_proj", "attn_scores", "ffn", "ngr_overhead", "total", "ratio_vs_vanilla"]
    rows = []
    for variant in ("vanilla", "naive", "ipcv"):
        rep = count_flops(enc_cfg, spec.num_tokens, None if variant == "vanilla" else cfg, variant)
        rows.append([
            variant,
            sum(b.attn_proj for b in rep.blocks),
            sum(b.attn_scores for b in rep.blocks),
            sum(b.ffn for b in rep.blocks),
            sum(b.ngr for b in rep.blocks),
            rep.total,
            rep.ratio_vs_vanilla,
        ])
    meta = base_meta("flops", spec)
    meta["excluded_terms"] = "layer_norm,residual_add,softmax"
    return meta, columns, rows, None


def cmd_ablate(spec: RunSpec):
    cfg = spec.compression_config()
    variants = [
        AblationVariant(True, True, "ngr"),
        AblationVariant(True, False, "ngr"),
        AblationVariant(False, True, "ngr"),
        AblationVariant(False, False, "ngr"),
        AblationVariant(True, True, "copy-nearest"),
    ]
    columns = ["trial", "use_as", "use_reintegration", "reconstruction", "out_rows", "hausdorff_vs_vanilla"]
    rows = []
    for t, enc, x in _trial_inputs(spec):
        vanilla_final = forward_full(enc, x).states[-1]
        for v in variants:
            out = run_variant(enc, x, cfg, v)
            rows.append([
                t, v.use_as, v.use_reintegration, v.reconstruction,
                out.shape[0], hausdorff(vanilla_final, out),
            ])
    return base_meta("ablate", spec), columns, rows, None


def cmd_sweep(spec: RunSpec, axis: str, values: list):
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    columns = [
        "axis", "value", "kept", "flops_ratio_ipcv", "max_per_token_err",
        "hausdorff_recon", "eps_bar_rho",
    ]
    rows = []
    ratios, errs = [], []
    enc = build_encoder(spec.encoder_config())
    x = make_synthetic_input(spec.input_spec(0))
    for val in values:
        pt = with_overrides(spec, **{axis: val})
        cfg = pt.compression_config()
        flops = count_flops(pt.encoder_config(), pt.num_tokens, cfg, "ipcv")
        rep = measure_reconstruction_error(
            enc, x, cfg, probes=spec.probes, rng=Rng(spec.seed, stream=0)
        )
        max_err = float(rep.per_token_err.max()) if rep.per_token_err.size else 0.0
        rows.append([
            axis, val, cfg.resolve_k(pt.num_tokens), flops.ratio_vs_vanilla,
            max_err, rep.hausdorff_recon, rep.eps_bar_rho,
        ])
        ratios.append(flops.ratio_vs_vanilla)
        errs.append(max_err)
    meta = base_meta("sweep", spec)
    meta["axis"] = axis
    fig = ("sweep", (axis, values, ratios, errs))
    return meta, columns, rows, fig


# -- driver -------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="prunerec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("forward", "compress", "bounds", "stats", "flops", "ablate", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--spec", help="path to a key=value spec file")
        p.add_argument("--out", help="report output path (stdout if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=None, help="override the spec seed")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=SWEEP_AXES)
            p.add_argument("--values", required=True,
                           help="comma-separated values, e.g. 1.0,0.5,0.35,0.2")
    return parser


def _render_figure(fig, out_path: str) -> str:
    stem = str(Path(out_path).with_suffix(""))
    kind, payload = fig
    path = f"{stem}_{kind}.png"
    if kind == "stats":
        plots.smoothness_figure(payload["nl1"], payload["rl1"], payload["ncos"], payload["rcos"], path)
    elif kind == "bounds":
        plots.bounds_figure(payload.per_token_err, payload.bound_2B, payload.bound_smooth, path)
    elif kind == "sweep":
        axis, values, ratios, errs = payload
        plots.sweep_figure(axis, values, ratios, errs, path)
    return path


def run_command(command: str, spec: RunSpec, axis: str | None = None, values: list | None = None):
    """Dispatch to a subcommand; returns (meta, columns, rows, figure payload)."""
    if command == "sweep":
        return cmd_sweep(spec, axis, values)
    handler = {
        "forward": cmd_forward,
        "compress": cmd_compress,
        "bounds": cmd_bounds,
        "stats": cmd_stats,
        "flops": cmd_flops,
        "ablate": cmd_ablate,
    }[command]
    return handler(spec)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        spec = load_spec(args.spec) if args.spec else RunSpec()
        spec = with_overrides(spec, seed=args.seed)
        values = None
        if args.command == "sweep":
            conv = float if args.axis == "retain" else int
            try:
                values = [conv(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                print(f"usage error: bad --values: {exc}", file=sys.stderr)
                return 1
            if not values:
                print("usage error: --values is empty", file=sys.stderr)
                return 1
        meta, columns, rows, fig = run_command(
            args.command, spec, getattr(args, "axis", None), values
        )
    except OSError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ContractViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 3

    text = write_report(meta, columns, [[fmt_cell(c) for c in row] for row in rows], args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        if fig is not None and not args.no_plot:
            fig_path = _render_figure(fig, args.out)
            print(f"wrote {args.out} and {fig_path}")
        else:
            print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
