"""Flat key=value experiment specs and deterministic report serialization.

A spec file is plain text, one `key = value` per line, '#' comments allowed.
Unknown keys are hard errors -- a typo must never silently change an
experiment. Every emitted report embeds a SHA-256 over the effective
experiment keys, and report bodies carry no timestamps, so re-running an
identical spec reproduces byte-identical output.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, replace

import numpy as np

from .compressor import CompressionConfig
from .encoder import EncoderConfig, SyntheticInputSpec
from .errors import ConfigError

TOOL_VERSION = "0.1.0"
SCHEMA_VERSION = "1"

# key -> (type, default); the compression defaults are the standard
# operating point (l_p=3, delta_l_max=7, k=10, retain=0.5) on a
# depth-12, dim-64, 4-head toy encoder.
SPEC_KEYS = {
    "depth": (int, 12),
    "dim": (int, 64),
    "heads": (int, 4),
    "ffn_mult": (int, 4),
    "eps": (float, 1e-5),
    "encoder_seed": (int, 1),
    "num_tokens": (int, 64),
    "num_clusters": (int, 8),
    "cluster_spread": (float, 0.1),
    "l_p": (int, 3),
    "retain": (float, 0.5),
    "delta_l_max": (int, 7),
    "k": (int, 10),
    "as_mode": (str, "full-query"),
    "probes": (int, 4),
    "trials": (int, 3),
    "seed": (int, 0),
    "strategy": (str, "keep-prefix"),
    "budget": (int, 0),  # 0 means "all tokens"
}


@dataclass(frozen=True)
class RunSpec:
    depth: int = 12
    dim: int = 64
    heads: int = 4
    ffn_mult: int = 4
    eps: float = 1e-5
    encoder_seed: int = 1
    num_tokens: int = 64
    num_clusters: int = 8
    cluster_spread: float = 0.1
    l_p: int = 3
    retain: float = 0.5
    delta_l_max: int = 7
    k: int = 10
    as_mode: str = "full-query"
    probes: int = 4
    trials: int = 3
    seed: int = 0
    strategy: str = "keep-prefix"
    budget: int = 0

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            depth=self.depth, dim=self.dim, heads=self.heads,
            ffn_mult=self.ffn_mult, seed=self.encoder_seed, eps=self.eps,
        )

    def compression_config(self) -> CompressionConfig:
        retain = self.retain
        if retain == int(retain) and retain > 1:
            retain = int(retain)  # absolute K spelled as e.g. retain = 32
        return CompressionConfig(
            l_p=self.l_p, retain=retain, delta_l_max=self.delta_l_max,
            k=self.k, as_mode=self.as_mode,
        )

    def input_spec(self, trial: int) -> SyntheticInputSpec:
        return SyntheticInputSpec(
            num_tokens=self.num_tokens, num_clusters=self.num_clusters,
            cluster_spread=self.cluster_spread,
            seed=trial_seed(self.seed, trial), dim=self.dim,
        )

    def validate(self) -> None:
        self.encoder_config().validate()
        self.compression_config().validate(self.depth, self.num_tokens)
        self.input_spec(0).validate()
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.probes < 1:
            raise ConfigError("probes must be >= 1")
        if self.strategy not in ("keep-prefix", "norm-topk"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not 0 <= self.budget <= self.num_tokens:
            raise ConfigError("budget outside [0, num_tokens]")

    def sha256(self) -> str:
        lines = [f"{k}={getattr(self, k)!r}" for k in sorted(SPEC_KEYS)]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def trial_seed(seed: int, trial: int) -> int:
    """Stable per-trial seed derivation."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def parse_spec_text(text: str) -> RunSpec:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"spec line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in SPEC_KEYS:
            raise ConfigError(f"spec line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"spec line {lineno}: duplicate key {key!r}")
        typ, _ = SPEC_KEYS[key]
        try:
            values[key] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"spec line {lineno}: bad value for {key!r}: {exc}") from exc
    spec = RunSpec(**values)
    spec.validate()
    return spec


def load_spec(path: str) -> RunSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec_text(fh.read())


def with_overrides(spec: RunSpec, **overrides) -> RunSpec:
    out = replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    out.validate()
    return out


# -- report serialization ---------------------------------------------------

def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def fmt_cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return fmt_float(x)
    return str(x)


def base_meta(command: str, spec: RunSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "command": command,
        "spec_sha256": spec.sha256(),
    }


def write_report(meta: dict, columns: list, rows: list, fmt: str = "csv") -> str:
    """Serialize a report; rows are lists of already-formatted strings."""
    if fmt == "csv":
        buf = io.StringIO()
        for key, val in meta.items():
            buf.write(f"# {key}={val}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "json":
        doc = {"meta": meta, "columns": columns, "rows": rows}
        return json.dumps(doc, indent=2) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


def read_report(text: str, fmt: str = "csv"):
    """Parse a report back into (meta, columns, rows of strings)."""
    if fmt == "json":
        doc = json.loads(text)
        return doc["meta"], doc["columns"], doc["rows"]
    meta = {}
    body_lines = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition("=")
            meta[key] = val
        else:
            body_lines.append(line)
    reader = csv.reader(body_lines)
    table = [row for row in reader if row]
    return meta, table[0], table[1:]
