"""Stand-alone report tools: discretizer histograms and protocol extraction from checkpoints."""
from __future__ import annotations

import os

import numpy as np

from ..agents import CommNets
from ..autodiff import CheckpointError, load_params
from ..discretizers import ALL_KINDS, DiscretizerSpec, histogram_rows, output_histogram, write_histogram_csv
from ..envs import MatrixEnvConfig, make_layout
from ..envs.protocol import ProtocolTable
from ..rng import stream
from . import svg
from .config import RunConfig
from .runner import matrix_protocol

HISTOGRAM_INPUTS = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)


def histograms(out_dir: str, draws: int = 10_000, seed: int = 0, sigma_g: float = 2.0,
               temperature: float = 1.0, bins: int = 20) -> list:
    """Output histograms of every unit in both modes; one CSV plus one SVG per (unit, mode)."""
    os.makedirs(out_dir, exist_ok=True)
    rows, written = [], []
    for kind in ALL_KINDS:
        for mode in ("train", "eval"):
            spec = DiscretizerSpec(kind, sigma_g=sigma_g, temperature=temperature, mode=mode)
            rng = stream(seed, f"histogram/{kind.value}/{mode}")
            hist = output_histogram(spec, HISTOGRAM_INPUTS, draws, rng, bins=bins)
            rows.extend(histogram_rows(spec, hist))
            panels = [(f"x = {x:g}", edges, freqs) for x, (edges, freqs) in hist.items()]
            path = os.path.join(out_dir, f"histogram_{kind.value}_{mode}.svg")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(svg.bar_panels(panels, f"{kind.label} output distribution ({mode} mode, {draws} draws)"))
            written.append(path)
    csv_path = os.path.join(out_dir, "histograms.csv")
    write_histogram_csv(csv_path, rows)
    return [csv_path] + written


def load_into(nets: CommNets, records: list) -> None:
    """Copy checkpoint records into ``nets`` by parameter name; extra records are ignored."""
    by_name = dict(records)
    for p in nets.all_params():
        if p.name not in by_name:
            raise CheckpointError(f"checkpoint has no parameter {p.name!r}")
        arr = by_name[p.name]
        if arr.shape != p.data.shape:
            raise CheckpointError(f"{p.name}: checkpoint shape {arr.shape} != network shape {p.data.shape}")
        p.data[...] = arr


def protocol_from_checkpoint(checkpoint: str, cfg: RunConfig, episodes: int | None = None,
                             seed: int = 0) -> ProtocolTable:
    if not isinstance(cfg.env, MatrixEnvConfig):
        raise ValueError("protocol tables are defined for matrix environments only")
    layout = make_layout(cfg.env)
    nets = CommNets(layout, np.random.default_rng(0), cfg.dial.anet_hidden if cfg.trainer == "dial"
                    else cfg.coma.anet_hidden,
                    cfg.dial.cnet_hidden if cfg.trainer == "dial" else cfg.coma.cnet_hidden,
                    param_sharing=cfg.param_sharing)
    load_into(nets, load_params(checkpoint))
    return matrix_protocol(nets, cfg, seed, episodes or cfg.protocol_episodes)
