"""Delimited report emission with contract-stable headers.

Floats are written with shortest round-trip precision so identical runs
produce byte-identical reports.
"""

from __future__ import annotations

import json
import math

import numpy as np

SIMULATE_HEADER = "t,E,dissipation,p_axial,min_dist,wall_margin"
BOUNDS_HEADER = "t,n,V,M,R,supQ_window,lemma1_ratio,cor1_ratio"
CONVERGENCE_HEADER = "n_low,n_high,k,t,u_k,ratio,horizon"
FLOCK_HEADER = "t,velocity_diameter,position_spread"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (np.integer, int)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row))
            fh.write("\n")


def write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_csv(path):
    """Header line plus rows of strings (tests and plotting helpers)."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    return lines[0], [line.split(",") for line in lines[1:]]
