"""Readers for the simulator's CSV/JSON artifacts.

Every reader validates the pieces of the schema it needs and reports the
first offending column or field by name, so a schema drift in the data
directory fails loudly instead of rendering garbage.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class SchemaMismatch(ValueError):
    """Input file exists but does not match the expected column layout."""


def read_table(path: Path) -> dict[str, np.ndarray]:
    """Numeric CSV as {column: float array}, preserving column order.

    Non-numeric cells become NaN so partially populated columns (e.g.
    selection accuracy in baseline runs) still load.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path.name}: empty file, no header")
        rows = list(reader)
    out = {}
    for k, name in enumerate(header):
        col = np.empty(len(rows))
        for r, row in enumerate(rows):
            try:
                col[r] = float(row[k])
            except (ValueError, IndexError):
                col[r] = np.nan
        out[name] = col
    return out


def require(table: dict[str, np.ndarray], columns, source: str) -> None:
    for name in columns:
        if name not in table:
            raise SchemaMismatch(f"{source}: missing column {name}")


def read_strategies(path: Path) -> tuple[np.ndarray, list[list[str]]]:
    """strategies.csv as (episode array, per-episode label rows)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not header or header[0] != "episode":
        raise SchemaMismatch(f"{path.name}: missing column episode")
    episodes = np.array([float(r[0]) for r in rows])
    return episodes, [r[1:] for r in rows]


def read_network(path: Path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    for key in ("episode", "nodes", "edges"):
        if key not in data:
            raise SchemaMismatch(f"{path.name}: missing column {key}")
    for node in data["nodes"]:
        for field in ("id", "strategy", "centrality", "pos"):
            if field not in node:
                raise SchemaMismatch(f"{path.name}: node missing field {field}")
    for edge in data["edges"]:
        for field in ("from", "to", "w"):
            if field not in edge:
                raise SchemaMismatch(f"{path.name}: edge missing field {field}")
    return data


def agent_columns(table: dict[str, np.ndarray], prefix: str, source: str) -> np.ndarray:
    """(episodes, n_agents) matrix from numbered per-agent columns."""
    names = []
    while f"{prefix}{len(names)}" in table:
        names.append(f"{prefix}{len(names)}")
    if not names:
        raise SchemaMismatch(f"{source}: missing column {prefix}0")
    return np.column_stack([table[n] for n in names])
