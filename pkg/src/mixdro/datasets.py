"""Small benchmark datasets that can be generated exactly or ship with the package.

balance-scale and tic-tac-toe are fully determined by their generating rules, so
they are rebuilt here instead of downloaded. The 1985 automobile imports data is
bundled as ``data/imports-85.csv``.
"""
from __future__ import annotations

import itertools
import warnings
from importlib import resources

from .core import Dataset
from .dataio import DataWarning, EncodeOptions, RawTable, encode, load_csv

BALANCE_COLUMNS = ("left-weight", "left-distance", "right-weight", "right-distance")
TTT_SQUARES = ("top-left", "top-middle", "top-right", "middle-left", "middle-middle", "middle-right",
               "bottom-left", "bottom-middle", "bottom-right")
_LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6))


def balance_scale_table() -> RawTable:
    """All 5^4 weight/distance combinations; the class is the side the scale tips to (L, B, R)."""
    rows = []
    for lw, ld, rw, rd in itertools.product(range(1, 6), repeat=4):
        left, right = lw * ld, rw * rd
        rows.append((str(lw), str(ld), str(rw), str(rd), "L" if left > right else "R" if right > left else "B"))
    levels = {c: tuple(str(v) for v in range(1, 6)) for c in BALANCE_COLUMNS}
    levels["class"] = ("B", "L", "R")
    return RawTable(BALANCE_COLUMNS + ("class",), ("categorical",) * 4 + ("output",), tuple(rows),
                    levels, "classification")


def _winner(board: tuple[str, ...]) -> str | None:
    for a, b, c in _LINES:
        if board[a] != "b" and board[a] == board[b] == board[c]:
            return board[a]
    return None


def tic_tac_toe_boards() -> list[tuple[str, ...]]:
    """Every distinct final board of a game where x moves first (958 boards)."""
    finals: set[tuple[str, ...]] = set()
    seen: set[tuple[str, ...]] = set()
    stack = [("b",) * 9]
    while stack:
        board = stack.pop()
        if board in seen:
            continue
        seen.add(board)
        if _winner(board) is not None or "b" not in board:
            finals.add(board)
            continue
        player = "x" if board.count("x") == board.count("o") else "o"
        for i, v in enumerate(board):
            if v == "b":
                stack.append(board[:i] + (player,) + board[i + 1:])
    return sorted(finals)


def tic_tac_toe_table() -> RawTable:
    """Final boards labelled positive when x has three in a row."""
    rows = tuple(b + ("positive" if _winner(b) == "x" else "negative",) for b in tic_tac_toe_boards())
    levels = {c: ("b", "o", "x") for c in TTT_SQUARES}
    levels["class"] = ("negative", "positive")
    return RawTable(TTT_SQUARES + ("class",), ("categorical",) * 9 + ("output",), rows, levels, "classification")


def imports_path():
    return resources.files("mixdro").joinpath("data/imports-85.csv")


def imports_table(quiet: bool = True) -> RawTable:
    """Automobile imports with price as output; normalized-losses is dropped before incomplete rows are."""
    with resources.as_file(imports_path()) as path, warnings.catch_warnings():
        if quiet:
            warnings.simplefilter("ignore", DataWarning)
        return load_csv(path, output="price", task="regression", drop=("normalized-losses",))


def balance_scale() -> Dataset:
    """625 samples, 4 five-level features; the label is +1 when the scale tips left."""
    return encode(balance_scale_table(), EncodeOptions(positive=("L",)))


def tic_tac_toe() -> Dataset:
    """958 samples, 9 three-level features; the label is +1 when x wins."""
    return encode(tic_tac_toe_table(), EncodeOptions(positive=("positive",)))


def imports() -> Dataset:
    """193 samples, 14 continuous and 10 discrete features.

    Continuous features are min-max scaled to [0, 1] so that transport costs are comparable
    across them (raw magnitudes range from about 1 to 4000); price is scaled to [-1, 1].
    """
    return encode(imports_table(), EncodeOptions(minmax_x=True))


BUILTIN = {"balance-scale": balance_scale, "tic-tac-toe": tic_tac_toe, "imports": imports}


def load_builtin(name: str) -> Dataset:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(BUILTIN)}") from None
