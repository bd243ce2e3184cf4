import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixdro.conic import ConicProgram, Expr, solve
from mixdro.losses import KINDS, LossSpec, affine_pieces, epigraph, eval_loss, lipschitz_modulus

from _gen import random_loss

LOSSES = [LossSpec("hinge"), LossSpec("logloss"), LossSpec("smooth_hinge"), LossSpec("huber", 0.5),
          LossSpec("huber", 2.0), LossSpec("pinball", 0.3), LossSpec("tau_insensitive", 0.1),
          LossSpec("tau_insensitive", 0.0)]


def _reference(loss: LossSpec, e: float) -> float:
    """Scalar textbook definitions, written independently of eval_loss."""
    k = loss.kind
    if k == "hinge":
        return max(0.0, 1.0 - e)
    if k == "logloss":
        return math.log1p(math.exp(-e)) if e > -30 else -e + math.log1p(math.exp(e))
    if k == "smooth_hinge":
        if e <= 0:
            return 0.5 - e
        return 0.5 * (1 - e) ** 2 if e < 1 else 0.0
    if k == "huber":
        d = loss.param
        return 0.5 * e * e if abs(e) <= d else d * abs(e) - 0.5 * d * d
    if k == "pinball":
        t = loss.param
        return t * (-e) if e < 0 else (1 - t) * e
    return max(0.0, abs(e) - loss.param)


@pytest.mark.parametrize("loss", LOSSES, ids=str)
def test_values_match_reference(loss):
    for e in np.linspace(-5, 5, 101):
        assert eval_loss(loss, e) == pytest.approx(_reference(loss, e), abs=1e-12)


def test_defaults_and_validation():
    assert LossSpec("huber").param == 1.0
    assert LossSpec("pinball").param == 0.5
    assert LossSpec("tau_insensitive").param == 0.0
    assert LossSpec("hinge", 3.0).param is None
    for bad in [("huber", 0.0), ("pinball", 1.5), ("tau_insensitive", -0.1), ("squared", None)]:
        with pytest.raises(ValueError):
            LossSpec(*bad)
    assert LossSpec("hinge").task == "classification"
    assert LossSpec("pinball").task == "regression"
    assert LossSpec.from_dict(LossSpec("huber", 0.5).to_dict()) == LossSpec("huber", 0.5)
    assert str(LossSpec("pinball", 0.5)) == "pinball(0.5)"


@pytest.mark.parametrize("loss", LOSSES, ids=str)
def test_lipschitz_modulus_bounds_and_is_attained(loss):
    lip = lipschitz_modulus(loss)
    e = np.linspace(-20, 20, 4001)
    v = eval_loss(loss, e)
    slopes = np.abs(np.diff(v) / np.diff(e))
    assert slopes.max() <= lip + 1e-9
    assert slopes.max() >= lip - 1e-6  # tight at the far ends


@settings(max_examples=200)
@given(st.sampled_from(KINDS), st.floats(-30, 30), st.floats(-30, 30), st.floats(0, 1))
def test_convexity(kind, a, b, t):
    loss = LossSpec(kind)
    mid = eval_loss(loss, t * a + (1 - t) * b)
    assert mid <= t * eval_loss(loss, a) + (1 - t) * eval_loss(loss, b) + 1e-9


@pytest.mark.parametrize("loss", [l for l in LOSSES if l.piecewise], ids=str)
def test_affine_pieces_reproduce_loss(loss):
    e = np.linspace(-4, 4, 81)
    pieces = affine_pieces(loss)
    assert np.allclose(np.max([a * e + b for a, b in pieces], axis=0), eval_loss(loss, e), atol=1e-12)


def test_affine_pieces_rejected_for_smooth_losses():
    with pytest.raises(ValueError):
        affine_pieces(LossSpec("logloss"))


def _epigraph_min(loss: LossSpec, e_val: float, piece=None) -> float:
    """min o subject to the epigraph rows with e fixed."""
    prog = ConicProgram()
    e, o = prog.add_variables(2, "eo")
    prog.set_bounds([e], e_val, e_val)
    prog.add_objective([o], 1.0)
    epigraph(loss, piece).instantiate(prog, prog.var([e]), prog.var([o]))
    res = solve(prog)
    assert res.ok, res.status
    return res.x[o]


@settings(max_examples=60)
@given(st.integers(0, 2**31 - 1), st.floats(-4, 4))
def test_epigraph_is_tight(seed, e_val):
    loss = random_loss(np.random.default_rng(seed))
    assert _epigraph_min(loss, e_val) == pytest.approx(eval_loss(loss, e_val), abs=1e-6)


@settings(max_examples=60)
@given(st.integers(0, 2**31 - 1), st.floats(-4, 4), st.floats(-1, 1))
def test_epigraph_feasibility_matches_loss(seed, e_val, slack):
    """(e, o) is feasible for the rows exactly when L(e) <= o (away from the boundary)."""
    loss = random_loss(np.random.default_rng(seed))
    if abs(slack) < 1e-3:
        slack = 1e-3
    o_val = eval_loss(loss, e_val) + slack
    prog = ConicProgram()
    e, o = prog.add_variables(2, "eo")
    prog.set_bounds([e], e_val, e_val)
    prog.set_bounds([o], o_val, o_val)
    epigraph(loss).instantiate(prog, prog.var([e]), prog.var([o]))
    res = solve(prog)
    assert res.ok == (slack > 0), (res.status, slack)


def test_epigraph_single_piece():
    loss = LossSpec("tau_insensitive", 0.2)
    for j, (a, b) in enumerate(affine_pieces(loss)):
        assert _epigraph_min(loss, 0.7, j) == pytest.approx(a * 0.7 + b, abs=1e-9)
    with pytest.raises(ValueError):
        epigraph(LossSpec("huber"), 0)


def test_epigraph_batch():
    loss = LossSpec("smooth_hinge")
    vals = np.array([-2.0, 0.3, 0.9, 4.0])
    prog = ConicProgram()
    e = prog.add_variables(4, "e")
    o = prog.add_variables(4, "o")
    prog.set_bounds(e, vals, vals)
    prog.add_objective(o, 1.0)
    epigraph(loss).instantiate(prog, prog.var(e), prog.var(o))
    res = solve(prog)
    assert np.allclose(res.x[o], eval_loss(loss, vals), atol=1e-6)
