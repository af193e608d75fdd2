import numpy as np
import pytest

from patchplan.layout import VariableLayout
from patchplan.splitting import (MiqpBlock, NlpBlock, SplitMode, build_multi_block_split, build_two_block_split,
                                 consensus_slots, create_block, initial_guess)


def test_point_contact_slots_skip_orientation_and_moments(walking):
    families = {family for family, _, _ in consensus_slots(walking)}
    assert families == {"r", "theta", "rdot", "thetadot", "p", "lambda"}
    fingers = {key[0] for family, _, key in consensus_slots(walking) if family == "p"}
    assert fingers == set(walking.robot.active_fingers)


def test_patch_contact_slots(climbing):
    slots = list(consensus_slots(climbing))
    families = {family for family, _, _ in slots}
    assert families == {"r", "theta", "rdot", "thetadot", "p", "q", "d", "lambda", "tau"}
    N = climbing.horizon
    assert not any(family in ("lambda", "tau") and t == N for family, t, _ in slots)


def test_initial_guess_interpolates_body(climbing):
    traj, disc = initial_guess(climbing)
    start, goal = climbing.body_state("initial"), climbing.body_state("target")
    np.testing.assert_allclose(traj.r[0], start["r"])
    np.testing.assert_allclose(traj.r[-1], goal["r"])
    np.testing.assert_allclose(traj.lam.sum(axis=1), np.tile(-climbing.robot.mass * climbing.robot.gravity,
                                                             (climbing.horizon, 1)))
    np.testing.assert_allclose(traj.d[:, 0], traj.p[:, 1] - traj.p[:, 0])
    assert not disc.alpha.any()


def test_two_block_graph(walking):
    split = build_two_block_split(walking)
    assert split.mode == SplitMode.TWO_BLOCK
    assert isinstance(split.blocks[0], MiqpBlock) and isinstance(split.blocks[1], NlpBlock)
    graph = split.graph
    assert graph.n_globals == 3 * len(list(consensus_slots(walking)))
    assert graph.n_edges == 2 * graph.n_globals
    assert len(graph.neighbors(graph.global_id("p[1][0].z"))) == 2


def test_multi_block_graph(climbing):
    split = build_multi_block_split(climbing)
    graph = split.graph
    n_limbs = climbing.robot.n_limbs
    assert len(split.miqp_blocks) == n_limbs
    # body variables are shared by every limb and the smooth block
    assert len(graph.neighbors(graph.global_id("r[1].x"))) == n_limbs + 1
    blocks = [b for b, _ in graph.neighbors(graph.global_id("p[1][2].x"))]
    assert [split.blocks[b].name for b in blocks] == ["limb1", "nlp"]
    limb = split.blocks[1]
    assert limb.layout.body_share == pytest.approx(1.0 / n_limbs)
    assert len(limb.slack_globals) == climbing.horizon
    assert len(limb.slack_globals[0][2]) == climbing.robot.n_fingers - 2


def test_delta_roundtrip(climbing):
    split = build_two_block_split(climbing)
    traj, _ = initial_guess(climbing)
    back = split.trajectory_from(split.delta_from(traj))
    np.testing.assert_allclose(back.r, traj.r)
    np.testing.assert_allclose(back.lam, traj.lam)


def test_block_objective_adds_consensus_penalty(walking):
    split = build_two_block_split(walking)
    block = split.blocks[1]
    rng = np.random.default_rng(5)
    targets = rng.normal(size=block.local.size)
    objective = block.objective(targets, np.zeros(split.graph.n_globals))
    x = rng.normal(size=block.n)
    penalty = 0.5 * block.rho * np.sum((x[block.local] - targets) ** 2)
    assert objective.value(x) == pytest.approx(block.cost.value(x) + penalty)


def test_start_respects_bounds(walking):
    split = build_two_block_split(walking)
    for block in split.blocks:
        assert np.all(block.start >= block.lb) and np.all(block.start <= block.ub)


def test_create_block_rejects_unknown_kind(walking):
    with pytest.raises(ValueError, match="Unknown block kind"):
        create_block("lp", "x", walking, VariableLayout(walking), 1.0)


def test_nlp_block_jacobians(climbing):
    split = build_two_block_split(climbing)
    assert split.nlp_block.check_jacobians() < 1e-5
