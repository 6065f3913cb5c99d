import json
import math

import numpy as np
import pytest

import goodhart as g


def test_occupancy_sums_to_horizon():
    mdp = g.make_m22()
    pi = np.full((2, 2), 0.5)
    eta = g.occupancy_measure(mdp, pi)
    assert eta.shape == (4,)
    assert eta.sum() == pytest.approx(1.0 / (1.0 - mdp.discount))


def test_projection_is_idempotent():
    poly = g.Polytope(g.make_gridworld(3, 0.9))
    m = poly.projection()
    assert np.abs(m @ m - m).max() < 1e-10
    assert poly.dimension == 9 * 4


def test_steepest_ascent_reaches_optimum():
    mdp = g.make_random_mdp(4, 3, 1, 0.9, 3)
    r = np.random.default_rng(0).normal(size=12)
    path = g.steepest_ascent(mdp, r)
    best = g.policy_return(mdp, r, g.optimal_policy(mdp, r))
    assert r @ path["points"][-1] == pytest.approx(best, abs=1e-6)
    gains = path["step_gains"]
    assert all(b <= a + 1e-9 for a, b in zip(gains, gains[1:]))


def test_early_stopping_is_a_prefix():
    mdp = g.make_m22()
    r = g.m22_rewards()[2]
    full = g.steepest_ascent(mdp, r)
    stopped = g.early_stopping(mdp, r, 0.5)
    assert len(stopped["points"]) <= len(full["points"])
    assert stopped["policy"].shape == (2, 2)


def test_m22_angles():
    poly = g.Polytope(g.make_m22())
    r0, r1, r2 = g.m22_rewards()
    assert g.projected_angle(poly, r0, r1) == pytest.approx(0.26566369012095037, abs=1e-12)
    assert g.projected_angle(poly, r0, r2) == pytest.approx(0.6763870358123988, abs=1e-12)


def test_curve_and_metrics():
    mdp = g.make_m22()
    r0, _, r2 = g.m22_rewards()
    lam = list(np.linspace(0.01, 0.99, 30))
    curve = g.training_curve(mdp, r0, r2, lam)
    m = g.metrics(curve["pressures"], curve["true_returns"])
    assert m["ndh"] == pytest.approx(0.19535241210836007, abs=1e-9)
    assert 0.0 < m["lambda_star"] < 0.99


def test_bad_arguments_raise():
    with pytest.raises(ValueError):
        g.make_gridworld(0, 0.9)
    with pytest.raises(ValueError):
        g.run_protocol("nonsense", {}, "unused")


def test_demo_protocol_exports(tmp_path):
    records, failed = g.run_protocol("demo-m22", {}, tmp_path)
    assert (records, failed) == (3, 0)
    header = (tmp_path / "runs.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "id" and "lost_fraction" in header
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["records"] == 3
    assert math.isfinite(json.loads(json.dumps(g.desk_config()))["seed"])
