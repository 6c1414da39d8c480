from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gradguide.attacks import (
    STATUS_DEGENERATE,
    AttackConfig,
    AttackResult,
    cw_l2_attack,
    grad_guided_attack,
    ifgsm_eps_sweep,
    ifgsm_l2_attack,
    lbfgs_attack,
    run_c_search,
)
from gradguide.bench import attack_presets, commit_colinearity, step_colinearity
from gradguide.exceptions import UsageError
from gradguide.nn import Layer, MlpModel, classify, forward_logits, hinge_loss_f

from conftest import identity_model, random_model

HALF_SQRT2 = np.sqrt(2) / 2
ALL = {
    "grad_guided": grad_guided_attack,
    "cw": cw_l2_attack,
    "lbfgs": lbfgs_attack,
    "ifgsm": ifgsm_l2_attack,
}


def _distance_to_diagonal(p):
    return abs(p[0] - p[1]) / np.sqrt(2)


def test_grad_guided_noop_when_already_target(ident2):
    x = np.array([0.2, 0.9])
    res = grad_guided_attack(ident2, x, 1)
    assert res.success and res.l2_distance == 0.0 and res.iterations == 0
    np.testing.assert_array_equal(res.adversarial, x)


def test_grad_guided_identity_model_reaches_perpendicular_foot(ident2):
    res = grad_guided_attack(ident2, np.array([1.0, 0.0]), 1)
    assert res.success
    assert abs(res.l2_distance - HALF_SQRT2) < 0.05
    assert _distance_to_diagonal(res.adversarial) < 0.05


def test_grad_guided_synthetic_point_geometry(synthetic):
    _, test, clf = synthetic
    idx = int(np.flatnonzero(test.y == 0)[0])
    cfg = replace(attack_presets(0, 10)["grad_guided"], record_trajectory=True)
    res = grad_guided_attack(clf.model_, test.X[idx], 1, cfg)
    assert res.success and classify(clf.model_, res.adversarial) == 1
    cos = step_colinearity(res)
    assert cos and min(cos) >= 1 - 1e-9
    assert min(commit_colinearity(res)) > 0.9


def test_grad_guided_degenerate_gradient():
    # every hidden unit is dead at x, so the logits do not depend on x
    dead = MlpModel((Layer(np.array([[1.0, 1.0]]), np.array([-100.0]), "relu"),
                     Layer(np.array([[0.0], [0.0]]), np.array([1.0, 0.0]), "identity")))
    x = np.array([0.5, 0.5])
    res = grad_guided_attack(dead, x, 1)
    assert res.status == STATUS_DEGENERATE and not res.success
    assert res.iterations == 0


def test_cw_already_target_has_tiny_distance(ident2):
    res = cw_l2_attack(ident2, np.array([0.3, 0.7]), 1)
    assert res.success and res.l2_distance <= 1e-6


def test_cw_identity_model_reaches_perpendicular_foot(ident2):
    res = cw_l2_attack(ident2, np.array([1.0, 0.0]), 1, AttackConfig(box_lo=-1.0, box_hi=2.0))
    assert res.success
    assert _distance_to_diagonal(res.adversarial) < 0.05


def test_cw_synthetic_lands_on_target_side(synthetic):
    _, test, clf = synthetic
    idx = int(np.flatnonzero(test.y == 1)[0])
    res = cw_l2_attack(clf.model_, test.X[idx], 0, attack_presets(0, 10)["cw"])
    assert res.success and classify(clf.model_, res.adversarial) == 0


def test_c_search_single_step_is_passthrough(ident2):
    cfg = AttackConfig(box_lo=-1.0, box_hi=2.0)
    direct = cw_l2_attack(ident2, np.array([1.0, 0.0]), 1, cfg)
    searched = run_c_search(ident2, np.array([1.0, 0.0]), 1, cfg, "cw")
    np.testing.assert_array_equal(direct.adversarial, searched.adversarial)
    assert direct.iterations == searched.iterations


class _Scripted:
    """Fake attack: succeeds when c >= threshold, distance shrinking with c."""

    def __init__(self, threshold):
        self.threshold = threshold
        self.calls = []

    def __call__(self, m, x, t, cfg):
        c = cfg.c_init
        self.calls.append(c)
        ok = c >= self.threshold
        return AttackResult(adversarial=np.array([c]), success=ok, l2_distance=1.0 + c / 100,
                            iterations=7, c_used=c, margin=1.0 if ok else -1.0)


def test_c_search_keeps_smallest_successful_distance():
    fake = _Scripted(threshold=1.0)
    res = run_c_search(None, None, 0, AttackConfig(c_steps=2), fake)
    assert fake.calls == [10.0, 5.0]
    assert res.c_used == 5.0 and res.l2_distance == 1.05
    assert res.iterations == 14


def test_c_search_grows_then_bisects():
    fake = _Scripted(threshold=50.0)
    res = run_c_search(None, None, 0, AttackConfig(c_steps=4), fake)
    assert fake.calls == [10.0, 100.0, 55.0, 32.5]
    assert res.c_used == 55.0 and res.success


def test_c_search_failure_returns_last():
    fake = _Scripted(threshold=1e9)
    res = run_c_search(None, None, 0, AttackConfig(c_steps=3), fake)
    assert not res.success and res.iterations == 21


def test_ifgsm_noop_when_already_target(ident2):
    res = ifgsm_l2_attack(ident2, np.array([0.0, 1.0]), 1)
    assert res.success and res.iterations == 0


def test_ifgsm_moves_along_constant_gradient(ident2):
    res = ifgsm_l2_attack(ident2, np.array([1.0, 0.0]), 1,
                          AttackConfig(epsilon=1.0, record_trajectory=True))
    assert res.success
    steps = np.diff(np.array(res.trajectory), axis=0)
    unit = np.array([-1.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(steps / np.linalg.norm(steps, axis=1)[:, None],
                               np.tile(unit, (len(steps), 1)), atol=1e-12)


def test_ifgsm_budget_below_minimal_distance_fails(ident2):
    res = ifgsm_l2_attack(ident2, np.array([1.0, 0.0]), 1, AttackConfig(epsilon=0.7))
    assert not res.success
    assert res.l2_distance <= 0.7 + 1e-12


def test_eps_sweep_stops_at_first_sufficient_doubling(ident2):
    eps, results, history = ifgsm_eps_sweep(ident2, [[1.0, 0.0]], [1], AttackConfig(epsilon=0.1))
    # budgets 0.1, 0.2, 0.4 fall short of sqrt(2)/2; 0.8 is the first doubling above it
    assert eps == pytest.approx(0.8)
    assert results[0].success
    wins = [w for _, w in history]
    assert wins == sorted(wins)


def test_eps_sweep_all_already_target(ident2):
    eps, results, history = ifgsm_eps_sweep(ident2, [[0.0, 1.0], [1.0, 0.0]], [1, 0],
                                            AttackConfig(epsilon=0.3))
    assert eps == 0.3 and all(r.success and r.iterations == 0 for r in results)


def test_eps_sweep_success_count_monotone(synthetic):
    _, test, clf = synthetic
    X, y = test.X[:12], test.y[:12]
    _, _, history = ifgsm_eps_sweep(clf.model_, X, 1 - y, attack_presets(0, 10)["ifgsm"])
    wins = [w for _, w in history]
    assert wins == sorted(wins) and wins[-1] == 12


def test_lbfgs_already_target(ident2):
    res = lbfgs_attack(ident2, np.array([0.0, 1.0]), 1)
    assert res.success and res.l2_distance == 0.0 and res.iterations == 0


def test_lbfgs_identity_model_reaches_perpendicular_foot(ident2):
    res = lbfgs_attack(ident2, np.array([1.0, 0.0]), 1)
    np.testing.assert_allclose(res.adversarial, [0.5, 0.5], atol=0.05)


def test_attack_argument_errors(ident2):
    with pytest.raises(UsageError):
        grad_guided_attack(ident2, np.zeros(3), 1)
    with pytest.raises(UsageError):
        cw_l2_attack(ident2, np.zeros(2), 5)
    with pytest.raises(UsageError):
        AttackConfig(box_lo=1.0, box_hi=0.0)


def test_abort_early_bounds_iterations(ident2):
    x = np.array([0.3, 0.7])
    cfg = AttackConfig(max_iterations=100)
    aborted = cw_l2_attack(ident2, x, 1, cfg)
    full = cw_l2_attack(ident2, x, 1, replace(cfg, abort_early=False))
    assert full.iterations == 100
    # nothing to improve: stops at the second window check
    assert aborted.iterations == 2 * cfg.window < full.iterations


@st.composite
def attack_case(draw):
    seed = draw(st.integers(0, 10_000))
    n_classes = draw(st.integers(2, 4))
    dim = draw(st.integers(2, 5))
    m = random_model((dim, 6, n_classes), seed)
    rng = np.random.default_rng(seed)
    lo = draw(st.sampled_from([0.0, -1.0]))
    hi = lo + draw(st.sampled_from([1.0, 2.0]))
    x = rng.uniform(lo, hi, size=dim)
    t = draw(st.integers(0, n_classes - 1))
    cfg = AttackConfig(
        kappa=draw(st.sampled_from([0.0, 0.5, 2.0])),
        c_steps=draw(st.integers(1, 2)),
        max_iterations=draw(st.sampled_from([5, 20])),
        out_step=draw(st.sampled_from([1, 3])),
        theta0=draw(st.sampled_from([0.01, 0.1])),
        lr=draw(st.sampled_from([0.01, 0.1])),
        epsilon=draw(st.sampled_from([0.1, 1.0])),
        box_lo=lo, box_hi=hi,
    )
    family = draw(st.sampled_from(sorted(ALL)))
    return m, x, t, cfg, family


def _run(m, x, t, cfg, family):
    if family == "ifgsm":
        return ifgsm_l2_attack(m, x, t, cfg)
    return run_c_search(m, x, t, cfg, family)


@given(attack_case())
@settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_result_invariants(case):
    m, x, t, cfg, family = case
    res = _run(m, x, t, cfg, family)
    adv = res.adversarial
    assert np.all(adv >= cfg.box_lo) and np.all(adv <= cfg.box_hi)
    assert res.success == (int(np.argmax(forward_logits(m, adv))) == t)
    assert abs(res.l2_distance - np.linalg.norm(adv - x)) <= 1e-9
    bound = {
        "grad_guided": cfg.c_steps * cfg.out_step * cfg.max_iterations,
        "cw": cfg.c_steps * cfg.max_iterations,
        "lbfgs": cfg.c_steps * cfg.max_iterations,
        "ifgsm": 10 * cfg.max_iterations,
    }[family]
    assert 0 <= res.iterations <= bound
    if res.success and res.margin >= cfg.kappa:
        # reached with the requested confidence: the hinge sits on its floor
        assert hinge_loss_f(m, adv, t, cfg.kappa) == -cfg.kappa


@given(attack_case())
@settings(max_examples=20, deadline=None)
def test_attacks_are_deterministic(case):
    m, x, t, cfg, family = case
    a = _run(m, x, t, cfg, family)
    b = _run(m, x, t, cfg, family)
    assert a.adversarial.tobytes() == b.adversarial.tobytes()
    assert (a.success, a.l2_distance, a.iterations, a.c_used) == (b.success, b.l2_distance,
                                                                   b.iterations, b.c_used)


def test_uniform_theta_step_is_colinear_on_random_nets():
    rng = np.random.default_rng(5)
    checked = 0
    for seed in range(30):
        m = random_model((4, 8, 3), seed)
        x = rng.uniform(0.3, 0.7, size=4)
        t = int((classify(m, x) + 1) % 3)
        res = grad_guided_attack(m, x, t, AttackConfig(record_trajectory=True, out_step=3))
        cos = step_colinearity(res)
        checked += len(cos)
        assert all(c >= 1 - 1e-9 for c in cos)
    assert checked > 0


def test_kappa_floor_holds_when_confident_target_reached(synthetic):
    _, test, clf = synthetic
    for kappa in (0.0, 5.0):
        cfg = attack_presets(0, 10, kappa)
        for x, y in zip(test.X[:5], test.y[:5]):
            res = run_c_search(clf.model_, x, 1 - int(y), cfg["grad_guided"], "grad_guided")
            assert res.success and res.margin >= kappa
            assert hinge_loss_f(clf.model_, res.adversarial, 1 - int(y), kappa) == -kappa
