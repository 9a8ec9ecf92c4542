import json
import math

import numpy as np
import pytest

from nerfsearch.cost import count_params, er_params
from nerfsearch.field import ArchitectureDescriptor, CellConfig, \
    baseline_descriptor
from nerfsearch.search import (Budget, ConstraintSet, GeneratorState,
                               SearchSpace, TargetLadder, check_constraints,
                               compute_targets, enumerate_space, run_search,
                               scaled_iterations, search_scene,
                               train_boundary, universal_metric)
from nerfsearch.train import TrainSettings


# ----------------------------------------------------------------- ladder

def test_targets_linear_interpolation():
    ladder = compute_targets(0.8, 0.9)
    assert abs(ladder.t_xxs - 0.81) < 1e-12
    assert abs(ladder.t_xs - 0.85) < 1e-12
    assert abs(ladder.t_s - 0.89) < 1e-12


def test_targets_degenerate_equal():
    ladder = compute_targets(0.7, 0.7)
    assert ladder.t_xxs == ladder.t_xs == ladder.t_s == 0.7


def test_targets_ship_like_extremes():
    ladder = compute_targets(0.757, 0.827)
    assert abs(ladder.t_xxs - 0.764) < 1e-9
    assert abs(ladder.t_xs - 0.792) < 1e-9
    assert abs(ladder.t_s - 0.820) < 1e-9


def test_targets_inverted_rejected():
    with pytest.raises(ValueError, match="degenerate scene signal"):
        compute_targets(0.9, 0.8)


def test_ladder_monotone_when_distinct():
    ladder = compute_targets(0.5, 0.6)
    assert ladder.ssim_min <= ladder.t_xxs < ladder.t_xs < ladder.t_s <= ladder.ssim_max


# ------------------------------------------------------------ constraints

def desc_with_channels(channels, fine_channels=None):
    return ArchitectureDescriptor(
        coarse=CellConfig((2, 1, 1), tuple(channels)),
        fine=CellConfig((2, 1, 1), tuple(fine_channels or channels)))


def test_structural_pass():
    ok, reason = check_constraints(desc_with_channels((9, 11, 12)), None,
                                   ConstraintSet())
    assert ok and reason == "ok"


def test_structural_uniform_permitted():
    ok, _ = check_constraints(desc_with_channels((12, 12, 12)), None,
                              ConstraintSet())
    assert ok


def test_structural_decreasing_fails():
    ok, reason = check_constraints(desc_with_channels((12, 11, 9)), None,
                                   ConstraintSet())
    assert not ok and reason == "widths decrease"


def test_strict_increase_flag():
    ok, reason = check_constraints(desc_with_channels((12, 12, 12)), None,
                                   ConstraintSet(strict_increase=True))
    assert not ok and "strictly" in reason
    ok, _ = check_constraints(desc_with_channels((10, 12, 14)), None,
                              ConstraintSet(strict_increase=True))
    assert ok


def test_ssim_target_check():
    ok, reason = check_constraints(desc_with_channels((9, 11, 12)), 0.84,
                                   ConstraintSet(ssim_target=0.85))
    assert not ok and reason == "ssim below target"
    ok, _ = check_constraints(desc_with_channels((9, 11, 12)), 0.86,
                              ConstraintSet(ssim_target=0.85))
    assert ok


def test_budget_constraints():
    desc = desc_with_channels((9, 11, 12))
    ok, reason = check_constraints(desc, None,
                                   ConstraintSet(max_params=1000))
    assert not ok and reason == "params over budget"
    ok, reason = check_constraints(desc, None,
                                   ConstraintSet(max_flops=1.0))
    assert not ok and reason == "flops over budget"


# --------------------------------------------------------------- U metric

def test_universal_metric_monotone_in_cost():
    hi = universal_metric(0.9, 0.1, 30.0)
    lo = universal_metric(0.9, 0.2, 60.0)
    assert hi > lo


def test_universal_metric_scaling_identity():
    u1 = universal_metric(0.9, 0.1, 30.0)
    u2 = universal_metric(0.9, 0.4, 120.0)
    assert abs((u1 - u2) - 20 * math.log10(4.0)) < 1e-9


def test_universal_metric_hand_value():
    # alpha=2, beta=gamma=0.5: U = 40 log10(100 s) - 10 log10(p) - 10 log10(f)
    got = universal_metric(0.9, 0.05, 28.01)
    want = 40 * math.log10(90.0) - 10 * math.log10(0.05) - 10 * math.log10(28.01)
    assert abs(got - want) < 1e-9


def test_universal_metric_rejects_nonpositive():
    with pytest.raises(ValueError):
        universal_metric(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        universal_metric(0.5, -1.0, 1.0)


# --------------------------------------------------------- scaled budgets

def test_scaled_iterations_identity():
    assert scaled_iterations(1.0, "inverse") == 200_000
    assert scaled_iterations(1.0, "proportional") == 200_000


def test_scaled_iterations_inverse_examples():
    assert scaled_iterations(5.74, "inverse") == 34843
    assert scaled_iterations(21.92, "inverse") == 16000  # clamped from 9124


def test_scaled_iterations_fixed_and_errors():
    assert scaled_iterations(7.3, "fixed") == 200_000
    with pytest.raises(ValueError):
        scaled_iterations(-1.0, "inverse")
    with pytest.raises(ValueError):
        scaled_iterations(2.0, "bogus")


# ---------------------------------------------------------------- spaces

def test_default_space_contains_reference_family():
    from reference_archs import REFERENCE_ROWS, row_descriptor
    space = SearchSpace()
    assert space.contains(baseline_descriptor())
    for row in REFERENCE_ROWS:
        assert space.contains(row_descriptor(row))


def test_default_space_maximum_is_baseline():
    assert SearchSpace().maximum_descriptor() == baseline_descriptor()


def test_minimum_descriptor_efficiency():
    a_min = SearchSpace().minimum_descriptor()
    assert er_params(a_min) > 23.2


# ------------------------------------------------------------- generator

def test_generator_distributions_valid():
    space = SearchSpace(d1_choices=(1, 2), d3_choices=(1, 2),
                        channel_choices=(8, 16, 32))
    gen = GeneratorState.initial(space)
    rng = np.random.default_rng(0)
    cons = ConstraintSet()
    elites = [gen.sample(rng, cons) for _ in range(6)]
    gen.refit(elites)
    for key, p in gen.probs.items():
        assert abs(p.sum() - 1.0) < 1e-9
        assert np.all(p >= gen.floor - 1e-15)


def test_generator_samples_are_structurally_feasible():
    space = SearchSpace(d1_choices=(1, 2, 3), d3_choices=(1, 2),
                        channel_choices=(8, 12, 16, 24))
    gen = GeneratorState.initial(space)
    cons = ConstraintSet()
    rng = np.random.default_rng(1)
    for _ in range(200):
        desc = gen.sample(rng, cons)
        assert check_constraints(desc, None, cons)[0]


def test_generator_refit_concentrates():
    space = SearchSpace(d1_choices=(1, 2), d3_choices=(1,),
                        channel_choices=(8, 16, 32))
    gen = GeneratorState.initial(space)
    elite = ArchitectureDescriptor(coarse=CellConfig((2, 1, 1), (8, 8, 8)),
                                   fine=CellConfig((1, 1, 1), (16, 16, 32)))
    gen.refit([elite, elite, elite])
    p = gen.probs["coarse.d1"]
    assert p[1] > p[0]
    assert gen.round_counter == 1


# -------------------------------------------------------------- run_search

def surrogate_ssim(descriptor, seed=0):
    # deterministic, saturating in capacity
    p = count_params(descriptor)
    return 0.5 + 0.45 * (1.0 - math.exp(-p / 30000.0))


def tiny_space():
    # coarse cell pinned to one point; 2*2*10 = 40 descriptors total
    return SearchSpace(d1_choices=(1, 2), d3_choices=(1, 2),
                       channel_choices=(8, 16, 32),
                       coarse_d1=(2,), coarse_d3=(1,), coarse_channels=(8,))


def brute_force_best(space, target):
    cons = ConstraintSet(ssim_target=target)
    best = None
    for desc in enumerate_space(space):
        s = surrogate_ssim(desc)
        if not check_constraints(desc, s, cons)[0]:
            continue
        u = universal_metric(s, count_params(desc) / 1e6,
                             __import__("nerfsearch.cost",
                                        fromlist=["estimate_flops"])
                             .estimate_flops(desc) / 1e9)
        if best is None or u > best[0]:
            best = (u, desc)
    return best


def test_run_search_singleton_space():
    space = SearchSpace(d1_choices=(2,), d3_choices=(1,), channel_choices=(8,))
    result = run_search(None, target=0.0, space=space, budget=Budget(
        rounds=1, samples_per_round=3, proxy_iterations=0),
        seed=0, proxy=surrogate_ssim)
    assert result.feasible
    assert result.best.round == 0
    only = space.minimum_descriptor()
    assert result.best.descriptor == only


def test_run_search_finds_brute_force_optimum():
    space = tiny_space()
    target = 0.62
    want = brute_force_best(space, target)
    result = run_search(None, target=target, space=space,
                        budget=Budget(rounds=6, samples_per_round=20,
                                      proxy_iterations=0),
                        seed=3, proxy=surrogate_ssim)
    assert result.feasible
    assert abs(result.best.u_score - want[0]) < 1e-9
    assert result.best.descriptor == want[1]


def test_run_search_infeasible_target_is_result_not_error():
    space = SearchSpace(d1_choices=(1,), d3_choices=(1,), channel_choices=(8,))
    result = run_search(None, target=0.999, space=space,
                        budget=Budget(rounds=2, samples_per_round=4,
                                      proxy_iterations=0),
                        seed=0, proxy=surrogate_ssim)
    assert not result.feasible
    assert result.best is None
    assert all(c.reason == "ssim below target" for c in result.candidates)


def test_run_search_deterministic_bytes():
    space = tiny_space()
    kw = dict(target=0.6, space=space,
              budget=Budget(rounds=3, samples_per_round=8, proxy_iterations=0),
              proxy=surrogate_ssim)
    a = run_search(None, seed=11, **kw).to_json()
    b = run_search(None, seed=11, **kw).to_json()
    assert a == b
    c = run_search(None, seed=12, **kw).to_json()
    assert a != c


def test_run_search_audit_log_replays_best():
    space = tiny_space()
    result = run_search(None, target=0.6, space=space,
                        budget=Budget(rounds=4, samples_per_round=10,
                                      proxy_iterations=0),
                        seed=5, proxy=surrogate_ssim)
    feasible = [c for c in result.candidates if c.feasible]
    replay = max(feasible, key=lambda c: c.u_score)
    assert replay.u_score == result.best.u_score
    assert replay.descriptor == result.best.descriptor


def test_run_search_candidates_pass_constraints():
    space = tiny_space()
    result = run_search(None, target=0.6, space=space,
                        budget=Budget(rounds=3, samples_per_round=8,
                                      proxy_iterations=0),
                        seed=9, proxy=surrogate_ssim)
    cons = ConstraintSet(ssim_target=0.6)
    for cand in result.candidates:
        if cand.feasible:
            ok, _ = check_constraints(cand.descriptor, cand.proxy_ssim, cons)
            assert ok
            assert cand.u_score is not None
        else:
            assert cand.u_score is None


def test_search_scene_names_by_ascending_size():
    space = tiny_space()
    ladder = compute_targets(0.55, 0.9)
    scene_result = search_scene(None, ladder, space,
                                budget=Budget(rounds=4, samples_per_round=12,
                                              proxy_iterations=0),
                                seed=2, proxy=surrogate_ssim)
    sizes = [count_params(scene_result.named[k])
             for k in ("xxs", "xs", "s") if k in scene_result.named]
    assert sizes == sorted(sizes)
    assert len(sizes) >= 1


def test_search_result_json_schema():
    space = tiny_space()
    result = run_search(None, target=0.6, space=space,
                        budget=Budget(rounds=2, samples_per_round=4,
                                      proxy_iterations=0),
                        seed=1, proxy=surrogate_ssim)
    payload = json.loads(result.to_json())
    assert set(payload) == {"target", "feasible", "best", "candidates",
                            "seed", "budget", "policy"}
    assert len(payload["candidates"]) == 8


# --------------------------------------------------------------- boundary

def test_train_boundary_zero_iterations(tiny_scene):
    dataset, _ = tiny_scene
    space = SearchSpace(d1_choices=(1, 2), d3_choices=(1,),
                        channel_choices=(8, 12, 16))
    settings = TrainSettings(iterations=0, rays_per_batch=32, n_coarse=8,
                             n_fine=8, eval_max_images=1, log_every=0)
    res = train_boundary(dataset, iterations=0, space=space,
                         settings=settings, seed=0)
    assert np.isfinite(res.ssim_min) and np.isfinite(res.ssim_max)
    lo, hi = sorted((res.ssim_min, res.ssim_max))
    ladder = compute_targets(lo, hi)
    assert ladder.t_xxs <= ladder.t_s
    assert res.a_min == space.minimum_descriptor()
    assert res.a_max == space.maximum_descriptor()
