import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detdistill.annotations import ObjectAnnotation, SourceImage
from detdistill.boxes import BBox, iou
from detdistill.placement import (ObjectCandidate, Placement, PlacementConfig,
                                  build_candidates, extend_box, fit_scale,
                                  resize_to_fit, sa_dce_extension,
                                  scaled_patch_dims, snap_outward, try_place)

BUDGET = 20.0


def test_extension_endpoints_exact():
    assert sa_dce_extension(100.0, 100.0, 500.0, BUDGET) == BUDGET
    assert sa_dce_extension(500.0, 100.0, 500.0, BUDGET) == 0.0


def test_extension_midpoint():
    assert sa_dce_extension(300.0, 100.0, 500.0, BUDGET) == BUDGET / 2


def test_extension_collapsed_range():
    assert sa_dce_extension(250.0, 250.0, 250.0, BUDGET) == BUDGET / 2


def test_extension_clamps_out_of_range_areas():
    assert sa_dce_extension(50.0, 100.0, 500.0, BUDGET) == BUDGET
    assert sa_dce_extension(900.0, 100.0, 500.0, BUDGET) == 0.0


def test_extension_rejects_negative_budget():
    with pytest.raises(ValueError):
        sa_dce_extension(100.0, 0.0, 1.0, -1.0)


@settings(max_examples=200)
@given(st.floats(1, 1e6), st.floats(1, 1e6),
       st.floats(1, 1e5), st.floats(1, 1e5), st.floats(0, 100))
def test_extension_bounded_and_monotone(a1, a2, lo, hi, budget):
    lo, hi = min(lo, hi), max(lo, hi)
    e1 = sa_dce_extension(a1, lo, hi, budget)
    e2 = sa_dce_extension(a2, lo, hi, budget)
    assert 0.0 <= e1 <= budget
    if a1 <= a2:
        assert e1 >= e2 - 1e-9


def test_extend_box_symmetric():
    assert extend_box(BBox(10, 10, 20, 20), 5.0, 100, 100) == BBox(5, 5, 30, 30)


def test_extend_box_clipped_at_borders():
    assert extend_box(BBox(0, 0, 10, 10), 5.0, 100, 100) == BBox(0, 0, 15, 15)
    assert extend_box(BBox(92, 92, 8, 8), 5.0, 100, 100) == BBox(87, 87, 13, 13)


def test_snap_outward_contains_and_is_integer():
    snapped = snap_outward(BBox(1.2, 2.7, 3.1, 4.2), 100, 100)
    assert snapped == BBox(1, 2, 4, 5)
    assert snapped.contains_box(BBox(1.2, 2.7, 3.1, 4.2))


def test_snap_outward_clipped():
    assert snap_outward(BBox(97.3, 0.5, 2.4, 3.0), 100, 100) == BBox(97, 0, 3, 4)


def make_image():
    image = SourceImage(id=1, file_name="a.png", width=120, height=100)
    image.objects = [
        ObjectAnnotation(id=1, image_id=1, category_id=1, bbox=BBox(10, 10, 10, 10)),
        ObjectAnnotation(id=2, image_id=1, category_id=2, bbox=BBox(50, 40, 20, 25)),
        ObjectAnnotation(id=3, image_id=1, category_id=1, bbox=BBox(0, 0, 30, 30),
                         iscrowd=1),
    ]
    return image


def test_build_candidates_skips_crowd_and_extends():
    config = PlacementConfig(extension_px=BUDGET, area_min=100.0, area_max=500.0)
    candidates = build_candidates(make_image(), config)
    assert [c.annotation_id for c in candidates] == [1, 2]
    for cand in candidates:
        assert cand.extended.contains_box(cand.tight)
        assert cand.extended.x == int(cand.extended.x)
        assert cand.extended.w == int(cand.extended.w)
        assert cand.extended.x >= 0 and cand.extended.x2 <= 120
        assert cand.extended.y >= 0 and cand.extended.y2 <= 100
    # area 100 == area_min: full 20 px budget, clipped at the 0 edges
    assert candidates[0].extended == BBox(0, 0, 40, 40)


def test_fit_scale_reference():
    # 968x289 patch on a 484x578 canvas leaves a 1 px margin per side
    assert fit_scale(BBox(0, 0, 968, 289), 484, 578) == 482 / 968


def test_fit_scale_never_upscales():
    assert fit_scale(BBox(0, 0, 30, 30), 484, 578) == 1.0


def test_resize_to_fit_scales_geometry():
    candidate = ObjectCandidate(1, 1, 1, tight=BBox(100, 50, 700, 150),
                                extended=BBox(0, 0, 968, 289))
    scaled, factor = resize_to_fit(candidate, 484, 578)
    assert factor == 482 / 968
    assert scaled.extended.w == pytest.approx(482.0)
    assert scaled.extended.contains_box(scaled.tight)


def test_scaled_patch_dims_identity_at_scale_one():
    assert scaled_patch_dims(BBox(0, 0, 37, 21), 1.0) == (37, 21)


def test_scaled_patch_dims_never_zero():
    assert scaled_patch_dims(BBox(0, 0, 3, 3), 0.01) == (1, 1)


def fixed_candidate(side=20.0, annotation_id=1):
    return ObjectCandidate(annotation_id, 1, 1,
                           tight=BBox(0, 0, side, side),
                           extended=BBox(0, 0, side, side))


def occupant_at(x, y, side=20.0):
    box = BBox(float(x), float(y), side, side)
    return Placement(candidate=fixed_candidate(side), scale=1.0,
                     x=int(x), y=int(y), extended=box, tight=box)


def test_place_on_empty_canvas_first_attempt():
    rng = np.random.default_rng(0)
    config = PlacementConfig(tau=0.6, max_attempts=40)
    placement, attempts = try_place(fixed_candidate(), [], 100, 100, config, rng)
    assert placement is not None
    assert attempts == 1
    assert placement.scale == 1.0
    assert placement.extended.x >= 0 and placement.extended.x2 <= 100
    assert placement.extended.y >= 0 and placement.extended.y2 <= 100
    assert placement.extended.contains_box(placement.tight)


def test_rejection_consumes_all_attempts():
    # identical full-size boxes always collide at IoU 1
    occupants = [occupant_at(0, 0, side=20.0)]
    config = PlacementConfig(tau=0.5, max_attempts=7)
    rng = np.random.default_rng(0)
    candidate = fixed_candidate(side=20.0)
    placement, attempts = try_place(candidate, occupants, 22, 22, config, rng)
    assert placement is None
    assert attempts == 7


def test_saturated_quadrant_grid_rejects_everywhere():
    # Four 20x20 occupants tile a 40x40 canvas. Any 20x20 proposal covers
    # at least a quarter of one occupant (the quadrants partition the
    # canvas), so max IoU >= 100/700 > tau = 0.1: no admissible position.
    occupants = [occupant_at(0, 0), occupant_at(20, 0),
                 occupant_at(0, 20), occupant_at(20, 20)]
    proposal_side = 20.0
    tau = 0.1
    for x in range(0, 21):
        for y in range(0, 21):
            proposal = BBox(float(x), float(y), proposal_side, proposal_side)
            worst = max(iou(proposal, occ.extended) for occ in occupants)
            assert worst >= tau
    config = PlacementConfig(tau=tau, max_attempts=13)
    placement, attempts = try_place(fixed_candidate(), occupants, 40, 40,
                                    config, np.random.default_rng(5))
    assert placement is None
    assert attempts == 13


def test_accepted_position_respects_threshold():
    occupants = [occupant_at(0, 0, side=30.0)]
    config = PlacementConfig(tau=0.3, max_attempts=200)
    rng = np.random.default_rng(42)
    placement, _ = try_place(fixed_candidate(side=30.0), occupants, 100, 100,
                             config, rng)
    assert placement is not None
    assert iou(placement.extended, occupants[0].extended) < 0.3


def test_try_place_deterministic():
    config = PlacementConfig(tau=0.6, max_attempts=40)
    a, _ = try_place(fixed_candidate(), [], 200, 200, config,
                     np.random.default_rng(11))
    b, _ = try_place(fixed_candidate(), [], 200, 200, config,
                     np.random.default_rng(11))
    assert a == b


def test_oversized_candidate_is_downscaled_and_placed():
    candidate = ObjectCandidate(1, 1, 1,
                                tight=BBox(100, 50, 700, 150),
                                extended=BBox(0, 0, 968, 289))
    config = PlacementConfig(tau=0.6, max_attempts=40)
    placement, _ = try_place(candidate, [], 484, 578, config,
                             np.random.default_rng(3))
    assert placement is not None
    assert placement.scale == 482 / 968
    assert placement.extended.w == 482.0
    assert placement.extended.x2 <= 484
    assert placement.extended.y2 <= 578
    assert placement.extended.contains_box(placement.tight)
    # tight geometry scales with the patch
    assert placement.tight.w == pytest.approx(700 * placement.scale, abs=0.01)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), side=st.floats(5, 60),
       tau=st.floats(0.05, 0.95))
def test_placement_invariants(seed, side, tau):
    rng = np.random.default_rng(seed)
    config = PlacementConfig(tau=tau, max_attempts=15)
    occupants = []
    for i in range(6):
        cand = fixed_candidate(side=side, annotation_id=i)
        placement, attempts = try_place(cand, occupants, 150, 150, config, rng)
        assert 1 <= attempts <= config.max_attempts
        if placement is None:
            continue
        assert placement.extended.x >= 0 and placement.extended.y >= 0
        assert placement.extended.x2 <= 150 and placement.extended.y2 <= 150
        assert placement.extended.contains_box(placement.tight)
        for occ in occupants:
            assert iou(placement.extended, occ.extended) < tau
        occupants.append(placement)
