"""Geometry oracles: worked occupied sets, area scaling by grid integration,
Hausdorff distances forced analytically on translates."""

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipdsaw import geometry, model, rescaling, sampler
from ipdsaw.errors import DomainError, ValidationError
from ipdsaw.rng import stream

BETA_C = model.critical_beta()
CRIT = model.make_params(BETA_C)

HAND_CONFIG = model.StretchConfig((2, -1))  # length 5, six sites
HAND_SITES = {(0, 0), (0, 1), (0, 2), (1, 2), (1, 1), (2, 1)}


def _inside(region, pts):
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    b = region.boxes[None, :, :] if region.boxes.ndim == 2 else region.boxes
    bx0, bx1, by0, by1 = region.boxes.T
    hit = (x >= bx0) & (x <= bx1) & (y >= by0) & (y <= by1)
    return hit.any(axis=1)


def test_occupied_set_worked_example():
    path = model.stretches_to_lattice(HAND_CONFIG)
    occ = geometry.occupied_set(path)
    assert set(map(tuple, occ.centers.tolist())) == HAND_SITES
    assert occ.count == HAND_CONFIG.total_length + 1 == 6
    assert occ.area == 6.0


def test_single_step_path_two_squares():
    occ = geometry.occupied_set(model.LatticePath("R"))
    assert occ.count == 2


def test_count_matches_length_on_sampled_polymers():
    for seed in range(4):
        cfg, _ = sampler.sample_critical_polymer(30, CRIT, stream(100 + seed))
        occ = geometry.occupied_set(model.stretches_to_lattice(cfg))
        assert occ.count == 31


def test_rescale_is_lazy_and_composes():
    occ = geometry.occupied_set(model.stretches_to_lattice(HAND_CONFIG))
    assert geometry.rescale(occ, 1.0, 1.0).area == occ.area
    twice = geometry.rescale(geometry.rescale(occ, 2.0, 1.0), 1.5, 4.0)
    assert twice.scale == (3.0, 4.0)
    assert twice.area == pytest.approx(6.0 / 12.0)
    with pytest.raises(DomainError):
        geometry.rescale(occ, -1.0, 1.0)


def test_unit_square_scaling():
    square = geometry.OccupiedSet(np.array([[0, 0]]))
    half = geometry.rescale(square, 2.0, 2.0).as_region()
    assert half.bounds == (-0.25, 0.25, -0.25, 0.25)
    assert half.area == pytest.approx(0.25)


def test_area_matches_grid_integration():
    region = geometry.rescale(
        geometry.occupied_set(model.stretches_to_lattice(HAND_CONFIG)), 2.0, 2.0
    ).as_region()
    x0, x1, y0, y1 = region.bounds
    n = 401
    gx, gy = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    frac = _inside(region, pts).mean()
    assert frac * (x1 - x0) * (y1 - y0) == pytest.approx(region.area, rel=0.02)
    assert region.area == pytest.approx(6.0 / 4.0)


def test_rescaled_area_identity():
    for L in (30, 50):
        cfg, _ = sampler.sample_critical_polymer(L, CRIT, stream(L))
        occ = geometry.occupied_set(model.stretches_to_lattice(cfg))
        scaled = geometry.rescale(occ, L ** (2 / 3), L ** (1 / 3))
        assert scaled.area == pytest.approx((L + 1) / L, rel=1e-12)


def test_band_flat_worked_example():
    h = rescaling.StepFunction(0.25, np.ones(5))
    m = rescaling.StepFunction(0.25, np.zeros(5))
    band = geometry.band_from_profile(h, m, 1.0)
    assert band.bounds == (0.0, 1.0, -0.5, 0.5)
    assert band.area == pytest.approx(1.0)


def test_band_degenerate_height_is_a_curve():
    h = rescaling.StepFunction(0.5, np.zeros(3))
    m = rescaling.StepFunction(0.5, np.array([0.0, 1.0, 2.0]))
    band = geometry.band_from_profile(h, m, 1.0)
    assert band.area == 0.0
    cloud = band.point_cloud(0.1)
    assert set(np.round(np.unique(cloud[:, 1]), 9)) <= {0.0, 1.0, 2.0}


def test_band_validation():
    h = rescaling.StepFunction(0.25, np.ones(5))
    m = rescaling.StepFunction(0.5, np.zeros(3))
    with pytest.raises(ValidationError):
        geometry.band_from_profile(h, m, 1.0)
    neg = rescaling.StepFunction(0.25, -np.ones(5))
    m4 = rescaling.StepFunction(0.25, np.zeros(5))
    with pytest.raises(ValidationError):
        geometry.band_from_profile(neg, m4, 1.0)
    with pytest.raises(DomainError):
        geometry.band_from_profile(h, m4, 1.5)


def test_hausdorff_self_distance_zero():
    region = geometry.occupied_set(model.stretches_to_lattice(HAND_CONFIG)).as_region()
    assert float(geometry.hausdorff(region, region)) == 0.0


def test_hausdorff_translate_is_analytic():
    square = geometry.OccupiedSet(np.array([[0, 0]])).as_region()
    for t in (0.5, 0.7, 1.3):
        moved = square.translate(t, 0.0)
        d = geometry.hausdorff(square, moved, resolution=1 / 8)
        assert abs(d.value - t) <= d.error_bound
        assert d.error_bound == pytest.approx(np.sqrt(2) / 8)


def test_hausdorff_symmetry_and_triangle():
    rng = stream(77)
    regions = []
    for _ in range(3):
        raw = rng.uniform(0, 3, size=(3, 4))
        raw[:, :2] = np.sort(raw[:, :2], axis=1)
        raw[:, 2:] = np.sort(raw[:, 2:], axis=1)
        regions.append(geometry.Region(raw))
    a, b, c = regions
    h = 0.05
    dab = geometry.hausdorff(a, b, h).value
    dba = geometry.hausdorff(b, a, h).value
    assert dab == pytest.approx(dba, abs=1e-12)
    dac = geometry.hausdorff(a, c, h).value
    dbc = geometry.hausdorff(b, c, h).value
    assert dac <= dab + dbc + 2 * h * np.sqrt(2)


def test_aligned_band_equals_squares_up_to_terminal_site():
    # unscaled hand case: the only mismatch is the final landing square,
    # one lattice unit beyond the band
    band = geometry.polymer_band(HAND_CONFIG, 1)
    occ = geometry.occupied_set(model.stretches_to_lattice(HAND_CONFIG))
    aligned = geometry.align_band_to_squares(band, 1)
    d = geometry.hausdorff(aligned, occ, resolution=1 / 8)
    assert d.value == pytest.approx(1.0, abs=1e-9)


def test_band_square_agreement_bound_on_sampled_paths():
    for L, seeds in ((100, 3), (1000, 2)):
        for s in range(seeds):
            cfg, _ = sampler.sample_critical_polymer(L, CRIT, stream(1000 * L + s))
            band = geometry.align_band_to_squares(geometry.polymer_band(cfg, L), L)
            occ = geometry.rescale(
                geometry.occupied_set(model.stretches_to_lattice(cfg)),
                L ** (2 / 3),
                L ** (1 / 3),
            )
            d = geometry.hausdorff(band, occ)
            assert d.value <= L ** (-1 / 3)
            assert d.pitch == pytest.approx(L ** (-1 / 3) / 8)


def test_region_json_and_cloud_csv():
    region = geometry.Region(np.array([[0.0, 1.0, 0.0, 2.0]]))
    polys = json.loads(region.to_json())["polygons"]
    assert polys == [[[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [0.0, 2.0]]]
    buf = io.StringIO()
    region.cloud_to_csv(buf, pitch=1.0)
    rows = {tuple(map(float, line.split(","))) for line in buf.getvalue().splitlines()}
    assert rows == {(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(min_value=-4, max_value=4), min_size=1, max_size=6))
def test_occupied_count_property(stretches):
    cfg = model.StretchConfig(tuple(stretches))
    occ = geometry.occupied_set(model.stretches_to_lattice(cfg))
    assert occ.count == cfg.total_length + 1
    scaled = geometry.rescale(occ, 2.0, 3.0)
    assert scaled.area * 6.0 == pytest.approx(occ.count)
