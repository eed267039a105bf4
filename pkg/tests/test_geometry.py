import math
import warnings

import numpy as np
import pytest

from flowshadow.errors import ConfigurationError, IdentifierError
from flowshadow.geometry import (
    ArrayLayout,
    FlowPair,
    FlowSource,
    LayoutWarning,
    grid2x2,
    normalize_heading,
    occlusion_for_whisker,
    occlusion_map,
    occlusion_percent,
    occlusion_table,
    pair_layout,
    single_layout,
    wrap_difference,
)


def shadow_overlap_oracle(heading, target, occluder, d, n=20001):
    """Fraction of the target's cross-flow chord lying in the occluder's wake strip.

    Independent of the closed form: samples the chord perpendicular to the
    propagation direction and counts points within d/2 of the occluder's
    wake axis, provided the occluder sits upstream.
    """
    u = -np.array([math.cos(math.radians(heading)), math.sin(math.radians(heading))])
    perp = np.array([-u[1], u[0]])
    dp = np.asarray(target, float) - np.asarray(occluder, float)
    if dp @ u <= 0:
        return 0.0
    offsets = np.linspace(-d / 2, d / 2, n)
    pts = np.asarray(target, float) + offsets[:, None] * perp
    lateral = np.abs((pts - np.asarray(occluder, float)) @ perp)
    inside = lateral <= d / 2
    return 100.0 * (np.count_nonzero(inside) - 1) / (n - 1) if inside.any() else 0.0


def test_heading_helpers():
    assert normalize_heading(-90) == 270.0
    assert normalize_heading(720.5) == pytest.approx(0.5)
    assert wrap_difference(190) == -170.0
    assert wrap_difference(-180) == 180.0
    assert FlowSource(-15, 2.0).heading_phi == 345.0
    np.testing.assert_allclose(FlowSource(0, 1.0).propagation, [-1.0, 0.0], atol=1e-15)


def test_flow_pair_derived_fields():
    pair = FlowPair(FlowSource(350, 5.2), FlowSource(80, 8.3))
    assert pair.alpha == pytest.approx(90.0)
    assert pair.speed_ratio == pytest.approx(5.2 / 8.3)
    assert FlowPair(FlowSource(0, 1.0), FlowSource(90, 0.0)).speed_ratio is None


def test_full_shadow_along_axis():
    # 35 mm apart, 15 mm bodies, flow straight down the connecting line
    layout = pair_layout(35.0, 15.0)
    assert occlusion_percent(0.0, 2, 1, layout) == 100.0


def test_downstream_occluder_gives_zero():
    layout = pair_layout(35.0, 15.0)
    assert occlusion_percent(0.0, 1, 2, layout) == 0.0


def test_partial_shadow_hand_value():
    # lateral = 30 sin 20 = 10.260604 mm, so (15 - 10.260604) / 15 = 31.595971 %
    layout = pair_layout(30.0, 15.0)
    occ = occlusion_percent(20.0, 2, 1, layout)
    assert occ == pytest.approx(31.595971334866253, abs=1e-9)
    assert occ == pytest.approx(shadow_overlap_oracle(20.0, layout.position(2), layout.position(1), 15.0), abs=0.01)


def test_shadow_vanishes_at_thirty_degrees():
    layout = pair_layout(30.0, 15.0)
    assert occlusion_percent(30.0, 2, 1, layout) == pytest.approx(0.0, abs=1e-12)
    assert occlusion_percent(-30.0, 2, 1, layout) == pytest.approx(0.0, abs=1e-12)
    assert occlusion_percent(35.0, 2, 1, layout) == 0.0


def test_same_whisker_and_unknown_ids_rejected():
    layout = grid2x2()
    with pytest.raises(IdentifierError):
        occlusion_percent(0.0, 1, 1, layout)
    with pytest.raises(IdentifierError):
        occlusion_percent(0.0, 1, 9, layout)
    with pytest.raises(IdentifierError):
        occlusion_for_whisker(0.0, 0, layout)
    with pytest.raises(KeyError):
        layout.position(5)


def test_grid_axis_flow():
    layout = grid2x2()
    # flow from +x: whiskers on the +x side (1, 4) are upstream
    assert occlusion_map(0.0, layout) == {1: 0.0, 2: 100.0, 3: 100.0, 4: 0.0}
    # flow from +y: whiskers 3 and 4 upstream
    got = occlusion_map(90.0, layout)
    assert [got[i] for i in layout.ids] == pytest.approx([100.0, 100.0, 0.0, 0.0], abs=1e-9)


def test_single_whisker_never_occluded():
    layout = single_layout()
    for h in range(0, 360, 7):
        assert occlusion_for_whisker(h, 1, layout) == 0.0


def test_grid_diagonal_against_brute_force():
    layout = grid2x2()
    # flow from the w4 corner (+h, +h) toward w2
    heading = 45.0
    got = occlusion_map(heading, layout)
    brute = {}
    for t in layout.ids:
        vals = [shadow_overlap_oracle(heading, layout.position(t), layout.position(o), layout.diameter_d)
                for o in layout.ids if o != t]
        brute[t] = max(vals)
    for t in layout.ids:
        assert got[t] == pytest.approx(brute[t], abs=0.01)
    assert got[2] == pytest.approx(100.0)
    assert got[1] == 0.0 and got[3] == 0.0
    assert 35.0 * math.sqrt(2) / 2 == pytest.approx(24.7487, abs=1e-4)


def test_occlusion_table_matches_scalar():
    layout = grid2x2().transformed(17.0, (3.0, -4.0))
    headings = np.arange(0.0, 360.0, 2.5)
    table = occlusion_table(layout, headings)
    assert table.shape == (len(headings), 4)
    for k, h in enumerate(headings):
        np.testing.assert_allclose(table[k], [occlusion_for_whisker(h, i, layout) for i in layout.ids],
                                   atol=1e-9)


def test_layout_validation():
    with pytest.raises(ConfigurationError):
        ArrayLayout.from_positions([(0, 0), (10, 0)], 15.0, 10.0)
    with pytest.raises(ConfigurationError):
        ArrayLayout.from_positions([(0, 0)], 0.0, 35.0)
    with pytest.warns(LayoutWarning):
        pair_layout(25.0, 15.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        grid2x2()


def test_transformed_layout_keeps_ids_and_spacing():
    base = grid2x2()
    moved = base.transformed(30.0, (100.0, 5.0))
    assert moved.ids == base.ids
    d_base = np.linalg.norm(base.position(1) - base.position(3))
    d_moved = np.linalg.norm(moved.position(1) - moved.position(3))
    assert d_moved == pytest.approx(d_base)
