import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from grftails import fieldsim
from grftails.asymptotics import b_for_probability
from grftails.fieldsim import (
    FieldGrid,
    FieldSampler,
    IllConditionedError,
    crude_mc,
    grid_for_domain,
    importance_sampling_mc,
    integral_functional,
    panel_sum_vs_union_mc,
    resolution_points,
    sample_field,
    sample_fields,
    sup_mc,
    write_samples_csv,
)
from grftails.kernel import rat_quad, sq_exp
from grftails.partition import build_cover
from grftails.streams import Stream
from oracles import three_node_tail

SQ1 = sq_exp(1)


def within(a, b, se, k=3.0):
    return abs(a - b) <= k * se


# -- grids ---------------------------------------------------------------------


@settings(max_examples=30)
@given(
    lo=st.floats(-5, 5),
    widths=st.lists(st.floats(0.1, 3), min_size=1, max_size=3),
    m=st.integers(2, 9),
)
def test_weights_sum_to_measure(lo, widths, m):
    box = [[lo, lo + w] for w in widths]
    grid = FieldGrid.box(box, m)
    assert grid.size == m ** len(widths)
    assert grid.measure == pytest.approx(np.prod(widths), rel=1e-12)
    assert np.all(grid.nodes >= np.array(box)[:, 0] - 1e-12)
    assert np.all(grid.nodes <= np.array(box)[:, 1] + 1e-12)


def test_union_grid_pools_shared_nodes():
    grid = grid_for_domain([[[0, 1]], [[1, 3]]], 5)
    assert grid.size == 9
    assert grid.measure == pytest.approx(3.0)
    with pytest.raises(ValueError):
        grid_for_domain([[[0, 2]], [[1, 3]]], 5)


def test_resolution_rule():
    # bump width 1/sqrt(u) spans at least 8 spacings
    for u in (4.0, 10.0, 30.0):
        m = resolution_points(u, 1.0)
        assert (m - 1) / math.sqrt(u) >= 8


# -- sampling ------------------------------------------------------------------


def test_single_node_is_standard_normal():
    grid = FieldGrid.from_nodes([[0.3]], [1.0])
    f = sample_fields(SQ1, grid, 100_000, Stream(11))
    assert abs(f.var() - 1.0) < 1e-2
    assert abs(f.mean()) < 4 / math.sqrt(1e5)


def test_two_node_correlation():
    grid = FieldGrid.from_nodes([[0.0], [1.0]], [0.5, 0.5])
    n = 100_000
    f = sample_fields(SQ1, grid, n, Stream(12))
    r = np.corrcoef(f.T)[0, 1]
    rho = math.exp(-0.5)
    assert within(r, rho, (1 - rho**2) / math.sqrt(n))


def test_same_stream_is_bit_identical():
    grid = FieldGrid.box([[0, 1]], 16)
    a = sample_field(SQ1, grid, Stream(5).child(3))
    b = sample_field(SQ1, grid, Stream(5).child(3))
    np.testing.assert_array_equal(a.values, b.values)
    assert a.seed_path == "5/3"
    c = sample_field(SQ1, grid, Stream(5).child(4))
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("workers", [2, 8])
def test_worker_count_does_not_change_samples(workers):
    grid = FieldGrid.box([[0, 1], [0, 1]], 5)
    model = rat_quad(6.0, 2)
    one = sample_fields(model, grid, 25_001, Stream(9), workers=1)
    many = sample_fields(model, grid, 25_001, Stream(9), workers=workers)
    np.testing.assert_array_equal(one, many)


def test_ill_conditioned_gram(monkeypatch):
    grid = FieldGrid.from_nodes([[0.0], [0.0], [1.0]], [1.0, 1.0, 1.0])
    sampler = FieldSampler(SQ1, grid)  # duplicate nodes: rescued by jitter
    assert sampler.jitter > 0
    monkeypatch.setattr(fieldsim, "JITTERS", (0.0,))
    with pytest.raises(IllConditionedError):
        FieldSampler(SQ1, grid)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        FieldSampler(sq_exp(2), FieldGrid.box([[0, 1]], 4))


# -- the integral functional ------------------------------------------------------


def test_integral_of_constant_fields():
    grid = FieldGrid.box([[0, 2], [0, 0.5]], 7)
    zero = np.zeros(grid.size)
    assert integral_functional(zero, grid, 1.3) == pytest.approx(1.0, rel=1e-14)
    assert integral_functional(zero + 0.7, grid, 2.0) == pytest.approx(math.exp(1.4), rel=1e-13)


def test_log_integral_survives_huge_values():
    grid = FieldGrid.box([[0, 1]], 5)
    log_i = FieldSampler(SQ1, grid).log_integral(np.full(5, 400.0), 2.0)
    assert log_i == pytest.approx(800.0)


def test_refinement_consistency():
    # frozen sample on the fine grid; the coarse grid uses every other node
    m = 33
    fine = FieldGrid.box([[0, 1]], 2 * m - 1)
    coarse = FieldGrid.box([[0, 1]], m)
    f = sample_field(SQ1, fine, Stream(21)).values
    g = np.exp(f)
    i_fine = integral_functional(f, fine, 1.0)
    i_coarse = integral_functional(f[::2], coarse, 1.0)
    h = 1.0 / (m - 1)
    g2 = np.abs(np.diff(g, 2)).max() / (h / 2) ** 2
    bound = h**2 / 12 * g2  # trapezoid error bound for the coarse rule
    assert abs(i_fine - i_coarse) <= 1.25 * bound


# -- estimators ------------------------------------------------------------------


def test_b_zero_gives_one():
    grid = FieldGrid.box([[0, 1]], 8)
    assert crude_mc(SQ1, grid, 1.0, 0.0, 1000, Stream(1)).estimate == 1.0
    assert importance_sampling_mc(SQ1, grid, 1.0, 0.0, 1000, Stream(1)).estimate == 1.0


def test_astronomical_b_gives_zero():
    grid = FieldGrid.box([[0, 1]], 4)
    assert crude_mc(SQ1, grid, 1.0, 10 * math.exp(10), 100, Stream(2)).estimate == 0.0


def test_crude_agrees_with_is_at_moderate_probability():
    grid = grid_for_domain([[0, 1]], 24)
    b = b_for_probability(SQ1, 1.0, 1.0, 0.05)
    crude = crude_mc(SQ1, grid, 1.0, b, 20_000, Stream(3))
    imp = importance_sampling_mc(SQ1, grid, 1.0, b, 20_000, Stream(4))
    assert within(crude.estimate, imp.estimate, math.hypot(crude.std_error, imp.std_error))
    assert imp.ess <= imp.n_samples


def test_is_relative_error_at_1e4():
    b = b_for_probability(SQ1, 1.0, 1.0, 1e-4)
    u = fieldsim.threshold_level(SQ1, 1.0, b)
    grid = grid_for_domain([[0, 1]], resolution_points(u, 1.0))
    est = importance_sampling_mc(SQ1, grid, 1.0, b, 100_000, Stream(5))
    assert est.relative_error < 0.05
    assert not est.warnings


@pytest.mark.parametrize("target", [0.2, 1e-3])
def test_three_node_oracle(target):
    grid = FieldGrid.box([[0, 1]], 3)
    sampler = FieldSampler(SQ1, grid)
    K, w = sampler.gram, grid.cell_weights
    # choose b with the requested exact probability
    b = _b_for_exact(K, w, target)
    exact = three_node_tail(K, w, 1.0, b)
    assert exact == pytest.approx(target, rel=1e-3)
    crude = crude_mc(SQ1, grid, 1.0, b, 100_000, Stream(6), sampler=sampler)
    imp = importance_sampling_mc(SQ1, grid, 1.0, b, 10_000, Stream(7), sampler=sampler)
    assert within(crude.estimate, exact, crude.std_error)
    assert within(imp.estimate, exact, imp.std_error)


def _b_for_exact(K, w, target):
    from scipy import optimize

    g = lambda lb: math.log(three_node_tail(K, w, 1.0, math.exp(lb))) - math.log(target)  # noqa: E731
    return math.exp(optimize.brentq(g, -1.0, 6.0, xtol=1e-6))


def test_sup_mc_limits():
    grid = FieldGrid.box([[0, 1]], 10)
    assert sup_mc(SQ1, grid, -50.0, 1000, Stream(8)).estimate == 1.0
    node = FieldGrid.from_nodes([[0.0]], [1.0])
    for method in ("crude", "is"):
        est = sup_mc(SQ1, node, 2.0, 40_000, Stream(9), method=method)
        assert within(est.estimate, stats.norm.sf(2.0), est.std_error)
    with pytest.raises(ValueError):
        sup_mc(SQ1, node, 2.0, 10, Stream(9), method="magic")


def test_sup_crude_agrees_with_is():
    grid = FieldGrid.box([[0, 2]], 33)
    crude = sup_mc(SQ1, grid, 2.5, 50_000, Stream(10), method="crude")
    imp = sup_mc(SQ1, grid, 2.5, 20_000, Stream(11))
    assert within(crude.estimate, imp.estimate, math.hypot(crude.std_error, imp.std_error))


def test_borel_tis_short():
    grid = FieldGrid.box([[0, 1]], 32)
    f = sample_fields(SQ1, grid, 20_000, Stream(12))
    sup = f.max(axis=1)
    dev = sup - sup.mean()
    for x in (1.0, 2.0):
        p = np.mean(dev >= x)
        assert p <= math.exp(-x * x / 2) + 3 * math.sqrt(p * (1 - p) / len(dev))


def test_panels_single_panel_same_estimate():
    b = b_for_probability(SQ1, 1.0, 1.0, 1e-3)
    u = fieldsim.threshold_level(SQ1, 1.0, b)
    cover = build_cover([[0, 1]], u)
    assert len(cover.outer_indices) == 1
    union, total = panel_sum_vs_union_mc(SQ1, cover, 1.0, b, 5_000, Stream(13))
    assert union == total


def test_panels_well_separated_bonferroni():
    # two half-unit panels 10 apart, so the panel fields are nearly independent.
    # {I(A u B) > b} contains {I(A) > b} u {I(B) > b}, hence sum <= union + pairwise;
    # the reverse direction only emerges as b grows (one big jump)
    ratios = []
    for i, target in enumerate((1e-2, 1e-4)):
        b = b_for_probability(SQ1, 0.5, 1.0, target)
        u = fieldsim.threshold_level(SQ1, 1.0, b)
        kappa = 0.25 / u ** (0.1 - 0.5)  # makes 2 eps = 0.5
        cover = build_cover([[[0, 0.5]], [[10, 10.5]]], u, kappa=kappa, delta=0.1)
        assert len(cover.outer_indices) == 2
        union, total = panel_sum_vs_union_mc(SQ1, cover, 1.0, b, 40_000, Stream(14).child(i))
        ratio = total.estimate / union.estimate
        se = ratio * math.hypot(union.relative_error, total.relative_error)
        pairwise = (total.estimate / 2) ** 2
        assert ratio <= 1 + pairwise / union.estimate + 3 * se
        ratios.append(ratio)
    assert abs(ratios[1] - 1) < abs(ratios[0] - 1)


def test_samples_csv_format():
    grid = FieldGrid.box([[0, 1], [0, 1]], 2)
    s = sample_fields(sq_exp(2), grid, 2, Stream(15))
    buf = io.StringIO()
    write_samples_csv(buf, grid, s)
    text = buf.getvalue()
    lines = text.split("\n")
    assert lines[0] == "sample,t1,t2,value"
    assert len(lines) == 1 + 2 * 4 + 1 and lines[-1] == ""
    assert "\r" not in text
