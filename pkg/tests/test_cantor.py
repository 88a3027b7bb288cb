import math

import pytest

from app.services.cantor import build_cantor, verify_cantor_properties
from app.services.errors import InputError


def test_small_B_is_degenerate():
    c = build_cantor(8)
    assert c.degenerate and c.ell == 0
    assert c.K_B == list(range(1, 9))
    report = verify_cantor_properties(c)
    assert not report.applicable
    assert set(report.properties.values()) == {None}
    assert report.card_KB == 8


def test_B_100_structure():
    c = build_cantor(100)
    assert c.delta == pytest.approx(math.log(2) / (2 * math.log(100)))
    assert c.ell == 1
    assert c.n_levels == [100, 47]
    assert c.d_levels == [6]
    assert c.intervals[1] == [(1, 47), (54, 100)]
    assert c.gaps == [[(48, 53)]]
    assert c.K_B == list(range(1, 48)) + list(range(54, 101))
    assert c.card_KB == 94
    assert c.K_k_j(1, 2) == list(range(54, 101))
    assert c.K_k_j(0, 1) == c.K_B


def test_B_100_passes_every_property():
    report = verify_cantor_properties(build_cantor(100))
    assert report.all_pass
    assert list(report.properties) == [f"prop{i}" for i in range(1, 7)]


def test_build_is_deterministic():
    assert build_cantor(3000) == build_cantor(3000)


def test_tampered_structure_fails_interval_property():
    c = build_cantor(100)
    shifted = c.model_copy(update={"intervals": [c.intervals[0], [(1, 47), (55, 101)]]})
    report = verify_cantor_properties(shifted)
    assert report.properties["prop3"] is False
    assert not report.all_pass


def test_block_accessor_checks_indices():
    c = build_cantor(1000)
    with pytest.raises(ValueError):
        c.block_intervals(c.ell + 1, 1)
    with pytest.raises(ValueError):
        c.block_intervals(1, 3)


@pytest.mark.parametrize("B", [1, 0, -5])
def test_B_must_be_at_least_two(B):
    with pytest.raises(InputError):
        build_cantor(B)


def test_every_B_up_to_5000():
    seen_levels = set()
    for B in range(2, 5001):
        c = build_cantor(B)
        report = verify_cantor_properties(c)
        if c.degenerate:
            assert c.card_KB == B
            continue
        seen_levels.add(c.ell)
        assert report.all_pass, (B, report.properties)
        assert 2 * report.card_KB >= B
        # K_k^j partition K_B at every level
        for k in range(c.ell + 1):
            blocks = [c.K_k_j(k, j) for j in range(1, 2 ** k + 1)]
            assert sum(blocks, []) == c.K_B
    assert len(seen_levels) > 2
