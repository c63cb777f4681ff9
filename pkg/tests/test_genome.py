import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vawtevo.genome import (
    XY_MAX,
    XY_MIN,
    Z_MAX,
    Z_MIN,
    GenomeError,
    Genotype,
    Mode,
    crossover,
    format_genotype,
    make_rng,
    mutate,
    parse_genotype,
    random_genotype,
    tournament_select,
    tournament_winner,
)

xy_alleles = st.lists(st.integers(XY_MIN, XY_MAX), min_size=10, max_size=10).map(tuple)
z_alleles = st.lists(st.integers(Z_MIN, Z_MAX), min_size=5, max_size=5).map(tuple)


@st.composite
def genotypes(draw):
    mode = draw(st.sampled_from(list(Mode)))
    xy = draw(xy_alleles)
    z = draw(z_alleles) if mode is not Mode.FLAT else None
    rot = draw(st.booleans()) if mode is Mode.ARRAY else None
    return Genotype(xy, z, rot)


def in_range(g: Genotype) -> bool:
    ok = len(g.xy) == 10 and all(XY_MIN <= a <= XY_MAX for a in g.xy)
    if g.z is not None:
        ok &= len(g.z) == 5 and all(Z_MIN <= a <= Z_MAX for a in g.z)
    return ok


# --- validation and text format -------------------------------------------


def test_rejects_out_of_range_and_wrong_length():
    with pytest.raises(GenomeError):
        Genotype((0,) * 10)
    with pytest.raises(GenomeError):
        Genotype((43,) + (1,) * 9)
    with pytest.raises(GenomeError):
        Genotype((1,) * 9)
    with pytest.raises(GenomeError):
        Genotype((1,) * 10, (43, 0, 0, 0, 0))
    with pytest.raises(GenomeError):
        Genotype((1,) * 10, None, True)  # rotation only in array mode


def test_modes():
    assert Genotype((1,) * 10).mode is Mode.FLAT
    assert Genotype((1,) * 10, (0,) * 5).mode is Mode.Z_VARYING
    assert Genotype((1,) * 10, (0,) * 5, False).mode is Mode.ARRAY


def test_text_format_example():
    g = parse_genotype("xy=2,2,3,4,5,8,13,20,34,40;z=2,-5,10,3,-2;rot=0")
    assert g.xy == (2, 2, 3, 4, 5, 8, 13, 20, 34, 40)
    assert g.z == (2, -5, 10, 3, -2)
    assert g.rotation is False
    assert parse_genotype("xy=2,2,3,4,5,8,13,20,34,40").z is None


def test_parse_error_reports_column():
    text = "xy=5,8,43,4,5,6,7,8,9,10"
    with pytest.raises(GenomeError) as info:
        parse_genotype(text)
    assert info.value.column == text.index("43")
    assert "column" in str(info.value)


@given(genotypes())
def test_format_parse_round_trip(g):
    assert parse_genotype(format_genotype(g)) == g


# --- random generation ----------------------------------------------------


@pytest.mark.parametrize("mode", list(Mode))
def test_random_genotype_fields_and_ranges(mode):
    rng = make_rng(5)
    for _ in range(200):
        g = random_genotype(rng, mode)
        assert in_range(g)
        assert (g.z is None) == (mode is Mode.FLAT)
        assert (g.rotation is None) == (mode is not Mode.ARRAY)


def test_same_seed_same_genotypes():
    a = [random_genotype(make_rng(9), "z-varying") for _ in range(3)]
    b = [random_genotype(make_rng(9), "z-varying") for _ in range(3)]
    assert a == b


def test_rng_stream_is_pcg64():
    rng = make_rng(123)
    assert isinstance(rng.bit_generator, np.random.PCG64)
    assert rng.integers(0, 2**32) == np.random.Generator(np.random.PCG64(123)).integers(0, 2**32)


# --- mutation -------------------------------------------------------------


@given(genotypes(), st.integers(0, 2**32 - 1))
def test_rate_zero_is_identity(g, seed):
    assert mutate(g, make_rng(seed), rate=0.0) == g


def test_clamp_at_top():
    g = Genotype((42,) * 10)
    rng = make_rng(1)
    for _ in range(200):
        m = mutate(g, rng, rate=1.0)
        for before, after in zip(g.xy, m.xy):
            assert after <= 42
            assert after == 42 or after < before


def test_changed_fraction():
    # mid-range alleles never hit a bound, so every drawn step changes the allele
    g = Genotype((21,) * 10)
    rng = make_rng(2024)
    changed = sum(sum(a != b for a, b in zip(g.xy, mutate(g, rng).xy)) for _ in range(10_000))
    frac = changed / 100_000
    assert abs(frac - 0.25 * 20 / 21) < 0.02
    assert abs(frac - 0.25) < 0.01


def test_rotation_bit_flips_at_rate():
    g = Genotype((21,) * 10, (0,) * 5, False)
    rng = make_rng(3)
    flips = sum(mutate(g, rng).rotation for _ in range(4000))
    assert abs(flips / 4000 - 0.25) < 0.03


@settings(max_examples=200)
@given(genotypes(), st.integers(0, 2**32 - 1), st.floats(0, 1), st.integers(1, 60))
def test_mutation_stays_in_range(g, seed, rate, step):
    m = mutate(g, make_rng(seed), rate, step)
    assert in_range(m)
    assert m.mode is g.mode


@given(genotypes(), st.integers(0, 2**32 - 1))
def test_rate_one_changes_or_clamps(g, seed):
    m = mutate(g, make_rng(seed), rate=1.0, max_step=10)
    pairs = list(zip(g.xy, m.xy, [XY_MIN] * 10, [XY_MAX] * 10))
    if g.z is not None:
        pairs += list(zip(g.z, m.z, [Z_MIN] * 5, [Z_MAX] * 5))
    for before, after, lo, hi in pairs:
        assert after != before or before in (lo, hi)
    if g.rotation is not None:
        assert m.rotation != g.rotation


def test_crossover_default_is_noop():
    a, b = Genotype((1,) * 10), Genotype((42,) * 10)
    assert crossover(a, b, make_rng(0)) == a


# --- tournaments ----------------------------------------------------------


def test_tournament_single_member():
    rng = make_rng(0)
    for k in (1, 3, 10):
        assert tournament_select([7.0], rng, k) == 0
        assert tournament_select([7.0], rng, k, "worst") == 0


def test_tournament_full_coverage_picks_argmax():
    fits = [3.0, 9.0, 1.0, 4.0, 2.0]
    assert tournament_winner(fits, range(5), "best") == 1
    assert tournament_winner(fits, range(5), "worst") == 2
    # large k makes covering every member overwhelmingly likely
    rng = make_rng(4)
    assert all(tournament_select(fits, rng, 200) == 1 for _ in range(20))


def test_tournament_worst_example():
    assert tournament_winner([3, 1, 2], [0, 1, 2], "worst") == 1


def test_tournament_ties_go_to_lowest_index():
    assert tournament_winner([5, 5, 5], [2, 0, 1], "best") == 0
    assert tournament_winner([5, 1, 1], [2, 1], "worst") == 1


def test_tournament_errors():
    with pytest.raises(ValueError):
        tournament_select([], make_rng(0))
    with pytest.raises(ValueError):
        tournament_select([1.0], make_rng(0), k=0)
    with pytest.raises(ValueError):
        tournament_winner([1.0], [0], "middling")


@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=30), st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_tournament_valid_and_deterministic(fits, seed, k):
    i = tournament_select(fits, make_rng(seed), k)
    assert 0 <= i < len(fits)
    assert tournament_select(fits, make_rng(seed), k) == i
