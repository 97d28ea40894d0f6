import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiberpiano.modes import (CapacityError, ComplexField, DetectorSpec, DimensionError, FiberSpec,
                              GeometryError, GridSpec, ResolutionError, build_mode_basis,
                              collection_amplitude, collection_vectors, detector_mode, mode_labels,
                              render_field, scan_vectors)


def test_capacity_of_desk_fiber_is_in_broad_interval():
    fiber = FiberSpec()
    assert 150 <= fiber.capacity <= 400
    assert fiber.capacity == int(fiber.v_number ** 2 / 8)


def test_truncation_at_capacity_is_allowed():
    fiber = FiberSpec(mode_truncation=FiberSpec().capacity)
    labels = mode_labels(fiber.mode_truncation)
    assert len(labels) == fiber.capacity


def test_truncation_30_gives_30_modes_fundamental_first(basis):
    assert basis.n_modes == 30
    assert basis.labels[0] == (0, 0)


def test_mode_group_ordering():
    labels = mode_labels(60)
    groups = [2 * p + abs(l) for p, l in labels]
    assert groups == sorted(groups)
    assert labels[:6] == [(0, 0), (0, 1), (0, -1), (1, 0), (0, 2), (0, -2)]
    assert len(set(labels)) == 60


def test_gram_is_identity_for_30_modes(basis):
    gram = basis.gram()
    assert np.max(np.abs(gram - np.eye(30))) < 1e-3


@pytest.mark.parametrize("truncation", [1, 10, 45, 60])
def test_gram_is_identity_up_to_60_modes(truncation):
    b = build_mode_basis(FiberSpec(mode_truncation=truncation))
    gram = b.gram()
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) < 1e-3
    assert np.max(np.abs(np.diag(gram) - 1)) < 1e-3


def test_profiles_are_read_only(basis):
    with pytest.raises(ValueError):
        basis.profiles[0, 0, 0] = 1.0


def test_fundamental_peaks_at_centre(basis):
    c = np.zeros(30, dtype=complex)
    c[0] = 1
    inten = render_field(c, basis).intensity
    iy, ix = np.unravel_index(np.argmax(inten), inten.shape)
    ax = basis.grid.axis
    assert abs(ax[ix]) <= basis.grid.spacing and abs(ax[iy]) <= basis.grid.spacing
    # Gaussian: radially symmetric and monotone along the axis
    row = inten[inten.shape[0] // 2]
    half = row[len(row) // 2:]
    assert np.all(np.diff(half) <= 1e-15)


def test_zero_coefficients_give_zero_field(basis):
    f = render_field(np.zeros(30), basis)
    assert not np.any(f.values)


@pytest.mark.parametrize("k", [1, 5, 17, 29])
def test_two_mode_superposition_has_unit_power(basis, k):
    c = np.zeros(30, dtype=complex)
    c[0] = c[k] = 1 / np.sqrt(2)
    assert abs(render_field(c, basis).power() - 1) < 1e-3


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_parseval_for_random_unit_coefficients(basis, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    c /= np.linalg.norm(c)
    assert abs(render_field(c, basis).power() - 1) < 1e-3


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       b=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_render_is_linear(basis, seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    y = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    lhs = render_field(a * x + b * y, basis).values
    rhs = a * render_field(x, basis).values + b * render_field(y, basis).values
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, abs(a) + abs(b)) * 10


def test_render_rejects_wrong_length(basis):
    with pytest.raises(DimensionError):
        render_field(np.zeros(29), basis)


def test_truncation_above_capacity_raises():
    with pytest.raises(CapacityError):
        build_mode_basis(FiberSpec(mode_truncation=FiberSpec().capacity + 1))


def test_coarse_grid_raises():
    with pytest.raises(ResolutionError):
        build_mode_basis(FiberSpec(), GridSpec(side=120, samples=128))  # 4.8 samples per waist
    with pytest.raises(ResolutionError):
        build_mode_basis(FiberSpec(), GridSpec(side=10, samples=256))


@pytest.mark.parametrize("kwargs", [dict(core_radius=0), dict(numerical_aperture=1.0),
                                    dict(wavelength=-1), dict(mode_truncation=0)])
def test_fiber_spec_validation(kwargs):
    with pytest.raises(ValueError):
        FiberSpec(**kwargs)


def test_detector_self_overlap_is_one(basis):
    det = DetectorSpec((3.0, -2.0), 25.0, "scanning", 12.5)
    g = detector_mode(det, basis.grid)
    assert abs(collection_amplitude(g, det) - 1) < 1e-6


def test_far_mode_is_not_collected(basis):
    det = DetectorSpec((0.0, 0.0), 25.0, "fixed", 12.5)
    far = det.moved(6 * det.waist, 0.0)
    assert abs(collection_amplitude(detector_mode(far, basis.grid), det)) < 1e-3


def test_zero_field_gives_zero_amplitude(basis):
    det = DetectorSpec((1.0, 1.0))
    zero = ComplexField(basis.grid, np.zeros((256, 256), dtype=complex))
    assert collection_amplitude(zero, det) == 0


def test_detector_outside_grid_raises(basis):
    det = DetectorSpec((70.0, 0.0))
    with pytest.raises(GeometryError):
        collection_vectors(basis, [det])
    with pytest.raises(GeometryError):
        collection_amplitude(detector_mode(DetectorSpec(), basis.grid), det)
    with pytest.raises(GeometryError):
        scan_vectors(basis, DetectorSpec(), [0.0, 61.0], [0.0])


@pytest.mark.parametrize("kwargs", [dict(collection_radius=0), dict(magnification=0),
                                    dict(role="camera")])
def test_detector_spec_validation(kwargs):
    with pytest.raises(ValueError):
        DetectorSpec(**kwargs)


def test_collection_rows_match_full_quadrature(basis, rng):
    det = DetectorSpec((2.5, -4.0), 25.0, "scanning", 12.5)
    c = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    row = collection_vectors(basis, [det])[0]
    direct = collection_amplitude(render_field(c, basis), det)
    assert abs(row @ c - direct) < 1e-12


def test_scan_vectors_match_collection_vectors(basis):
    template = DetectorSpec((0.0, 0.0), 25.0, "scanning", 12.5)
    xs = np.array([-3.0, 0.0, 4.5])
    ys = np.array([1.0, -2.0])
    grid_rows = scan_vectors(basis, template, xs, ys)
    assert grid_rows.shape == (2, 3, 30)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            ref = collection_vectors(basis, [template.moved(x, y)])[0]
            assert np.allclose(grid_rows[i, j], ref, atol=1e-14)
