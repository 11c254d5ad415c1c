import numpy as np
import pytest

from homoglab import coeff


def test_validate_identity(identity_field):
    rep = coeff.validate(identity_field, samples=8)
    assert rep.rayleigh_min == pytest.approx(1.0, abs=1e-12)
    assert rep.rayleigh_max == pytest.approx(1.0, abs=1e-12)
    assert rep.periodicity_residual == 0.0
    assert rep.mu_measured == pytest.approx(1.0, abs=1e-12)


def test_validate_layered_range(layered_field):
    # a(y) = 2 + sin(2 pi y1) has range [1, 3]; the sample lattice comes
    # within O(1/samples) of the extrema
    rep = coeff.validate(layered_field, samples=64)
    assert rep.rayleigh_min == pytest.approx(1.0, abs=2e-2)
    assert rep.rayleigh_max == pytest.approx(3.0, abs=2e-2)
    assert rep.periodicity_residual == 0.0
    assert np.isfinite(rep.holder_quotient)


def test_validate_checkerboard_against_dense_sampling():
    field = coeff.builtin("smoothed-checkerboard", contrast=10.0)
    rep = coeff.validate(field, samples=64)
    # independent dense-sampling oracle for the scalar range
    t = (np.arange(400) + 0.5) / 400
    yy = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    a = field(yy)[:, 0, 0, 0, 0]
    assert a.min() >= 1.0 - 1e-9 and a.max() <= 10.0 + 1e-9
    assert rep.rayleigh_min >= a.min() - 1e-9
    assert rep.rayleigh_max <= a.max() + 1e-9
    assert 1.0 / 10.0 <= rep.mu_measured <= 10.0
    assert np.isfinite(rep.holder_quotient)


def test_validate_trigonometric_mu():
    field = coeff.builtin("trigonometric")
    rep = coeff.validate(field, samples=64)
    # dense-sampling oracle: range of 2 + 0.5 cos cos is [1.5, 2.5]
    assert rep.rayleigh_min >= 2.0 / 3.0
    assert rep.rayleigh_min == pytest.approx(1.5, abs=2e-2)
    assert rep.rayleigh_max == pytest.approx(2.5, abs=2e-2)


def test_validate_rejects_nonelliptic():
    bad = coeff.CoefficientField(
        coeff._isotropic(lambda pts: np.sin(2 * np.pi * pts[:, 0]), 2, 1))
    with pytest.raises(coeff.EllipticityError):
        coeff.validate(bad, samples=16)


def test_validate_rejects_nonfinite():
    bad = coeff.CoefficientField(
        coeff._isotropic(lambda pts: 1.0 / (pts[:, 0] - pts[:, 0]), 2, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(coeff.CoefficientError):
            coeff.validate(bad, samples=4)


def test_rescale_constant(identity_field):
    sc = coeff.rescale(identity_field, 1 / 8)
    v = sc(np.array([0.3, 0.7]))
    assert np.allclose(v[:, :, 0, 0], np.eye(2))


def test_rescale_layered_substitution(layered_field):
    sc = coeff.rescale(layered_field, 0.25)
    # x = (1/8, 0) -> y = (1/2, 0), a = 2 + sin(pi) = 2
    assert sc(np.array([0.125, 0.0]))[0, 0, 0, 0] == pytest.approx(2.0, abs=1e-14)


def test_rescale_epsilon_one_is_identity(layered_field):
    pts = np.random.default_rng(0).random((50, 2))
    sc = coeff.rescale(layered_field, 1.0)
    assert np.array_equal(sc(pts), layered_field(pts))


def test_rescale_composition(layered_field):
    pts = np.random.default_rng(1).random((50, 2))
    once = coeff.rescale(layered_field, 0.125)
    via_one = coeff.rescale(coeff.rescale(layered_field, 1.0).base, 0.125)
    assert np.array_equal(once(pts), via_one(pts))


def test_rescale_rejects_nonpositive(layered_field):
    with pytest.raises(coeff.CoefficientError):
        coeff.rescale(layered_field, 0.0)
    with pytest.raises(coeff.CoefficientError):
        coeff.rescale(layered_field, -1.0)


@pytest.mark.parametrize("tag,params", [
    ("constant", {}),
    ("layered", {}),
    ("layered", {"wavevector": (1, 1)}),
    ("trigonometric", {}),
    ("smoothed-checkerboard", {}),
])
def test_periodicity_exact_on_dyadic_points(tag, params):
    # 1e4 random dyadic points and integer shifts reproduce values bitwise
    field = coeff.builtin(tag, **params)
    rng = np.random.default_rng(3)
    y = rng.integers(0, 1024, size=(10000, 2)) / 1024.0
    z = rng.integers(-5, 6, size=(10000, 2)).astype(float)
    assert np.abs(field(y + z) - field(y)).max() == 0.0


def test_symmetry_flag_transpose(layered_field):
    rng = np.random.default_rng(4)
    pts = rng.random((200, 2))
    vals = layered_field(pts)
    assert layered_field.symmetric
    assert np.array_equal(vals, vals.transpose(0, 2, 1, 4, 3))


def test_adjoint_of_nonsymmetric_constant():
    A = np.array([[2.0, 0.5], [0.0, 1.0]])
    field = coeff.builtin("constant", value=A)
    assert not field.symmetric
    star = field.adjoint()
    pts = np.random.default_rng(5).random((10, 2))
    assert np.allclose(star(pts)[:, :, :, 0, 0], A.T)


def test_builtin_rejects_bad_parameters():
    with pytest.raises(coeff.EllipticityError):
        coeff.builtin("layered", base=1.0, amp=2.0)
    with pytest.raises(coeff.EllipticityError):
        coeff.builtin("smoothed-checkerboard", contrast=-1.0)
    with pytest.raises(coeff.CoefficientError):
        coeff.builtin("smoothed-checkerboard", width=0.0)
    with pytest.raises(coeff.CoefficientError):
        coeff.builtin("nope")


def test_expression_field_matches_layered(layered_field):
    field = coeff.builtin("user", expr="2 + sin(2*pi*y1)")
    pts = np.random.default_rng(6).random((100, 2))
    assert np.allclose(field(pts), layered_field(pts), atol=1e-14)


def test_expression_rejects_unsafe_syntax():
    for expr in ("__import__('os')", "y3", "(lambda: 1)()", "y1.real", "'a'"):
        with pytest.raises(coeff.CoefficientError):
            coeff.from_expression(expr)


def test_declared_mu_passes_validation():
    for tag in ("layered", "trigonometric", "smoothed-checkerboard"):
        field = coeff.builtin(tag)
        rep = coeff.validate(field, samples=32)
        assert rep.mu_measured >= field.mu - 1e-9
