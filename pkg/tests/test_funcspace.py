import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from funcreg.errors import IncompatibleGridsError
from funcreg.funcspace import (
    BasisSet,
    Curve,
    FunctionalSample,
    Grid,
    fourier_basis,
    inner_product,
    make_uniform_grid,
    norm,
    project_coeffs,
    project_sample,
    read_curves_csv,
    reconstruct,
    write_curves_csv,
)


def curve(grid, f):
    return Curve(grid, f(grid.points))


class TestGrid:
    def test_two_points(self):
        g = make_uniform_grid(2)
        np.testing.assert_array_equal(g.points, [0, 1])
        np.testing.assert_array_equal(g.weights, [0.5, 0.5])

    def test_three_points(self):
        g = make_uniform_grid(3)
        np.testing.assert_allclose(g.points, [0, 0.5, 1])
        np.testing.assert_allclose(g.weights, [0.25, 0.5, 0.25])

    def test_weight_sum(self):
        assert abs(make_uniform_grid(101).weights.sum() - 1.0) <= 1e-12

    @pytest.mark.parametrize("M", [1, 0, -3, 2.5])
    def test_bad_size(self, M):
        with pytest.raises(ValueError):
            make_uniform_grid(M)

    @pytest.mark.parametrize("pts", [[0.0, 0.0, 1.0], [0.5, 0.2], [-0.1, 1.0], [0.0, 1.2], [0.3]])
    def test_invalid_points(self, pts):
        with pytest.raises(ValueError):
            Grid(np.array(pts))

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 1.0]), np.array([0.5, 0.6]))

    def test_immutable(self):
        g = make_uniform_grid(5)
        with pytest.raises(ValueError):
            g.points[0] = 3.0

    def test_roundtrip(self):
        g = Grid(np.array([0.0, 0.1, 0.7]))
        assert Grid.from_dict(g.to_dict()) == g


class TestInnerProduct:
    def test_constant(self):
        g = make_uniform_grid(101)
        one = curve(g, np.ones_like)
        assert abs(inner_product(one, one) - 1.0) <= 1e-12

    def test_fourier_orthogonal(self):
        b = fourier_basis(3, make_uniform_grid(201))
        assert abs(inner_product(b[1], b[2])) <= 1e-8

    def test_t_squared(self):
        g = make_uniform_grid(201)
        t = curve(g, lambda s: s)
        # trapezoid error for t^2 is h^2/6
        assert abs(inner_product(t, t) - 1 / 3) <= 1e-4
        assert abs(inner_product(t, t) - (1 / 3 + (1 / 200) ** 2 / 6)) <= 1e-12

    def test_grid_mismatch(self):
        a = Curve(make_uniform_grid(5), np.ones(5))
        b = Curve(Grid(np.array([0, 0.1, 0.5, 0.9, 1.0])), np.ones(5))
        with pytest.raises(IncompatibleGridsError):
            inner_product(a, b)

    def test_equal_grids_accepted(self):
        a = Curve(make_uniform_grid(5), np.ones(5))
        b = Curve(make_uniform_grid(5), np.ones(5))
        assert inner_product(a, b) == pytest.approx(1.0)

    @given(st.lists(st.floats(-10, 10), min_size=3 * 7, max_size=3 * 7),
           st.floats(-5, 5), st.floats(-5, 5))
    def test_symmetric_bilinear(self, vals, s, r):
        g = make_uniform_grid(7)
        f, h, k = (Curve(g, np.array(vals[i * 7:(i + 1) * 7])) for i in range(3))
        assert inner_product(f, h) == pytest.approx(inner_product(h, f), abs=1e-12)
        lhs = inner_product(s * f + r * h, k)
        rhs = s * inner_product(f, k) + r * inner_product(h, k)
        assert lhs == pytest.approx(rhs, abs=1e-9)
        assert norm(f) ** 2 == pytest.approx(inner_product(f, f), rel=1e-12, abs=1e-12)


class TestNorm:
    def test_zero(self):
        assert norm(Curve(make_uniform_grid(11), np.zeros(11))) == 0.0

    def test_unit_basis(self):
        assert abs(norm(fourier_basis(1, make_uniform_grid(101))[0]) - 1) <= 1e-8

    def test_sine(self):
        g = make_uniform_grid(201)
        f = curve(g, lambda t: np.sqrt(2) * np.sin(2 * np.pi * t))
        assert abs(norm(f) - 1) <= 1e-6


class TestFourier:
    def test_constant(self):
        b = fourier_basis(1, make_uniform_grid(11))
        np.testing.assert_array_equal(b.functions, np.ones((1, 11)))

    def test_hand_value(self):
        g = make_uniform_grid(5)  # t = 0.25 is the second point
        assert fourier_basis(2, g).functions[1, 1] == pytest.approx(np.sqrt(2), abs=1e-12)

    def test_order(self):
        g = make_uniform_grid(9)
        f = fourier_basis(5, g).functions
        t = g.points
        np.testing.assert_allclose(f[2], np.sqrt(2) * np.cos(2 * np.pi * t), atol=1e-12)
        np.testing.assert_allclose(f[3], np.sqrt(2) * np.sin(4 * np.pi * t), atol=1e-12)

    def test_orthonormal(self):
        b = fourier_basis(8, make_uniform_grid(401))
        assert np.max(np.abs(b.gram() - np.eye(8))) < 1e-8

    @pytest.mark.parametrize("J", [0, -1, 1.5])
    def test_bad_J(self, J):
        with pytest.raises(ValueError):
            fourier_basis(J, make_uniform_grid(11))


class TestProjection:
    def test_unit_vector(self):
        b = fourier_basis(4, make_uniform_grid(101))
        np.testing.assert_allclose(project_coeffs(b[1], b), [0, 1, 0, 0], atol=1e-8)

    def test_linearity(self):
        b = fourier_basis(4, make_uniform_grid(101))
        x = 2 * b[0] + 3 * b[2]
        np.testing.assert_allclose(project_coeffs(x, b), [2, 0, 3, 0], atol=1e-8)

    def test_identity_coefficients(self):
        g = make_uniform_grid(401)
        b = fourier_basis(3, g)
        # oracle: analytic coefficients of t -> t
        expected = [0.5, -1 / (np.sqrt(2) * np.pi), 0.0]
        np.testing.assert_allclose(project_coeffs(curve(g, lambda t: t), b), expected, atol=1e-4)

    def test_reconstruct(self):
        b = fourier_basis(3, make_uniform_grid(21))
        np.testing.assert_allclose(reconstruct([1, 0, 0], b).values, b[0].values)
        assert reconstruct([1, 1], fourier_basis(2, make_uniform_grid(21))).values[0] == 1.0
        with pytest.raises(ValueError):
            reconstruct([1, 2], b)

    def test_roundtrip_on_span(self, rng):
        b = fourier_basis(6, make_uniform_grid(101))
        c = rng.normal(size=6)
        np.testing.assert_allclose(project_coeffs(reconstruct(c, b), b), c, atol=1e-8)
        x = reconstruct(c, b)
        np.testing.assert_allclose(reconstruct(project_coeffs(x, b), b).values, x.values,
                                   atol=1e-8)

    def test_parseval_monotone(self, rng):
        g = make_uniform_grid(101)
        x = Curve(g, rng.normal(size=101))
        b = fourier_basis(10, g)
        norms = [norm(reconstruct(project_coeffs(x, b.truncate(J)), b.truncate(J)))
                 for J in range(1, 11)]
        assert all(n2 >= n1 - 1e-12 for n1, n2 in zip(norms, norms[1:]))
        assert norms[-1] <= norm(x) + 1e-8

    def test_sample_centering(self, rng):
        g = make_uniform_grid(31)
        s = FunctionalSample(g, rng.normal(size=(5, 31)))
        b = fourier_basis(3, g)
        np.testing.assert_allclose(project_sample(s, b, s.mean_curve()).mean(axis=0), 0,
                                   atol=1e-12)


class TestBasisSet:
    def test_reorthonormalizes(self, rng):
        g = make_uniform_grid(51)
        f = fourier_basis(3, g).functions + 1e-6 * rng.normal(size=(3, 51))
        b = BasisSet(g, f)
        assert np.max(np.abs(b.gram() - np.eye(3))) < 1e-8

    def test_dependent_rows(self):
        g = make_uniform_grid(11)
        with pytest.raises(ValueError):
            BasisSet(g, np.ones((2, 11)))

    def test_truncate(self):
        b = fourier_basis(4, make_uniform_grid(11))
        assert b.truncate(2).J == 2
        with pytest.raises(ValueError):
            b.truncate(5)


class TestCurves:
    def test_nonfinite(self):
        with pytest.raises(ValueError):
            Curve(make_uniform_grid(3), [0, np.nan, 1])
        with pytest.raises(ValueError):
            FunctionalSample(make_uniform_grid(3), [[0, np.inf, 1]])

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            Curve(make_uniform_grid(3), [0, 1])

    def test_csv_roundtrip(self, tmp_path, rng):
        g = Grid(np.array([0.0, 0.25, 0.6, 1.0]))
        s = FunctionalSample(g, rng.normal(size=(3, 4)))
        write_curves_csv(tmp_path / "c.csv", ["a", "b", "c"], s)
        ids, back = read_curves_csv(tmp_path / "c.csv")
        assert ids == ["a", "b", "c"]
        assert back.grid == g
        np.testing.assert_array_equal(back.data, s.data)

    def test_csv_errors(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("t,0,1\na,1\n")
        with pytest.raises(ValueError):
            read_curves_csv(p)
        p.write_text("t,0,1\na,1,2\na,3,4\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_curves_csv(p)
