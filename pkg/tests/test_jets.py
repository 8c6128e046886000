"""Jet algebra: arithmetic, composition, derivative extraction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derivnet import jets
from derivnet.jets import Jet, JetSpec

from helpers import FD_STEPS, central_derivative, rel_err


def uni(degree, coeffs):
    return Jet(JetSpec(1, degree), np.asarray(coeffs, dtype=np.float64))


def biv(degree, coeffs):
    return Jet(JetSpec(2, degree), np.asarray(coeffs, dtype=np.float64))


class TestJetSpec:
    def test_coefficient_counts(self):
        assert JetSpec(1, 4).n_coeffs == 5
        assert JetSpec(2, 6).n_coeffs == 28
        assert JetSpec(2, 0).n_coeffs == 1

    @pytest.mark.parametrize("arity,degree", [(0, 2), (3, 2), (1, -1), (1, 7)])
    def test_invalid_specs_rejected(self, arity, degree):
        with pytest.raises(ValueError):
            JetSpec(arity, degree)

    def test_graded_lexicographic_ordering(self):
        idx = JetSpec(2, 2).indices()
        assert idx == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))

    def test_truncation_is_prefix(self):
        # graded order means a lower-degree triangle is a prefix slice
        full = JetSpec(2, 6).indices()
        assert full[: JetSpec(2, 3).n_coeffs] == JetSpec(2, 3).indices()


class TestAdd:
    def test_coefficientwise_sum(self):
        a, b = uni(1, [1, 2]), uni(1, [3, 4])
        assert jets.jet_add(a, b).coeffs.tolist() == [4, 6]

    def test_zero_identity(self):
        a = uni(2, [1.5, -2.0, 0.25])
        z = jets.jet_zero(a.spec)
        assert jets.jet_add(a, z).coeffs.tolist() == a.coeffs.tolist()

    def test_bivariate_linearity(self):
        a, b = biv(1, [1, 1, 0]), biv(1, [0, 0, 1])
        assert jets.jet_add(a, b).coeffs.tolist() == [1, 1, 1]

    def test_spec_mismatch_rejected(self):
        with pytest.raises(ValueError):
            jets.jet_add(uni(1, [1, 2]), uni(2, [1, 2, 3]))


class TestMul:
    def test_univariate_square(self):
        a = uni(2, [1, 1, 0])
        assert jets.jet_mul(a, a).coeffs.tolist() == [1, 2, 1]

    def test_constants(self):
        a, b = uni(2, [2, 0, 0]), uni(2, [3, 0, 0])
        assert jets.jet_mul(a, b).coeffs.tolist() == [6, 0, 0]

    def test_bivariate_coordinate_product(self):
        # x1-jet at (1,2) times x2-jet at (1,2): the jet of x1*x2
        spec = JetSpec(2, 2)
        x1 = jets.jet_seed(spec, 1.0, 0)
        x2 = jets.jet_seed(spec, 2.0, 1)
        p = jets.jet_mul(x1, x2)
        assert jets.derivative_of(p, (1, 1)) == pytest.approx(1.0)
        assert jets.derivative_of(p, (0, 0)) == pytest.approx(2.0)

    def test_truncation_discards_high_orders(self):
        a = uni(1, [0, 1])  # t at degree 1
        sq = jets.jet_mul(a, a)  # t^2 truncated to degree 1
        assert sq.coeffs.tolist() == [0, 0]

    def test_spec_mismatch_rejected(self):
        with pytest.raises(ValueError):
            jets.jet_mul(uni(2, [1, 0, 0]), uni(3, [1, 0, 0, 0]))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_commutative_random_degree6(self, seed):
        rng = np.random.default_rng(seed)
        spec = JetSpec(2, 6)
        a = Jet(spec, rng.standard_normal(spec.n_coeffs))
        b = Jet(spec, rng.standard_normal(spec.n_coeffs))
        ab, ba = jets.jet_mul(a, b), jets.jet_mul(b, a)
        assert np.abs(ab.coeffs - ba.coeffs).max() < 1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_associative_random_degree6(self, seed):
        rng = np.random.default_rng(seed)
        spec = JetSpec(2, 6)
        a, b, c = (Jet(spec, rng.standard_normal(spec.n_coeffs)) for _ in range(3))
        left = jets.jet_mul(jets.jet_mul(a, b), c)
        right = jets.jet_mul(a, jets.jet_mul(b, c))
        assert np.abs(left.coeffs - right.coeffs).max() < 1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_leibniz_rule_bit_exact_on_dyadic_inputs(self, seed):
        # powers of two keep every convolution term exactly representable
        rng = np.random.default_rng(seed)
        spec = JetSpec(2, 4)
        pow2 = 2.0 ** rng.integers(-3, 3, size=(2, spec.n_coeffs))
        signs = rng.choice([-1.0, 1.0], size=(2, spec.n_coeffs))
        a, b = Jet(spec, pow2[0] * signs[0]), Jet(spec, pow2[1] * signs[1])
        for axis in (0, 1):
            lhs = jets.jet_derive(jets.jet_mul(a, b), axis)
            da, db = jets.jet_derive(a, axis), jets.jet_derive(b, axis)
            ta = jets.jet_truncate(a, spec.degree - 1)
            tb = jets.jet_truncate(b, spec.degree - 1)
            rhs = jets.jet_add(jets.jet_mul(da, tb), jets.jet_mul(ta, db))
            assert lhs.coeffs.tolist() == rhs.coeffs.tolist()


class TestDerive:
    def test_univariate_shift_scale(self):
        a = uni(3, [5, 1, 2, 3])  # (c0,c1,c2,c3) -> (c1, 2c2, 3c3)
        assert jets.jet_derive(a, 0).coeffs.tolist() == [1, 4, 9]

    def test_constant_derivative_is_zero(self):
        a = jets.jet_constant(JetSpec(2, 3), 7.0)
        d = jets.jet_derive(a, 1)
        assert not d.coeffs.any()

    def test_second_derivative_of_x1_squared(self):
        # bivariate jet of x1^2 at x1=0: twice d/dx1 leaves the constant 2
        spec = JetSpec(2, 2)
        x1 = jets.jet_seed(spec, 0.0, 0)
        sq = jets.jet_mul(x1, x1)
        dd = jets.jet_derive(jets.jet_derive(sq, 0), 0)
        assert dd.spec.degree == 0
        assert dd.coeffs.tolist() == [2.0]

    def test_degree_zero_rejected(self):
        with pytest.raises(ValueError):
            jets.jet_derive(jets.jet_constant(JetSpec(1, 0), 1.0), 0)


class TestSigmoidDerivs:
    def test_values_at_zero(self):
        got = jets.sigmoid_derivs(0.0, 4)
        assert got.tolist() == [0.5, 0.25, 0.0, -0.125, 0.0]

    def test_even_orders_vanish_at_zero(self):
        # sigma - 1/2 is odd, so even derivatives of order >= 2 vanish at 0
        got = jets.sigmoid_derivs(0.0, 6)
        assert got[2] == 0.0 and got[4] == 0.0 and got[6] == 0.0

    def test_saturation_tail(self):
        got = jets.sigmoid_derivs(20.0, 1)
        assert abs(got[0] - 1.0) < 3e-9
        assert got[1] == pytest.approx(2.0611536e-9, rel=1e-3)

    def test_matches_symbolic_oracle(self):
        sympy = pytest.importorskip("sympy")
        y = sympy.Symbol("y")
        sig = 1 / (1 + sympy.exp(-y))
        for point in (0.0, 0.7, -1.3):
            expected = [float(sympy.diff(sig, y, k).subs(y, point)) for k in range(7)]
            got = jets.sigmoid_derivs(point, 6)
            assert np.allclose(got, expected, rtol=1e-12, atol=1e-15)

    def test_no_overflow_far_out(self):
        assert np.isfinite(jets.sigmoid_derivs(-800.0, 6)).all()
        assert np.isfinite(jets.sigmoid_derivs(800.0, 6)).all()


class TestCompose:
    def test_sigmoid_degree1_at_zero(self):
        got = jets.jet_compose("sigmoid", uni(1, [0, 1]))
        assert got.coeffs.tolist() == [0.5, 0.25]

    def test_sin_of_constant(self):
        c = jets.jet_constant(JetSpec(2, 3), 0.8)
        got = jets.jet_compose("sin", c)
        assert got.value == pytest.approx(math.sin(0.8))
        assert not got.coeffs[1:].any()

    def test_square_truncated(self):
        got = jets.jet_compose("square", uni(1, [1, 1]))
        assert got.coeffs.tolist() == [1, 2]

    def test_constant_term_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = Jet(JetSpec(1, 4), rng.standard_normal(5))
            composed = jets.jet_compose("sigmoid", a)
            assert composed.value == float(jets.stable_sigmoid(np.float64(a.value)))

    def test_unknown_function_rejected(self):
        with pytest.raises(ValueError):
            jets.jet_compose("exp", uni(1, [0, 1]))

    @pytest.mark.parametrize("fn,ref", [
        ("sin", np.sin), ("cos", np.cos), ("tanh", np.tanh),
    ])
    def test_composition_matches_fd(self, fn, ref):
        # jet of fn(0.3 + t + 0.2 t^2) vs finite differences of the scalar map
        inner = [0.3, 1.0, 0.2, 0.0, 0.0]
        a = uni(4, inner)
        got = jets.jet_compose(fn, a)

        def scalar(t):
            return ref(inner[0] + inner[1] * t + inner[2] * t * t)

        for k in range(1, 5):
            fd = central_derivative(scalar, 0.0, k, FD_STEPS[k])
            exact = jets.derivative_of(got, (k,))
            assert rel_err(fd, exact) < (1e-6 if k <= 2 else 1e-3)


class TestDerivativeOf:
    def test_factorial_scaling(self):
        spec = JetSpec(2, 2)
        alg = jets.algebra(2, 2)
        c = np.zeros(spec.n_coeffs)
        c[alg.index_of[(2, 0)]] = 0.5
        assert jets.derivative_of(Jet(spec, c), (2, 0)) == 1.0

    def test_constant_term_unchanged(self):
        j = biv(1, [3.25, 0, 0])
        assert jets.derivative_of(j, (0, 0)) == 3.25

    def test_fourth_order(self):
        c = np.zeros(5)
        c[4] = 1.0 / 24.0
        assert jets.derivative_of(Jet(JetSpec(1, 4), c), (4,)) == pytest.approx(1.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            jets.derivative_of(uni(2, [1, 2, 3]), (3,))


class TestKernelBackends:
    def test_numpy_fallback_matches_kernel(self):
        # backends may reassociate the segment sums; values agree to rounding
        alg = jets.algebra(2, 6)
        rng = np.random.default_rng(11)
        a = rng.standard_normal((28, 17))
        b = rng.standard_normal((28, 17))
        fast = jets.conv_mul(alg, a, b)
        slow = np.zeros_like(a)
        jets._conv_numpy(a, b, alg.fwd_i, alg.fwd_j, alg.fwd_starts, alg.n, slow)
        assert np.allclose(fast, slow, rtol=1e-13, atol=1e-13)

    def test_adjoint_is_transpose_of_mul(self):
        # <c, a*b> == <adjoint(c, b), a> for the bilinear convolution
        alg = jets.algebra(2, 4)
        rng = np.random.default_rng(3)
        a, b, c = (rng.standard_normal((alg.n, 1)) for _ in range(3))
        lhs = float((c * jets.conv_mul(alg, a, b)).sum())
        rhs = float((jets.conv_adjoint(alg, c, b) * a).sum())
        assert rel_err(lhs, rhs) < 1e-12


class TestImmutability:
    def test_coefficients_read_only(self):
        j = uni(2, [1, 2, 3])
        with pytest.raises(ValueError):
            j.coeffs[0] = 5.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            uni(1, [1.0, math.inf])
