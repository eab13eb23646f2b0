import numpy as np
import pytest

from bsdelab.certificates import MixedSubLinear, OneSidedLinear
from bsdelab.envelopes import (
    EnvelopeError,
    EnvelopeGrid,
    LinearGrowthBound,
    WedgeGrowthBound,
    envelope_family_values,
    linearize_phi,
    lipschitz_envelope,
    sup_convolution_generator,
    sup_convolution_generator_alpha,
)
from bsdelab.generators import Generator, WeightFn
from tests.oracles import (
    separable_supconv_oracle,
    sqrt_envelope_closed_form,
    wedge_supconv_oracle,
)

ONE = WeightFn.parse("1")
ZERO = WeightFn.parse("0")

# frozen from a 4e6-node dense scan plus golden refinement (tests/oracles.py)
WEDGE_VALUE_AT_3 = -6.554377592712286


def growth(f, u, v):
    return LinearGrowthBound.from_parts(f, u, v)


class TestLinearizePhi:
    def test_linear_modulus_no_offset(self):
        value = linearize_phi("x", a=1.0, b=0.0, n=1, x=2.0)
        assert value == 6.0
        assert value >= 2.0

    def test_affine_modulus_offset(self):
        # c = 2, offset phi(2c/(n+2c)) = phi(4/5) = 9/5
        value = linearize_phi("x + 1", a=1.0, b=1.0, n=1, x=0.0)
        assert value == pytest.approx(9.0 / 5.0, abs=1e-12)
        assert value >= 1.0  # phi(0)

    def test_saturating_modulus(self):
        value = linearize_phi("min(1, x)", a=0.0, b=1.0, n=2, x=0.0)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_negative_x_rejected(self):
        with pytest.raises(ValueError):
            linearize_phi("x", 1.0, 0.0, 1, -0.5)

    def test_majorises_certified_moduli(self):
        # the inequality: zero violations over 1000 sampled (x, n) pairs
        rng = np.random.default_rng(42)
        moduli = [
            ("x", 1.0, 0.0),
            ("x + 1", 1.0, 1.0),
            ("min(1, x)", 0.0, 1.0),
            ("2 * x + 0.5", 2.0, 0.5),
            ("sqrt(x) * min(1, sqrt(x)) + x", 2.0, 1.0),
        ]
        from bsdelab.generators import _as_univariate

        for source, a, b in moduli:
            phi = _as_univariate(source)
            xs = rng.uniform(0.0, 50.0, size=200)
            ns = rng.integers(1, 64, size=200)
            for x, n in zip(xs, ns):
                assert linearize_phi(phi, a, b, int(n), float(x)) >= phi(float(x))


class TestLipschitzEnvelope:
    def test_already_lipschitz_is_identity(self):
        env = lipschitz_envelope("x", slope=3.0, growth_k=1.0)
        xs = np.linspace(0.0, 20.0, 41)
        assert np.allclose(env.batch(xs), xs, rtol=0, atol=1e-12)

    def test_sqrt_below_knee(self):
        env = lipschitz_envelope("sqrt(x)", slope=1.0, growth_k=0.5)
        assert env(0.0) == pytest.approx(0.25, abs=1e-9)

    def test_sqrt_above_knee(self):
        env = lipschitz_envelope("sqrt(x)", slope=1.0, growth_k=0.5)
        assert env(1.0) == pytest.approx(1.0, abs=1e-9)

    def test_sqrt_closed_form_everywhere(self):
        env = lipschitz_envelope("sqrt(x)", slope=1.0, growth_k=0.5)
        xs = np.concatenate([np.linspace(0, 0.25, 40), np.linspace(0.25, 9, 60)])
        got = env.batch(xs)
        want = sqrt_envelope_closed_form(xs, 1.0)
        assert np.max(np.abs(got - want)) < 1e-6

    def test_dominates_pointwise(self):
        env = lipschitz_envelope("sqrt(x)", slope=1.0, growth_k=0.5)
        xs = np.random.default_rng(0).uniform(0, 30, size=100)
        assert np.all(env.batch(xs) >= np.sqrt(xs))

    def test_lipschitz_across_adjacent_nodes(self):
        slope = 2.0
        env = lipschitz_envelope("sqrt(x)", slope=slope, growth_k=0.5)
        xs = np.linspace(0.0, 5.0, 201)
        vals = env.batch(xs)
        dx = xs[1] - xs[0]
        assert np.max(np.abs(np.diff(vals))) <= slope * dx + 1e-9

    def test_slope_must_exceed_growth(self):
        with pytest.raises(EnvelopeError, match="must exceed"):
            lipschitz_envelope("x", slope=1.0, growth_k=1.0)

    def test_negative_x_rejected(self):
        env = lipschitz_envelope("x", slope=2.0, growth_k=1.0)
        with pytest.raises(EnvelopeError):
            env(-1.0)

    def test_batch_matches_scalar(self):
        env = lipschitz_envelope("sqrt(x)", slope=1.0, growth_k=0.5)
        xs = np.random.default_rng(3).uniform(0, 4, size=17)
        batch = env.batch(xs)
        for k, x in enumerate(xs):
            assert batch[k] == pytest.approx(env(float(x)), abs=1e-12)


class TestSupConvolution:
    def test_quadratic_outside_touch_region(self):
        g = Generator.parse("-y^2")
        env = sup_convolution_generator(g, 2, ONE, ONE, growth=growth("0", "1", "0"))
        assert env(0.0, 2.0, 0.0) == pytest.approx(-3.0, abs=1e-9)

    def test_quadratic_touches_where_locally_flat(self):
        g = Generator.parse("-y^2")
        env = sup_convolution_generator(g, 2, ONE, ONE, growth=growth("0", "1", "0"))
        assert env(0.0, 0.5, 0.0) == -0.25

    def test_dominated_slope_driver_is_fixed_point(self):
        g = Generator.parse("y")
        env = sup_convolution_generator(g, 2, ONE, ONE, growth=growth("0", "1", "0"))
        for y in np.linspace(-3, 3, 13):
            assert env(0.0, float(y), 0.0) == float(y)

    def test_missing_certificate_is_an_error(self):
        with pytest.raises(EnvelopeError, match="missing growth certificate"):
            sup_convolution_generator(Generator.parse("-y^2"), 2, ONE, ONE)

    def test_certificate_on_generator_is_picked_up(self):
        cert = OneSidedLinear("0", ONE, ZERO, side="absolute")
        g = Generator.parse("-y^2").with_certificate(cert)
        env = sup_convolution_generator(g, 2, ONE, ONE)
        assert env(0.0, 2.0, 0.0) == pytest.approx(-3.0, abs=1e-9)

    def test_sgn_side_certificate_rejected(self):
        cert = OneSidedLinear("0", ONE, ZERO, side="sgn")
        g = Generator.parse("-y^2").with_certificate(cert)
        with pytest.raises(EnvelopeError, match="absolute"):
            sup_convolution_generator(g, 2, ONE, ONE)

    def test_insufficient_penalty_slope(self):
        g = Generator.parse("y")
        env = sup_convolution_generator(g, 1, ONE, ONE, growth=growth("0", "1", "0"))
        with pytest.raises(EnvelopeError, match="does not exceed"):
            env(0.0, 1.0, 0.0)

    def test_vanishing_weight_is_an_error(self):
        g = Generator.parse("y")
        env = sup_convolution_generator(g, 4, WeightFn.parse("t"), ONE, growth=growth("0", "1", "0"))
        with pytest.raises(EnvelopeError, match="t=0"):
            env(0.0, 1.0, 0.0)


class TestEnvelopeFamilyProperties:
    def setup_method(self):
        self.g = Generator.parse("-y^2 - z^4 / 4")
        self.growth = growth("0", "0", "0")
        self.points = [
            (float(t), float(y), float(z))
            for t, y, z in np.random.default_rng(11).uniform(-2.5, 2.5, size=(100, 3))
        ]

    def _envelopes(self, ns):
        return [
            sup_convolution_generator(self.g, n, ONE, ONE, growth=self.growth) for n in ns
        ]

    def test_domination_exact(self):
        env = self._envelopes([2])[0]
        for t, y, z in self.points:
            assert env(t, y, z) >= float(self.g(t, y, z))

    def test_monotone_in_n(self):
        ns = [2, 3, 4, 8]
        values = envelope_family_values(self._envelopes(ns), self.points[:40])
        assert np.all(values[1:] <= values[:-1] + 1e-12)

    def test_lipschitz_certificate_across_grid(self):
        n = 2
        env = self._envelopes([n])[0]
        ys = np.linspace(-2.0, 2.0, 81)
        vals = np.asarray([env(0.0, float(y), 0.5) for y in ys])
        dy = ys[1] - ys[0]
        assert np.max(np.abs(np.diff(vals))) <= n * 1.0 * dy + 1e-9

    def test_convergence_to_driver(self):
        ns = [2, 4, 8, 16, 32]
        pts = self.points[:20]
        values = envelope_family_values(self._envelopes(ns), pts)
        g_vals = np.asarray([float(self.g(*p)) for p in pts])
        gaps = values - g_vals[None, :]
        assert np.all(gaps >= -1e-12)
        assert np.all(np.diff(gaps, axis=0) <= 1e-12)
        oracle_gap = np.asarray(
            [
                separable_supconv_oracle(
                    lambda u: -(u**2), lambda v: -(v**4) / 4.0, 32, 1.0, 1.0, p[1], p[2]
                )
                for p in pts
            ]
        ) - g_vals
        assert np.all(gaps[-1] <= 10.0 * np.maximum(oracle_gap, 1e-12))

    def test_matches_dense_scan_oracle(self):
        env = self._envelopes([2])[0]
        for t, y, z in self.points[:100]:
            got = env(t, y, z)
            want = separable_supconv_oracle(
                lambda u: -(u**2), lambda v: -(v**4) / 4.0, 2, 1.0, 1.0, y, z
            )
            assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


class TestWedgeEnvelope:
    def wedge_growth(self):
        return WedgeGrowthBound(
            f=WeightFn.parse("0"),
            y_slope=WeightFn.parse("0"),
            v=ONE,
            lam=ONE,
            alpha=0.5,
        )

    def zero_growth(self):
        return WedgeGrowthBound(
            f=WeightFn.parse("0"),
            y_slope=WeightFn.parse("0"),
            v=ZERO,
            lam=ZERO,
            alpha=0.5,
        )

    def test_zero_driver_fixed_point(self):
        g = Generator.parse("0")
        for n in (1, 2, 4):
            env = sup_convolution_generator_alpha(
                g, n, ONE, ONE, ONE, 0.5, growth=self.zero_growth()
            )
            for z in (-2.0, 0.0, 3.0):
                assert env(0.1, 0.5, z) == 0.0

    def test_wedge_penalty_arms(self):
        # at |dz| = 1 both arms agree and the penalty is exactly n
        g = Generator.parse("0")
        env = sup_convolution_generator_alpha(
            g, 3, ONE, ONE, ONE, 0.5, growth=self.wedge_growth()
        )
        assert float(env._penalty(0.0, 0.0, np.asarray(1.0))) == 3.0

    def test_quadratic_z_driver_frozen_oracle(self):
        g = Generator.parse("-abs(z)^2")
        env = sup_convolution_generator_alpha(
            g, 4, ONE, ONE, ONE, 0.5, growth=self.wedge_growth()
        )
        assert env(0.0, 0.0, 3.0) == pytest.approx(WEDGE_VALUE_AT_3, abs=1e-8)

    def test_matches_live_oracle(self):
        g = Generator.parse("-abs(z)^2")
        env = sup_convolution_generator_alpha(
            g, 4, ONE, ONE, ONE, 0.5, growth=self.wedge_growth()
        )
        for z in (-2.0, 0.4, 1.7, 3.0):
            want = wedge_supconv_oracle(lambda v: -(v**2), 4, 1.0, 1.0, 0.5, z)
            assert env(0.0, 0.0, float(z)) == pytest.approx(want, rel=1e-6, abs=1e-9)

    def test_non_increasing_in_n(self):
        g = Generator.parse("-abs(z)^2")
        envs = [
            sup_convolution_generator_alpha(g, n, ONE, ONE, ONE, 0.5, growth=self.wedge_growth())
            for n in (2, 4, 8, 16)
        ]
        pts = [(0.0, 0.0, float(z)) for z in np.linspace(-3, 3, 11)]
        values = envelope_family_values(envs, pts)
        assert np.all(values[1:] <= values[:-1] + 1e-12)

    def test_alpha_domain(self):
        g = Generator.parse("0")
        with pytest.raises(EnvelopeError, match="alpha"):
            sup_convolution_generator_alpha(g, 2, ONE, ONE, ONE, 1.5, growth=self.wedge_growth())

    def test_mixed_certificate_is_picked_up(self):
        cert = MixedSubLinear("0", ZERO, ONE, WeightFn.parse("1", "Lq", 0.5), 0.5, side="absolute")
        g = Generator.parse("-abs(z)^2").with_certificate(cert)
        env = sup_convolution_generator_alpha(g, 4, ONE, ONE, ONE, 0.5)
        assert env(0.0, 0.0, 3.0) == pytest.approx(WEDGE_VALUE_AT_3, abs=1e-8)


class TestEnvelopeGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            EnvelopeGrid(nodes=4)
        with pytest.raises(ValueError):
            EnvelopeGrid(radius=-1.0)
        with pytest.raises(ValueError):
            EnvelopeGrid(nodes=1)
