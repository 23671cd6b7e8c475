import io
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, special

from ntklap.errors import ConfigError, DomainError, InsufficientDataError, NumericalError
from ntklap.kernels import AmbientKernelSpec, ZonalKernelSpec
from ntklap.ntk import NtkConfig
from ntklap.spectral import (
    bessel_j,
    decay_slope,
    fourier_coefficients_s1,
    gegenbauer_table,
    harmonic_coefficients,
    laplace_fourier_transform,
    laplace_sphere_eig,
    local_slope,
    multiplicity,
    watson_integral,
    watson_integral_numeric,
)
from ntklap.spectral.sphere import Spectrum

LAPLACE = ZonalKernelSpec("Laplace", c=1.0)


def harmonic_poly_dim(d, k):
    """dim of degree-k harmonic polynomials in d variables: P_k - P_{k-2}."""
    def monomials(deg):
        return math.comb(deg + d - 1, d - 1) if deg >= 0 else 0

    return monomials(k) - monomials(k - 2)


class TestMultiplicity:
    def test_examples(self):
        assert multiplicity(3, 5) == 11
        assert multiplicity(2, 0) == 1
        assert multiplicity(5, 2) == 14

    def test_against_polynomial_count(self):
        for d in range(3, 9):
            for k in range(0, 15):
                assert multiplicity(d, k) == harmonic_poly_dim(d, k)

    def test_circle(self):
        assert [multiplicity(2, k) for k in range(5)] == [1, 2, 2, 2, 2]

    def test_domain(self):
        with pytest.raises(DomainError):
            multiplicity(1, 3)
        with pytest.raises(DomainError):
            multiplicity(3, -1)


class TestGegenbauer:
    def test_against_scipy(self):
        t = np.linspace(-1, 1, 37)
        for d in (3, 4, 7):
            alpha = (d - 2) / 2
            G = gegenbauer_table(d, 12, t)
            for k in range(13):
                ref = special.eval_gegenbauer(k, alpha, t) / special.eval_gegenbauer(k, alpha, 1.0)
                np.testing.assert_allclose(G[k], ref, rtol=1e-11, atol=1e-13)

    def test_circle_is_chebyshev(self):
        t = np.linspace(-1, 1, 21)
        G = gegenbauer_table(2, 9, t)
        for k in range(10):
            np.testing.assert_allclose(G[k], special.eval_chebyt(k, t), atol=1e-13)


class TestHarmonicCoefficients:
    def test_constant(self):
        sp = harmonic_coefficients(lambda t: np.ones_like(t), 3, 10)
        assert sp.eigenvalues[0] == pytest.approx(1.0, rel=1e-14)
        np.testing.assert_array_equal(sp.eigenvalues[1:], 0.0)

    def test_linear(self):
        sp = harmonic_coefficients(lambda t: t, 3, 10)
        assert sp.eigenvalues[1] == pytest.approx(1 / 3, rel=1e-14)
        np.testing.assert_array_equal(np.delete(sp.eigenvalues, 1), 0.0)
        np.testing.assert_allclose(sp.reconstruct(np.linspace(-1, 1, 9)), np.linspace(-1, 1, 9), atol=1e-14)

    def test_linear_in_higher_dimension(self):
        for d in (4, 6):
            sp = harmonic_coefficients(lambda t: t, d, 4)
            assert sp.eigenvalues[1] == pytest.approx(1 / d, rel=1e-13)

    def test_against_direct_quadrature(self):
        # adaptive quadrature of the cosine-variable Funk-Hecke integral
        d = 3
        sp = harmonic_coefficients(LAPLACE, d, 8)
        for k in range(9):
            f = lambda t: LAPLACE(t) * special.eval_legendre(k, t)  # noqa: E731
            ref = 0.5 * integrate.quad(f, -1, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
            np.testing.assert_allclose(sp.eigenvalues[k], ref, rtol=1e-9)

    def test_bessel_route_k20(self):
        sp = harmonic_coefficients(LAPLACE, 3, 20)
        np.testing.assert_allclose(sp.eigenvalues[20], laplace_sphere_eig(3, 1.0, 20), rtol=1e-3)

    def test_quadrature_stability(self):
        for kernel in (LAPLACE, NtkConfig(6, 0.0, True), ZonalKernelSpec("GammaExp", c=0.4, gamma=1.9)):
            a = harmonic_coefficients(kernel, 3, 100)
            b = harmonic_coefficients(kernel, 3, 100, quad_points=2 * a.meta["quad_points"])
            # agreement up to double-precision summation noise
            np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-8, atol=1e-14 * a.eigenvalues[0])

    def test_insufficient_quadrature(self):
        with pytest.raises(ConfigError):
            harmonic_coefficients(LAPLACE, 3, 100, quad_points=300)

    def test_kernel_errors_propagate(self):
        def broken(t):
            raise DomainError("bad kernel")

        with pytest.raises(DomainError):
            harmonic_coefficients(broken, 3, 4)

    def test_nonnegative_and_trace_bounded(self):
        for kernel in (LAPLACE, NtkConfig(6, 0.0, True), NtkConfig(3, 1.0), ZonalKernelSpec("Gaussian", c=1.3)):
            for d in (2, 3, 5):
                sp = harmonic_coefficients(kernel, d, 60)
                lam = sp.eigenvalues
                assert np.all(lam >= -1e-10 * lam[0])
                k1 = float(np.asarray(sp.kernel.zonal(1.0) if hasattr(sp.kernel, "zonal") else sp.kernel(1.0)))
                traces = sp.partial_traces()
                assert traces[-1] <= k1 * (1 + 1e-6)
                assert np.all(np.diff(traces) >= -1e-12)

    def test_ntk_zero_odd_frequencies(self):
        # bias-free two-layer NTK has no odd harmonics beyond k = 1
        sp = harmonic_coefficients(NtkConfig(2), 3, 15)
        np.testing.assert_array_equal(sp.eigenvalues[3::2], 0.0)
        assert np.all(sp.eigenvalues[:3] > 0) and np.all(sp.eigenvalues[2::2] > 0)


class TestMercer:
    t = np.linspace(-0.95, 0.95, 20)

    @pytest.mark.parametrize("kernel", [LAPLACE, NtkConfig(6, 0.0, True), NtkConfig(2, 1.0)])
    def test_reconstruction_s2(self, kernel):
        sp = harmonic_coefficients(kernel, 3, 200)
        f = ZonalKernelSpec.__call__ if isinstance(kernel, ZonalKernelSpec) else None
        exact = kernel(self.t) if f else kernel.zonal(self.t)
        k1 = kernel(1.0) if f else kernel.zonal(1.0)
        assert np.abs(sp.reconstruct(self.t) - exact).max() <= 1e-3 * k1

    def test_trace_laplace(self):
        sp = harmonic_coefficients(LAPLACE, 3, 200)
        assert abs(sp.partial_traces()[-1] - 1.0) <= 0.02

    def test_reconstruction_s1(self):
        sp = fourier_coefficients_s1(LAPLACE, 300)
        np.testing.assert_allclose(sp.reconstruct(self.t), LAPLACE(self.t), atol=1e-3)


class TestFourierS1:
    def test_constant(self):
        sp = fourier_coefficients_s1(lambda t: np.ones_like(t), 8)
        assert sp.eigenvalues[0] == pytest.approx(1.0, rel=1e-14)
        np.testing.assert_array_equal(sp.eigenvalues[1:], 0.0)

    def test_cosine(self):
        sp = fourier_coefficients_s1(lambda t: t, 8)
        assert sp.eigenvalues[1] == pytest.approx(0.5, rel=1e-14)
        np.testing.assert_allclose(np.delete(sp.eigenvalues, 1), 0.0, atol=1e-14)

    def test_gaussian_closed_form(self):
        # exp(-c (2 - 2 cos s)) = exp(-2c) exp(2c cos s) has coefficients exp(-2c) I_k(2c)
        c = 1.3
        sp = fourier_coefficients_s1(ZonalKernelSpec("Gaussian", c=c), 12)
        ref = np.exp(-2 * c) * special.iv(np.arange(13), 2 * c)
        np.testing.assert_allclose(sp.eigenvalues, ref, rtol=1e-12, atol=2e-14 * ref[0])

    def test_gaussian_extended_precision(self):
        c = 1.3
        sp = fourier_coefficients_s1(ZonalKernelSpec("Gaussian", c=c), 60, precision=100)
        with mpmath.workdps(40):
            ref = [float(mpmath.exp(-2 * c) * mpmath.besseli(k, 2 * c)) for k in range(61)]
        np.testing.assert_allclose(sp.eigenvalues, ref, rtol=1e-12)

    def test_extended_precision_agrees(self):
        for kernel in (LAPLACE, NtkConfig(3, 0.5)):
            a = harmonic_coefficients(kernel, 3, 12)
            b = harmonic_coefficients(kernel, 3, 12, precision=30)
            np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-9)

    def test_paper_convention(self):
        sp = fourier_coefficients_s1(lambda t: t, 3)
        scaled = sp.to_paper_s1()
        assert scaled[1] == pytest.approx(math.pi ** 2, rel=1e-14)
        with pytest.raises(ConfigError):
            Spectrum(3, np.ones(3)).to_paper_s1()


class TestDecaySlope:
    def test_exact_power_law(self):
        k = np.arange(0, 101, dtype=float)
        lam = np.zeros_like(k)
        lam[1:] = k[1:] ** -3.0
        slope, r2 = decay_slope(lam, 10, 100)
        assert abs(slope + 3) <= 1e-9
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_skips_zeros(self):
        lam = np.r_[1.0, np.arange(1, 41, dtype=float) ** -2.0]
        lam[::2] = 0.0
        slope, _ = decay_slope(lam, 5, 40)
        assert slope == pytest.approx(-2.0, abs=1e-12)

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            decay_slope(np.r_[1.0, np.zeros(20)], 1, 20)
        with pytest.raises(InsufficientDataError):
            decay_slope(np.ones(30), 10, 13)

    def test_laplace_circle(self):
        sp = fourier_coefficients_s1(ZonalKernelSpec("Laplace", c=2.0), 100)
        slope, _ = decay_slope(sp, 10, 100)
        assert -2.3 <= slope <= -1.7

    def test_gaussian_circle(self):
        sp = fourier_coefficients_s1(ZonalKernelSpec("Gaussian", c=2.0), 60, precision=100)
        slope, _ = decay_slope(sp, 10, 60)
        assert slope < -6

    @pytest.mark.parametrize("d", [2, 3])
    def test_slope_theorem_band(self, d):
        for kernel in (LAPLACE, NtkConfig(6, 0.0, True), NtkConfig(4, 1.0)):
            slope, _ = decay_slope(harmonic_coefficients(kernel, d, 100), 10, 100)
            assert -d - 0.4 <= slope <= -d + 0.4

    def test_local_slope(self):
        lam = np.r_[1.0, np.arange(1, 30, dtype=float) ** -4.0]
        assert local_slope(lam, 10) == pytest.approx(-4.0, abs=1e-12)
        with pytest.raises(ConfigError):
            local_slope(lam, 1)


class TestSpectrumExport:
    def test_csv(self):
        sp = harmonic_coefficients(lambda t: t, 3, 3)
        buf = io.StringIO()
        sp.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "k,lambda,multiplicity"
        assert lines[2].split(",")[2] == "3"
        assert float(lines[2].split(",")[1]) == pytest.approx(1 / 3)


class TestBessel:
    @pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.5, 10.5, 31.0, 60.5])
    def test_against_scipy(self, nu):
        x = np.r_[np.linspace(0, 30, 301), np.linspace(30, 3000, 200)]
        np.testing.assert_allclose(bessel_j(nu, x), special.jv(nu, x), rtol=0, atol=3e-14)

    def test_scalar(self):
        assert bessel_j(0, 0.0) == 1.0
        assert bessel_j(2, 0.0) == 0.0
        assert isinstance(bessel_j(1.5, 2.0), float)

    def test_domain(self):
        with pytest.raises(DomainError):
            bessel_j(-1, 1.0)
        with pytest.raises(DomainError):
            bessel_j(1, -2.0)


class TestLaplaceFourier:
    def test_constant(self):
        assert laplace_fourier_transform(1, 1.0, 0.0) == pytest.approx(1 / math.pi, rel=1e-15)

    def test_quarter(self):
        C = laplace_fourier_transform(3, 2.0, 0.0)
        assert laplace_fourier_transform(3, 2.0, 2.0) == pytest.approx(C / 4, rel=1e-15)

    def test_against_radial_transform(self):
        # 3-d radial transform: (2 pi)^-3 (4 pi / w) int_0^inf r exp(-r) sin(w r) dr
        for w in (0.5, 3.0, 31.4):
            radial = integrate.quad(lambda r: r * math.exp(-r), 0, np.inf, weight="sin", wvar=w)[0]
            ref = 4 * math.pi / w * radial / (2 * math.pi) ** 3
            np.testing.assert_allclose(laplace_fourier_transform(3, 1.0, w), ref, rtol=1e-8)

    def test_decreasing(self):
        t = np.linspace(0, 50, 200)
        v = laplace_fourier_transform(4, 0.7, t)
        assert np.all(v > 0) and np.all(np.diff(v) < 0)


class TestLaplaceSphereEig:
    def test_k_cubed_law(self):
        ratio = laplace_sphere_eig(3, 1.0, 20) / laplace_sphere_eig(3, 1.0, 10)
        assert abs(ratio / 2 ** -3 - 1) <= 0.25

    def test_low_frequencies_against_quadrature(self):
        for d in (3, 4):
            sp = harmonic_coefficients(LAPLACE, d, 6)
            for k in range(7):
                np.testing.assert_allclose(laplace_sphere_eig(d, 1.0, k), sp.eigenvalues[k], rtol=1e-6)

    def test_other_width(self):
        sp = harmonic_coefficients(ZonalKernelSpec("Laplace", c=2.0), 3, 5)
        np.testing.assert_allclose(laplace_sphere_eig(3, 2.0, 5), sp.eigenvalues[5], rtol=1e-6)

    def test_measure(self):
        prob = laplace_sphere_eig(3, 1.0, 4)
        leb = laplace_sphere_eig(3, 1.0, 4, measure="lebesgue")
        assert leb == pytest.approx(4 * math.pi * prob, rel=1e-14)

    def test_short_cap_reported(self):
        with pytest.raises(NumericalError):
            laplace_sphere_eig(3, 1.0, 2, integration_cap=5.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            laplace_sphere_eig(3, -1.0, 2)
        with pytest.raises(DomainError):
            laplace_sphere_eig(3, 1.0, -1)


class TestWatson:
    def test_closed_form_value(self):
        # adaptive quadrature oracle of int_0^inf x^-3 J_{5.5}(x)^2 dx
        f = lambda x: x ** -3.0 * special.jv(5.5, x) ** 2  # noqa: E731
        ref = integrate.quad(f, 0, 60, limit=400, epsabs=1e-16, epsrel=1e-13)[0]
        ref += sum(integrate.quad(f, a, a + 60, limit=200, epsabs=1e-18)[0] for a in range(60, 6000, 60))
        ref += 6000.0 ** -3 / (3 * math.pi)
        np.testing.assert_allclose(watson_integral(5, 3, 1.0), ref, rtol=1e-6)

    def test_numeric(self):
        for k, d, c in ((5, 3, 1.0), (3, 4, 2.0), (10, 3, 0.5)):
            np.testing.assert_allclose(watson_integral_numeric(k, d, c), watson_integral(k, d, c), rtol=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            watson_integral(0, 3, 1.0)


class TestPrecisionFloor:
    def test_noise_reported_as_zero(self):
        # at 30 digits the Gaussian coefficients beyond k ~ 30 sink below the working precision
        sp = fourier_coefficients_s1(ZonalKernelSpec("Gaussian", c=1.3), 60, precision=30)
        lam = sp.eigenvalues
        assert np.all(lam >= 0)
        assert lam[-1] == 0.0
        with mpmath.workdps(40):
            ref = [float(mpmath.exp(-2.6) * mpmath.besseli(k, 2.6)) for k in range(61)]
        live = lam > 0
        np.testing.assert_allclose(lam[live], np.array(ref)[live], rtol=1e-12)
