import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError
from scipy.stats import ks_2samp

from app.models.specs import InnovationSpec, ModelSpec
from app.services import rng as streams
from app.services.errors import DomainError, InputError
from app.services.estimators import sample_autocov
from app.services.matrix_core import effective_rank, stationary_var1_covariance, var1_autocovariance
from app.services.timeseries import (
    arch_volatility,
    build_sigma0_spectrum,
    simulate,
    simulate_arch,
    simulate_banna,
    simulate_banna_matrices,
    simulate_coupled,
    simulate_var,
    spectrum_eigenvalues,
    stationary_w_variance,
)

from conftest import arch, banna, var1


# 随机数流


def test_splitmix64_reference_value():
    assert streams.splitmix64(0) == 0xE220A8397B1DCDAF


def test_derive_seed_folds_keys():
    master = 12345
    assert streams.derive_seed(streams.derive_seed(master, 3), 7) == streams.derive_seed(master, 3, 7)
    assert streams.derive_seed(master) == master
    assert streams.derive_seed(master, 1) != streams.derive_seed(master, 2)


def test_streams_are_reproducible_and_distinct():
    a = streams.stream(99, streams.STREAM_INNOVATIONS).standard_normal(5)
    b = streams.stream(99, streams.STREAM_INNOVATIONS).standard_normal(5)
    c = streams.stream(99, streams.STREAM_HISTORY).standard_normal(5)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# 谱构造


def test_spectrum_catalogue():
    assert_array_equal(spectrum_eigenvalues("identity", 3), np.ones(3))
    assert_allclose(spectrum_eigenvalues("geometric", 4), [1.0, 0.5, 0.25, 0.125])
    assert_allclose(spectrum_eigenvalues("geometric:0.1", 2), [1.0, 0.1])
    lam = spectrum_eigenvalues("effective-rank:8", 64)
    assert lam.sum() / lam.max() == pytest.approx(8.0)


@pytest.mark.parametrize(
    "name, error",
    [("spiked", InputError), ("geometric:1.5", DomainError), ("effective-rank:100", DomainError)],
)
def test_spectrum_catalogue_errors(name, error):
    with pytest.raises(error):
        spectrum_eigenvalues(name, 8)


def test_build_sigma0_spectrum_identity():
    s = build_sigma0_spectrum(5, np.ones(5), seed=3)
    assert_allclose(s.array, np.eye(5), atol=1e-12)


@pytest.mark.parametrize(
    "eigenvalues, expected",
    [
        ([1.0, 0.5, 0.25, 0.125], 1.875),
        (2.0 ** -np.arange(1, 17), sum(2.0 ** -np.arange(1, 17)) / 0.5),
    ],
)
def test_build_sigma0_spectrum_effective_rank(eigenvalues, expected):
    s = build_sigma0_spectrum(len(eigenvalues), eigenvalues, seed=11)
    assert effective_rank(s) == pytest.approx(expected, abs=1e-10)
    assert_allclose(np.linalg.eigvalsh(s.array), np.sort(eigenvalues), atol=1e-12)


def test_build_sigma0_spectrum_is_seeded():
    lam = [3.0, 2.0, 1.0]
    assert_array_equal(build_sigma0_spectrum(3, lam, 5).array, build_sigma0_spectrum(3, lam, 5).array)
    assert not np.allclose(build_sigma0_spectrum(3, lam, 5).array, build_sigma0_spectrum(3, lam, 6).array)


def test_build_sigma0_spectrum_errors():
    with pytest.raises(DomainError):
        build_sigma0_spectrum(3, [1.0, 0.0, 1.0], seed=0)
    with pytest.raises(InputError):
        build_sigma0_spectrum(3, [1.0, 1.0], seed=0)


# 模型校验


def test_model_spec_validation():
    with pytest.raises(ValidationError):
        ModelSpec(variant="VAR", innovations=InnovationSpec(dim=2), coefficient_scales=[0.6, 0.5])
    with pytest.raises(ValidationError):
        ModelSpec(variant="VAR", innovations=InnovationSpec(dim=2), coefficients=[[[0.5, 0.0], [0.0, 0.5]]], norm_caps=[0.4])
    with pytest.raises(ValidationError):
        ModelSpec(variant="ARCH", innovations=InnovationSpec(dim=2), arch_scale=0.5, a2=0.5)
    with pytest.raises(ValidationError):
        ModelSpec(variant="BANNA", innovations=InnovationSpec(dim=2), a_w=1.0)
    with pytest.raises(ValidationError):
        InnovationSpec(dim=2, sigma_e=[[1.0, 2.0], [2.0, 1.0]])


def test_innovation_factor_reproduces_covariance():
    cov = [[2.0, 0.6], [0.6, 1.0]]
    spec = InnovationSpec(dim=2, sigma_e=cov)
    factor = spec.factor()
    assert_allclose(factor @ factor.T, cov, atol=1e-12)


def test_innovation_factor_must_match_covariance():
    eye = [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(ValidationError, match="sigma0_factor"):
        InnovationSpec(dim=2, sigma_e=eye, sigma0_factor=[[3.0, 0.0], [0.0, 3.0]])
    rotated = [[0.0, 1.0], [-1.0, 0.0]]
    spec = InnovationSpec(dim=2, sigma_e=eye, sigma0_factor=rotated)
    assert_allclose(spec.factor() @ spec.factor().T, spec.covariance(), atol=1e-12)


# VAR


def test_var_path_is_deterministic():
    spec = ModelSpec(
        variant="VAR", innovations=InnovationSpec(dim=3, kind="scaled-sign"),
        coefficients=[[[0.3, 0.1, 0.0], [0.0, 0.2, 0.0], [0.0, 0.1, 0.4]]], burn_in=32,
    )
    a = simulate_var(spec, 50, seed=8)
    b = simulate_var(spec, 50, seed=8)
    assert_array_equal(a.data, b.data)
    assert a.data.shape == (3, 50)
    assert not a.data.flags.writeable


def test_var_with_zero_coefficients_is_iid():
    path = simulate_var(var1(0.0, p=2), 20_000, seed=1)
    assert np.all(np.abs(sample_autocov(path, 1).array) < 0.05)


def test_var_exact_initialisation_matches_lyapunov():
    path = simulate_var(var1(0.6, p=4), 20_000, seed=2)
    assert_allclose(sample_autocov(path, 0).array, np.eye(4) / 0.64, atol=0.15)


def test_var_lag_one_autocovariance_orientation():
    a = [[0.5, 0.3], [0.0, 0.4]]
    spec = ModelSpec(variant="VAR", innovations=InnovationSpec(dim=2), coefficients=[a])
    path = simulate_var(spec, 20_000, seed=4)
    sigma0 = stationary_var1_covariance(a, np.eye(2))
    for m in (0, 1, 2):
        assert_allclose(sample_autocov(path, m).array, var1_autocovariance(a, sigma0, m).array, atol=0.08)


def test_var_order_two_uses_burn_in():
    spec = ModelSpec(variant="VAR", innovations=InnovationSpec(dim=2), coefficient_scales=[0.5, 0.3], burn_in=200)
    path = simulate_var(spec, 30_000, seed=5)
    gamma0 = 0.7 / (1.3 * (0.49 - 0.25))
    assert_allclose(np.diag(sample_autocov(path, 0).array), [gamma0, gamma0], rtol=0.1)


def test_simulate_checks_variant():
    with pytest.raises(InputError):
        simulate_var(banna(), 10, seed=0)
    with pytest.raises(InputError):
        simulate_banna(var1(0.2), 10, seed=0)
    with pytest.raises(InputError):
        simulate_arch(var1(0.2), 10, seed=0)
    with pytest.raises(InputError):
        simulate(var1(0.2), 0, seed=0)


# 标量调制模型


def test_banna_latent_chain_is_bounded():
    spec = banna(a_w=0.9, p=3)
    for seed in range(5):
        path = simulate_banna(spec, 500, seed)
        assert np.max(np.abs(path.latent)) <= spec.kappa_w
        assert path.latent.shape == (500,)


def test_banna_independent_latent_has_no_lag_one_covariance():
    path = simulate_banna(banna(a_w=0.0, p=2), 20_000, seed=3)
    assert np.all(np.abs(sample_autocov(path, 1).array) < 0.02)


def test_stationary_w_variance_matches_long_chain():
    path = simulate_banna(banna(a_w=0.5, p=1), 50_000, seed=6)
    assert np.var(path.latent) == pytest.approx(stationary_w_variance(0.5, 1.0), abs=0.01)
    assert stationary_w_variance(0.5, 1.0) == pytest.approx(1.0 / 9.0)


def test_banna_coupled_latent_contracts_at_rate_a():
    pair = simulate_coupled(banna(a_w=0.5, p=2), j=10, n=30, seed=9)
    diff = np.abs(pair.original.latent - pair.coupled.latent)
    assert_allclose(diff[11:] / diff[10:-1], 0.5, rtol=1e-8)


def test_banna_matrices_are_bounded_and_symmetric():
    xs = simulate_banna_matrices(banna(a_w=0.5, p=2), 200, seed=1, bound_m=2.0)
    assert xs.shape == (200, 2, 2)
    assert_allclose(xs, np.transpose(xs, (0, 2, 1)))
    norms = np.abs(np.linalg.eigvalsh(xs)).max(axis=1)
    assert np.all(norms <= 2.0 + 1e-12)
    with pytest.raises(DomainError):
        simulate_banna_matrices(banna(), 10, seed=1, bound_m=0.0)


# ARCH


def test_arch_without_feedback_is_iid():
    spec = ModelSpec(variant="ARCH", innovations=InnovationSpec(dim=3), burn_in=0)
    iid = ModelSpec(variant="VAR", innovations=InnovationSpec(dim=3))
    assert_array_equal(simulate_arch(spec, 40, seed=12).data, simulate_var(iid, 40, seed=12).data)


def test_arch_volatility_lipschitz_and_bounded(rng):
    spec = arch(scale=0.4, a2=0.3, p=3)
    gain = 0.3 / (np.sqrt(8.0 / 3.0) * np.sqrt(3.0))
    for _ in range(10_000):
        u, v = rng.standard_normal(3) * 3, rng.standard_normal(3) * 3
        diff = np.linalg.norm(arch_volatility(spec, u) - arch_volatility(spec, v), 2)
        assert diff <= gain * np.linalg.norm(u - v) + 1e-12
        assert np.linalg.norm(arch_volatility(spec, u), 2) <= spec.sigma_base + gain + 1e-12


def test_arch_coupling_contracts():
    spec = arch(scale=0.4, a2=0.3, p=2)
    j, lags = 5, 6
    dists = np.array([simulate_coupled(spec, j, j + lags, seed).distances() for seed in range(400)])
    means = dists.mean(axis=0)
    for k in range(1, lags + 1):
        assert means[j + k - 1] <= 0.7 ** k * means[j - 1] * 1.2


# 耦合


def test_coupling_with_zero_coefficients_is_exact():
    pair = simulate_coupled(var1(0.0, p=3), j=4, n=12, seed=2)
    d = pair.distances()
    assert np.all(d[4:] == 0.0)
    assert np.all(d[:4] > 0.0)


def test_var_coupling_contracts_exactly():
    j = 6
    pair = simulate_coupled(var1(0.6, p=4), j=j, n=j + 15, seed=3)
    d = pair.distances()
    assert_allclose(d[j:] / d[j - 1:-1], 0.6, rtol=1e-9)


def test_coupled_innovations_are_shared_after_split():
    spec = var1(0.0, p=2, burn_in=16)
    pair = simulate_coupled(spec, j=3, n=8, seed=21)
    assert_array_equal(pair.original.data[:, 3:], pair.coupled.data[:, 3:])
    assert pair.split_index == 3


@pytest.mark.parametrize("j", [10, 11])
def test_coupling_split_must_precede_end(j):
    with pytest.raises(InputError):
        simulate_coupled(var1(0.5), j=j, n=10, seed=0)


def test_coupled_path_has_the_same_marginal():
    spec = var1(0.6, p=2)
    n = 10
    pairs = [simulate_coupled(spec, j=2, n=n, seed=seed) for seed in range(200)]
    original = [p.original.data[0, n - 1] for p in pairs]
    coupled = [p.coupled.data[0, n - 1] for p in pairs]
    assert ks_2samp(original, coupled).pvalue > 1e-3
