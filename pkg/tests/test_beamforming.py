import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nfcsim import beamforming as bf
from nfcsim.capacity import NumericalError
from nfcsim.channel import Model, cap_gain, spd_channel
from nfcsim.geometry import Layout, UserPose, build_geometry
from nfcsim.wavenumber import dictionary, from_wavenumber, wavenumber_support

LAM = 0.0107


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_problem(seed, M=16, K=3, P=10.0, weights=None):
    rng = np.random.default_rng(seed)
    H = crandn(rng, M, K)
    w = rng.uniform(0.2, 2.0, K) if weights is None else weights
    return bf.WsrProblem(H, w, rng.uniform(0.5, 2.0, K), P)


def chirp_magnitude(x):
    re = integrate.quad(lambda t: np.cos(x * t * t), -0.5, 0.5, limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    im = integrate.quad(lambda t: np.sin(x * t * t), -0.5, 0.5, limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    return np.hypot(re, im)


# ------------------------------------------------------------------ rates and matched filter


def test_matched_filter_single_user_rate():
    rng = np.random.default_rng(0)
    h = crandn(rng, 8)
    mf = bf.matched_filter(h, 3.0, sigma2=0.5)
    assert mf.rates[0] == pytest.approx(np.log2(1 + 3.0 * np.linalg.norm(h) ** 2 / 0.5), rel=1e-14)
    assert mf.powers.sum() == pytest.approx(3.0)


def test_matched_filter_orthogonal_users_no_interference():
    H = np.eye(4)[:, :2] * np.array([1.0, 2.0j])
    mf = bf.matched_filter(H, 4.0, [0.25, 0.75])
    G = bf.cross_gains(H, mf.vectors)
    assert G[0, 1] == 0 and G[1, 0] == 0
    assert mf.rates == pytest.approx([np.log2(2), np.log2(1 + 3 * 4)])


def test_matched_filter_validation():
    with pytest.raises(ValueError):
        bf.matched_filter(np.zeros((3, 1)), 1.0)
    with pytest.raises(ValueError):
        bf.matched_filter(np.ones((3, 2)), 1.0, [0.7, 0.7])


def test_near_field_focusing_beats_far_field_for_codirectional_users():
    g = build_geometry(Layout.ULA, 512, 1, d=LAM / 2, A=LAM**2 / (4 * np.pi))
    users = [UserPose(10.0, np.pi / 2), UserPose(15.0, np.pi / 2)]
    P = 1e6
    near = np.column_stack([spd_channel(g, u, LAM, Model.EXACT).entries for u in users])
    far = np.column_stack([spd_channel(g, u, LAM, Model.FAR).entries for u in users])
    sinr_near = bf.sinr(near, bf.matched_filter(near, P).vectors, 1.0)
    sinr_far = bf.sinr(far, bf.matched_filter(far, P).vectors, 1.0)
    assert np.all(sinr_near > sinr_far)


def test_wsr_eval_basics():
    rng = np.random.default_rng(1)
    H = crandn(rng, 5, 2)
    assert bf.wsr_eval(H, np.zeros((5, 2)), 1.0, 1.0) == 0
    mf = bf.matched_filter(H[:, :1], 2.0)
    assert bf.wsr_eval(H[:, :1], mf.vectors, 1.5, 1.0) == pytest.approx(1.5 * mf.rates[0])
    with pytest.raises(ValueError):
        bf.wsr_eval(H, np.zeros((4, 2)), 1.0, 1.0)


# ------------------------------------------------------------------ g(x) and interference


def test_g_function_limits():
    assert bf.g_function(0.0) == 1.0
    assert bf.g_function(1e-9) == pytest.approx(1.0, abs=1e-12)
    assert bf.g_function(15.0) == pytest.approx(0.5, abs=0.02)
    assert bf.g_function(40.0) == pytest.approx(chirp_magnitude(40.0), abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(-300, 300))
def test_g_function_matches_chirp_integral(x):
    assert bf.g_function(x) == pytest.approx(chirp_magnitude(x), abs=1e-9)
    assert bf.g_function(-x) == pytest.approx(bf.g_function(x), abs=1e-14)


def test_interference_identity_point():
    for method in ("EXACT_SUM", "ERF"):
        assert bf.interference(10.0, 1.0, 0.0, 0.0, 128, LAM / 2, LAM, method) == pytest.approx(1.0, abs=1e-12)


def test_interference_erf_reduces_to_g():
    M, d, r, th = 256, LAM / 2, 6.0, np.pi / 2
    for dr in (0.5, 2.0, -1.0):
        _, b = bf._fresnel_coeffs(r, th, dr, 0.0, d, LAM)
        assert bf.interference(r, th, dr, 0.0, M, d, LAM, "ERF") == pytest.approx(bf.g_function(M**2 * b), abs=1e-12)


def test_interference_angle_sweep_exact_vs_erf():
    dth = np.linspace(-0.05, 0.05, 201)
    args = (10.0, np.pi / 3, 0.0, dth, 256, LAM / 2, LAM)
    gap = np.abs(bf.interference(*args, method="EXACT_SUM") - bf.interference(*args, method="ERF"))
    assert gap.max() < 0.05


@settings(max_examples=60, deadline=None)
@given(st.floats(2.0, 50.0), st.floats(1e-4, 0.3), st.integers(16, 512))
def test_interference_symmetric_at_broadside(r, dth, M):
    a = bf.interference(r, np.pi / 2, 0.0, dth, M, LAM / 2, LAM)
    b = bf.interference(r, np.pi / 2, 0.0, -dth, M, LAM / 2, LAM)
    assert a == pytest.approx(b, abs=1e-10)
    assert 0 <= a <= 1 + 1e-12


def test_interference_rejects_nonpositive_range():
    with pytest.raises(ValueError):
        bf.interference(5.0, 1.0, -5.0, 0.0, 16, LAM / 2, LAM)


def test_rdma_region_branches():
    M, d = 256, LAM / 2
    eta = bf.rdma_eta(np.pi / 2, M, d, LAM)
    r = 0.1 * eta
    reg = bf.rdma_region(r, np.pi / 2, M, d, LAM)
    assert reg.lower == pytest.approx(-(r**2) / (eta + r))
    assert reg.upper == pytest.approx(r**2 / (eta - r))
    assert reg.is_finite and reg.eta == pytest.approx(eta)
    far = bf.rdma_region(2 * eta, np.pi / 2, M, d, LAM)
    assert far.upper == np.inf and not far.is_finite


def test_rdma_threshold_is_tenth_of_rayleigh():
    M, d, th = 256, LAM / 2, 1.1
    D = M * d
    rayleigh = 2 * D**2 * np.sin(th) ** 2 / LAM
    eta = bf.rdma_eta(th, M, d, LAM)
    assert abs(eta - rayleigh / 10) / rayleigh < 0.04
    assert (np.pi / 15) / (2 / 10) == pytest.approx(1.0, abs=0.05)


def test_rdma_region_errors():
    for th in (0.0, np.pi):
        with pytest.raises(ValueError):
            bf.rdma_region(5.0, th, 64, LAM / 2, LAM)
    with pytest.raises(ValueError):
        bf.RdmaRegion(0.5, 1.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(128, 512), st.floats(np.pi / 4, 3 * np.pi / 4), st.floats(0.05, 0.5))
def test_three_db_endpoints(M, theta, frac):
    d = LAM / 2
    eta = bf.rdma_eta(theta, M, d, LAM)
    r = max(frac * eta, 2 * M * d)
    reg = bf.rdma_region(r, theta, M, d, LAM)
    for dr in (reg.lower, reg.upper):
        if np.isfinite(dr):
            assert 0.4 <= bf.interference(r, theta, dr, 0.0, M, d, LAM) <= 0.6


# ------------------------------------------------------------------ WMMSE


def test_wmmse_single_user_is_mrt():
    prob = random_problem(3, M=12, K=1, P=7.0)
    h = prob.channels[:, 0]
    for method in bf.Method:
        sol = bf.wmmse(prob, method)
        expected = prob.weights[0] * np.log2(1 + 7.0 * np.linalg.norm(h) ** 2 / prob.sigma2[0])
        assert sol.wsr == pytest.approx(expected, abs=1e-8)
        assert sol.power == pytest.approx(7.0, rel=1e-12)


def test_wmmse_orthogonal_equal_gain_water_fills():
    H = np.zeros((6, 2), dtype=complex)
    H[1, 0] = 1.5
    H[4, 1] = 1.5j
    sol = bf.wmmse(bf.WsrProblem(H, 1.0, 1.0, 4.0))
    assert sol.wsr == pytest.approx(2 * np.log2(1 + 2.0 * 2.25), abs=1e-6)


def test_wmmse_methods_agree():
    prob = random_problem(11, M=64, K=4, P=100.0)
    inv = bf.wmmse(prob, "INVERSE", tol=1e-12, max_iter=20000)
    grad = bf.wmmse(prob, "GRADIENT", tol=1e-12, max_iter=20000)
    assert inv.converged and grad.converged
    assert abs(inv.wsr - grad.wsr) < 1e-4


def test_gradient_span_path_matches_full_path():
    prob = random_problem(4, M=40, K=5, P=30.0)
    start = bf.matched_filter(prob.channels, prob.P).vectors
    fast = bf.wmmse(prob, "GRADIENT", max_iter=40)
    full = bf.wmmse(prob, "GRADIENT", max_iter=40, init=start)
    np.testing.assert_allclose(fast.trajectory, full.trajectory, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(bf.Method)), st.floats(0.1, 1e3))
def test_wmmse_monotone_and_full_power(seed, method, P):
    prob = random_problem(seed, M=8, K=3, P=P)
    sol = bf.wmmse(prob, method, max_iter=200)
    assert np.all(np.diff(sol.trajectory) >= -1e-9)
    assert sol.power == pytest.approx(P, rel=1e-8)
    assert sol.wsr == pytest.approx(bf.wsr_eval(prob.channels, sol.beamformers, prob.weights, prob.sigma2), abs=1e-12)


def mse_objective(prob, Wb, u, v):
    # sum_k w_k u_k e_k with the scale-free MSE and receivers fixed
    H = prob.channels
    Q = H.conj().T @ Wb
    noise = np.sum(np.abs(Wb) ** 2) / prob.P * prob.sigma2
    total = 0.0
    for k in range(prob.K):
        e = (abs(1 - np.conj(v[k]) * Q[k, k]) ** 2
             + abs(v[k]) ** 2 * (np.sum(np.abs(Q[k]) ** 2) - abs(Q[k, k]) ** 2)
             + abs(v[k]) ** 2 * noise[k])
        total += prob.weights[k] * u[k] * e
    return total


def receivers(prob, Wb):
    H = prob.channels
    Q = H.conj().T @ Wb
    T = np.sum(np.abs(Q) ** 2, axis=1) + prob.sigma2 / prob.P * np.sum(np.abs(Wb) ** 2)
    s = np.abs(np.diag(Q)) ** 2
    return T / (T - s), np.diag(Q) / T


@pytest.mark.parametrize("seed", range(5))
def test_quadratic_gradient_matches_finite_differences(seed):
    prob = random_problem(seed, M=6, K=3, P=5.0)
    rng = np.random.default_rng(seed + 100)
    at = crandn(rng, 6, 3)
    u, v = receivers(prob, at)
    A, B = bf.wmmse_quadratic(prob, at)
    grad = A @ at - B
    point = crandn(rng, 6, 3)
    grad_point = A @ point - B
    h = 1e-6
    for i in range(6):
        for j in range(3):
            E = np.zeros((6, 3), dtype=complex)
            E[i, j] = 1
            fd_re = (mse_objective(prob, point + h * E, u, v) - mse_objective(prob, point - h * E, u, v)) / (2 * h)
            fd_im = (mse_objective(prob, point + 1j * h * E, u, v) - mse_objective(prob, point - 1j * h * E, u, v)) / (2 * h)
            fd = complex(fd_re, fd_im) / 2
            assert fd == pytest.approx(grad_point[i, j], rel=1e-5, abs=1e-7)
    assert np.isfinite(grad).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_optimal_step_is_line_minimum(seed):
    prob = random_problem(seed, M=6, K=3, P=5.0)
    rng = np.random.default_rng(seed)
    Wb = crandn(rng, 6, 3)
    A, B = bf.wmmse_quadratic(prob, Wb)

    def g(W):
        return np.vdot(W, A @ W).real - 2 * np.vdot(B, W).real

    Psi = A @ Wb - B
    step = bf.optimal_step(A, Psi)
    best = g(Wb - step * Psi)
    scale = 1e-12 * max(1.0, abs(best))
    assert best <= g(Wb - 0.5 * step * Psi) + scale
    assert best <= g(Wb - 2.0 * step * Psi) + scale
    assert best <= g(Wb) + scale


def test_wmmse_errors():
    with pytest.raises(ValueError):
        bf.wmmse(bf.WsrProblem(np.zeros((3, 2)), 1.0, 1.0, 1.0))
    H = np.ones((3, 2)) * 1e200
    with np.errstate(all="ignore"), pytest.raises(NumericalError, match="iteration"):
        bf.wmmse(bf.WsrProblem(H, 1.0, 1.0, 1.0), "GRADIENT")


@pytest.mark.parametrize("kwargs", [
    dict(P=0.0), dict(weights=[0.0, 0.0]), dict(weights=[-1.0, 1.0]), dict(sigma2=0.0),
])
def test_problem_validation(kwargs):
    base = dict(channels=np.ones((3, 2)), weights=1.0, sigma2=1.0, P=1.0)
    with pytest.raises(ValueError):
        bf.WsrProblem(**{**base, **kwargs})


# ------------------------------------------------------------------ wavenumber domain


def ula_basis(M=256):
    g = build_geometry(Layout.ULA, M, 1, d=LAM / 2)
    return dictionary(g, wavenumber_support(M * LAM / 2, 0.0, LAM))


def sparse_disjoint_coeffs(rng, n, K, per_user=4):
    picks = rng.choice(n, size=K * per_user, replace=False).reshape(K, per_user)
    C = np.zeros((n, K), dtype=complex)
    for k in range(K):
        C[picks[k], k] = crandn(rng, per_user) * 3
    return C


def test_wavenumber_matches_spatial_solve():
    basis = ula_basis()
    rng = np.random.default_rng(21)
    C = crandn(rng, basis.n, 4)
    H = from_wavenumber(C, basis)
    spatial = bf.wmmse(bf.WsrProblem(H, 1.0, 1.0, 10.0), tol=1e-12)
    wave = bf.wavenumber_wmmse(bf.WsrProblem(C, 1.0, 1.0, 10.0, bf.Domain.WAVENUMBER),
                               restrict_support=False, tol=1e-12)
    assert abs(spatial.wsr - wave.wsr) < 1e-6
    W_spatial = basis.matrix.conj() @ wave.beamformers
    assert bf.wsr_eval(H, W_spatial, 1.0, 1.0) == pytest.approx(wave.wsr, abs=1e-9)


def test_support_restriction_lossless_on_disjoint_sparse_channels():
    rng = np.random.default_rng(5)
    C = sparse_disjoint_coeffs(rng, 256, 4)
    prob = bf.WsrProblem(C, [1.0, 0.5, 2.0, 1.0], 1.0, 20.0, bf.Domain.WAVENUMBER)
    full = bf.wavenumber_wmmse(prob, restrict_support=False, tol=1e-12)
    restricted = bf.wavenumber_wmmse(prob, restrict_support=True, tol=1e-12)
    assert abs(full.wsr - restricted.wsr) < 1e-8
    mask = bf.support_mask(C)
    assert np.all(restricted.beamformers[~mask] == 0)


def test_single_entry_supports_water_fill():
    C = np.zeros((10, 3), dtype=complex)
    gains = np.array([2.0, 1.0, 0.3])
    for k, idx in enumerate((1, 4, 7)):
        C[idx, k] = np.sqrt(gains[k])
    P = 3.0
    sol = bf.wavenumber_wmmse(bf.WsrProblem(C, 1.0, 1.0, P, bf.Domain.WAVENUMBER), tol=1e-13, max_iter=10000)
    # interference-free water-filling oracle by bisection on the water level
    lo, hi = 0.0, P + 10
    for _ in range(200):
        mu = (lo + hi) / 2
        p = np.maximum(mu - 1 / gains, 0)
        lo, hi = (mu, hi) if p.sum() < P else (lo, mu)
    assert sol.wsr == pytest.approx(np.sum(np.log2(1 + p * gains)), abs=1e-6)


def test_wavenumber_wmmse_errors():
    C = np.eye(4)[:, :2]
    with pytest.raises(ValueError):
        bf.wavenumber_wmmse(bf.WsrProblem(C, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        bf.wavenumber_wmmse(bf.WsrProblem(C, 1.0, 1.0, 1.0, bf.Domain.WAVENUMBER), threshold=1.5)


# ------------------------------------------------------------------ robust l1


def test_robust_zero_penalty_equals_plain_solve():
    rng = np.random.default_rng(8)
    C = crandn(rng, 32, 3)
    plain = bf.wavenumber_wmmse(bf.WsrProblem(C, 1.0, 1.0, 10.0, bf.Domain.WAVENUMBER),
                                restrict_support=False, tol=1e-12, max_iter=20000)
    robust = bf.robust_l1(C, 1.0, 10.0, 1.0, rho0=0.0, tol=1e-12, max_iter=20000)
    assert robust.wsr == pytest.approx(plain.wsr, abs=1e-6)


def test_robust_large_penalty_switches_off():
    rng = np.random.default_rng(9)
    C = crandn(rng, 16, 2)
    sol = bf.robust_l1(C, 1.0, 10.0, 1.0, rho0=1e6)
    assert np.all(sol.beamformers == 0)
    assert sol.objective == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5))
def test_robust_objective_nondecreasing(seed, rho0):
    rng = np.random.default_rng(seed)
    C = crandn(rng, 16, 3)
    sol = bf.robust_l1(C, 1.0, 10.0, 1.0, rho0=rho0, max_iter=200)
    assert np.all(np.diff(sol.trajectory) >= -1e-9 * max(1.0, np.abs(sol.trajectory).max()))
    assert sol.power <= 10.0 * (1 + 1e-12)


def test_robust_rejects_negative_penalty():
    with pytest.raises(ValueError):
        bf.robust_l1(np.ones((3, 1)), 1.0, 1.0, 1.0, rho0=-1.0)


def test_channel_error_power():
    rng = np.random.default_rng(0)
    H = crandn(rng, 64, 2) * np.array([1.0, 3.0])
    errs = np.zeros(2)
    draws = 4000
    for _ in range(draws):
        errs += np.sum(np.abs(bf.perturb_channels(H, 0.1, rng) - H) ** 2, axis=0)
    np.testing.assert_allclose(errs / draws, 0.1 * np.sum(np.abs(H) ** 2, axis=0), rtol=0.02)


# ------------------------------------------------------------------ continuous apertures


def test_matched_current_power_and_received_power():
    ap = build_geometry(Layout.CAP_LINEAR, L_x=0.3)
    user = UserPose(1.5, 1.0)
    cur = bf.cap_matched_current(ap, user, LAM, 2.5)

    def density(x):
        return abs(cur(np.array([[x, 0.0, 0.0]]))[0]) ** 2

    radiated = integrate.quad(density, -0.15, 0.15, limit=400, epsrel=1e-11)[0]
    assert radiated == pytest.approx(2.5, rel=1e-8)
    assert 4 * np.pi * cur.norm2 == pytest.approx(cap_gain(ap, user, LAM), rel=1e-8)
    assert cur.received_power == pytest.approx(2.5 * cur.norm2)


def test_matched_current_large_aperture_captures_half():
    ap = build_geometry(Layout.CAP_PLANAR, L_x=40.0, L_z=40.0)
    cur = bf.cap_matched_current(ap, UserPose(0.2, np.pi / 2), 0.5, 1.0, rtol=1e-7)
    # half of the radiated power minus the square-aperture edge deficit
    expected = 0.5 - 2 * np.sqrt(2) * 0.2 / (np.pi * 40.0)
    assert 4 * np.pi * cur.norm2 == pytest.approx(expected, abs=1e-5)


def test_matched_current_errors():
    ap = build_geometry(Layout.CAP_LINEAR, L_x=0.3)
    with pytest.raises(ValueError):
        bf.cap_matched_current(ap, UserPose(1.0, 0.0), LAM, 1.0)


@pytest.mark.parametrize("layout", ["CAP_LINEAR", "CAP_PLANAR"])
def test_fourier_basis_orthonormal(layout):
    ap = build_geometry(layout, L_x=0.05, L_z=0.03)
    idx = bf.fourier_indices(ap, LAM)
    G = bf.fourier_gram(ap, idx)
    assert np.abs(G - np.eye(len(idx))).max() < 1e-8


def test_fourier_reduction_single_user_recovers_matched_filter():
    ap = build_geometry(Layout.CAP_LINEAR, L_x=0.2)
    user = UserPose(2.0, np.pi / 3)
    P = 1e4
    prob = bf.cap_fourier_reduce([user], ap, LAM, P=P)
    assert prob.domain is bf.Domain.CAP_FOURIER
    sol = bf.wmmse(prob)
    mf_rate = np.log2(1 + P * bf.cap_matched_current(ap, user, LAM, 1.0).norm2)
    assert sol.wsr == pytest.approx(mf_rate, rel=1e-2)
    assert sol.wsr <= mf_rate + 1e-12


def test_fourier_truncation_converged():
    ap = build_geometry(Layout.CAP_LINEAR, L_x=0.2)
    users = [UserPose(2.0, np.pi / 3), UserPose(3.0, np.pi / 2)]
    n = int(np.ceil(0.2 / LAM))
    base = bf.wmmse(bf.cap_fourier_reduce(users, ap, LAM, n, P=1e4), tol=1e-12)
    double = bf.wmmse(bf.cap_fourier_reduce(users, ap, LAM, 2 * n, P=1e4), tol=1e-12)
    assert abs(double.wsr - base.wsr) / base.wsr < 5e-3


def test_fourier_limits_must_be_positive():
    ap = build_geometry(Layout.CAP_LINEAR, L_x=0.2)
    with pytest.raises(ValueError):
        bf.fourier_indices(ap, LAM, 0)


# ------------------------------------------------------------------ serialisation


def test_solution_json_round_trip():
    sol = bf.wmmse(random_problem(2, M=5, K=2))
    back = bf.solution_from_json(bf.solution_to_json(sol))
    np.testing.assert_array_equal(back.beamformers, sol.beamformers)
    assert back.wsr == sol.wsr and back.iterations == sol.iterations
    np.testing.assert_array_equal(back.trajectory, sol.trajectory)
    robust = bf.robust_l1(random_problem(2, M=5, K=2).channels, 1.0, 10.0, 1.0)
    assert bf.solution_from_json(bf.solution_to_json(robust)).objective == robust.objective
