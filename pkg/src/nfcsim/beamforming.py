"""Multiuser downlink beamforming.

Channels are the columns of an M x K matrix H and user k receives
h_k^H sum_i w_i s_i + noise. Covers matched filtering, the interference
pattern of near-field beam focusing, weighted-sum-rate maximisation with
closed-form WMMSE updates, support-restricted solves in the wavenumber domain,
an l1-regularised variant for imperfect channel knowledge and current design
for continuous apertures through a Fourier basis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import erf

from .capacity import BeamformerSet, NumericalError
from .channel import Green, _aperture_integral, cap_green, quadratic_phase_integral
from .geometry import ArrayGeometry, Layout, UserPose, centered_offsets

SUPPORT_THRESHOLD = 1e-3


class Domain(str, Enum):
    SPATIAL = "SPATIAL"
    WAVENUMBER = "WAVENUMBER"
    CAP_FOURIER = "CAP_FOURIER"


class Method(str, Enum):
    INVERSE = "INVERSE"
    GRADIENT = "GRADIENT"


def _as_matrix(H):
    H = np.asarray(H, dtype=complex)
    if H.ndim == 1:
        H = H[:, None]
    if H.ndim != 2:
        raise ValueError("channels must be an M x K matrix")
    return H


@dataclass
class WsrProblem:
    channels: np.ndarray
    weights: np.ndarray
    sigma2: np.ndarray
    P: float
    domain: Domain = Domain.SPATIAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = _as_matrix(self.channels)
        K = self.channels.shape[1]
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (K,)).copy()
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (K,)).copy()
        self.domain = Domain(self.domain)
        if K < 1:
            raise ValueError("need at least one user")
        if not self.P > 0:
            raise ValueError("power budget must be positive")
        if np.any(self.weights < 0) or not np.any(self.weights > 0):
            raise ValueError("weights must be nonnegative and not all zero")
        if np.any(self.sigma2 <= 0):
            raise ValueError("noise powers must be positive")

    @property
    def K(self) -> int:
        return self.channels.shape[1]

    @property
    def M(self) -> int:
        return self.channels.shape[0]


@dataclass
class WsrSolution:
    beamformers: np.ndarray
    wsr: float
    per_user_rates: np.ndarray
    iterations: int
    trajectory: np.ndarray
    converged: bool = True
    objective: float | None = None

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.beamformers) ** 2))


@dataclass(frozen=True)
class RdmaRegion:
    "Range offsets [lower, upper] around a user where interference stays above one half."

    lower: float
    upper: float
    eta: float

    def __post_init__(self):
        if not (self.lower <= 0 <= self.upper and self.eta > 0):
            raise ValueError("invalid interference region")

    @property
    def is_finite(self) -> bool:
        return np.isfinite(self.upper)


# ---------------------------------------------------------------- rates


def cross_gains(H, W):
    "Matrix with entries h_k^H w_i (row k = receiver, column i = stream)."
    H, W = _as_matrix(H), _as_matrix(W)
    if H.shape != W.shape:
        raise ValueError(f"shape mismatch: channels {H.shape}, beamformers {W.shape}")
    return H.conj().T @ W


def sinr(H, W, sigma2):
    Q = np.abs(cross_gains(H, W)) ** 2
    sig = np.diag(Q)
    interf = Q.sum(axis=1) - sig
    return sig / (np.broadcast_to(sigma2, sig.shape) + interf)


def user_rates(H, W, sigma2):
    return np.log2(1 + sinr(H, W, sigma2))


def wsr_eval(H, W, weights, sigma2) -> float:
    "Weighted sum rate in bits/s/Hz."
    rates = user_rates(H, W, sigma2)
    return float(np.dot(np.broadcast_to(weights, rates.shape), rates))


# ---------------------------------------------------------------- matched filtering


def matched_filter(H, P: float, power_split=None, sigma2=1.0) -> BeamformerSet:
    "w_k = sqrt(P split_k) h_k / ||h_k||; rates are evaluated with noise power sigma2."
    H = _as_matrix(H)
    K = H.shape[1]
    norms = np.linalg.norm(H, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero channel")
    split = np.full(K, 1.0 / K) if power_split is None else np.asarray(power_split, dtype=float)
    if split.shape != (K,) or np.any(split < 0) or not np.isclose(split.sum(), 1.0):
        raise ValueError("power_split must lie on the simplex")
    W = H / norms * np.sqrt(P * split)
    return BeamformerSet(W, P * split, user_rates(H, W, sigma2), "MF")


# ---------------------------------------------------------------- interference of beam focusing


def g_function(x):
    """sqrt(pi/|x|) |erf(exp(-j pi/4) sqrt(x) / 2)|, with the limit 1 at x = 0.

    Equals the magnitude of the integral of exp(j x t^2) over t in [-1/2, 1/2].
    """
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape)
    big = np.abs(x) > 1e-12
    xs = x[big]
    z = np.exp(-0.25j * np.pi) * np.sqrt(xs + 0j) / 2
    out[big] = np.sqrt(np.pi / np.abs(xs)) * np.abs(erf(z))
    return out if out.ndim else float(out)


def _fresnel_coeffs(r_k, theta_k, dr, dtheta, d, lam):
    k = 2 * np.pi / lam
    theta_i, r_i = theta_k + dtheta, r_k + dr
    a = k * d * (np.cos(theta_i) - np.cos(theta_k))
    b = k * d**2 * (np.sin(theta_k) ** 2 / (2 * r_k) - np.sin(theta_i) ** 2 / (2 * r_i))
    return a, b


def interference(r_k, theta_k, dr, dtheta, M, d, lam, method="EXACT_SUM"):
    """Normalised correlation between focused beams for users (r_k, theta_k) and
    (r_k + dr, theta_k + dtheta) on an M-element linear array along x.

    EXACT_SUM uses true distances; ERF uses the second-order phase expansion
    and the chirp integral closed form.
    """
    r_i = np.asarray(r_k + dr, dtype=float)
    if np.any(np.asarray(r_k) <= 0) or np.any(r_i <= 0):
        raise ValueError("ranges must be positive")
    method = method.upper()
    if method == "EXACT_SUM":
        delta = centered_offsets(M) * d
        th_i = theta_k + np.asarray(dtheta, dtype=float)
        r_i, th_i = np.broadcast_arrays(r_i, th_i)
        dist_k = np.sqrt(r_k**2 + delta**2 - 2 * r_k * delta * np.cos(theta_k))
        dist_i = np.sqrt(r_i[..., None] ** 2 + delta**2 - 2 * r_i[..., None] * delta * np.cos(th_i[..., None]))
        total = np.exp(-2j * np.pi / lam * (dist_i - dist_k)).sum(axis=-1)
        out = np.abs(total) / M
        return out if out.ndim else float(out)
    if method == "ERF":
        a, b = _fresnel_coeffs(r_k, theta_k, dr, dtheta, d, lam)
        return quadratic_phase_integral(M * a, M**2 * b)
    raise ValueError(f"unknown method {method}")


def rdma_eta(theta_k, M, d, lam) -> float:
    return float(np.pi * M**2 * d**2 * np.sin(theta_k) ** 2 / (15 * lam))


def rdma_region(r_k, theta_k, M, d, lam) -> RdmaRegion:
    """Range interval around user k inside which |M^2 b| <= 15 (interference >= about 1/2)."""
    if min(r_k, M, d, lam) <= 0:
        raise ValueError("inputs must be positive")
    if not 0 < theta_k < np.pi or np.isclose(np.sin(theta_k), 0.0, atol=1e-12):
        raise ValueError("theta_k must lie strictly inside (0, pi)")
    eta = rdma_eta(theta_k, M, d, lam)
    lower = -(r_k**2) / (eta + r_k)
    upper = r_k**2 / (eta - r_k) if r_k < eta else np.inf
    return RdmaRegion(float(lower), float(upper), eta)


# ---------------------------------------------------------------- WMMSE


def _apply_A(alpha, H, c, X):
    return alpha * X + H @ (c[:, None] * (H.conj().T @ X))


def _check_finite(arr, it, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite {what} at iteration {it}")


def _wmmse_coeffs(H, Wb, weights, sigma2, P):
    "Receiver and weight updates for the scale-free objective; returns (c, alpha, q)."
    Q = H.conj().T @ Wb
    power = np.sum(np.abs(Wb) ** 2)
    T = np.sum(np.abs(Q) ** 2, axis=1) + sigma2 / P * power
    s = np.abs(np.diag(Q)) ** 2
    u = T / (T - s)
    v = np.diag(Q) / T
    c = weights * u * np.abs(v) ** 2
    alpha = float(np.sum(c * sigma2) / P)
    q = weights * u * v
    return c, alpha, q


def support_mask(H, threshold=SUPPORT_THRESHOLD):
    "Entries of each channel column above `threshold` times that column's peak magnitude."
    mag = np.abs(_as_matrix(H))
    peak = mag.max(axis=0)
    if np.any(peak == 0):
        raise ValueError("zero channel")
    mask = mag > threshold * peak
    return mask


def _initial(H, P, mask):
    Hm = H if mask is None else np.where(mask, H, 0)
    return matched_filter(Hm, P).vectors


def _scaled(Wb, P):
    return Wb * np.sqrt(P / np.sum(np.abs(Wb) ** 2))


def _gradient_in_span(X, gram, alpha, c, q, inner_tol, inner_max):
    """Exact-step gradient iterations on W_bar = H X carried out on the K x K coordinates.

    With Psi = H Y, the residual A W_bar - B and both traces of the step size
    only involve the Gram matrix H^H H.
    """
    b_norm2 = float(np.sum(np.abs(q) ** 2 * np.real(np.diag(gram))))
    for _ in range(inner_max):
        Y = alpha * X + c[:, None] * (gram @ X)
        Y[np.diag_indices_from(Y)] -= q
        GY = gram @ Y
        num = np.vdot(Y, GY).real
        if num <= inner_tol**2 * b_norm2:
            break
        den = np.vdot(GY, alpha * Y + c[:, None] * GY).real
        X = X - (num / den) * Y
    return X


def wmmse(problem: WsrProblem, method: Method | str = Method.INVERSE, tol=1e-10, max_iter=2000,
          mask=None, inner_tol=1e-6, inner_max=50, init=None, rtol=0.0) -> WsrSolution:
    """Weighted-sum-rate maximisation by block-coordinate WMMSE.

    The power constraint is absorbed by optimising an unscaled W_bar and
    rescaling to full power at the end. INVERSE solves the W_bar block in
    closed form, GRADIENT runs exact-line-search gradient steps on it. A
    boolean `mask` (M x K) confines each beamformer to its own support.
    Iteration stops once the WSR gain drops below tol + rtol * WSR.
    """
    method = Method(method)
    H, w, s2, P = problem.channels, problem.weights, problem.sigma2, problem.P
    if not np.any(H):
        raise ValueError("all channels are zero")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != H.shape:
            raise ValueError("mask must match the channel matrix")
        if not np.all(mask.any(axis=0)):
            raise ValueError("empty support for some user")
    Wb = _initial(H, P, mask) if init is None else np.array(init, dtype=complex)
    gram = H.conj().T @ H
    # without a mask and from the matched-filter start every iterate is H @ span
    span = None
    if method is Method.GRADIENT and mask is None and init is None:
        span = np.diag(np.sqrt(P / problem.K) / np.linalg.norm(H, axis=0)).astype(complex)
    traj = [wsr_eval(H, _scaled(Wb, P), w, s2)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        c, alpha, q = _wmmse_coeffs(H, Wb, w, s2, P)
        if method is Method.INVERSE:
            if mask is None:
                Wb = H @ np.linalg.solve(alpha * np.eye(problem.K) + c[:, None] * gram, np.diag(q))
            else:
                A = alpha * np.eye(problem.M) + (H * c) @ H.conj().T
                B = H * q
                Wb = np.zeros_like(H)
                for k in range(problem.K):
                    S = np.flatnonzero(mask[:, k])
                    Wb[S, k] = np.linalg.solve(A[np.ix_(S, S)], B[S, k])
        elif span is not None:
            span = _gradient_in_span(span, gram, alpha, c, q, inner_tol, inner_max)
            Wb = H @ span
        else:
            B = H * q
            for _ in range(inner_max):
                Psi = _apply_A(alpha, H, c, Wb) - B
                if mask is not None:
                    Psi = np.where(mask, Psi, 0)
                num = np.vdot(Psi, Psi).real
                if num <= (inner_tol * np.linalg.norm(B)) ** 2:
                    break
                den = np.vdot(Psi, _apply_A(alpha, H, c, Psi)).real
                Wb = Wb - (num / den) * Psi
        _check_finite(Wb, it, "beamformer")
        traj.append(wsr_eval(H, _scaled(Wb, P), w, s2))
        if abs(traj[-1] - traj[-2]) < tol + rtol * abs(traj[-1]):
            converged = True
            break
    W = _scaled(Wb, P)
    rates = user_rates(H, W, s2)
    return WsrSolution(W, float(np.dot(w, rates)), rates, it, np.array(traj), converged)


def wmmse_quadratic(problem: WsrProblem, Wb):
    """(A, B) of the W_bar subproblem at the current point, as dense matrices.

    The subproblem objective is tr(W^H A W) - 2 Re tr(B^H W), whose gradient
    with respect to conj(W) is A W - B.
    """
    H = problem.channels
    c, alpha, q = _wmmse_coeffs(H, np.asarray(Wb, dtype=complex), problem.weights, problem.sigma2, problem.P)
    A = alpha * np.eye(problem.M) + (H * c) @ H.conj().T
    return A, H * q


def optimal_step(A, Psi) -> float:
    "Exact line-search step tr(Psi^H Psi) / tr(Psi^H A Psi) for the quadratic subproblem."
    return float(np.vdot(Psi, Psi).real / np.vdot(Psi, A @ Psi).real)


def wavenumber_wmmse(problem: WsrProblem, restrict_support=True, threshold=SUPPORT_THRESHOLD,
                     method: Method | str = Method.INVERSE, **kw) -> WsrSolution:
    """WMMSE on wavenumber-domain coefficients.

    With orthonormal dictionary columns, spatial beamformers conj(Phi) w_a
    give h^H w = c^H w_a, so the problem keeps its form. Restricting each
    beamformer to its own channel support is lossless when supports are
    disjoint.
    """
    if problem.domain is not Domain.WAVENUMBER:
        raise ValueError("expected a WAVENUMBER-domain problem")
    mask = support_mask(problem.channels, threshold) if restrict_support else None
    return wmmse(problem, method, mask=mask, **kw)


# ---------------------------------------------------------------- robust l1


def perturb_channels(H, error_level, rng):
    """Noisy estimates h + dh with dh ~ CN(0, e ||h||^2 / M I) per column."""
    H = _as_matrix(H)
    M = H.shape[0]
    e = np.broadcast_to(np.asarray(error_level, dtype=float), (H.shape[1],))
    scale = np.sqrt(e * np.sum(np.abs(H) ** 2, axis=0) / M / 2)
    noise = rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
    return H + noise * scale


def _soft(X, thr):
    mag = np.abs(X)
    return np.where(mag > thr, (1 - thr / np.maximum(mag, 1e-300)) * X, 0)


def _project_ball(X, P):
    n2 = np.sum(np.abs(X) ** 2)
    return X if n2 <= P else X * np.sqrt(P / n2)


def robust_l1(H_est, weights, P, sigma2, rho0=0.01, tol=1e-9, max_iter=3000,
              inner_max=20, inner_tol=1e-9) -> WsrSolution:
    """Maximise WSR(W) - rho0 sum_k ||w_k||_1 / sqrt(P) subject to ||W||_F^2 <= P.

    Alternates the WMMSE receiver/weight updates (in bits) with proximal
    gradient steps (soft threshold, then projection on the power ball) on the
    resulting quadratic. The penalised objective is nondecreasing. Rates in
    the solution are evaluated on the channels supplied.
    """
    if rho0 < 0:
        raise ValueError("rho0 must be nonnegative")
    prob = WsrProblem(H_est, weights, sigma2, P)
    H, w, s2 = prob.channels, prob.weights, prob.sigma2
    pen = rho0 / np.sqrt(P)

    def objective(W):
        return wsr_eval(H, W, w, s2) - pen * np.sum(np.abs(W))

    W = _initial(H, P, None)
    traj = [objective(W)]
    best = (traj[0], W)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Q = H.conj().T @ W
        T = np.sum(np.abs(Q) ** 2, axis=1) + s2
        v = np.diag(Q) / T
        u = T / (T - np.abs(np.diag(Q)) ** 2)
        c = w * u * np.abs(v) ** 2 / np.log(2)
        B = H * (w * u * v / np.log(2))
        # A = H diag(c) H^H has the same nonzero spectrum as its K x K counterpart
        root = np.sqrt(c)
        lam = float(np.linalg.eigvalsh(root[:, None] * (H.conj().T @ H) * root[None, :])[-1])
        if lam <= 0:
            converged = True
            break
        thr = pen / (2 * lam)
        for _ in range(inner_max):
            grad = _apply_A(0.0, H, c, W) - B
            W_new = _project_ball(_soft(W - grad / lam, thr), P)
            step = np.linalg.norm(W_new - W)
            W = W_new
            if step <= inner_tol * np.sqrt(P):
                break
        _check_finite(W, it, "beamformer")
        traj.append(objective(W))
        if traj[-1] > best[0]:
            best = (traj[-1], W)
        if abs(traj[-1] - traj[-2]) < tol:
            converged = True
            break
    W = best[1] if not converged else W
    rates = user_rates(H, W, s2)
    return WsrSolution(W, float(np.dot(w, rates)), rates, it, np.array(traj), converged, objective(W))


# ---------------------------------------------------------------- continuous apertures


@dataclass(frozen=True)
class CapCurrent:
    """Matched-filter current sqrt(p) conj(h(r, s)) / sqrt(int |h|^2) on an aperture."""

    aperture: ArrayGeometry
    user: UserPose
    lam: float
    power: float
    norm2: float

    def __call__(self, s_points):
        h = cap_green(self.user.cartesian, s_points, self.lam, Green.PROJ)
        return np.sqrt(self.power) * np.conj(h) / np.sqrt(self.norm2)

    @property
    def received_power(self) -> float:
        "|int h(r, s) j(s) ds|^2 = p int |h|^2."
        return self.power * self.norm2


def cap_matched_current(aperture: ArrayGeometry, user: UserPose, lam: float, power: float, rtol=1e-9) -> CapCurrent:
    if user.Psi <= 0:
        raise ValueError("user must be in front of the aperture (Psi > 0)")
    if aperture.L_x <= 0 or (aperture.layout is Layout.CAP_PLANAR and aperture.L_z <= 0):
        raise ValueError("degenerate aperture")
    rp = user.cartesian
    norm2 = float(np.real(_aperture_integral(
        aperture, lambda pts: np.abs(cap_green(rp, pts, lam, Green.PROJ)) ** 2, rtol)))
    return CapCurrent(aperture, user, lam, float(power), norm2)


def fourier_indices(aperture: ArrayGeometry, lam: float, limits=None) -> np.ndarray:
    """Index set of the Fourier basis: |l_x| <= Lx (and |l_z| <= Lz for planar apertures).

    Default limits are ceil(L / lam) per axis.
    """
    if limits is None:
        limits = (int(np.ceil(aperture.L_x / lam)), int(np.ceil(aperture.L_z / lam)))
    limits = tuple(np.atleast_1d(limits)) + (0,)
    lx = int(limits[0])
    lz = int(limits[1]) if aperture.layout is Layout.CAP_PLANAR else 0
    if lx <= 0 or (aperture.layout is Layout.CAP_PLANAR and lz <= 0):
        raise ValueError("truncation limits must be positive")
    return np.array([(a, b) for a in range(-lx, lx + 1) for b in range(-lz, lz + 1)], dtype=int)


def fourier_basis(aperture: ArrayGeometry, indices, s_points) -> np.ndarray:
    "Orthonormal plane-wave functions on the aperture evaluated at points: (n_basis, N)."
    s = np.atleast_2d(s_points)
    idx = np.asarray(indices)
    if aperture.layout is Layout.CAP_LINEAR:
        phase = np.outer(idx[:, 0], s[:, 0]) / aperture.L_x
        return np.exp(2j * np.pi * phase) / np.sqrt(aperture.L_x)
    if aperture.layout is Layout.CAP_PLANAR:
        phase = np.outer(idx[:, 0], s[:, 0]) / aperture.L_x + np.outer(idx[:, 1], s[:, 2]) / aperture.L_z
        return np.exp(2j * np.pi * phase) / np.sqrt(aperture.L_x * aperture.L_z)
    raise ValueError("expected a continuous aperture")


def cap_fourier_reduce(users, aperture: ArrayGeometry, lam: float, basis_limits=None, P=1.0,
                       sigma2=1.0, weights=1.0, rtol=1e-9) -> WsrProblem:
    """Finite-dimensional problem for currents j(s) = sum_l w_l psi_l(s).

    The received signal int h(r_k, s) j(s) ds equals f_k^T w with
    f_k[l] = int h(r_k, s) psi_l(s) ds, so the returned channels are conj(f_k).
    Basis orthonormality makes ||w||^2 the radiated power.
    """
    idx = fourier_indices(aperture, lam, basis_limits)
    cols = []
    for user in users:
        rp = user.cartesian

        def f(pts, rp=rp):
            return cap_green(rp, pts, lam, Green.PROJ)[None, :] * fourier_basis(aperture, idx, pts)

        cols.append(np.conj(_aperture_integral(aperture, f, rtol)))
    return WsrProblem(np.column_stack(cols), weights, sigma2, P, Domain.CAP_FOURIER,
                      meta={"indices": idx.tolist()})


def fourier_gram(aperture: ArrayGeometry, indices, rtol=1e-10) -> np.ndarray:
    "Gram matrix of the Fourier basis by quadrature."
    idx = np.asarray(indices)

    def f(pts):
        psi = fourier_basis(aperture, idx, pts)
        return psi[:, None, :] * psi.conj()[None, :, :]

    return _aperture_integral(aperture, f, rtol)


# ---------------------------------------------------------------- serialisation


def _interleave(col):
    return np.column_stack([col.real, col.imag]).ravel().tolist()


def solution_to_json(sol: WsrSolution) -> str:
    doc = {
        "wsr": sol.wsr,
        "per_user_rates": sol.per_user_rates.tolist(),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "trajectory": sol.trajectory.tolist(),
        "beamformers": [_interleave(sol.beamformers[:, k]) for k in range(sol.beamformers.shape[1])],
    }
    if sol.objective is not None:
        doc["objective"] = sol.objective
    return json.dumps(doc, sort_keys=True)


def solution_from_json(text: str) -> WsrSolution:
    doc = json.loads(text)
    cols = [np.asarray(b[0::2]) + 1j * np.asarray(b[1::2]) for b in doc["beamformers"]]
    return WsrSolution(
        np.column_stack(cols), doc["wsr"], np.asarray(doc["per_user_rates"]), doc["iterations"],
        np.asarray(doc["trajectory"]), doc["converged"], doc.get("objective"),
    )
