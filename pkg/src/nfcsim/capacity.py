"""Sum-rate capacities and capacity regions of multiuser MAC and BC links.

Powers passed as `P_over_sigma2` or `p1`/`p2` in the two-user helpers are
transmit SNRs (noise normalised to one). All rates are in bits/s/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np


class NumericalError(RuntimeError):
    "Iterative solver failed to converge or produced non-finite values."

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class LinkStats:
    a1: float
    a2: float
    rho: float

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("channel gains must be nonnegative")
        if not -1e-12 <= self.rho <= 1 + 1e-12:
            raise ValueError("correlation must lie in [0, 1]")


@dataclass
class RateRegion:
    """Boundary polyline of a two-user rate region, ordered by increasing R1.

    `corners` maps a label to (R1, R2); `kind` is MAC_PENTAGON, BC_HULL or
    UPPER_RECT.
    """

    points: np.ndarray
    corners: dict = field(default_factory=dict)
    kind: str = "MAC_PENTAGON"

    def is_concave(self, tol=1e-12) -> bool:
        p = np.asarray(self.points)
        if np.any(p < -tol):
            return False
        for i in range(1, len(p) - 1):
            e1 = p[i] - p[i - 1]
            e2 = p[i + 1] - p[i]
            if e1[0] * e2[1] - e1[1] * e2[0] > tol * max(1.0, np.abs(p).max()):
                return False
        return True

    def contains(self, rate_pair, tol=1e-9) -> bool:
        "Whether (R1, R2) lies under the boundary."
        r1, r2 = rate_pair
        p = np.asarray(self.points)
        if r1 < -tol or r2 < -tol or r1 > p[:, 0].max() + tol:
            return False
        return r2 <= np.interp(r1, p[:, 0], p[:, 1], left=p[0, 1], right=0.0) + tol

    def area(self) -> float:
        p = np.asarray(self.points)
        x = np.concatenate([[0.0], p[:, 0], [p[-1, 0]]])
        y = np.concatenate([[p[0, 1]], p[:, 1], [0.0]])
        return float(np.trapezoid(y, x))

    def rows(self):
        "(R1, R2, is_corner) tuples for serialisation."
        corner_set = {tuple(np.round(v, 12)) for v in self.corners.values()}
        return [(float(a), float(b), int(tuple(np.round((a, b), 12)) in corner_set)) for a, b in self.points]


@dataclass
class BeamformerSet:
    "Per-user beamformers stored as the columns of `vectors`."

    vectors: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    order: str = ""


@dataclass
class DualCurrentCoeffs:
    """Currents j_k(s) = alpha[k, 0] conj(h(r_1, s)) + alpha[k, 1] conj(h(r_2, s)).

    h is the projected Green's function; `beta` holds the same coefficients on
    the normalised functions u_k = sqrt(4 pi) h(r_k, .).
    """

    alpha: np.ndarray
    beta: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    order: str


def _log2(x):
    return np.log2(x)


def link_stats(h1, h2) -> LinkStats:
    h1, h2 = np.asarray(h1), np.asarray(h2)
    a1 = float(np.vdot(h1, h1).real)
    a2 = float(np.vdot(h2, h2).real)
    if a1 == 0 or a2 == 0:
        raise ValueError("zero channel")
    rho = abs(np.vdot(h1, h2)) / np.sqrt(a1 * a2)
    return LinkStats(a1, a2, float(min(rho, 1.0)))


def _det_term(stats: LinkStats, p1, p2):
    return 1 + p1 * stats.a1 + p2 * stats.a2 + p1 * p2 * stats.a1 * stats.a2 * (1 - stats.rho**2)


def mac_sum_capacity(stats: LinkStats, P_over_sigma2: float) -> float:
    return float(_log2(_det_term(stats, P_over_sigma2, P_over_sigma2)))


def logdet2(matrix) -> float:
    "log2 det of a Hermitian positive-definite matrix via Cholesky."
    L = np.linalg.cholesky(matrix)
    return float(2 * np.sum(np.log2(np.abs(np.diag(L)))))


def mac_sum_capacity_k(H, P_vec, sigma2: float) -> float:
    """log2 det(I + sigma^-2 sum_k P_k h_k h_k^H) for channels in the columns of H.

    Evaluated on the K x K side by Sylvester's determinant identity.
    """
    H = np.atleast_2d(np.asarray(H))
    P = np.broadcast_to(np.asarray(P_vec, dtype=float), (H.shape[1],))
    S = np.sqrt(P)
    gram = (H.conj().T @ H) * np.outer(S, S) / sigma2
    return logdet2(np.eye(len(P)) + gram)


def mac_upper_bound(stats: LinkStats, P_over_sigma2: float) -> float:
    return float(_log2(1 + P_over_sigma2 * stats.a1) + _log2(1 + P_over_sigma2 * stats.a2))


def mac_corners(stats: LinkStats, p1: float, p2: float):
    """SIC corner points for transmit SNRs (p1, p2).

    Returns {"2->1": (R1, R2), "1->2": (R1, R2)}; "2->1" decodes user 2
    first, so user 1 sees no interference.
    """
    c = _log2(_det_term(stats, p1, p2))
    r1_clean = _log2(1 + p1 * stats.a1)
    r2_clean = _log2(1 + p2 * stats.a2)
    return {"2->1": (float(r1_clean), float(c - r1_clean)), "1->2": (float(c - r2_clean), float(r2_clean))}


def dpc_rate_pair(stats: LinkStats, p1: float, p2: float, order: str = "2->1"):
    """Per-user DPC rates for dual-MAC powers (p1, p2).

    Encoding order "2->1" leaves user 2 with its interference-free rate and
    gives user 1 the remainder of the dual-MAC sum rate; this is the dual-MAC
    corner reached by decoding user 1 first.
    """
    corners = mac_corners(stats, p1, p2)
    if order == "2->1":
        return corners["1->2"]
    if order == "1->2":
        return corners["2->1"]
    raise ValueError("order must be '2->1' or '1->2'")


def mac_region_two_user(stats: LinkStats, P_over_sigma2: float) -> RateRegion:
    P = P_over_sigma2
    corners = mac_corners(stats, P, P)
    p1 = corners["2->1"]
    p2 = corners["1->2"]
    pts = np.array([(0.0, p2[1]), p2, p1, (p1[0], 0.0)])
    return RateRegion(pts, {"P1 (2->1)": p1, "P2 (1->2)": p2}, "MAC_PENTAGON")


def mac_region_k(H, P_vec, sigma2: float, rate_tuple, max_users=20) -> bool:
    "Check every subset constraint of the K-user MAC capacity region."
    H = np.atleast_2d(np.asarray(H))
    K = H.shape[1]
    rates = np.asarray(rate_tuple, dtype=float)
    if len(rates) != K:
        raise ValueError("rate tuple length must equal the number of users")
    if K > max_users:
        raise ValueError(f"K = {K} exceeds the subset-enumeration guard ({max_users})")
    if np.any(rates < 0):
        return False
    P = np.broadcast_to(np.asarray(P_vec, dtype=float), (K,))
    for size in range(1, K + 1):
        for subset in combinations(range(K), size):
            idx = list(subset)
            bound = mac_sum_capacity_k(H[:, idx], P[idx], sigma2)
            if rates[idx].sum() > bound + 1e-12:
                return False
    return True


@dataclass(frozen=True)
class BcOptimum:
    capacity: float
    p1_star: float
    p2_star: float


def bc_sum_capacity(stats: LinkStats, P_over_sigma2: float) -> BcOptimum:
    """Two-user BC sum capacity through the dual MAC with sum-power P.

    The dual objective 1 + p1 a1 + p2 a2 + p1 p2 c, c = a1 a2 (1 - rho^2),
    is concave in p1 on [0, P] and maximised in closed form.
    """
    P = P_over_sigma2
    a1, a2 = stats.a1, stats.a2
    c = a1 * a2 * (1 - stats.rho**2)
    if c <= 0:
        if a1 == a2:
            p1 = P / 2
        else:
            p1 = P if a1 > a2 else 0.0
    else:
        p1 = float(np.clip(P / 2 + (a1 - a2) / (2 * c), 0.0, P))
    p2 = P - p1
    return BcOptimum(float(_log2(_det_term(stats, p1, p2))), p1, p2)


def _project_simplex(v, total):
    "Euclidean projection onto {p >= 0, sum p = total}."
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, len(v) + 1)
    cond = u - css / k > 0
    rho = k[cond][-1]
    tau = css[cond][-1] / rho
    return np.maximum(v - tau, 0.0)


def bc_sum_capacity_k(H, P: float, sigma2: float, tol=1e-8, max_iter=100000):
    """Sum capacity max_p log2 det(I + sum_k p_k/sigma2 h_k h_k^H) over the power simplex.

    Projected gradient ascent with Barzilai-Borwein steps and an Armijo
    safeguard; stops once the projected-gradient residual falls below `tol`.
    Returns (capacity, p).
    """
    H = np.atleast_2d(np.asarray(H))
    K = H.shape[1]
    G = (H.conj().T @ H) / sigma2

    def value(p):
        S = np.sqrt(p)
        return logdet2(np.eye(K) + G * np.outer(S, S))

    def grad(p):
        # d/dp_k log det(I + G diag(p)) = [G (I + diag(p) G)^-1]_kk
        X = np.linalg.solve((np.eye(K) + p[:, None] * G).T, G.T).T
        return np.real(np.diag(X)) / np.log(2)

    p = np.full(K, P / K)
    f, g = value(p), grad(p)
    step = 1.0 / max(np.abs(g).max(), 1e-300) * P
    best = (f, p.copy())
    for _ in range(max_iter):
        resid = np.linalg.norm(p - _project_simplex(p + g, P))
        if resid <= tol:
            return f, p
        while True:
            q = _project_simplex(p + step * g, P)
            fq = value(q)
            if fq >= f + 1e-4 * g @ (q - p) or np.linalg.norm(q - p) < 1e-15:
                break
            step *= 0.5
        gq = grad(q)
        s, y = q - p, gq - g
        p, f, g = q, fq, gq
        if f > best[0]:
            best = (f, p.copy())
        sy = s @ y
        step = (s @ s) / -sy if sy < 0 else step * 2
    raise NumericalError("BC power allocation did not converge", best=best)


def _as_pair(h1, h2):
    h1, h2 = np.asarray(h1, dtype=complex), np.asarray(h2, dtype=complex)
    if not np.any(h1) or not np.any(h2):
        raise ValueError("zero channel")
    return h1, h2


def _dpc_first_second(hf, hs, pf, ps, sigma2):
    "MMSE-direction beam for `hf` against `hs`, then the scaled MRT beam for `hs`."
    # B = I + (ps/sigma2) hs hs^H only shrinks the hs component of hf. Working
    # in that split keeps the leak accurate when the channels are nearly
    # collinear, where B^-1 amplifies rounding in the orthogonal part.
    hs2 = np.vdot(hs, hs).real
    along = np.vdot(hs, hf) / hs2
    perp = hf - along * hs
    shrink = 1.0 / (1 + ps / sigma2 * hs2)
    B_inv_h = perp + shrink * along * hs
    q = np.vdot(perp, perp).real + shrink * abs(along) ** 2 * hs2
    if pf > 0:
        wf = np.sqrt(pf) * B_inv_h / np.sqrt(q)
        leak = pf * (shrink * abs(along) * hs2) ** 2 / q
    else:
        wf, leak = np.zeros_like(hf), 0.0
    ws = np.sqrt(ps * (1 + leak / sigma2)) * hs / np.linalg.norm(hs)
    return wf, ws


def dpc_beamformers(h1, h2, p1: float, p2: float, sigma2: float, order: str = "2->1") -> BeamformerSet:
    """Dirty-paper beamformers recovered from the dual MAC with powers (p1, p2).

    Under order "2->1" user 1 is precoded against user 2 (MMSE direction)
    and user 2 uses an MRT beam scaled so that its SINR, with user 1 as
    noise, equals p2 a2 / sigma2. Rates are evaluated from the beamformers
    and match `dpc_rate_pair`.
    """
    h1, h2 = _as_pair(h1, h2)
    if p1 < 0 or p2 < 0:
        raise ValueError("powers must be nonnegative")
    if order == "2->1":
        w1, w2 = _dpc_first_second(h1, h2, p1, p2, sigma2)
        r1 = np.log2(1 + abs(np.vdot(h1, w1)) ** 2 / sigma2)
        r2 = np.log2(1 + abs(np.vdot(h2, w2)) ** 2 / (sigma2 + abs(np.vdot(h2, w1)) ** 2))
    elif order == "1->2":
        w2, w1 = _dpc_first_second(h2, h1, p2, p1, sigma2)
        r2 = np.log2(1 + abs(np.vdot(h2, w2)) ** 2 / sigma2)
        r1 = np.log2(1 + abs(np.vdot(h1, w1)) ** 2 / (sigma2 + abs(np.vdot(h1, w2)) ** 2))
    else:
        raise ValueError("order must be '2->1' or '1->2'")
    W = np.column_stack([w1, w2])
    powers = np.sum(np.abs(W) ** 2, axis=0)
    return BeamformerSet(W, powers, np.array([r1, r2]), order)


def _upper_hull(points):
    "Upper concave hull from the leftmost to the rightmost point (monotone chain)."
    pts = sorted(set(map(tuple, np.round(points, 15))), key=lambda t: (t[0], -t[1]))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    out = [hull[0]]
    for p in hull[1:]:
        if p[0] > out[-1][0]:
            out.append(p)
    return np.array(out)


def bc_region(stats: LinkStats, P_over_sigma2: float, grid_size: int = 128) -> RateRegion:
    """BC capacity region as the concave hull of dual-MAC corners over power splits."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    P = P_over_sigma2
    labelled = {}
    for p1 in np.linspace(0.0, P, grid_size):
        for tag in ("2->1", "1->2"):
            labelled[dpc_rate_pair(stats, p1, P - p1, tag)] = f"DPC {tag} p1={p1:.6g}"
    pts = np.array(list(labelled.keys()))
    hull = _upper_hull(np.vstack([pts, [[0.0, pts[:, 1].max()]], [[pts[:, 0].max(), 0.0]]]))
    lookup = {tuple(np.round(k, 15)): v for k, v in labelled.items()}
    corners = {lookup[tuple(p)]: tuple(p) for p in hull if tuple(p) in lookup}
    return RateRegion(hull, corners, "BC_HULL")


def bc_upper_bound(stats: LinkStats, P_over_sigma2: float) -> float:
    "Interference-free sum rate with two-channel water-filling."
    P = P_over_sigma2
    gains = np.array([stats.a1, stats.a2], dtype=float)
    p = water_filling(gains, P)
    return float(np.sum(np.log2(1 + p * gains)))


def water_filling(gains, total):
    "Maximise sum log(1 + p_k g_k) subject to sum p = total, p >= 0."
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    active = np.flatnonzero(gains > 0)
    if len(active) == 0:
        return p
    order = active[np.argsort(-gains[active])]
    inv = 1.0 / gains[order]
    for n in range(len(order), 0, -1):
        level = (total + inv[:n].sum()) / n
        if level > inv[n - 1]:
            p[order[:n]] = level - inv[:n]
            return p
    p[order[0]] = total
    return p


def cap_bc_dual_currents(a1bar, a2bar, rho_bar, rho_complex, p1, p2, order="2->1") -> DualCurrentCoeffs:
    """Continuous-aperture DPC currents in the span of the two users' Green's functions.

    With u_k = sqrt(4 pi) h(r_k, .), the Gram data are int |u_k|^2 = a_k and
    rho_complex = int conj(u_1) u_2, so |rho_complex| = rho_bar sqrt(a1 a2).
    Powers p1, p2 are transmit SNRs with unit noise.
    """
    if p1 < 0 or p2 < 0:
        raise ValueError("powers must be nonnegative")
    if not np.isclose(abs(rho_complex), rho_bar * np.sqrt(a1bar * a2bar), rtol=1e-9, atol=1e-15):
        raise ValueError("|rho_complex| must equal rho_bar * sqrt(a1 a2)")
    if a1bar * a2bar * (1 - rho_bar**2) <= 0 and p1 > 0 and p2 > 0:
        raise ValueError("degenerate span: the two Green's functions are collinear")

    gram = np.array([[a1bar, np.conj(rho_complex)], [rho_complex, a2bar]], dtype=complex)

    def received(k, beta):
        # int u_k (beta_1 conj(u_1) + beta_2 conj(u_2))
        return gram[k, 0] * beta[0] + gram[k, 1] * beta[1]

    def solve(first, second, pf, ps):
        # `first` is encoded last (interference-free); `second` sees it as noise
        a = [a1bar, a2bar]
        rho_fs = gram[second, first]  # int u_second conj(u_first)
        c = ps / (1 + ps * a[second])
        bf = np.zeros(2, dtype=complex)
        denom = a[first] - c * abs(rho_fs) ** 2
        if pf > 0:
            bf[first] = 1.0
            bf[second] = -c * rho_fs
            bf *= np.sqrt(pf) / np.sqrt(denom)
        leak = abs(received(second, bf)) ** 2
        bs = np.zeros(2, dtype=complex)
        bs[second] = np.sqrt(ps) * np.sqrt(1 + leak) / np.sqrt(a[second])
        return bf, bs

    if order == "2->1":
        b1, b2 = solve(0, 1, p1, p2)
        r1 = np.log2(1 + abs(received(0, b1)) ** 2)
        r2 = np.log2(1 + abs(received(1, b2)) ** 2 / (1 + abs(received(1, b1)) ** 2))
    elif order == "1->2":
        b2, b1 = solve(1, 0, p2, p1)
        r2 = np.log2(1 + abs(received(1, b2)) ** 2)
        r1 = np.log2(1 + abs(received(0, b1)) ** 2 / (1 + abs(received(0, b2)) ** 2))
    else:
        raise ValueError("order must be '2->1' or '1->2'")
    beta = np.vstack([b1, b2])
    powers = np.real(np.einsum("ki,ij,kj->k", beta.conj(), gram, beta))
    return DualCurrentCoeffs(beta * np.sqrt(4 * np.pi), beta, powers, np.array([r1, r2]), order)


def region_to_csv(region: RateRegion) -> str:
    "CSV text with one boundary point per row; corner rows carry is_corner = 1."
    lines = ["R1_bps_per_hz,R2_bps_per_hz,is_corner"]
    lines += [f"{a:.12g},{b:.12g},{c}" for a, b, c in region.rows()]
    return "\n".join(lines) + "\n"
