"""Named experiments that regenerate figure data series, plus the `nfcsim` CLI.

Every experiment is a pure function of its parameters, seed and trial count.
Sweep points and Monte Carlo trials may run on a thread pool; results are
assembled in index order so output bytes never depend on scheduling.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import beamforming as bf
from . import capacity as cap
from .channel import Model, cap_correlation, cap_gain, channel_gain, spd_channel
from .geometry import Layout, UserPose, build_geometry, wavelength
from .wavenumber import dictionary, to_wavenumber, wavenumber_support

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


@dataclass
class ResultTable:
    """Rectangular table; `columns` are (name, unit) pairs."""

    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        width = len(self.columns)
        if any(len(r) != width for r in self.rows):
            raise ValueError("ragged result table")

    def column(self, name):
        i = [c[0] for c in self.columns].index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        lines = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(self.metadata.items())]
        lines.append(",".join(f"{n} [{u}]" for n, u in self.columns))
        lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "columns": [{"name": n, "unit": u} for n, u in self.columns],
            "rows": [[_json_value(v) for v in row] for row in self.rows],
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _json_value(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer, bool, np.bool_)):
        return int(v)
    x = float(v)
    return float(f"{x:.12g}") if np.isfinite(x) else str(x)


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    trials: int | None = None
    threads: int = 1


def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _db(x):
    return 10.0 ** (x / 10.0)


def _trial_rngs(seed, trials):
    "Independent per-trial generators spawned from one SeedSequence."
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def _check_region(region: cap.RateRegion):
    if not region.is_concave(tol=1e-9):
        raise cap.NumericalError("rate region failed the concavity check")
    return region


# ------------------------------------------------------------------ SPD two-user setups


def _two_user_planar(p, sqrt_m, theta2, model):
    lam = p["wavelength"]
    d = lam / 2
    geom = build_geometry(Layout.UPA, sqrt_m, sqrt_m, d=d, A=lam**2 / (4 * np.pi), allow_even=True)
    u1 = UserPose(p["r1"], p["theta1"], p["phi1"])
    u2 = UserPose(p["r2"], theta2, p["phi2"])
    h1 = spd_channel(geom, u1, lam, model).entries
    h2 = spd_channel(geom, u2, lam, model).entries
    return cap.link_stats(h1, h2)


_TWO_USER_DEFAULTS = {
    "wavelength": 0.1256,
    "r1": 15.0, "theta1": np.pi / 6, "phi1": np.pi / 3,
    "r2": 20.0, "phi2": np.pi / 3,
    "theta2": [np.pi / 6, 5 * np.pi / 6],
    "snr_db": 30.0,
}


def fig4_projected_aperture(p, seed, trials, threads):
    lam = p["wavelength"]
    thetas = np.deg2rad(np.asarray(p["theta_deg"], dtype=float))
    jobs = [(M, th) for M in p["M"] for th in thetas]

    def point(job):
        M, th = job
        geom = build_geometry(Layout.ULA, 1, int(M), d=lam / 2, A=lam**2 / (4 * np.pi))
        user = UserPose(p["r"], th, np.pi / 2)
        ratio = channel_gain(spd_channel(geom, user, lam, Model.EXACT)) / channel_gain(
            spd_channel(geom, user, lam, Model.NOPROJ))
        return (int(M), float(th), ratio)

    return ResultTable([("M", "count"), ("theta", "rad"), ("gain_ratio_proj_over_noproj", "1")],
                       _pmap(point, jobs, threads))


def _sumrate_sweep(p, threads, evaluate):
    jobs = [(m, th) for th in p["theta2"] for m in p["sqrt_M"]]

    def point(job):
        m, th = job
        nf = _two_user_planar(p, int(m), th, Model.EXACT)
        ff = _two_user_planar(p, int(m), th, Model.FAR)
        P = _db(p["snr_db"])
        return (int(m) ** 2, float(th), *evaluate(nf, P), *evaluate(ff, P), nf.rho, ff.rho)

    return _pmap(point, jobs, threads)


_SUMRATE_COLUMNS = [
    ("M", "count"), ("theta2", "rad"),
    ("nf_capacity", "bit/s/Hz"), ("nf_upper_bound", "bit/s/Hz"),
    ("far_capacity", "bit/s/Hz"), ("far_upper_bound", "bit/s/Hz"),
    ("nf_correlation", "1"), ("far_correlation", "1"),
]


def fig7_mac_sumrate(p, seed, trials, threads):
    rows = _sumrate_sweep(p, threads, lambda s, P: (cap.mac_sum_capacity(s, P), cap.mac_upper_bound(s, P)))
    return ResultTable(_SUMRATE_COLUMNS, rows)


def fig10_bc_sumrate(p, seed, trials, threads):
    rows = _sumrate_sweep(p, threads, lambda s, P: (cap.bc_sum_capacity(s, P).capacity, cap.bc_upper_bound(s, P)))
    return ResultTable(_SUMRATE_COLUMNS, rows)


_REGION_COLUMNS = [("M", "count"), ("theta2", "rad"), ("model", "label"),
                   ("R1", "bit/s/Hz"), ("R2", "bit/s/Hz"), ("is_corner", "flag")]


def _region_sweep(p, threads, make_region):
    jobs = [(m, th, model) for th in p["theta2"] for m in p["sqrt_M"] for model in (Model.EXACT, Model.FAR)]

    def block(job):
        m, th, model = job
        stats = _two_user_planar(p, int(m), th, model)
        region = _check_region(make_region(stats, _db(p["snr_db"])))
        label = "NF" if model is Model.EXACT else "FAR"
        return [(int(m) ** 2, float(th), label, *row) for row in region.rows()]

    return [row for rows in _pmap(block, jobs, threads) for row in rows]


def fig9_mac_regions(p, seed, trials, threads):
    return ResultTable(_REGION_COLUMNS, _region_sweep(p, threads, cap.mac_region_two_user))


def fig12_bc_regions(p, seed, trials, threads):
    grid = int(p["grid_size"])
    return ResultTable(_REGION_COLUMNS, _region_sweep(p, threads, lambda s, P: cap.bc_region(s, P, grid)))


# ------------------------------------------------------------------ continuous apertures


def _cap_stats(p, side):
    lam = p["wavelength"]
    ap = build_geometry(Layout.CAP_PLANAR, L_x=side, L_z=side)
    u1 = UserPose(p["r1"], p["theta"], p["phi"])
    u2 = UserPose(p["r2"], p["theta"], p["phi"])
    a1 = cap_gain(ap, u1, lam, "CLOSED")
    a2 = cap_gain(ap, u2, lam, "CLOSED")
    rho = cap_correlation(ap, u1, u2, lam, "QUADRATURE", rtol=p["rtol"])
    return cap.LinkStats(a1, a2, rho)


def _spd_stats(p, count, xi):
    lam = p["wavelength"]
    d = lam / 2
    geom = build_geometry(Layout.UPA, count, count, d=d, A=xi * d * d, allow_even=True)
    u1 = UserPose(p["r1"], p["theta"], p["phi"])
    u2 = UserPose(p["r2"], p["theta"], p["phi"])
    return cap.link_stats(spd_channel(geom, u1, lam, Model.EXACT).entries,
                          spd_channel(geom, u2, lam, Model.EXACT).entries)


_CAP_COLUMNS = [("sweep", "label"), ("value", "1 or m^2"), ("array", "label"),
                ("R1", "bit/s/Hz"), ("R2", "bit/s/Hz"), ("is_corner", "flag")]


def _cap_blocks(p, threads, make_region, with_xi):
    P = _db(p["snr_db"])
    d = p["wavelength"] / 2
    jobs = []
    if with_xi:
        count = int(p["count_xi_sweep"])
        jobs.append(("xi", None, "CAP", count * d))
        jobs += [("xi", float(xi), "SPD", count) for xi in p["xi"]]
    jobs += [("area", float(s) ** 2, "CAP", float(s)) for s in p["side"]]

    def block(job):
        sweep, value, kind, size = job
        if kind == "CAP":
            stats = _cap_stats(p, size)
        else:
            stats = _spd_stats(p, size, value)
        region = _check_region(make_region(stats, P))
        v = (size**2 if value is None else value)
        return [(sweep, v, kind, *row) for row in region.rows()]

    return [row for rows in _pmap(block, jobs, threads) for row in rows]


_CAP_DEFAULTS = {
    "wavelength": 0.0107, "theta": np.pi / 6, "phi": np.pi / 3, "r1": 10.0, "r2": 20.0,
    "snr_db": 30.0, "rtol": 1e-7,
}


def fig13_cap_mac_regions(p, seed, trials, threads):
    return ResultTable(_CAP_COLUMNS, _cap_blocks(p, threads, cap.mac_region_two_user, True))


def fig_bc_cap_regions(p, seed, trials, threads):
    grid = int(p["grid_size"])
    return ResultTable(_CAP_COLUMNS, _cap_blocks(p, threads, lambda s, P: cap.bc_region(s, P, grid), False))


# ------------------------------------------------------------------ interference of beam focusing


def iui_angle(p, seed, trials, threads):
    dth = np.linspace(*p["dtheta_range"], int(p["points"]))
    args = (p["r"], p["theta"], 0.0, dth, int(p["M"]), p["wavelength"] / 2, p["wavelength"])
    exact = bf.interference(*args, method="EXACT_SUM")
    approx = bf.interference(*args, method="ERF")
    rows = [(float(a), float(b), float(c)) for a, b, c in zip(dth, exact, approx)]
    return ResultTable([("dtheta", "rad"), ("interference_exact", "1"), ("interference_erf", "1")], rows)


def g_of_x(p, seed, trials, threads):
    x = np.linspace(*p["x_range"], int(p["points"]))
    return ResultTable([("x", "1"), ("g", "1")], [(float(a), float(b)) for a, b in zip(x, bf.g_function(x))])


def iui_range(p, seed, trials, threads):
    lam, M, th = p["wavelength"], int(p["M"]), p["theta"]
    d = lam / 2
    rows = []
    for r in p["r"]:
        region = bf.rdma_region(r, th, M, d, lam)
        for frac in np.linspace(*p["dr_over_r"], int(p["points"])):
            dr = frac * r
            rows.append((float(r), float(dr), 0,
                         bf.interference(r, th, dr, 0.0, M, d, lam, "EXACT_SUM"),
                         bf.interference(r, th, dr, 0.0, M, d, lam, "ERF")))
        for kind, dr in ((-1, region.lower), (1, region.upper)):
            if np.isfinite(dr):
                rows.append((float(r), float(dr), kind,
                             bf.interference(r, th, dr, 0.0, M, d, lam, "EXACT_SUM"),
                             bf.interference(r, th, dr, 0.0, M, d, lam, "ERF")))
    return ResultTable([("r", "m"), ("dr", "m"), ("endpoint", "-1 lower/0 grid/1 upper"),
                        ("interference_exact", "1"), ("interference_erf", "1")], rows)


# ------------------------------------------------------------------ Monte Carlo beamforming


def _unit_gain(h):
    "Channel rescaled so that its entries have unit magnitude on average."
    return h / np.sqrt(np.mean(np.abs(h) ** 2))


def _fig16_trial(p, geom, lam, rng):
    K = int(p["users"])
    r = rng.uniform(*p["r_range"], K)
    th = np.deg2rad(rng.uniform(*p["theta_deg_range"], K))
    Hn, Hf = [], []
    for k in range(K):
        user = UserPose(r[k], th[k], np.pi / 2)
        near = spd_channel(geom, user, lam, Model.UPD).entries
        far = spd_channel(geom, user, lam, Model.FAR).entries
        scale = np.sqrt(np.mean(np.abs(near) ** 2))
        Hn.append(near / scale)
        Hf.append(far / scale)
    Hn, Hf = np.column_stack(Hn), np.column_stack(Hf)
    P = _db(p["snr_db"])
    opts = dict(tol=p["tol"], rtol=p["rtol"], max_iter=int(p["max_iter"]))
    near = bf.wmmse(bf.WsrProblem(Hn, 1.0, 1.0, P), p["method"], **opts)
    far = bf.wmmse(bf.WsrProblem(Hf, 1.0, 1.0, P), p["method"], **opts)
    return near.wsr, bf.wsr_eval(Hn, far.beamformers, 1.0, 1.0)


def montecarlo_wsr_cdf(scenario: dict, trials: int, seed: int, threads: int = 1, order=None):
    """Empirical CDFs of the near-field and far-field-designed WSR over random user drops.

    Far-field beamformers are designed on planar-wave channels and evaluated on
    the true near-field channels. Trials whose solver fails are excluded and
    counted. `order` permutes execution only; each trial keeps its own seed.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    p = {**_EXPERIMENTS["fig16_wsr_cdf"][1], **scenario}
    lam = wavelength(p["frequency_hz"])
    geom = build_geometry(Layout.ULA, int(p["M"]), 1, d=lam / 2)
    rngs = _trial_rngs(seed, trials)
    idx = list(range(trials)) if order is None else list(order)

    def run_one(i):
        try:
            return i, _fig16_trial(p, geom, lam, rngs[i])
        except (cap.NumericalError, np.linalg.LinAlgError):
            return i, None

    results = dict(_pmap(run_one, idx, threads))
    good = [results[i] for i in range(trials) if results[i] is not None]
    excluded = trials - len(good)
    if not good:
        raise cap.NumericalError("every trial failed")
    nf = np.sort([g[0] for g in good])
    ff = np.sort([g[1] for g in good])
    n = len(good)
    rows = [(i + 1, (i + 1) / n, nf[i], ff[i]) for i in range(n)]
    table = ResultTable([("rank", "index"), ("cdf", "1"), ("wsr_near_field", "bit/s/Hz"),
                         ("wsr_far_field_design", "bit/s/Hz")], rows)
    table.metadata["excluded_trials"] = excluded
    return table


def fig16_wsr_cdf(p, seed, trials, threads):
    if trials < 10:
        raise ConfigError("fig16_wsr_cdf needs at least 10 trials")
    return montecarlo_wsr_cdf(p, trials, seed, threads)


def fig17_uca_vs_ula(p, seed, trials, threads):
    lam, M = p["wavelength"], int(p["M"])
    D_a = (M - 1) * lam / 2
    A = lam**2 / (4 * np.pi)
    ula = build_geometry(Layout.ULA, M, 1, d=lam / 2, A=A)
    uca = build_geometry(Layout.UCA, M, D_a=D_a, A=A)
    per_user = _db(p["snr_db_per_user"])
    sigma2 = p["sigma2"]

    def point(th):
        users = [UserPose(r, th, np.pi / 2) for r in p["r"]]
        out = []
        for geom, model in ((ula, Model(p["ula_model"])), (uca, Model(p["uca_model"]))):
            H = np.column_stack([spd_channel(geom, u, lam, model).entries for u in users])
            K = H.shape[1]
            mf = bf.matched_filter(H, per_user * sigma2 * K, sigma2=sigma2)
            out.append(float(np.sum(mf.rates)))
        return (float(th), *out)

    rows = _pmap(point, np.deg2rad(np.asarray(p["theta_deg"], dtype=float)), threads)
    return ResultTable([("theta", "rad"), ("ula_sum_rate", "bit/s/Hz"), ("uca_sum_rate", "bit/s/Hz")], rows)


def _fig19_channels(p, geom, basis, lam, rng):
    K = int(p["users"])
    r = rng.uniform(*p["r_range"], K)
    th = np.deg2rad(rng.uniform(*p["theta_deg_range"], K))
    cols = []
    for k in range(K):
        h = spd_channel(geom, UserPose(r[k], th[k], np.pi / 2), lam, Model.UPD).entries
        cols.append(to_wavenumber(_unit_gain(h), basis))
    return np.column_stack(cols)


def robust_trial(p, geom, basis, lam, rng, error_level, rhos):
    "True-channel WSR of the non-robust solve and of the robust solve for each rho0."
    H = _fig19_channels(p, geom, basis, lam, rng)
    H_est = bf.perturb_channels(H, error_level, rng)
    P = _db(p["snr_db"])
    plain = bf.wavenumber_wmmse(bf.WsrProblem(H_est, 1.0, 1.0, P, bf.Domain.WAVENUMBER),
                                restrict_support=False, tol=p["tol"])
    base = bf.wsr_eval(H, plain.beamformers, 1.0, 1.0)
    robust = []
    for rho in rhos:
        sol = bf.robust_l1(H_est, 1.0, P, 1.0, rho0=rho, tol=p["tol"], max_iter=int(p["max_iter"]))
        robust.append(bf.wsr_eval(H, sol.beamformers, 1.0, 1.0))
    return base, robust


def fig19_setup(p):
    lam = wavelength(p["frequency_hz"])
    M = int(p["M"])
    geom = build_geometry(Layout.ULA, M, 1, d=lam / 2)
    basis = dictionary(geom, wavenumber_support(M * lam / 2, 0.0, lam))
    return geom, basis, lam


def fig19_robust_wsr(p, seed, trials, threads):
    geom, basis, lam = fig19_setup(p)
    rhos = [float(x) for x in p["rho0"]]
    rows = []
    for level_index, e in enumerate(p["error_levels"]):
        rngs = _trial_rngs([seed, level_index], trials)
        res = _pmap(lambda g: robust_trial(p, geom, basis, lam, g, e, rhos), rngs, threads)
        base = np.array([r[0] for r in res])
        rob = np.array([r[1] for r in res])
        for j, rho in enumerate(rhos):
            rows.append((float(e), rho, float(base.mean()), float(rob[:, j].mean()),
                         float(np.mean(rob[:, j] >= base))))
    return ResultTable([("error_level", "1"), ("rho0", "1"), ("wsr_non_robust", "bit/s/Hz"),
                        ("wsr_robust", "bit/s/Hz"), ("robust_win_fraction", "1")], rows)


# ------------------------------------------------------------------ registry

_EXPERIMENTS = {
    "fig4_projected_aperture": (fig4_projected_aperture, {
        "wavelength": 0.1256, "r": 10.0, "M": [64, 128, 256, 512],
        "theta_deg": list(range(5, 95, 5)),
    }),
    "fig7_mac_sumrate": (fig7_mac_sumrate, {**_TWO_USER_DEFAULTS, "sqrt_M": [8, 16, 32, 64, 128, 256, 512]}),
    "fig9_mac_regions": (fig9_mac_regions, {**_TWO_USER_DEFAULTS, "sqrt_M": [16, 64, 256]}),
    "fig10_bc_sumrate": (fig10_bc_sumrate, {**_TWO_USER_DEFAULTS, "sqrt_M": [8, 16, 32, 64, 128, 256, 512]}),
    "fig12_bc_regions": (fig12_bc_regions, {**_TWO_USER_DEFAULTS, "sqrt_M": [16, 64, 256], "grid_size": 128}),
    "fig13_cap_mac_regions": (fig13_cap_mac_regions, {
        **_CAP_DEFAULTS, "count_xi_sweep": 32, "xi": [0.1, 1 / np.pi, 0.6, 0.9],
        "side": [0.25, 0.5, 1.0, 2.0, 4.0],
    }),
    "fig_bc_cap_regions": (fig_bc_cap_regions, {**_CAP_DEFAULTS, "side": [0.25, 0.5, 1.0, 2.0, 4.0], "grid_size": 128}),
    "iui_angle": (iui_angle, {
        "wavelength": 0.0107, "M": 256, "r": 10.0, "theta": np.pi / 3,
        "dtheta_range": [-0.05, 0.05], "points": 201,
    }),
    "g_of_x": (g_of_x, {"x_range": [-100.0, 100.0], "points": 801}),
    "iui_range": (iui_range, {
        "wavelength": 0.0107, "M": 256, "theta": np.pi / 2, "r": [4.0, 8.0, 16.0],
        "dr_over_r": [-0.5, 2.0], "points": 251,
    }),
    "fig16_wsr_cdf": (fig16_wsr_cdf, {
        "frequency_hz": 28e9, "M": 512, "users": 20, "r_range": [10.0, 20.0],
        "theta_deg_range": [85.0, 95.0], "snr_db": 30.0, "method": "GRADIENT",
        "tol": 1e-6, "rtol": 1e-4, "max_iter": 200, "trials": 200,
    }),
    "fig17_uca_vs_ula": (fig17_uca_vs_ula, {
        "wavelength": 0.0107, "M": 256, "r": [20.0, 30.0], "sigma2": 1.0, "snr_db_per_user": 20.0,
        "theta_deg": list(range(10, 180, 10)), "ula_model": "EXACT", "uca_model": "NOPROJ",
    }),
    "fig19_robust_wsr": (fig19_robust_wsr, {
        "frequency_hz": 28e9, "M": 256, "users": 4, "r_range": [5.0, 20.0],
        "theta_deg_range": [60.0, 120.0], "snr_db": 20.0, "error_levels": [0.01, 0.05, 0.1],
        "rho0": [0.003, 0.01, 0.03], "tol": 1e-6, "max_iter": 300, "trials": 100,
    }),
}

EXPERIMENTS = tuple(_EXPERIMENTS)


def defaults(experiment: str) -> dict:
    if experiment not in _EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    return json.loads(json.dumps(_EXPERIMENTS[experiment][1]))


def _validate(params: dict, base: dict):
    unknown = sorted(set(params) - set(base))
    if unknown:
        raise ConfigError(f"unknown parameter(s): {', '.join(unknown)}")
    for k, v in params.items():
        if isinstance(base[k], list) and (not isinstance(v, list) or len(v) == 0):
            raise ConfigError(f"parameter {k!r} must be a nonempty list")


def run(config: ExperimentConfig) -> ResultTable:
    base = defaults(config.experiment)
    _validate(config.params, base)
    params = {**base, **config.params}
    trials = int(config.trials if config.trials is not None else params.get("trials", 1))
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if not 0 <= int(config.seed) < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    fn = _EXPERIMENTS[config.experiment][0]
    try:
        table = fn(params, int(config.seed), trials, max(1, int(config.threads)))
    except ConfigError:
        raise
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid parameter value: {exc}") from exc
    table.metadata.update({
        "experiment": config.experiment,
        "library_version": __version__,
        "seed": int(config.seed),
        "trials": trials,
        "params": params,
    })
    return table


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("experiment", type=click.Choice(EXPERIMENTS))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON parameter overrides.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory (stdout if omitted).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=int, default=None, help="Monte Carlo trials (experiment default if omitted).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads (falls back to NFCSIM_THREADS).")
def main(experiment, config_path, out_dir, seed, trials, fmt, threads):
    """Regenerate the data series of EXPERIMENT."""
    try:
        if threads is None:
            env = os.environ.get("NFCSIM_THREADS", "1")
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"NFCSIM_THREADS must be an integer, got {env!r}") from None
        params = load_config(config_path) if config_path else {}
        for key in ("seed", "trials"):
            if key in params and params[key] is not None:
                value = params.pop(key)
                if key == "seed" and seed == 0:
                    seed = int(value)
                if key == "trials" and trials is None:
                    trials = int(value)
        table = run(ExperimentConfig(experiment, params, seed, trials, threads))
        text = table.to_csv() if fmt == "csv" else table.to_json()
        if out_dir is None:
            click.echo(text, nl=False)
        else:
            try:
                out = Path(out_dir)
                out.mkdir(parents=True, exist_ok=True)
                (out / f"{experiment}.{fmt}").write_text(text)
            except OSError as exc:
                raise ConfigError(f"cannot write output: {exc}") from exc
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (cap.NumericalError, np.linalg.LinAlgError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)


if __name__ == "__main__":
    main()
