"""State reconstruction and entanglement metrics from coincidence counts."""

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .biphoton import ArmSetting, MeasurementSetting, TwoPhotonState, coincidence_probability, to_density
from .errors import (BootstrapError, BqpmError, ConfigurationError, ConvergenceError, FitError,
                     InputError)
from .simulate import CountRecord

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (np.eye(2, dtype=complex), SX, SY, SZ)
PAULI2 = np.array([np.kron(a, b) for a in PAULI for b in PAULI])
SYSY = np.kron(SY, SY)

DEFAULT_CHSH_ANGLES = (0.0, 45.0, 22.5, 67.5)


def load_tomography_settings(path=None):
    if path is None:
        text = resources.files("bqpm.data").joinpath("tomography_settings.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    out = []
    for row in json.loads(text)["settings"]:
        arms = [ArmSetting(hwp=float(a["hwp"]), qwp=None if a["qwp"] is None else float(a["qwp"]),
                           axis=a["axis"]) for a in (row["signal"], row["idler"])]
        out.append(MeasurementSetting(*arms, label=row["label"]))
    return out


TOMOGRAPHY_SETTINGS = load_tomography_settings()


def _as_density(rho):
    if isinstance(rho, TwoPhotonState):
        return to_density(rho)
    return np.asarray(rho, dtype=complex)


def _projector_vectors(settings):
    return np.array([s.projector_vector() for s in settings])


def _counts(records):
    n = np.array([r.coincidences for r in records], dtype=float)
    t = np.array([r.duration for r in records], dtype=float)
    return n, t


def _check_records(records, settings):
    if len(records) != len(settings):
        raise InputError(f"{len(records)} records for {len(settings)} settings")
    n, t = _counts(records)
    if n.sum() <= 0:
        raise InputError("total coincidence count is zero")
    return n, t


def linear_reconstruct(records, settings=None):
    """Linear-inversion estimate, Hermitian with unit trace but not necessarily positive.

    Coincidence rates n/t are fitted to tr(P M) with M expanded in the 16
    two-qubit Pauli products; the overall scale is removed by the trace.
    """
    settings = TOMOGRAPHY_SETTINGS if settings is None else settings
    n, t = _check_records(records, settings)
    vecs = _projector_vectors(settings)
    # a[nu, j] = <v_nu| sigma_j |v_nu>
    a = np.real(np.einsum("ni,jik,nk->nj", vecs.conj(), PAULI2, vecs))
    if a.shape[0] < 16 or np.linalg.cond(a) > 1e12:
        raise ConfigurationError("tomography settings do not span the two-qubit operator space")
    coef = np.linalg.lstsq(a, n / t, rcond=None)[0]
    m = np.einsum("j,jik->ik", coef, PAULI2)
    tr = np.trace(m).real
    if tr <= 0:
        raise InputError("linear inversion produced a non-positive trace")
    m = m / tr
    return 0.5 * (m + m.conj().T)


def physical_projection(m):
    """Closest-in-spectrum density matrix: clip negative eigenvalues and renormalize."""
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.clip(w, 0, None)
    if w.sum() == 0:
        return np.eye(4, dtype=complex) / 4
    rho = (u * (w / w.sum())) @ u.conj().T
    return 0.5 * (rho + rho.conj().T)


def log_likelihood(rho, records, settings=None):
    """Poisson log-likelihood with the overall count scale fitted."""
    settings = TOMOGRAPHY_SETTINGS if settings is None else settings
    n, t = _check_records(records, settings)
    vecs = _projector_vectors(settings)
    p = np.real(np.einsum("ni,ik,nk->n", vecs.conj(), _as_density(rho), vecs))
    return _poisson_loglik(n, t * np.clip(p, 0, None))


def _poisson_loglik(n, w):
    mu = w * (n.sum() / w.sum())
    with np.errstate(divide="ignore"):
        logmu = np.where(n > 0, np.log(np.where(mu > 0, mu, 1e-300)), 0.0)
    return float(np.sum(n * logmu - mu - gammaln(n + 1)))


_TRIL = np.tril_indices(4, -1)


def _t_from_params(x):
    t = np.diag(x[:4]).astype(complex)
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    return t


def _params_from_density(rho, floor=1e-4):
    # want rho ~ T^dag T with T lower triangular; Cholesky of the index-reversed matrix gives it
    m = rho + floor * np.eye(4)
    j = np.eye(4)[::-1]
    low = np.linalg.cholesky(j @ m @ j)
    t = j @ low.conj().T @ j
    t = t / np.sqrt(np.trace(m).real)
    return np.concatenate([np.real(np.diag(t)), t[_TRIL].real, t[_TRIL].imag])


@dataclass
class TomographyResult:
    rho: np.ndarray
    log_likelihood: float
    purity: float
    concurrence: float
    fidelity_to_target: float | None = None
    chsh_s: float | None = None
    chsh_angles: tuple | None = None
    errors: dict = field(default_factory=dict)
    iterations: int = 0
    counts: str = "raw"


def _mle_density(records, settings, max_iter):
    n, t = _check_records(records, settings)
    vecs = _projector_vectors(settings)
    total = n.sum()

    def objective(x):
        tm = _t_from_params(x)
        tv = vecs @ tm.T  # rows are T v_nu
        p = np.sum(np.abs(tv) ** 2, axis=1)
        w = t * p
        sw = w.sum()
        pos = n > 0
        f = -(np.sum(n[pos] * np.log(w[pos])) - total * math.log(sw)) / total
        coef = np.where(pos, n / np.where(p > 0, p, 1.0), 0.0) - total * t / sw
        # d f / d T_ij = -(2 / total) sum_nu coef_nu (T v_nu)_i conj(v_nu)_j
        g = -(2 / total) * np.einsum("n,ni,nj->ij", coef, tv, vecs.conj())
        grad = np.concatenate([np.real(np.diag(g)), g[_TRIL].real, g[_TRIL].imag])
        return f, grad

    x0 = _params_from_density(physical_projection(linear_reconstruct(records, settings)))
    res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "maxfun": 4 * max_iter,
                                     "ftol": 1e-14, "gtol": 1e-10})
    gnorm = float(np.linalg.norm(res.jac))
    if not res.success and (res.nit >= max_iter or gnorm > 1e-6):
        raise ConvergenceError(f"MLE did not converge: {res.message}",
                               diagnostics={"iterations": res.nit, "grad_norm": gnorm, "f": res.fun})
    tm = _t_from_params(res.x)
    m = tm.conj().T @ tm
    rho = m / np.trace(m).real
    return 0.5 * (rho + rho.conj().T), res.nit


def mle_reconstruct(records, settings=None, target=None, chsh_angles=None, max_iter=10_000,
                    bootstrap_resamples=0, seed=0):
    """Maximum-likelihood density matrix over rho = T^dag T / tr(T^dag T).

    Started from the positive-projected linear estimate; the returned state
    never has lower likelihood than that starting point. ``chsh_angles`` may
    be a 4-tuple in degrees or "optimal".
    """
    settings = TOMOGRAPHY_SETTINGS if settings is None else settings
    rho, nit = _mle_density(records, settings, max_iter)
    start = physical_projection(linear_reconstruct(records, settings))
    ll, ll0 = log_likelihood(rho, records, settings), log_likelihood(start, records, settings)
    if ll0 > ll:
        rho, ll = start, ll0
    result = TomographyResult(rho=rho, log_likelihood=ll, purity=purity(rho),
                              concurrence=concurrence(rho), iterations=nit)
    _fill_metrics(result, target, chsh_angles)
    if bootstrap_resamples:
        def stats(recs):
            r = mle_reconstruct(recs, settings, target, result.chsh_angles, max_iter)
            return _metric_dict(r)
        values, dropped = _resample(records, stats, bootstrap_resamples, seed)
        result.errors = {k: float(np.std(values[k], ddof=1)) for k in values}
        result.errors["dropped_resamples"] = dropped
    return result


def _fill_metrics(result, target, chsh_angles):
    if target is not None:
        result.fidelity_to_target = fidelity(result.rho, target)
    if chsh_angles == "optimal":
        result.chsh_s, result.chsh_angles = optimal_chsh(result.rho)
    elif chsh_angles is not None:
        result.chsh_angles = tuple(chsh_angles)
        result.chsh_s = chsh_S(result.rho, chsh_angles)


def _metric_dict(r):
    out = {"purity": r.purity, "concurrence": r.concurrence}
    if r.fidelity_to_target is not None:
        out["fidelity"] = r.fidelity_to_target
    if r.chsh_s is not None:
        out["chsh_s"] = r.chsh_s
    return out


def fidelity(rho, target):
    """<psi| rho |psi> for a pure target."""
    psi = target.amplitudes if isinstance(target, TwoPhotonState) else np.asarray(target, dtype=complex)
    f = float(np.real(psi.conj() @ _as_density(rho) @ psi))
    return min(max(f, 0.0), 1.0)


def purity(rho):
    rho = _as_density(rho)
    return float(np.real(np.trace(rho @ rho)))


def concurrence(rho):
    """Wootters concurrence."""
    rho = _as_density(rho)
    tilde = SYSY @ rho.conj() @ SYSY
    ev = np.linalg.eigvals(rho @ tilde)
    lam = np.sort(np.sqrt(np.clip(ev.real, 0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def pure_state_chsh_max(state):
    """Maximal CHSH value 2 sqrt(1 + C^2) of a pure state."""
    c = concurrence(to_density(state))
    return 2 * math.sqrt(1 + c * c)


@dataclass(frozen=True)
class VisibilityFit:
    visibility: float
    offset: float
    amplitude: float
    phase: float
    residual_norm: float


def visibility(curve):
    """Fit a + b cos(2 theta - theta0) and return b / a, i.e. (max - min) / (max + min) of the fit.

    ``curve`` is a sequence of (theta, value) pairs (theta in radians) or
    CountRecords whose setting carries the scan coordinate ``x``; records
    contribute their coincidence rate. The result is not clipped to 1.
    """
    curve = list(curve)
    if curve and isinstance(curve[0], CountRecord):
        if any(r.setting.x is None for r in curve):
            raise InputError("count records need a scan coordinate (setting.x) for a visibility fit")
        pts = np.array([(r.setting.x, r.coincidences / r.duration) for r in curve])
    else:
        pts = np.asarray(curve, dtype=float).reshape(-1, 2)
    if len(pts) < 4:
        raise InputError(f"need at least 4 points for a visibility fit, got {len(pts)}")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) < math.pi / 2 - 1e-12:
        raise InputError("curve must span at least half a period (pi/2 in theta)")
    design = np.column_stack([np.ones_like(x), np.cos(2 * x), np.sin(2 * x)])
    (a, c, s), *_ = np.linalg.lstsq(design, y, rcond=None)
    if not (np.isfinite(a) and a > 0):
        raise FitError(f"degenerate sinusoid fit (offset {a})")
    b = math.hypot(c, s)
    resid = float(np.linalg.norm(design @ np.array([a, c, s]) - y))
    return VisibilityFit(b / a, float(a), b, math.atan2(s, c), resid)


def correlation(rho, a, b):
    """E(a, b) from the four linear-polarizer outcomes at angles a, b (degrees)."""
    rho = _as_density(rho)
    p = {}
    for sa, da in (("+", 0.0), ("-", 90.0)):
        for sb, db in (("+", 0.0), ("-", 90.0)):
            p[sa + sb] = coincidence_probability(rho, ArmSetting(hwp=(a + da) / 2), ArmSetting(hwp=(b + db) / 2))
    total = sum(p.values())
    if total <= 1e-15:
        raise InputError(f"correlation undefined at analyzer angles ({a}, {b}): all outcomes have zero probability")
    return (p["++"] + p["--"] - p["+-"] - p["-+"]) / total


def chsh_S(rho, angles=DEFAULT_CHSH_ANGLES):
    """S = E(a, b) - E(a, b') + E(a', b) + E(a', b'), angles (a, a', b, b') in degrees."""
    a, a2, b, b2 = angles
    return (correlation(rho, a, b) - correlation(rho, a, b2)
            + correlation(rho, a2, b) + correlation(rho, a2, b2))


def _chsh_fast(tmat, ang):
    # ang in radians, shape (..., 4); polarizer at angle q has Bloch vector (sin 2q, cos 2q) in (x, z)
    def n(q):
        return np.stack([np.sin(2 * q), np.cos(2 * q)], axis=-1)

    def e(p, q):
        return np.einsum("...j,jk,...k->...", n(p), tmat, n(q))

    a, a2, b, b2 = np.moveaxis(ang, -1, 0)
    return e(a, b) - e(a, b2) + e(a2, b) + e(a2, b2)


def optimal_chsh(rho, grid_step=15.0):
    """Maximize S over linear-polarizer angles: coarse grid, then local refinement.

    Returns (S, (a, a', b, b') in degrees).
    """
    rho = _as_density(rho)
    xz = (SX, SZ)
    tmat = np.array([[np.real(np.trace(rho @ np.kron(p, q))) for q in xz] for p in xz])
    g = np.radians(np.arange(0.0, 180.0, grid_step))
    mesh = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1).reshape(-1, 4)
    s = _chsh_fast(tmat, mesh)
    x0 = mesh[int(np.argmax(s))]
    res = optimize.minimize(lambda x: -_chsh_fast(tmat, x), x0, method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-13, "maxiter": 20000})
    angles = tuple(float(v) for v in np.degrees(res.x))
    return chsh_S(rho, angles), angles


def subtract_accidentals(records, window_ns):
    """Records with the uniform accidental estimate S1 S2 tau / t removed from the coincidences."""
    out = []
    for r in records:
        acc = r.singles_signal * r.singles_idler * window_ns * 1e-9 / r.duration
        out.append(replace(r, coincidences=max(r.coincidences - acc, 0.0)))
    return out


# -- Poisson bootstrap --------------------------------------------------------

def _poisson_resample(records, rng):
    out = []
    for r in records:
        ns, ni, nc = rng.poisson([r.singles_signal, r.singles_idler, r.coincidences])
        out.append(CountRecord(r.setting, int(ns), int(ni), int(nc), r.duration))
    return out


def _resample(records, statistic, resamples, seed):
    if resamples < 2:
        raise InputError(f"need at least 2 resamples, got {resamples}")
    rows, dropped = [], 0
    for k in range(resamples):
        rng = np.random.default_rng([int(seed), k])
        try:
            v = statistic(_poisson_resample(records, rng))
        except (BqpmError, ValueError, FloatingPointError, np.linalg.LinAlgError):
            dropped += 1
            continue
        rows.append(v if isinstance(v, dict) else {"value": float(v)})
    if dropped > 0.1 * resamples:
        raise BootstrapError(f"{dropped} of {resamples} bootstrap resamples failed")
    keys = rows[0].keys()
    return {k: np.array([r[k] for r in rows]) for k in keys}, dropped


@dataclass(frozen=True)
class BootstrapResult:
    mean: float
    std: float
    used: int
    dropped: int


def _total_coincidences(records):
    return float(sum(r.coincidences for r in records))


STATISTICS = {
    "total_coincidences": _total_coincidences,
    "visibility": lambda recs: visibility(recs).visibility,
    "purity": lambda recs: mle_reconstruct(recs).purity,
    "concurrence": lambda recs: mle_reconstruct(recs).concurrence,
}


def bootstrap(records, statistic, resamples=1000, seed=0):
    """Poisson bootstrap: redraw every count as Poisson(observed) and recompute ``statistic``.

    ``statistic`` is a callable on a record list or a name in STATISTICS.
    Each resample k draws from its own generator seeded by (seed, k).
    """
    if resamples < 100:
        raise InputError(f"bootstrap needs >= 100 resamples, got {resamples}")
    if isinstance(statistic, str):
        try:
            statistic = STATISTICS[statistic]
        except KeyError:
            raise InputError(f"unknown statistic {statistic!r}; known: {sorted(STATISTICS)}") from None
    values, dropped = _resample(records, statistic, resamples, seed)
    v = values["value"]
    return BootstrapResult(float(np.mean(v)), float(np.std(v, ddof=1)), len(v), dropped)
