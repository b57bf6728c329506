"""Trial-log statistics: peak displacement, impulse summaries, five-number
summaries and a random-intercept linear mixed model fitted by REML."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyGroup, InsufficientCoverage, NonIdentifiableWarning, SingularDesign

DIRECTIONS = ("right", "front", "left", "back")
MODALITIES = ("none", "audio", "visual", "audio_visual")
WARNED = ("audio", "visual", "audio_visual")
TARGET_IMPULSE = 31.25
ALPHA = 0.05
GOLDEN_TOL = 1e-6
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DisplacementObservation:
    participant: str
    direction: str
    modality: str
    displacement: float  # mm

    def __post_init__(self):
        if self.displacement < 0:
            raise ValueError("displacement must be >= 0")


def extract_displacement(trajectory, onset: float, window: float = 2.0, baseline: float = 1.0) -> float:
    """Peak planar waist deviation (mm) after ``onset``.

    ``trajectory`` is an (n, 3) array of (t, x, y) in seconds and metres.  The
    reference point is the mean position over the ``baseline`` seconds before
    onset.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or traj.shape[1] < 3 or traj.shape[0] < 2:
        raise InsufficientCoverage("trajectory must be (n, 3) with n >= 2")
    t = traj[:, 0]
    step = float(np.median(np.diff(t)))
    if t[0] > onset - baseline + 0.5 * step or t[-1] < onset + window - 0.5 * step:
        raise InsufficientCoverage(
            f"trajectory spans [{t[0]:.3f}, {t[-1]:.3f}] s, need [{onset - baseline:.3f}, {onset + window:.3f}]")
    pre = (t >= onset - baseline - 1e-9) & (t <= onset + 1e-9)
    post = (t >= onset - 1e-9) & (t <= onset + window + 1e-9)
    ref = traj[pre, 1:3].mean(axis=0)
    dev = np.hypot(traj[post, 1] - ref[0], traj[post, 2] - ref[1])
    return float(dev.max() * 1000.0)


def _record_fields(rec) -> dict:
    """Uniform view of a trial record, whether a log dict or a TrialRecord."""
    if isinstance(rec, dict):
        return rec
    return rec.to_dict()


def observations_from_records(records) -> list[DisplacementObservation]:
    out = []
    for rec in records:
        d = _record_fields(rec)
        if d.get("status", "ok") != "ok" or d.get("max_displacement_mm") is None:
            continue
        out.append(DisplacementObservation(str(d["participant_id"]), d["direction"], d["modality"],
                                           float(d["max_displacement_mm"])))
    return out


# --------------------------------------------------------------------------
# impulses
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ImpulseSummary:
    direction: str
    n: int
    mean: float
    std: float
    target: float = TARGET_IMPULSE

    @property
    def lower(self) -> float:
        return self.mean - 2 * self.std

    @property
    def upper(self) -> float:
        return self.mean + 2 * self.std

    @property
    def bias_percent(self) -> float:
        return (self.mean / self.target - 1.0) * 100.0


def impulse_summary(records, direction: str | None = None, target: float = TARGET_IMPULSE):
    """Mean and sample std of net impulse per direction.

    With ``direction`` given, returns that direction's summary or raises
    :class:`EmptyGroup` if it has fewer than two records.  Without it, returns
    a dict over the directions that have at least two records.
    """
    groups: dict[str, list[float]] = {}
    for rec in records:
        d = _record_fields(rec)
        if d.get("status", "ok") != "ok" or d.get("net_impulse_ns") is None:
            continue
        groups.setdefault(d["direction"], []).append(float(d["net_impulse_ns"]))

    def one(name):
        vals = groups.get(name, [])
        if len(vals) < 2:
            raise EmptyGroup(f"direction {name!r} has {len(vals)} impulse record(s); need 2")
        v = np.asarray(vals)
        return ImpulseSummary(name, v.size, float(v.mean()), float(v.std(ddof=1)), target)

    if direction is not None:
        return one(direction)
    return {name: one(name) for name in DIRECTIONS if len(groups.get(name, [])) >= 2}


# --------------------------------------------------------------------------
# five-number summaries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSummary:
    direction: str
    modality: str
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def five_number(values) -> tuple[float, float, float, float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptyGroup("no values")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return float(v.min()), float(q1), float(med), float(q3), float(v.max())


def summarize_boxplot(observations) -> list[BoxSummary]:
    groups: dict[tuple[str, str], list[float]] = {}
    for ob in observations:
        groups.setdefault((ob.direction, ob.modality), []).append(ob.displacement)
    if not groups:
        raise EmptyGroup("no observations")
    out = []
    for d in DIRECTIONS:
        for m in MODALITIES:
            if (d, m) in groups:
                out.append(BoxSummary(d, m, len(groups[(d, m)]), *five_number(groups[(d, m)])))
    return out


# --------------------------------------------------------------------------
# random-intercept mixed model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LmeFit:
    direction: str
    terms: tuple[str, ...]  # "intercept" then the warned modalities
    estimates: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    random_variance: float
    residual_variance: float
    n_obs: int
    n_groups: int
    reml_loglik: float

    @property
    def intercept(self) -> float:
        return float(self.estimates[0])

    @property
    def offsets(self) -> dict[str, float]:
        return {t: float(e) for t, e in zip(self.terms[1:], self.estimates[1:])}

    @property
    def pvalues(self) -> dict[str, float]:
        return {t: float(p) for t, p in zip(self.terms[1:], self.p_values[1:])}

    def significant(self, term: str, alpha: float = ALPHA) -> bool:
        return self.pvalues[term] < alpha

    def rows(self) -> list[dict]:
        out = []
        for t, e, s, p in zip(self.terms, self.estimates, self.std_errors, self.p_values):
            out.append({"term": t, "estimate_mm": float(e), "std_error_mm": float(s),
                        "p_value": "" if t == "intercept" else float(p),
                        "significant": "" if t == "intercept" else bool(p < ALPHA)})
        return out


def _design(observations, direction):
    obs = [o for o in observations if o.direction == direction]
    counts = {m: sum(1 for o in obs if o.modality == m) for m in MODALITIES}
    missing = [m for m, c in counts.items() if c == 0]
    if missing:
        raise SingularDesign(f"{direction}: no observations for {missing}")
    y = np.array([o.displacement for o in obs])
    X = np.column_stack([np.ones(len(obs))] + [[1.0 if o.modality == m else 0.0 for o in obs] for m in WARNED])
    labels = sorted({o.participant for o in obs})
    index = {p: i for i, p in enumerate(labels)}
    groups = np.array([index[o.participant] for o in obs])
    return y, X, groups, len(labels)


class _Profile:
    """REML profile over gamma = random variance / residual variance.

    With V = sigma^2 (I + gamma Z Z') block-diagonal by participant, each block
    inverse is I - gamma / (1 + n_i gamma) 11'.
    """

    def __init__(self, y, X, groups, n_groups):
        self.y, self.X = y, X
        self.n, self.p = X.shape
        self.members = [np.nonzero(groups == g)[0] for g in range(n_groups)]
        self.sizes = np.array([m.size for m in self.members], dtype=float)
        # per-group sums let V^-1 products be formed without N x N matrices
        self.Xs = np.array([X[m].sum(axis=0) for m in self.members])
        self.ys = np.array([y[m].sum() for m in self.members])
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)

    def pieces(self, gamma):
        w = gamma / (1.0 + self.sizes * gamma)
        XVX = self.XtX - (self.Xs * w[:, None]).T @ self.Xs
        XVy = self.Xty - (self.Xs * w[:, None]).T @ self.ys
        yVy = self.yty - float(np.sum(w * self.ys**2))
        return XVX, XVy, yVy

    def solve(self, gamma):
        XVX, XVy, yVy = self.pieces(gamma)
        try:
            L = np.linalg.cholesky(XVX)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign("fixed-effect design is rank deficient") from exc
        beta = np.linalg.solve(XVX, XVy)
        rss = yVy - float(XVy @ beta)
        sigma2 = max(rss, 0.0) / (self.n - self.p)
        logdet_xvx = 2.0 * float(np.sum(np.log(np.diag(L))))
        return beta, sigma2, XVX, logdet_xvx

    def loglik(self, gamma):
        _, sigma2, _, logdet_xvx = self.solve(gamma)
        if sigma2 <= 0:
            return math.inf
        logdet_v = float(np.sum(np.log1p(self.sizes * gamma)))
        dof = self.n - self.p
        return -0.5 * (dof * math.log(sigma2) + logdet_v + logdet_xvx
                       + dof * (1.0 + math.log(2.0 * math.pi)))


def _golden_max(f, lo, hi, tol):
    """Maximise a unimodal ``f`` on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_lme(observations, direction: str, tol: float = GOLDEN_TOL) -> LmeFit:
    """Random-intercept model ``y ~ modality + (1 | participant)`` for one direction.

    The variance ratio is found on u = gamma / (1 + gamma) in [0, 1) by
    golden-section search on the restricted likelihood and compared with the
    zero-variance boundary; fixed effects are the GLS solution at the optimum.
    """
    y, X, groups, n_groups = _design(observations, direction)
    if X.shape[0] <= X.shape[1]:
        raise SingularDesign("not enough observations for the fixed effects")
    prof = _Profile(y, X, groups, n_groups)
    if n_groups < 2:
        warnings.warn("single participant: random-intercept variance fixed at 0", NonIdentifiableWarning,
                      stacklevel=2)
        gamma = 0.0
    else:
        def ll_u(u):
            return prof.loglik(u / (1.0 - u))
        u_hi = 1.0 - 1e-9
        u_star = _golden_max(ll_u, 0.0, u_hi, tol)
        gamma = u_star / (1.0 - u_star)
        if prof.loglik(0.0) >= prof.loglik(gamma):
            gamma = 0.0
    beta, sigma2, XVX, _ = prof.solve(gamma)
    cov = sigma2 * np.linalg.inv(XVX)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(beta) / se, np.inf)
    p = np.array([math.erfc(v / math.sqrt(2.0)) for v in z])
    return LmeFit(direction, ("intercept",) + WARNED, beta, se, np.clip(p, 0.0, 1.0), gamma * sigma2, sigma2,
                  int(y.size), n_groups, prof.loglik(gamma))


def synthetic_observations(intercept: float, offsets: dict, participant_sd: float, residual_sd: float,
                           n_participants: int = 6, per_cell: int = 3, direction: str = "right",
                           seed=None) -> list[DisplacementObservation]:
    """Draws from the random-intercept model itself, for recovery checks."""
    rng = np.random.default_rng(seed)
    out = []
    for p in range(n_participants):
        b = rng.normal(0.0, participant_sd)
        for m in MODALITIES:
            mu = intercept + offsets.get(m, 0.0) + b
            for _ in range(per_cell):
                out.append(DisplacementObservation(f"P{p + 1:02d}", direction, m,
                                                   max(0.0, mu + rng.normal(0.0, residual_sd))))
    return out


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])


def write_lme_csv(fit: LmeFit, path) -> None:
    rows = [(r["term"], r["estimate_mm"], r["std_error_mm"], r["p_value"], r["significant"]) for r in fit.rows()]
    rows.append(("random_intercept_variance", fit.random_variance, "", "", ""))
    rows.append(("residual_variance", fit.residual_variance, "", "", ""))
    _write_rows(path, ["term", "estimate_mm", "std_error_mm", "p_value", "significant"], rows)


def write_impulses_csv(summaries: dict, path) -> None:
    rows = [(s.direction, s.n, s.mean, s.std, s.lower, s.upper, s.target) for s in summaries.values()]
    _write_rows(path, ["direction", "n", "mean_ns", "std_ns", "mean_minus_2sd_ns", "mean_plus_2sd_ns",
                       "target_ns"], rows)


def write_boxplot_csv(boxes, path) -> None:
    rows = [(b.direction, b.modality, b.n, b.minimum, b.q1, b.median, b.q3, b.maximum) for b in boxes]
    _write_rows(path, ["direction", "modality", "n", "min_mm", "q1_mm", "median_mm", "q3_mm", "max_mm"], rows)


def analyze_records(records, out_dir) -> dict:
    """Write lme_<direction>.csv, impulses.csv and boxplot.csv; return the fits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    obs = observations_from_records(records)
    fits = {}
    for d in DIRECTIONS:
        try:
            fits[d] = fit_lme(obs, d)
        except SingularDesign:
            continue
        write_lme_csv(fits[d], out / f"lme_{d}.csv")
    write_impulses_csv(impulse_summary(records), out / "impulses.csv")
    write_boxplot_csv(summarize_boxplot(obs), out / "boxplot.csv")
    return fits
