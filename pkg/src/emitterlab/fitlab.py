"""Weighted nonlinear least-squares fits for every measured curve.

A small Levenberg-Marquardt minimizer (forward finite-difference Jacobians,
relative step 1e-6) drives all model fits: cw g2, saturation, IRF-convolved
lifetime, polarization, the power-series rate extraction and the empirical
deshelving-vs-power form.  Positivity constraints are imposed by fitting the
log of the constrained parameters, which keeps exponential timescales from
flipping sign.

Histogram fits use Poisson weights sigma = sqrt(max(counts, 1)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kinetics
from .correlator import CorrelationHistogram
from .kinetics import G2Params, RateSet

__all__ = [
    "FitResult",
    "PowerSeriesPoint",
    "IRFModel",
    "RateExtraction",
    "minimize",
    "fit_g2_cw",
    "extract_rates",
    "fit_k31_power",
    "fit_saturation",
    "fit_lifetime",
    "fit_polarization",
]

FD_REL_STEP = 1e-6
GRAD_TOL = 1e-8


@dataclass
class FitResult:
    """Converged (or flagged) least-squares estimate.

    `params` maps parameter names to (value, sigma) in the original
    parameterization; sigmas are None when the fit did not converge.
    `extras` carries model-specific derived quantities such as g2(0).
    """

    names: list
    values: np.ndarray
    sigmas: np.ndarray | None
    cov: np.ndarray | None
    chi2_red: float
    converged: bool
    iters: int
    extras: dict = field(default_factory=dict)

    @property
    def params(self):
        if self.sigmas is None:
            return {n: {"value": float(v), "sigma": None}
                    for n, v in zip(self.names, self.values)}
        return {n: {"value": float(v), "sigma": float(s)}
                for n, v, s in zip(self.names, self.values, self.sigmas)}

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def sigma(self, name):
        if self.sigmas is None:
            return None
        return float(self.sigmas[self.names.index(name)])

    def to_json_dict(self):
        d = {"params": self.params, "chi2_red": self.chi2_red,
             "converged": self.converged, "iters": self.iters}
        d.update(self.extras)
        return d


@dataclass(frozen=True)
class PowerSeriesPoint:
    """Converged g2-fit parameters at one excitation power (power in mW,
    timescales in ns)."""

    power: float
    tau1: float
    tau2: float
    beta: float
    tau1_err: float = 0.0
    tau2_err: float = 0.0
    beta_err: float = 0.0


class IRFModel:
    """Instrument response: a Gaussian of given sigma (ps), or a tabulated
    response.  The kernel handed to the lifetime fit is nonnegative and
    normalized to unit area on the histogram grid."""

    def __init__(self, sigma=None, table=None):
        if (sigma is None) == (table is None):
            raise ValueError("specify exactly one of sigma or table")
        if sigma is not None and sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma = sigma
        if table is not None:
            t, w = np.asarray(table[0], float), np.asarray(table[1], float)
            if np.any(w < 0):
                raise ValueError("tabulated IRF must be nonnegative")
            self.table = (t, w)
        else:
            self.table = None

    @classmethod
    def gaussian(cls, sigma):
        return cls(sigma=sigma)

    @classmethod
    def from_file(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(table=(data[:, 0], data[:, 1]))

    def kernel(self, dt):
        """Sampled unit-area kernel on a grid of spacing dt (ps), odd length,
        centered on its own zero."""
        if self.table is not None:
            t, w = self.table
            half = max(1, int(np.ceil((t[-1] - t[0]) / 2.0 / dt)))
            tc = t[np.argmax(w)]
            offs = np.arange(-half, half + 1) * dt
            k = np.interp(offs, t - tc, w, left=0.0, right=0.0)
        else:
            if self.sigma == 0:
                return np.array([1.0])
            half = max(1, int(np.ceil(6.0 * self.sigma / dt)))
            offs = np.arange(-half, half + 1) * dt
            k = np.exp(-0.5 * (offs / self.sigma) ** 2)
        s = k.sum()
        if s <= 0:
            raise ValueError("IRF kernel vanishes on this grid")
        return k / s


# ---------------------------------------------------------------------------
# Levenberg-Marquardt core
# ---------------------------------------------------------------------------

def _to_internal(p, positive):
    q = np.array(p, dtype=float)
    q[positive] = np.log(q[positive])
    return q


def _to_external(q, positive):
    p = np.array(q, dtype=float)
    # clamp so a wild trial step cannot overflow to inf
    p[positive] = np.exp(np.clip(p[positive], -700.0, 700.0))
    return p


def minimize(
    model,
    data,
    init,
    bounds=None,
    max_iter=1000,
):
    """Damped least-squares fit of ``model(params, x) -> yhat`` to data.

    Parameters
    ----------
    model : callable
        Maps (parameter vector, x) to predicted y.
    data : tuple
        (x, y, sigma_y) with sigma_y > 0 elementwise.
    init : sequence
        Starting parameter vector.
    bounds : sequence or None
        Per-parameter constraint: ``"positive"`` (fit log p internally) or
        None.  Defaults to all-unconstrained.
    max_iter : int
        Iteration cap; hitting it sets converged = False.

    The Jacobian is taken by forward finite differences with relative step
    1e-6.  Convergence requires the gradient norm of the weighted SSE to
    drop below 1e-8 * (1 + |cost|).  Non-convergence is reported via the
    flag, not an exception; a singular Jacobian triggers a warning and a
    pseudo-inverse covariance.
    """
    x, y, sigma_y = data
    y = np.asarray(y, dtype=float)
    sigma_y = np.asarray(sigma_y, dtype=float)
    if np.any(sigma_y <= 0):
        raise ValueError("sigma_y must be strictly positive")
    init = np.asarray(init, dtype=float)
    n_par = init.size
    if y.size < n_par:
        raise ValueError("need at least as many points as parameters")
    if bounds is None:
        bounds = [None] * n_par
    positive = np.array([b == "positive" for b in bounds])
    if np.any(positive & (init <= 0)):
        raise ValueError("positive-constrained parameters need positive init")

    def residuals(q):
        p = _to_external(q, positive)
        return (np.asarray(model(p, x), dtype=float) - y) / sigma_y

    def jacobian(q, r0):
        jac = np.empty((y.size, n_par))
        for j in range(n_par):
            step = FD_REL_STEP * (1.0 + abs(q[j]))
            qj = q.copy()
            qj[j] += step
            jac[:, j] = (residuals(qj) - r0) / step
        return jac

    def jacobian_central(q):
        # second-order accurate; used to confirm stationarity at exit, where
        # the forward-difference error floor (~step * |r|) can exceed the
        # gradient tolerance
        jac = np.empty((y.size, n_par))
        for j in range(n_par):
            step = FD_REL_STEP * (1.0 + abs(q[j]))
            qp, qm = q.copy(), q.copy()
            qp[j] += step
            qm[j] -= step
            jac[:, j] = (residuals(qp) - residuals(qm)) / (2.0 * step)
        return jac

    q = _to_internal(init, positive)
    r = residuals(q)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    flat_steps = 0
    jac = jacobian(q, r)
    for it in range(1, max_iter + 1):
        grad = jac.T @ r
        if np.linalg.norm(2.0 * grad) < GRAD_TOL * (1.0 + cost):
            converged = True
            break
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        stepped = False
        for _ in range(50):
            a = jtj + lam * np.diag(diag)
            try:
                delta = np.linalg.solve(a, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            with np.errstate(over="ignore", invalid="ignore"):
                r_new = residuals(q + delta)
                cost_new = float(r_new @ r_new)
            if not math.isfinite(cost_new):
                lam *= 10.0
                if lam > 1e14:
                    break
                continue
            if cost_new < cost * (1.0 - 1e-15):
                flat_steps = 0
            elif math.isclose(cost_new, cost, rel_tol=1e-15) and lam < 1e12:
                flat_steps += 1
            else:
                lam *= 10.0
                if lam > 1e14:
                    break
                continue
            q = q + delta
            r = r_new
            cost = cost_new
            lam = max(lam * 0.3, 1e-12)
            stepped = True
            break
        if flat_steps >= 25:
            # Cost is flat at float precision: the iterate cannot improve,
            # so treat it exactly like a stalled step below.
            stepped = False
        if not stepped:
            # No downhill step found at any damping: the iterate sits at the
            # float-precision floor of the cost.  Sloppy directions can leave
            # the raw gradient well above GRAD_TOL there, so decide with the
            # predicted Gauss-Newton cost decrease instead: if a full
            # undamped step could only shave a negligible fraction off the
            # cost, the fit is converged.  A central-difference Jacobian
            # avoids the forward-difference error floor in this final test.
            jac = jacobian_central(q)
            grad = jac.T @ r
            jtj = jac.T @ jac
            try:
                gn_step = np.linalg.solve(jtj, grad)
            except np.linalg.LinAlgError:
                gn_step = np.linalg.lstsq(jtj, grad, rcond=None)[0]
            predicted = float(grad @ gn_step)
            converged = predicted < 1e-8 * (1.0 + cost)
            break
        jac = jacobian(q, r)

    p = _to_external(q, positive)
    dof = max(y.size - n_par, 1)
    chi2_red = cost / dof
    if not converged:
        return FitResult(names=[f"p{i}" for i in range(n_par)], values=p,
                         sigmas=None, cov=None, chi2_red=chi2_red,
                         converged=False, iters=it)

    jtj = jac.T @ jac
    try:
        cov_q = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        warnings.warn("singular Jacobian: covariance from pseudo-inverse",
                      stacklevel=2)
        cov_q = np.linalg.pinv(jtj)
    # Chain rule back to the external parameterization (p = exp(q) for the
    # positivity-constrained entries).
    scale = np.where(positive, p, 1.0)
    # A pseudo-inverse covariance for a degenerate direction can be huge;
    # let the corresponding sigma overflow to inf rather than warn.
    with np.errstate(over="ignore", invalid="ignore"):
        cov = cov_q * np.outer(scale, scale)
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return FitResult(names=[f"p{i}" for i in range(n_par)], values=p,
                     sigmas=sig, cov=cov, chi2_red=chi2_red,
                     converged=True, iters=it)


def _rename(res: FitResult, names) -> FitResult:
    res.names = list(names)
    return res


# ---------------------------------------------------------------------------
# cw g2 fit
# ---------------------------------------------------------------------------

def _g2_model_free(p, tau_ns):
    alpha, beta, tau1, tau2 = p
    return (1.0 - alpha * np.exp(-np.abs(tau_ns) / tau1)
            + beta * np.exp(-np.abs(tau_ns) / tau2))


def _g2_model_constrained(p, tau_ns):
    beta, tau1, tau2 = p
    return _g2_model_free((1.0 + beta, beta, tau1, tau2), tau_ns)


def _g2_init(tau_ns, g2):
    """Deterministic derivative-free seeding: tau1 from the dip half-width,
    tau2 from the bunching-tail 1/e point, beta from max(g2) - 1."""
    dip = g2.min()
    asym = 1.0
    half = dip + 0.5 * (asym - dip)
    above = tau_ns[g2 >= half]
    tau1 = max(np.min(np.abs(above[np.abs(above) > 0])), 1e-3) if above.size else 0.5
    beta = max(float(g2.max() - 1.0), 1e-3)
    # 1/e point of the bunching tail
    tail = g2 - 1.0
    over = np.abs(tau_ns[tail > beta / math.e])
    tau2 = max(float(over.max()), 3.0 * tau1) if over.size else 5.0 * tau1
    alpha = 1.0 + beta
    return alpha, beta, tau1, tau2


def fit_g2_cw(hist: CorrelationHistogram, mode: str = "free") -> FitResult:
    """Fit the two-exponential g2 model to a cw correlation histogram.

    mode "constrained" enforces alpha = 1 + beta (background-free emitter);
    mode "free" fits alpha independently so background-degraded data can be
    represented.  Returns alpha, beta, tau1, tau2 (ns) plus the derived
    g2(0) = 1 - alpha + beta with propagated uncertainty.
    """
    if mode not in ("free", "constrained"):
        raise ValueError("mode must be 'free' or 'constrained'")
    tau_ns = hist.taus / 1000.0
    g2 = np.asarray(hist.g2, dtype=float)
    sigma = np.sqrt(np.maximum(hist.counts, 1)) / hist.normalization
    a0, b0, t10, t20 = _g2_init(tau_ns, g2)

    if mode == "constrained":
        res = minimize(_g2_model_constrained, (tau_ns, g2, sigma),
                       [b0, t10, t20], bounds=["positive"] * 3)
        _rename(res, ["beta", "tau1", "tau2"])
        if res.converged:
            beta = res["beta"]
            res.names = ["alpha"] + res.names
            res.values = np.concatenate([[1.0 + beta], res.values])
            res.sigmas = np.concatenate([[res.sigma("beta")], res.sigmas])
    else:
        res = minimize(_g2_model_free, (tau_ns, g2, sigma),
                       [a0, b0, t10, t20], bounds=["positive"] * 4)
        _rename(res, ["alpha", "beta", "tau1", "tau2"])

    if res.converged:
        alpha, beta = res["alpha"], res["beta"]
        # Enforce tau1 <= tau2 (the model is swap-symmetric up to relabeling)
        if res["tau1"] > res["tau2"]:
            i1, i2 = res.names.index("tau1"), res.names.index("tau2")
            for arr in (res.values, res.sigmas):
                arr[[i1, i2]] = arr[[i2, i1]]
        g2_0 = 1.0 - alpha + beta
        if mode == "constrained":
            g2_0_sig = 0.0
        else:
            va = res.cov[0, 0]
            vb = res.cov[1, 1]
            cab = res.cov[0, 1]
            g2_0_sig = math.sqrt(max(va + vb - 2.0 * cab, 0.0))
        res.extras["g2_zero"] = {"value": g2_0, "sigma": g2_0_sig}
    return res


def g2_params_from_fit(res: FitResult) -> G2Params:
    """Convenience conversion of a converged fit into a G2Params value."""
    if not res.converged:
        raise ValueError("fit did not converge")
    return G2Params(alpha=res["alpha"], beta=res["beta"],
                    tau1=res["tau1"], tau2=res["tau2"])


# ---------------------------------------------------------------------------
# Power-series rate extraction
# ---------------------------------------------------------------------------

@dataclass
class RateExtraction:
    """Global transition rates from a g2-vs-power series."""

    k21: float
    k23: float
    eta: float
    k21_err: float
    k23_err: float
    eta_err: float
    k31_per_power: list  # (power, k31) pairs, 1/ns
    lifetime_ns: float  # implied excited-state lifetime 1/(k21+k23)
    lifetime_err_ns: float
    k31_identifiable: bool
    fit: FitResult


# beta below this at every power means the shelving branch is invisible and
# k31 cannot be pinned down.
_BETA_IDENT_THRESHOLD = 0.02


def extract_rates(series) -> RateExtraction:
    """Recover (k21, k23, eta) and per-power k31 from fitted g2 parameters.

    Per point, k31 = 1/(beta*(tau2 - tau1) + tau2) exactly.  Then tau1(P)
    and tau2(P) are fit jointly with k21, k23 and eta free and k12 = eta*P,
    using the measured k31 of each point; both curves are weighted by each
    point's fitted uncertainty.

    Raises ValueError when any k31 denominator is nonpositive (inconsistent
    series) or fewer than 4 powers are supplied.
    """
    series = sorted(series, key=lambda s: s.power)
    if len(series) < 4:
        raise ValueError("need at least 4 powers")
    k31 = []
    for pt in series:
        denom = pt.beta * (pt.tau2 - pt.tau1) + pt.tau2
        if denom <= 0:
            raise ValueError(
                f"inconsistent series: k31 denominator {denom:.3e} at "
                f"P = {pt.power} mW"
            )
        k31.append(1.0 / denom)
    identifiable = max(pt.beta for pt in series) >= _BETA_IDENT_THRESHOLD

    powers = np.array([pt.power for pt in series])
    k31_arr = np.array(k31)
    tau1 = np.array([pt.tau1 for pt in series])
    tau2 = np.array([pt.tau2 for pt in series])
    # Fall back to 1% weights where the series carries no uncertainties.
    s1 = np.array([pt.tau1_err if pt.tau1_err > 0 else 0.01 * pt.tau1
                   for pt in series])
    s2 = np.array([pt.tau2_err if pt.tau2_err > 0 else 0.01 * pt.tau2
                   for pt in series])

    def model(p, _x):
        k21, k23, eta = p
        k12 = eta * powers
        a = k12 + k21 + k23 + k31_arr
        b = k12 * (k23 + k31_arr) + k31_arr * (k21 + k23)
        disc = np.maximum(a * a - 4.0 * b, 1e-300)
        root = np.sqrt(disc)
        return np.concatenate([2.0 / (a + root), 2.0 / (a - root)])

    y = np.concatenate([tau1, tau2])
    sig = np.concatenate([s1, s2])
    # Seed from the low-power limit 1/tau1 ~ (k21 + k23) + eta*P.
    coeffs = np.polyfit(powers, 1.0 / tau1, 1)
    eta0 = max(coeffs[0], 1e-3)
    ksum0 = max(coeffs[1], 1e-3)
    init = [0.9 * ksum0, 0.1 * ksum0, eta0]
    res = minimize(model, (powers, y, sig), init, bounds=["positive"] * 3)
    _rename(res, ["k21", "k23", "eta"])

    if res.converged:
        k21, k23 = res["k21"], res["k23"]
        ksum = k21 + k23
        var_sum = (res.cov[0, 0] + res.cov[1, 1] + 2.0 * res.cov[0, 1])
        life = 1.0 / ksum
        life_err = math.sqrt(max(var_sum, 0.0)) / ksum**2
        return RateExtraction(
            k21=k21, k23=k23, eta=res["eta"],
            k21_err=res.sigma("k21"), k23_err=res.sigma("k23"),
            eta_err=res.sigma("eta"),
            k31_per_power=list(zip(powers.tolist(), k31_arr.tolist())),
            lifetime_ns=life, lifetime_err_ns=life_err,
            k31_identifiable=identifiable, fit=res,
        )
    return RateExtraction(
        k21=res["k21"], k23=res["k23"], eta=res["eta"],
        k21_err=float("nan"), k23_err=float("nan"), eta_err=float("nan"),
        k31_per_power=list(zip(powers.tolist(), k31_arr.tolist())),
        lifetime_ns=float("nan"), lifetime_err_ns=float("nan"),
        k31_identifiable=identifiable, fit=res,
    )


# ---------------------------------------------------------------------------
# Deshelving rate vs power
# ---------------------------------------------------------------------------

def _k31_model(p, power):
    a, b, c, d = p
    return a * np.exp(-b * power) + d * power / (power + c)


def fit_k31_power(points, sigma=None) -> FitResult:
    """Fit the empirical deshelving curve k31(P) = a*exp(-b*P) + d*P/(P+c).

    `points` is a list of (P in mW, k31 in 1/ns); sigma defaults to 3% of
    each value.
    """
    pts = sorted(points)
    if len(pts) < 5:
        raise ValueError("need at least 5 points")
    power = np.array([p for p, _ in pts])
    y = np.array([v for _, v in pts])
    if sigma is None:
        sigma = 0.03 * np.maximum(np.abs(y), 1e-12)
    c0 = float(np.median(power))
    d0 = max(float(y[-1] * (power[-1] + c0) / power[-1]), 1e-6)
    a0 = max(float(y[0] - d0 * power[0] / (power[0] + c0)), 1e-3 * max(y))
    span = max(power[-1] - power[0], 1e-9)
    # The exponential decay rate b carries local minima; start from a few
    # decay scales spanning the power range and keep the best fit.
    best = None
    for b_scale in (0.25, 1.0, 4.0):
        res = minimize(_k31_model, (power, y, sigma),
                       [a0, b_scale / span, c0, d0], bounds=["positive"] * 4)
        if best is None or (res.converged, -res.chi2_red) > (
            best.converged, -best.chi2_red
        ):
            best = res
    return _rename(best, ["a", "b", "c", "d"])


# ---------------------------------------------------------------------------
# Saturation
# ---------------------------------------------------------------------------

def _sat_model(p, power):
    p_sat, i_inf = p
    return i_inf * power / (power + p_sat)


def fit_saturation(points, sigma=None) -> FitResult:
    """Weighted fit of I(P) = i_inf * P / (P + p_sat).

    `points` is a list of (P in mW, counts/s); the seed comes from the two
    extreme points.  sigma defaults to sqrt(max(y, 1)) counting weights.
    """
    pts = sorted(points)
    if len(pts) < 2:
        raise ValueError("underdetermined: need at least 2 points")
    power = np.array([p for p, _ in pts], dtype=float)
    y = np.array([v for _, v in pts], dtype=float)
    if sigma is None:
        sigma = np.sqrt(np.maximum(y, 1.0))
    # Two-point closed-form seed.
    p1, y1, pn, yn = power[0], y[0], power[-1], y[-1]
    denom = y1 / p1 - yn / pn
    if denom > 0 and yn > y1:
        ps0 = (yn - y1) / denom
        ii0 = y1 * (p1 + ps0) / p1
    else:
        ps0 = float(np.median(power))
        ii0 = 2.0 * float(y.max())
    res = minimize(_sat_model, (power, y, sigma), [max(ps0, 1e-6), max(ii0, 1e-6)],
                   bounds=["positive", "positive"])
    return _rename(res, ["p_sat", "i_inf"])


# ---------------------------------------------------------------------------
# Lifetime with IRF
# ---------------------------------------------------------------------------

def fit_lifetime(decay_hist, irf: IRFModel) -> FitResult:
    """Fit baseline + amplitude * (exponential decay convolved with the IRF).

    `decay_hist` is (t_ps, counts) on a uniform grid.  The convolution is
    discrete on the histogram grid.  Returns tau (ps), amplitude, t0 (ps)
    and baseline; tau shorter than the IRF width comes back with a large
    reported uncertainty rather than a silent failure.
    """
    t, counts = decay_hist
    t = np.asarray(t, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if t.size < 8:
        raise ValueError("decay histogram too short")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt):
        raise ValueError("decay histogram must be on a uniform grid")
    kernel = irf.kernel(dt)

    def model(p, tt):
        tau, amp, t0, base = p
        # one-bin linear turn-on keeps the sampled decay continuous in t0,
        # so the least-squares surface stays smooth on the grid
        ramp = np.clip((tt - t0) / dt + 1.0, 0.0, 1.0)
        decay = ramp * np.exp(-np.maximum(tt - t0, 0.0) / tau)
        # center slice of the full convolution: unlike mode="same" this
        # keeps the output aligned with the data grid even when the kernel
        # is longer than the histogram
        full = np.convolve(decay, kernel)
        lo = (kernel.size - 1) // 2
        conv = full[lo:lo + tt.size]
        return base + amp * conv

    sigma = np.sqrt(np.maximum(counts, 1.0))
    base0 = max(float(np.median(counts[counts <= np.percentile(counts, 20)])), 0.1)
    amp0 = max(float(counts.max() - base0), 1.0)
    i_max = int(np.argmax(counts))
    t00 = float(t[i_max])
    # tail 1/e estimate for tau
    above = counts[i_max:] - base0
    over = np.flatnonzero(above > amp0 / math.e)
    tau0 = max(float(over[-1]) * dt, 2.0 * dt) if over.size else 10.0 * dt
    res = minimize(model, (t, counts, sigma), [tau0, amp0, t00, base0],
                   bounds=["positive", "positive", None, "positive"])
    return _rename(res, ["tau", "amplitude", "t0", "baseline"])


# ---------------------------------------------------------------------------
# Polarization
# ---------------------------------------------------------------------------

def _pol_model(p, angle_deg):
    y0, a_amp, freq, phi = p
    return y0 + a_amp * np.cos(np.radians(freq * angle_deg + phi)) ** 2


def fit_polarization(points) -> FitResult:
    """Fit y = y0 + A*cos^2(a*x + phi) to (angle deg, counts) data.

    Requires >= 8 angles spanning >= 180 degrees.  The visibility
    V = A/(A + 2*y0) is reported in the extras.
    """
    pts = sorted(points)
    if len(pts) < 8:
        raise ValueError("need at least 8 angles")
    angle = np.array([a for a, _ in pts], dtype=float)
    y = np.array([v for _, v in pts], dtype=float)
    if angle[-1] - angle[0] < 180.0:
        raise ValueError("angles must span at least 180 degrees")
    sigma = np.sqrt(np.maximum(y, 1.0))
    y00 = max(float(y.min()), 1e-6)
    a0 = max(float(y.max() - y.min()), 1e-6)
    phi0 = -float(angle[np.argmax(y)]) % 180.0
    res = minimize(_pol_model, (angle, y, sigma), [y00, a0, 1.0, phi0],
                   bounds=["positive", "positive", "positive", None])
    _rename(res, ["y0", "A", "a", "phi"])
    if res.converged:
        a_amp, y0 = res["A"], res["y0"]
        res.extras["visibility"] = a_amp / (a_amp + 2.0 * y0)
    return res
