"""Statistics for cross-temperature device correlations.

Covers the room-temperature side (threshold-voltage extraction from IV
curves), the Bayesian linear regression linking V_th to the first-electron
voltage (sampled with a hand-rolled Hamiltonian Monte Carlo), model scoring,
and small descriptive helpers (KLD uniformity, summary statistics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm


# ---------------------------------------------------------------------------
# IV curves and threshold voltage


@dataclass
class IvCurve:
    """Room-temperature transfer curve I_D(V_GS) at fixed V_DS."""

    v_gs: np.ndarray
    i_d: np.ndarray
    v_ds: float = 0.050

    def __post_init__(self):
        self.v_gs = np.asarray(self.v_gs, dtype=float)
        self.i_d = np.asarray(self.i_d, dtype=float)
        if self.v_gs.shape != self.i_d.shape or self.v_gs.ndim != 1:
            raise ValueError("v_gs and i_d must be 1-D arrays of equal length")
        if self.v_gs.size < 3:
            raise ValueError("need at least 3 samples")
        if np.any(np.diff(self.v_gs) <= 0):
            raise ValueError("v_gs must be strictly increasing")


def extract_vth(curve: IvCurve) -> float:
    """Threshold voltage by tangent extrapolation at maximum transconductance.

    The tangent to I_D(V_GS) at the point of largest dI_D/dV_GS is
    extrapolated to I_D = 0; the intercept voltage is V_th.  Invariant under
    rescaling of the current.
    """
    g = np.gradient(curve.i_d, curve.v_gs)
    k = int(np.argmax(g))
    if g[k] <= 0:
        raise ValueError("no positive transconductance: curve never turns on")
    return float(curve.v_gs[k] - curve.i_d[k] / g[k])


def synth_iv_curve(v_th: float, v_gs: np.ndarray | None = None, k_lin: float = 2e-5,
                   theta: float = 2.0, noise_a: float = 0.0, seed: int = 0,
                   v_ds: float = 0.050) -> IvCurve:
    """Linear-region MOSFET-like transfer curve with mobility degradation.

    I_D = k_lin*(V_GS - V_th)/(1 + theta*(V_GS - V_th)) above threshold.
    The degradation factor puts the maximum transconductance right at
    turn-on, so the tangent intercept lands on v_th to within a grid step.
    """
    if v_gs is None:
        v_gs = np.linspace(0.0, 0.4, 201)
    dv = np.clip(v_gs - v_th, 0.0, None)
    i_d = k_lin * dv / (1.0 + theta * dv)
    if noise_a > 0:
        rng = np.random.default_rng(seed)
        i_d = i_d + rng.normal(0.0, noise_a, size=i_d.shape)
    return IvCurve(v_gs=v_gs, i_d=i_d, v_ds=v_ds)


# ---------------------------------------------------------------------------
# Bayesian linear regression: v_1e = alpha*v_th + beta + N(0, sigma^2)


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("prior std must be positive")

    def logpdf(self, x: float) -> float:
        return -0.5 * ((x - self.mean) / self.std) ** 2 - math.log(self.std) - 0.5 * math.log(2 * math.pi)


@dataclass
class RegressionModel:
    """Linear model with weakly informative normal priors.

    sigma is sampled in log-space to keep it positive; fixed_sigma switches
    to a two-parameter model with known noise (the Gaussian-conjugate case).
    posterior is filled by hmc_fit with (alpha, beta, sigma) rows.
    """

    prior_alpha: NormalPrior = NormalPrior(1.0, 1.0)
    prior_beta: NormalPrior = NormalPrior(0.0, 1.0)
    prior_log_sigma: NormalPrior = NormalPrior(math.log(0.02), 1.0)
    fixed_sigma: float | None = None
    posterior: np.ndarray | None = None

    def log_posterior_and_grad(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray):
        """Log posterior density (up to a constant) and its gradient.

        Returns (-inf, 0) outside the representable range of the noise
        scale so that runaway leapfrog trajectories register as divergent
        instead of overflowing.
        """
        if not np.all(np.isfinite(theta)):
            return -math.inf, np.zeros(theta.size)
        if self.fixed_sigma is None:
            alpha, beta, lam = theta
            if not -300.0 < lam < 300.0:
                return -math.inf, np.zeros(3)
            sigma = math.exp(lam)
        else:
            alpha, beta = theta
            sigma = self.fixed_sigma
        r = y - alpha * x - beta
        s2 = sigma * sigma
        n = x.size

        lp = -n * math.log(sigma) - 0.5 * float(r @ r) / s2
        lp += self.prior_alpha.logpdf(alpha) + self.prior_beta.logpdf(beta)
        d_alpha = float(r @ x) / s2 - (alpha - self.prior_alpha.mean) / self.prior_alpha.std ** 2
        d_beta = float(r.sum()) / s2 - (beta - self.prior_beta.mean) / self.prior_beta.std ** 2
        if self.fixed_sigma is None:
            lp += self.prior_log_sigma.logpdf(lam)
            d_lam = -n + float(r @ r) / s2 - (lam - self.prior_log_sigma.mean) / self.prior_log_sigma.std ** 2
            return lp, np.array([d_alpha, d_beta, d_lam])
        return lp, np.array([d_alpha, d_beta])

    @property
    def n_params(self) -> int:
        return 2 if self.fixed_sigma is not None else 3


@dataclass
class HmcConfig:
    step_size: float = 0.1
    leapfrog_steps: int = 32
    n_samples: int = 2000
    n_warmup: int = 500
    seed: int = 0
    n_chains: int = 1
    target_accept: float = 0.8
    divergence_energy: float = 1000.0
    max_divergence_fraction: float = 0.05

    def __post_init__(self):
        if min(self.leapfrog_steps, self.n_samples, self.n_warmup, self.n_chains) <= 0:
            raise ValueError("counts must be positive")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")


@dataclass
class FitResult:
    samples: np.ndarray          # (n_chains*n_samples, 3) as (alpha, beta, sigma)
    chains: np.ndarray           # (n_chains, n_samples, n_params) raw (sigma in log-space)
    acceptance_rates: np.ndarray  # per chain
    divergences: int
    step_sizes: np.ndarray       # adapted per chain
    rhat: dict

    @property
    def acceptance_rate(self) -> float:
        return float(self.acceptance_rates.mean())


def hmc_sample(logp_and_grad, theta0: np.ndarray, config: HmcConfig, rng) -> tuple:
    """Sample one HMC chain from an arbitrary differentiable log density.

    Returns (samples, acceptance_rate, n_divergences, adapted_step_size).
    Step size follows dual averaging toward the target acceptance during
    warmup; a diagonal mass matrix is estimated from the first warmup half.
    """
    dim = theta0.size
    theta = theta0.astype(float).copy()
    lp, grad = logp_and_grad(theta)
    if not math.isfinite(lp):
        raise ValueError("initial point has zero posterior density")
    minv = np.ones(dim)  # inverse mass diagonal

    eps = config.step_size
    mu = math.log(10.0 * eps)
    log_eps_bar, h_bar, t_adapt = 0.0, 0.0, 0
    gamma, t0, kappa = 0.05, 10.0, 0.75

    n_total = config.n_warmup + config.n_samples
    samples = np.empty((config.n_samples, dim))
    warmup_draws = np.empty((config.n_warmup, dim))
    n_accept = 0
    n_div = 0

    for it in range(n_total):
        warmup = it < config.n_warmup
        p = rng.normal(size=dim) / np.sqrt(minv)
        h0 = -lp + 0.5 * float(p * minv @ p)

        th, gr = theta.copy(), grad.copy()
        p_new = p + 0.5 * eps * gr
        for step in range(config.leapfrog_steps):
            th = th + eps * minv * p_new
            lp_new, gr = logp_and_grad(th)
            if step < config.leapfrog_steps - 1:
                p_new = p_new + eps * gr
        p_new = p_new + 0.5 * eps * gr

        h1 = -lp_new + 0.5 * float(p_new * minv @ p_new)
        dh = h1 - h0
        divergent = not math.isfinite(dh) or dh > config.divergence_energy
        if not math.isfinite(dh):
            accept_stat = 0.0
        else:
            accept_stat = 1.0 if dh <= 0 else math.exp(-dh)
        if divergent and not warmup:
            # warmup blow-ups are routine while the step size is still being
            # shrunk; only post-adaptation divergences signal a broken fit
            n_div += 1
        elif rng.random() < accept_stat:
            theta, lp, grad = th, lp_new, gr
            if not warmup:
                n_accept += 1
        elif not warmup:
            pass
        if not warmup:
            samples[it - config.n_warmup] = theta
            continue

        warmup_draws[it] = theta
        # dual averaging on the acceptance statistic
        t_adapt += 1
        h_bar = (1 - 1 / (t_adapt + t0)) * h_bar + (config.target_accept - accept_stat) / (t_adapt + t0)
        log_eps = mu - math.sqrt(t_adapt) / gamma * h_bar
        eta = t_adapt ** -kappa
        log_eps_bar = eta * log_eps + (1 - eta) * log_eps_bar
        eps = math.exp(log_eps)

        if it == config.n_warmup // 2 and it >= 20:
            # freeze a diagonal mass matrix from the first warmup half
            window = warmup_draws[it // 2:it + 1]
            var = window.var(axis=0, ddof=1)
            if np.all(np.isfinite(var)) and np.all(var > 0):
                w = window.shape[0]
                minv = var * w / (w + 5.0) + 1e-3 * 5.0 / (w + 5.0)
            # restart the step-size schedule under the new metric
            mu = math.log(10.0 * eps)
            log_eps_bar, h_bar, t_adapt = 0.0, 0.0, 0

        if it == config.n_warmup - 1:
            eps = math.exp(log_eps_bar)

    # recompute acceptance over the sampling phase only
    accept_rate = n_accept / config.n_samples
    return samples, accept_rate, n_div, eps


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-R̂ convergence statistic per parameter.

    chains has shape (n_chains, n_samples, dim); each chain is split in half
    so the statistic is defined even for a single chain.
    """
    n_chains, n_samples, dim = chains.shape
    half = n_samples // 2
    parts = np.concatenate([chains[:, :half], chains[:, half:2 * half]], axis=0)
    m, n = parts.shape[0], parts.shape[1]
    means = parts.mean(axis=1)
    variances = parts.var(axis=1, ddof=1)
    w = variances.mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * w + b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / w)
    return np.where(w > 0, rhat, 1.0)


def effective_sample_size(chains: np.ndarray) -> np.ndarray:
    """Autocorrelation-adjusted sample count per parameter.

    chains has shape (n_chains, n_samples, dim) of post-warmup draws (a
    single chain may be passed as (n_samples, dim)).  Uses the standard
    initial-positive-sequence truncation of the autocorrelation sum, with
    between-chain variance folded in so stuck chains deflate the estimate.
    The result is what sets the Monte Carlo error of a posterior mean:
    mcse = posterior_std / sqrt(ess).
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[None]
    m, n, dim = chains.shape
    if n < 4:
        raise ValueError("need at least 4 draws per chain")
    ess = np.empty(dim)
    nfft = 1 << (2 * n - 1).bit_length()
    for d in range(dim):
        x = chains[:, :, d]
        xc = x - x.mean(axis=1, keepdims=True)
        spec = np.fft.rfft(xc, nfft, axis=1)
        acov = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :n].real / n
        w = float(acov[:, 0].mean()) * n / (n - 1)       # within-chain variance
        b = float(x.mean(axis=1).var(ddof=1)) if m > 1 else 0.0
        var_plus = w * (n - 1) / n + b
        if var_plus <= 0:
            ess[d] = float(m * n)
            continue
        rho = 1.0 - (w - acov.mean(axis=0) * n / (n - 1)) / var_plus
        # sum autocorrelations in consecutive pairs while the pair sums
        # stay positive and non-increasing
        tau = -1.0
        prev_pair = math.inf
        for k in range(0, n - 1, 2):
            pair = rho[k] + rho[k + 1]
            if pair <= 0:
                break
            pair = min(pair, prev_pair)
            tau += 2.0 * pair
            prev_pair = pair
        ess[d] = min(float(m * n), m * n / max(tau, 1.0 / (m * n)))
    return ess


def hmc_fit(data, model: RegressionModel, config: HmcConfig) -> FitResult:
    """Posterior of (alpha, beta, sigma) for v_1e = alpha*v_th + beta + noise.

    data is either an (N, 2) array of (v_th, v_1e) rows or a pair of arrays.
    Raises if the divergence fraction exceeds the configured ceiling.
    """
    x, y = _as_xy(data)
    if x.size < 3:
        raise ValueError("need at least 3 data points")

    def logp_and_grad(theta):
        return model.log_posterior_and_grad(theta, x, y)

    dim = model.n_params
    if model.fixed_sigma is None:
        center = np.array([model.prior_alpha.mean, model.prior_beta.mean, model.prior_log_sigma.mean])
    else:
        center = np.array([model.prior_alpha.mean, model.prior_beta.mean])

    chains = np.empty((config.n_chains, config.n_samples, dim))
    accept = np.empty(config.n_chains)
    steps = np.empty(config.n_chains)
    divergences = 0
    for c in range(config.n_chains):
        rng = np.random.default_rng([config.seed, c])
        theta0 = center + 0.1 * rng.normal(size=dim)
        s, a, d, e = hmc_sample(logp_and_grad, theta0, config, rng)
        chains[c], accept[c], steps[c] = s, a, e
        divergences += d

    total = config.n_chains * config.n_samples
    if divergences > config.max_divergence_fraction * total:
        raise RuntimeError(
            f"HMC diverged on {divergences}/{total} trajectories "
            f"(step sizes {steps}, acceptance {accept}); "
            "reduce step_size or check the data scale"
        )

    flat = chains.reshape(-1, dim)
    if model.fixed_sigma is None:
        samples = np.column_stack([flat[:, 0], flat[:, 1], np.exp(flat[:, 2])])
    else:
        samples = np.column_stack([flat, np.full(flat.shape[0], model.fixed_sigma)])

    names = ["alpha", "beta", "log_sigma"][:dim]
    rhat = dict(zip(names, split_rhat(chains)))
    model.posterior = samples
    return FitResult(samples=samples, chains=chains, acceptance_rates=accept,
                     divergences=divergences, step_sizes=steps, rhat=rhat)


def conjugate_posterior(data, prior_alpha: NormalPrior, prior_beta: NormalPrior, sigma: float):
    """Closed-form Gaussian posterior for (alpha, beta) with known sigma.

    Reference implementation used to validate the sampler.
    Returns (mean vector, covariance matrix).
    """
    x, y = _as_xy(data)
    design = np.column_stack([x, np.ones_like(x)])
    s0_inv = np.diag([1.0 / prior_alpha.std ** 2, 1.0 / prior_beta.std ** 2])
    m0 = np.array([prior_alpha.mean, prior_beta.mean])
    precision = s0_inv + design.T @ design / sigma ** 2
    cov = np.linalg.inv(precision)
    mean = cov @ (s0_inv @ m0 + design.T @ y / sigma ** 2)
    return mean, cov


def _as_xy(data):
    if isinstance(data, tuple) or (isinstance(data, list) and len(data) == 2 and np.ndim(data[0]) == 1):
        x, y = data
    else:
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("data must be (N, 2) pairs or a pair of arrays")
        x, y = arr[:, 0], arr[:, 1]
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# Posterior summaries and model scoring


@dataclass
class PosteriorSummary:
    names: list
    mean: np.ndarray
    std: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    predict_at: float | None = None
    predictive_mean: float | None = None
    predictive_interval: tuple | None = None

    def as_rows(self):
        rows = []
        for i, name in enumerate(self.names):
            rows.append((name, self.mean[i], self.std[i], self.ci_low[i], self.ci_high[i]))
        return rows


def posterior_summary(samples: np.ndarray, predict_at: float | None = None,
                      ci: float = 0.95) -> PosteriorSummary:
    """Per-parameter mean/std and central credible interval.

    With predict_at set, also computes the posterior-predictive interval of
    v_1e at that v_th by inverting the mixture CDF over the samples.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty posterior")
    if samples.ndim == 1:
        samples = samples[:, None]
    tail = (1.0 - ci) / 2.0
    mean = samples.mean(axis=0)
    std = samples.std(axis=0, ddof=1) if samples.shape[0] > 1 else np.zeros(samples.shape[1])
    lo = np.percentile(samples, 100 * tail, axis=0)
    hi = np.percentile(samples, 100 * (1 - tail), axis=0)
    names = ["alpha", "beta", "sigma"][:samples.shape[1]] if samples.shape[1] <= 3 else [
        f"p{i}" for i in range(samples.shape[1])]
    out = PosteriorSummary(names=names, mean=mean, std=std, ci_low=lo, ci_high=hi)

    if predict_at is not None:
        if samples.shape[1] != 3:
            raise ValueError("predictive interval needs (alpha, beta, sigma) samples")
        mu = samples[:, 0] * predict_at + samples[:, 1]
        sig = samples[:, 2]
        out.predict_at = predict_at
        out.predictive_mean = float(mu.mean())
        out.predictive_interval = (_mixture_quantile(mu, sig, tail),
                                   _mixture_quantile(mu, sig, 1 - tail))
    return out


def _mixture_quantile(mu: np.ndarray, sig: np.ndarray, q: float) -> float:
    """Quantile of an equal-weight Gaussian mixture by bisection on the CDF."""
    lo = float(np.min(mu - 8 * sig))
    hi = float(np.max(mu + 8 * sig))
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if norm.cdf((mid - mu) / sig).mean() < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def loo_score(samples: np.ndarray, data) -> float:
    """Predictive log-score: sum over points of log mean posterior likelihood."""
    x, y = _as_xy(data)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty posterior")
    mu = samples[:, 0:1] * x[None, :] + samples[:, 1:2]      # (S, N)
    sig = samples[:, 2:3]
    ll = -0.5 * ((y[None, :] - mu) / sig) ** 2 - np.log(sig) - 0.5 * math.log(2 * math.pi)
    return float(np.sum(logsumexp(ll, axis=0) - math.log(samples.shape[0])))


def propagated_spread(alpha: float, sigma: float, vth_std: float) -> float:
    """Observed v_1e spread implied by intrinsic noise plus V_th variation."""
    return math.sqrt(sigma ** 2 + (alpha * vth_std) ** 2)


def synth_correlation_data(n: int, alpha: float = 1.01, beta: float = 0.21,
                           sigma: float = 0.016, vth_mean: float = 0.173,
                           vth_std: float = 0.015, seed: int = 0):
    """Synthetic (v_th, v_1e) pairs from the linear model."""
    rng = np.random.default_rng(seed)
    v_th = rng.normal(vth_mean, vth_std, size=n)
    v_1e = alpha * v_th + beta + rng.normal(0.0, sigma, size=n)
    return v_th, v_1e


# ---------------------------------------------------------------------------
# Descriptive statistics


@dataclass
class DescriptiveStats:
    n: int
    mean: float
    std: float
    q25: float
    q50: float
    q75: float
    minimum: float
    maximum: float


def describe(values) -> DescriptiveStats:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty input")
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    q25, q50, q75 = np.percentile(v, [25, 50, 75])
    return DescriptiveStats(n=v.size, mean=float(v.mean()), std=std,
                            q25=float(q25), q50=float(q50), q75=float(q75),
                            minimum=float(v.min()), maximum=float(v.max()))


def kld_uniform(counts) -> float:
    """KL divergence of a count histogram from the uniform distribution.

    Zero bins contribute zero; the all-zero histogram is undefined.
    Point mass over k bins gives the maximum, ln k.
    """
    c = np.asarray(counts, dtype=float).ravel()
    if c.size == 0 or np.any(c < 0):
        raise ValueError("counts must be a nonempty nonnegative histogram")
    total = c.sum()
    if total == 0:
        raise ValueError("all-zero histogram has no distribution")
    p = c / total
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] * c.size)))


__all__ = [
    "IvCurve", "extract_vth", "synth_iv_curve",
    "NormalPrior", "RegressionModel", "HmcConfig", "FitResult",
    "hmc_sample", "hmc_fit", "split_rhat", "effective_sample_size",
    "conjugate_posterior",
    "PosteriorSummary", "posterior_summary", "loo_score",
    "propagated_spread", "synth_correlation_data",
    "DescriptiveStats", "describe", "kld_uniform",
]
