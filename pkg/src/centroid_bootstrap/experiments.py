"""Experiment drivers behind the CLI.

Each trial owns its random streams, keyed by ``(seed, trial, purpose)``, and
results are reduced in trial order, so output does not depend on the number
of worker processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats

from . import engine
from .bandit import BanditConfig, SyntheticLinearBandit, load_classification_bandit, run_bandit
from .core import ContractError, RngStream
from .intervals import interval
from .linear_model import LinearGenConfig, generate_dataset
from .metrics import DMetric, ParticleCloud, wasserstein2
from .resampling import WeightScheme, iid_bootstrap_particles, residual_bootstrap_particles

log = logging.getLogger(__name__)

# purpose codes for per-trial streams
DATA, IID, BAYES, RESID, ENGINE, REF, SEQ, AGENT = range(8)


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def engine_config(cfg: dict, m: int) -> engine.EngineConfig:
    return engine.EngineConfig(
        m=m, M=cfg["engine.M"], gamma=cfg["engine.gamma"], lr=cfg["engine.lr"],
        steps=cfg["engine.steps"], refresh_freq=cfg["engine.refresh_freq"],
        batch=cfg["engine.batch"], m_eval=cfg["engine.m_eval"],
        zero_win_policy=cfg["engine.zero_win_policy"])


# -- confidence intervals ---------------------------------------------------

def _ci_clouds(cfg, trial):
    """All particle clouds of one trial, keyed by (method label, m)."""
    seed = cfg["seed"]
    model = generate_dataset(LinearGenConfig(cfg["ci.n"], tuple(cfg["ci.theta_true"])),
                             RngStream(seed, (trial, DATA)))
    clouds = {}
    for m in cfg["ci.m"]:
        iid = None
        if "bootstrap" in cfg["ci.methods"] or "centroid" in cfg["ci.methods"]:
            iid = iid_bootstrap_particles(model, m, rng=RngStream(seed, (trial, IID, m)))
        if "bootstrap" in cfg["ci.methods"]:
            clouds["bootstrap", m] = ParticleCloud.uniform(iid)
        if "bayesian" in cfg["ci.methods"]:
            clouds["bayesian", m] = ParticleCloud.uniform(iid_bootstrap_particles(
                model, m, WeightScheme.BAYESIAN, rng=RngStream(seed, (trial, BAYES, m))))
        if "residual" in cfg["ci.methods"]:
            clouds["residual", m] = ParticleCloud.uniform(
                residual_bootstrap_particles(model, m, RngStream(seed, (trial, RESID, m))))
        if "centroid" in cfg["ci.methods"]:
            ens, _ = engine.run(model, engine_config(cfg, m),
                                RngStream(seed, (trial, ENGINE, m)), init=iid)
            clouds["centroid", m] = ParticleCloud(ens.centroids, ens.probs)
            clouds["centroid_uniform", m] = ParticleCloud.uniform(ens.centroids)
    return model, clouds


def _ci_trial(args):
    cfg, trial = args
    model, clouds = _ci_clouds(cfg, trial)
    coord = cfg["ci.coordinate"]
    theta_hat = model.mle()[coord]
    truth = cfg["ci.theta_true"][coord]
    hits = {}
    for (method, m), cloud in clouds.items():
        for alpha in cfg["ci.alpha"]:
            for kind in cfg["ci.kinds"]:
                ci = interval(kind, theta_hat, cloud, coord, alpha)
                hits[alpha, method, m, kind] = ci.contains(truth)
    return hits


CI_COLUMNS = ["alpha", "method", "m", "kind", "coverage", "abs_error", "mc_sd", "trials"]


def ci_experiment(cfg: dict, jobs: int = 1) -> list:
    """Rows of ``|coverage - alpha|`` per (alpha, method, m, interval kind).

    ``mc_sd`` is the binomial standard deviation of the coverage estimate.
    Method ``centroid`` weights centroids by their learned probabilities;
    ``centroid_uniform`` gives every centroid the same mass.
    """
    N = cfg["ci.trials"]
    if N == 0:
        return []
    per_trial = _map(_ci_trial, [(cfg, t) for t in range(N)], jobs)
    rows = []
    for key in per_trial[0]:
        alpha, method, m, kind = key
        cov = float(np.mean([h[key] for h in per_trial]))
        rows.append({"alpha": alpha, "method": method, "m": m, "kind": kind,
                     "coverage": cov, "abs_error": abs(cov - alpha),
                     "mc_sd": math.sqrt(cov * (1 - cov) / N), "trials": N})
    return rows


# -- Wasserstein distance to the reference bootstrap cloud -----------------

def _wass_trial(args):
    cfg, trial = args
    seed = cfg["seed"]
    model = generate_dataset(LinearGenConfig(cfg["wass.n"], tuple(cfg["wass.theta_true"])),
                             RngStream(seed, (trial, DATA)))
    metric = DMetric(model.hessian_at())
    ref_pts = iid_bootstrap_particles(model, cfg["wass.ref_size"], rng=RngStream(seed, (trial, REF)))
    ref = ParticleCloud.uniform(ref_pts)
    out = {}
    for m in cfg["wass.m"]:
        if cfg["wass.iid_source"] == "reference":
            iid = ref_pts[:m]
        else:
            iid = iid_bootstrap_particles(model, m, rng=RngStream(seed, (trial, IID, m)))
        out["iid", m] = wasserstein2(ParticleCloud.uniform(iid), ref, metric)
        ens, _ = engine.run(model, engine_config(cfg, m),
                            RngStream(seed, (trial, ENGINE, m)), init=iid)
        out["centroid", m] = wasserstein2(ParticleCloud(ens.centroids, ens.probs), ref, metric)
        out["centroid_uniform", m] = wasserstein2(
            ParticleCloud.uniform(ens.centroids), ref, metric)
    return out


WASS_COLUMNS = ["m", "method", "mean_w2", "std_w2", "se_w2", "trials", "p_vs_iid"]


def wasserstein_experiment(cfg: dict, jobs: int = 1, return_raw: bool = False):
    """Mean W2 of each particle cloud to a large i.i.d. reference cloud.

    ``p_vs_iid`` is the one-sided paired t-test p-value for the method
    having smaller W2 than the i.i.d. cloud of the same trial.
    """
    N = cfg["wass.trials"]
    per_trial = _map(_wass_trial, [(cfg, t) for t in range(N)], jobs) if N else []
    rows = []
    if per_trial:
        for key in per_trial[0]:
            method, m = key
            vals = np.array([r[key] for r in per_trial])
            p = ""
            if method != "iid" and N > 1:
                base = np.array([r["iid", m] for r in per_trial])
                p = float(stats.ttest_rel(vals, base, alternative="less").pvalue)
            sd = float(vals.std(ddof=1)) if N > 1 else 0.0
            rows.append({"m": m, "method": method, "mean_w2": float(vals.mean()), "std_w2": sd,
                         "se_w2": sd / math.sqrt(N), "trials": N, "p_vs_iid": p})
    return (rows, per_trial) if return_raw else rows


# -- contextual bandit -----------------------------------------------------

def gamma_value(label: str, m: int) -> float:
    """``"0.5/m"`` -> ``0.5 / m``; ``"m"`` -> ``m``; plain numbers pass through."""
    label = label.strip()
    label_is_ratio = label.endswith("/m")
    if label == "-":  # naive arms ignore gamma
        return 0.0
    if label == "m":
        return float(m)
    if label_is_ratio:
        label = label[:-2]
    try:
        value = float(label)
    except ValueError:
        raise ContractError(f"bad gamma label {label!r}") from None
    return value / m if label_is_ratio else value


def make_env(cfg: dict):
    if cfg["bandit.env"] == "synthetic":
        return SyntheticLinearBandit(cfg["bandit.context_dim"], cfg["bandit.num_actions"],
                                     cfg["bandit.noise"], cfg["bandit.env_seed"])
    return load_classification_bandit(cfg["bandit.env"])


def _bandit_job(args):
    cfg, strategy, m, gamma_label, s = args
    env = make_env(cfg)
    seed = cfg["seed"]
    bcfg = BanditConfig(m=m, gamma=gamma_value(gamma_label, m), freq=cfg["bandit.freq"],
                        M=cfg["bandit.M"], train_iters=cfg["bandit.train_iters"],
                        batch=cfg["bandit.batch"], horizon=cfg["bandit.horizon"],
                        lr=cfg["bandit.lr"])
    seq = env.draw_sequence(bcfg.horizon, RngStream(seed, (s, SEQ)))
    total, _ = run_bandit(env, bcfg, strategy, RngStream(seed, (s, AGENT, m)), sequence=seq)
    return total


BANDIT_COLUMNS = ["strategy", "m", "gamma_label", "gamma", "mean_reward", "std_reward",
                  "seeds", "paired_diff_vs_naive", "paired_t", "p_greater_than_naive"]


def bandit_arms(cfg: dict) -> list:
    arms = []
    for m in cfg["bandit.m"]:
        for strategy in cfg["bandit.strategies"]:
            labels = cfg["bandit.gamma"] if strategy == "centroid" else ["-"]
            arms.extend((strategy, m, g) for g in labels)
    return arms


def bandit_experiment(cfg: dict, jobs: int = 1, return_raw: bool = False):
    """Cumulative reward per (strategy, m, gamma) over shared context sequences."""
    seeds = range(cfg["bandit.seeds"])
    arms = bandit_arms(cfg)
    for _, m, g in arms:  # fail on bad labels before any work starts
        gamma_value(g, m)
    jobs_list = [(cfg, st, m, g, s) for (st, m, g) in arms for s in seeds]
    flat = _map(_bandit_job, jobs_list, jobs)
    k = len(seeds)
    raw = {arm: np.array(flat[i * k:(i + 1) * k]) for i, arm in enumerate(arms)}
    rows = []
    for (strategy, m, g), vals in raw.items():
        naive = raw.get(("naive", m, "-"))
        diff = t_stat = p = ""
        if strategy != "naive" and naive is not None and k > 1:
            d = vals - naive
            diff = float(d.mean())
            res = stats.ttest_rel(vals, naive, alternative="greater")
            t_stat, p = float(res.statistic), float(res.pvalue)
        rows.append({"strategy": strategy, "m": m, "gamma_label": g,
                     "gamma": "" if g == "-" else gamma_value(g, m),
                     "mean_reward": float(vals.mean()) if k else float("nan"),
                     "std_reward": float(vals.std(ddof=1)) if k > 1 else 0.0,
                     "seeds": k, "paired_diff_vs_naive": diff, "paired_t": t_stat,
                     "p_greater_than_naive": p})
    return (rows, raw) if return_raw else rows
