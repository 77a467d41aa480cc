"""Metropolis-within-Gibbs sampler for the joint topic/block/network model.

Each iteration runs four stages:
  1. topic resampling for every day in order (`sweeps` passes per day),
     with per-blog augmentation weights from the current post rates;
  2. per-blog interest vectors (Dirichlet-proposal MH) and posting rates
     (truncated-normal MH), then event indicators (flip proposals) and
     event boosts (truncated-normal MH);
  3. link coefficients, one Gaussian random-walk MH step per coefficient,
     repeated `network_updates` times;
  4. block reassignment by exact Gibbs draws over candidate blocks,
     repeated `block_sweeps` times.

Hastings corrections are included for the asymmetric Dirichlet and
truncated-normal proposals. All probability arithmetic is in log space.
Given a seed, a run is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr, ndtri

from .config import ModelConfig
from .corpus import N_THETA, AuditError, PosteriorDraws
from .genmodel import (BlockCatalog, block_similarity, covariate_history,
                       dirichlet_floor, rate_matrix, sigmoid)
from .gsdmm import augmentation_weights, init_assignments, sweep_day
from .jit import njit
from .windows import WindowCounts

_PI_FLOOR = 1e-10


def log_dirichlet(x, alpha) -> float:
    """Dirichlet log-density at x (x on the simplex, all entries > 0)."""
    x = np.asarray(x, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    return float(np.sum((alpha - 1.0) * np.log(x))
                 + gammaln(alpha.sum()) - np.sum(gammaln(alpha)))


def trunc_normal_draw(rng, mean, sd) -> float:
    """One draw from Normal(mean, sd) truncated to (0, inf), inverse-CDF."""
    lo = ndtr(-mean / sd)
    u = lo + rng.random() * (1.0 - lo)
    u = min(u, np.nextafter(1.0, 0.0))
    x = mean + sd * ndtri(u)
    return max(x, 1e-300)


def trunc_normal_hastings(cur, prop, sd) -> float:
    """log q(cur|prop) - log q(prop|cur) for a truncated-normal random walk."""
    return float(log_ndtr(cur / sd) - log_ndtr(prop / sd))


@njit(cache=True)
def _softplus_delta_sum(eta, x, delta):
    """sum of log(1 + exp(eta + delta * x)) without temporaries."""
    total = 0.0
    for idx in range(eta.shape[0]):
        v = eta[idx] + delta * x[idx]
        if v > 35.0:
            total += v
        elif v > -35.0:
            total += math.log1p(math.exp(v))
    return total


@dataclass
class FitResult:
    draws: PosteriorDraws
    acceptance: dict
    n_iterations: int


def run_sampler(corpus, adjacency, cfg: ModelConfig, *, text_only=False,
                log_fn=None, audit_every=100) -> FitResult:
    """Fit the model; see the module docstring for the stage schedule.

    `adjacency` may be None, which forces text-only mode (stages 2-4
    skipped, uniform augmentation weights). `log_fn`, if given, receives
    one dict per iteration.
    """
    sampler = Sampler(corpus, adjacency, cfg, text_only=text_only,
                      log_fn=log_fn, audit_every=audit_every)
    return sampler.run()


class Sampler:
    def __init__(self, corpus, adjacency, cfg, *, text_only=False,
                 log_fn=None, audit_every=100):
        self.cfg = cfg
        self.corpus = corpus
        self.text_only = bool(text_only or adjacency is None)
        self.log_fn = log_fn
        self.audit_every = audit_every
        self.rng = np.random.default_rng(cfg.seed)
        self.n_topics = cfg.K
        self.n_blogs = corpus.n_blogs
        self.horizon = corpus.horizon
        self.vocab_size = len(corpus.vocabulary)
        self.arrays = corpus.to_arrays()
        self.by_day = corpus.posts_by_day()
        self.catalog = BlockCatalog(cfg.K)
        self.adj = (None if adjacency is None
                    else np.asarray(adjacency.a, dtype=np.uint8))
        self.accept = {}
        self.propose = {}
        if not self.text_only:
            self._network_setup()

    # ------------------------------------------------------------- setup

    def _network_setup(self):
        """Flatten ordered off-diagonal pairs for the link likelihood."""
        n = self.n_blogs
        offdiag = ~np.eye(n, dtype=bool)
        self.pairs_i, self.pairs_j = np.nonzero(offdiag)
        lag7, indeg, outdeg = covariate_history(self.adj)
        self.a_vec = self.adj[1:, self.pairs_i, self.pairs_j].astype(
            np.float64)  # (T, n_pairs)
        self.x_cov = np.empty((N_THETA,) + self.a_vec.shape)
        self.x_cov[0] = 1.0
        self.x_cov[1] = 0.0  # block similarity, refreshed when pi/b move
        self.x_cov[2] = lag7[1:, self.pairs_i, self.pairs_j]
        self.x_cov[3] = indeg[1:, self.pairs_j]   # receiver indegree
        self.x_cov[4] = outdeg[1:, self.pairs_i]  # sender outdegree
        self.a_pair_sum = self.a_vec.sum(axis=0)
        self.s_obs = np.array([(self.a_vec * self.x_cov[p]).sum()
                               for p in range(N_THETA)])

    def _tally(self, family, accepted):
        self.propose[family] = self.propose.get(family, 0) + 1
        if accepted:
            self.accept[family] = self.accept.get(family, 0) + 1

    def initialize(self):
        cfg, rng = self.cfg, self.rng
        n_posts = len(self.arrays)
        self.z = np.full(n_posts, -1, dtype=np.int64)
        self.wc = WindowCounts(self.n_topics, self.horizon, self.vocab_size,
                               cfg.ell)
        init_assignments(self.arrays, self.wc, self.z, self.by_day, rng,
                         cfg.alpha, cfg.beta, self.n_blogs)
        self._recount_posts()
        self.b = np.empty(self.n_blogs, dtype=np.int64)
        for i in range(self.n_blogs):
            cands = self._candidate_blocks(i)
            self.b[i] = cands[rng.integers(len(cands))]
        # empirical topic shares under the initial assignments, add-one
        # smoothed. A draw from the block prior can start entries near zero
        # for topics the blog does post in; the event stage then claims the
        # undershoot as a string of spurious always-on days before the
        # interest updates can catch up, and that basin is sticky.
        per_blog = self.post_counts.sum(axis=2).T.astype(np.float64)
        self.pi = ((per_blog + 1.0)
                   / (per_blog.sum(axis=1, keepdims=True) + self.n_topics))
        daily = self.corpus.daily_counts[1:].sum(axis=0)  # posts per blog
        self.rho = np.maximum(daily / self.horizon, 0.5 / self.horizon)
        self.theta = np.zeros(N_THETA)
        self.events = np.zeros((self.n_topics, self.horizon + 1),
                               dtype=np.int64)
        # prior mean, deterministically: a draw far above the posterior mode
        # can overshoot into the weak-events basin once updates start
        self.psi = np.full(self.n_topics, cfg.a_psi / cfg.b_psi)

    def _recount_posts(self):
        """D[k, i, t] = posts by blog i on day t assigned to topic k."""
        self.post_counts = np.zeros(
            (self.n_topics, self.n_blogs, self.horizon + 1), dtype=np.int64)
        np.add.at(self.post_counts,
                  (self.z, self.arrays.blogs, self.arrays.days), 1)

    def _candidate_blocks(self, i):
        """Blocks whose interest set meets the topics blog i has posted in."""
        topics = np.nonzero(self.post_counts[:, i, :].sum(axis=1))[0]
        if len(topics) == 0:
            return np.array([self.catalog.all_topics_block])
        mask = self.catalog.matrix[topics].any(axis=0)
        return np.nonzero(mask)[0]

    # ----------------------------------------------------------- stage 1

    def _xi_for_day(self, t):
        if self.text_only:
            return np.full((self.n_blogs, self.n_topics), 1.0 / self.n_topics)
        lam = rate_matrix(self.rho, self.pi,
                          self.events[:, t].astype(np.float64), self.psi)
        return augmentation_weights(lam)

    def stage_topics(self) -> int:
        cfg = self.cfg
        changed = 0
        for t in range(1, self.horizon + 1):
            post_ids = self.by_day[t]
            if len(post_ids) == 0:
                continue
            changed += sweep_day(self.arrays, self.wc, self.z, t, post_ids,
                                 self._xi_for_day(t), self.rng, cfg.alpha,
                                 cfg.beta, cfg.sweeps)
        self._recount_posts()
        return changed

    # ----------------------------------------------------------- stage 2

    def _event_tallies(self):
        """Per-topic event-day counts and per-(k,i) posts on event days."""
        e = self.events[:, 1:].astype(np.float64)  # (K, T)
        self.n_event_days = e.sum(axis=1)  # (K,)
        self.d_event = np.einsum("kt,kit->ki", e, self.post_counts[:, :, 1:])

    def _post_rate_loglik(self, i, pi_vec):
        """Poisson log-likelihood of blog i's daily topic post counts,
        grouped by event status (lam differs only through E_kt)."""
        d_total = self.post_counts[:, i, :].sum(axis=1).astype(np.float64)
        d1 = self.d_event[:, i]          # posts on event days, per topic
        d0 = d_total - d1
        n1 = self.n_event_days
        n0 = self.horizon - n1
        lam0 = self.rho[i] * pi_vec
        lam1 = self.rho[i] * (pi_vec + self.psi)
        ll = -np.sum(n0 * lam0) - np.sum(n1 * lam1)
        nz0, nz1 = d0 > 0, d1 > 0
        ll += np.sum(d0[nz0] * np.log(lam0[nz0]))
        ll += np.sum(d1[nz1] * np.log(lam1[nz1]))
        return float(ll)

    def pi_log_accept(self, i, cur, prop) -> float:
        alpha_prior = self.catalog.alpha_for(self.b[i], self.cfg.P)
        d_i = float(self.post_counts[:, i, :].sum())
        return (self._post_rate_loglik(i, prop)
                + log_dirichlet(prop, alpha_prior)
                - self._post_rate_loglik(i, cur)
                - log_dirichlet(cur, alpha_prior)
                + log_dirichlet(cur, prop * d_i)
                - log_dirichlet(prop, cur * d_i))

    def update_pi(self, i):
        cfg, rng = self.cfg, self.rng
        d_i = self.post_counts[:, i, :].sum()
        if d_i == 0:
            # post-rate likelihood does not depend on pi when the blog never
            # posts (rates sum over topics to rho_i); conditional = prior
            self.pi[i] = dirichlet_floor(
                rng, self.catalog.alpha_for(self.b[i], cfg.P))
            return
        cur = self.pi[i]
        prop = dirichlet_floor(rng, cur * d_i)
        prop = np.maximum(prop, _PI_FLOOR)
        prop /= prop.sum()
        ok = math.log(rng.random()) < self.pi_log_accept(i, cur, prop)
        if ok:
            self.pi[i] = prop
        self._tally("pi", ok)

    def rho_log_accept(self, i, cur, prop) -> float:
        cfg = self.cfg
        d_i = float(self.post_counts[:, i, :].sum())
        u_i = (self.horizon * float(self.pi[i].sum())
               + float(np.dot(self.n_event_days, self.psi)))
        dll = d_i * (math.log(prop) - math.log(cur)) - (prop - cur) * u_i
        dlp = -((prop - cfg.rho_prior_mean) ** 2
                - (cur - cfg.rho_prior_mean) ** 2) / (2 * cfg.rho_prior_sd ** 2)
        return dll + dlp + trunc_normal_hastings(cur, prop, cfg.prop_sd_rho)

    def update_rho(self, i):
        cfg, rng = self.cfg, self.rng
        cur = self.rho[i]
        prop = trunc_normal_draw(rng, cur, cfg.prop_sd_rho)
        ok = math.log(rng.random()) < self.rho_log_accept(i, cur, prop)
        if ok:
            self.rho[i] = prop
        self._tally("rho", ok)

    def update_events(self):
        cfg, rng = self.cfg, self.rng
        log_odds_on = math.log(cfg.E_pi) - math.log1p(-cfg.E_pi)
        for k in range(self.n_topics):
            lam0 = self.rho * self.pi[:, k]
            lam1 = self.rho * (self.pi[:, k] + self.psi[k])
            dlog = np.log(lam1) - np.log(lam0)
            dsum = float(np.sum(lam1 - lam0))
            d_k = self.post_counts[k]  # (I, T+1)
            for t in range(1, self.horizon + 1):
                on = float(np.dot(d_k[:, t], dlog)) - dsum
                if self.events[k, t] == 0:
                    log_accept = on + log_odds_on
                else:
                    log_accept = -on - log_odds_on
                ok = math.log(rng.random()) < log_accept
                if ok:
                    self.events[k, t] ^= 1
                self._tally("events", ok)
        self._event_tallies()

    def _event_day_logliks(self, k, psi_k):
        """Per-day Poisson log-likelihoods of topic k's counts without an
        event (lam = rho*pi) and with one (lam = rho*(pi+psi)); the d! terms
        are omitted, they cancel in every ratio these feed."""
        lam0 = self.rho * self.pi[:, k]
        lam1 = self.rho * (self.pi[:, k] + psi_k)
        d_k = self.post_counts[k][:, 1:].astype(np.float64)  # (I, T)
        l0 = d_k.T @ np.log(lam0) - lam0.sum()
        l1 = d_k.T @ np.log(lam1) - lam1.sum()
        return l0, l1

    def psi_marginal_diff(self, k, cur, prop) -> float:
        """Marginal likelihood plus prior log-ratio of prop vs cur, with
        the event indicators summed out per day.

        psi and the event row are tightly coupled: conditioning on the
        current events traps the chain in a many-weak-events mode, so psi
        updates target the marginal and redraw events afterwards.
        """
        cfg = self.cfg
        log_on = math.log(cfg.E_pi)
        log_off = math.log1p(-cfg.E_pi)
        l0, l1_cur = self._event_day_logliks(k, cur)
        _, l1_prop = self._event_day_logliks(k, prop)
        off = log_off + l0
        m_cur = float(np.logaddexp(off, log_on + l1_cur).sum())
        m_prop = float(np.logaddexp(off, log_on + l1_prop).sum())
        dlp = -((prop - cfg.psi_prior_mean) ** 2
                - (cur - cfg.psi_prior_mean) ** 2) / (2 * cfg.psi_prior_sd ** 2)
        return m_prop - m_cur + dlp

    def psi_log_accept(self, k, cur, prop) -> float:
        """Random-walk acceptance ratio on the event-marginalized target."""
        return (self.psi_marginal_diff(k, cur, prop)
                + trunc_normal_hastings(cur, prop, self.cfg.prop_sd_psi))

    def resample_events_row(self, k):
        """Draw topic k's event row from its exact conditional."""
        cfg, rng = self.cfg, self.rng
        log_odds_on = math.log(cfg.E_pi) - math.log1p(-cfg.E_pi)
        l0, l1 = self._event_day_logliks(k, self.psi[k])
        p_on = sigmoid(log_odds_on + l1 - l0)
        self.events[k, 1:] = rng.random(self.horizon) < p_on

    def update_psi(self, k):
        cfg, rng = self.cfg, self.rng
        cur = self.psi[k]
        if rng.random() < 0.2:
            # independence proposal from the gamma prior used at init: the
            # random walk alone cannot cross between the true-events mode
            # and the weak-events mode
            prop = float(rng.gamma(cfg.a_psi, 1.0 / cfg.b_psi))
            hastings = ((cfg.a_psi - 1.0) * (math.log(cur) - math.log(prop))
                        - cfg.b_psi * (cur - prop))
            log_a = self.psi_marginal_diff(k, cur, prop) + hastings
        else:
            prop = trunc_normal_draw(rng, cur, cfg.prop_sd_psi)
            log_a = self.psi_log_accept(k, cur, prop)
        ok = math.log(rng.random()) < log_a
        if ok:
            self.psi[k] = prop
            self.resample_events_row(k)
        self._tally("psi", ok)

    def stage_params(self):
        """One pass over interests, rates, event indicators and boosts."""
        self._event_tallies()
        for i in range(self.n_blogs):
            self.update_pi(i)
            self.update_rho(i)
        self.update_events()
        for k in range(self.n_topics):
            self.update_psi(k)
        self._event_tallies()

    # ----------------------------------------------------------- stage 3

    def _refresh_block_cov(self):
        b_flat = block_similarity(self.b, self.pi)[self.pairs_i, self.pairs_j]
        self.x_cov[1] = b_flat[None, :]
        self.s_obs[1] = float(b_flat @ self.a_pair_sum)

    def stage_theta(self):
        cfg, rng = self.cfg, self.rng
        self._refresh_block_cov()
        eta = np.tensordot(self.theta, self.x_cov, axes=1)  # (T, n_pairs)
        eta_flat = np.ascontiguousarray(eta).ravel()
        x_flat = [np.ascontiguousarray(self.x_cov[p]).ravel()
                  for p in range(N_THETA)]
        sp_cur = _softplus_delta_sum(eta_flat, x_flat[0], 0.0)
        for _ in range(cfg.network_updates):
            for p in range(N_THETA):
                delta = rng.normal(0.0, cfg.prop_sd_theta[p])
                sp_new = _softplus_delta_sum(eta_flat, x_flat[p], delta)
                dll = delta * self.s_obs[p] - (sp_new - sp_cur)
                cur = self.theta[p]
                dlp = -((cur + delta - cfg.mu_theta) ** 2
                        - (cur - cfg.mu_theta) ** 2) / (2 * cfg.sigma_theta ** 2)
                ok = math.log(rng.random()) < dll + dlp
                if ok:
                    self.theta[p] = cur + delta
                    eta_flat += delta * x_flat[p]
                    sp_cur = sp_new
                self._tally(f"theta_{p}", ok)
        self.network_loglik = float(np.dot(self.theta, self.s_obs)) - sp_cur

    # ----------------------------------------------------------- stage 4

    def _pair_logliks(self):
        """Per ordered pair, summed over days: Bernoulli log-lik with
        block similarity forced to 1 (same block) and to pi_i . pi_j."""
        th = self.theta
        base = (th[0] + th[2] * self.x_cov[2] + th[3] * self.x_cov[3]
                + th[4] * self.x_cov[4])
        dots = (self.pi @ self.pi.T)[self.pairs_i, self.pairs_j]
        n = self.n_blogs
        out = []
        for bval in (np.ones_like(dots), dots):
            eta = base + th[1] * bval[None, :]
            ll = (self.a_vec * eta - np.logaddexp(0.0, eta)).sum(axis=0)
            mat = np.zeros((n, n))
            mat[self.pairs_i, self.pairs_j] = ll
            out.append(mat)
        same, diff = out
        return (same + same.T) - (diff + diff.T)  # gain from sharing a block

    def block_log_probs(self, i, cands, counts, nonempty, gains) -> np.ndarray:
        """Unnormalized log-probabilities of candidate blocks for blog i.

        `counts`/`nonempty` must already exclude blog i; `gains[b]` is the
        network log-likelihood gain of sharing a block with b's members.
        """
        cfg = self.cfg
        inset_logpi = np.log(self.pi[i]) @ self.catalog.matrix
        sizes = self.catalog.sizes
        logp = np.empty(len(cands))
        for c_at, c in enumerate(cands):
            occupied = nonempty + (1 if counts[c] == 0 else 0)
            lp = (math.log(counts[c] + cfg.alpha_B)
                  - math.log(cfg.alpha_B * occupied + self.n_blogs - 1))
            s = sizes[c]
            lp += ((cfg.P - 1.0) * inset_logpi[c]
                   + gammaln(cfg.P * s + (self.n_topics - s))
                   - s * gammaln(cfg.P))
            lp += (occupied * math.log(cfg.lambda_B) - cfg.lambda_B
                   - gammaln(occupied + 1.0))
            lp += gains[c]
            logp[c_at] = lp
        return logp

    def stage_blocks(self):
        cfg, rng = self.cfg, self.rng
        nb = self.catalog.n_blocks
        delta_mat = self._pair_logliks()
        counts = np.bincount(self.b, minlength=nb)
        nonempty = int(np.count_nonzero(counts))
        switches = 0
        for _ in range(cfg.block_sweeps):
            for i in range(self.n_blogs):
                old = self.b[i]
                counts[old] -= 1
                if counts[old] == 0:
                    nonempty -= 1
                cands = self._candidate_blocks(i)
                gains = np.bincount(np.delete(self.b, i),
                                    weights=np.delete(delta_mat[i], i),
                                    minlength=nb)
                logp = self.block_log_probs(i, cands, counts, nonempty, gains)
                p = np.exp(logp - logp.max())
                p /= p.sum()
                at = int(np.searchsorted(np.cumsum(p), rng.random()))
                new = int(cands[min(at, len(cands) - 1)])
                if new != old:
                    switches += 1
                counts[new] += 1
                if counts[new] == 1:
                    nonempty += 1
                self.b[i] = new
        return switches

    # --------------------------------------------------------------- run

    def run(self) -> FitResult:
        cfg = self.cfg
        self.initialize()
        self.network_loglik = float("nan")
        kept = {name: [] for name in PosteriorDraws.FAMILIES}
        for it in range(1, cfg.iters + 1):
            changed = self.stage_topics()
            if not self.text_only:
                self.stage_params()
                self.stage_theta()
                switches = self.stage_blocks()
            else:
                switches = 0
            if it == 1 or (self.audit_every and it % self.audit_every == 0):
                self.audit()
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                kept["z"].append(self.z.copy())
                kept["b"].append(self.b.copy())
                kept["pi"].append(self.pi.copy())
                kept["rho"].append(self.rho.copy())
                kept["events"].append(self.events.astype(np.uint8))
                kept["psi"].append(self.psi.copy())
                kept["theta"].append(self.theta.copy())
            if self.log_fn is not None:
                self.log_fn({
                    "iteration": it,
                    "topic_moves": int(changed),
                    "block_switches": int(switches),
                    "network_loglik": self.network_loglik,
                    "acceptance": self.acceptance_rates(),
                })
        draws = self._collect(kept)
        return FitResult(draws, self.acceptance_rates(), cfg.iters)

    def acceptance_rates(self):
        return {fam: self.accept.get(fam, 0) / n
                for fam, n in sorted(self.propose.items())}

    def audit(self):
        self.wc.audit(self.arrays, self.z)
        fresh = np.zeros_like(self.post_counts)
        np.add.at(fresh, (self.z, self.arrays.blogs, self.arrays.days), 1)
        if not np.array_equal(fresh, self.post_counts):
            raise AuditError("per-blog post counts diverged from recount")

    def _collect(self, kept) -> PosteriorDraws:
        n = len(kept["z"])
        if n == 0:
            t1 = self.horizon + 1
            return PosteriorDraws(
                z=np.empty((0, len(self.arrays)), dtype=np.int64),
                b=np.empty((0, self.n_blogs), dtype=np.int64),
                pi=np.empty((0, self.n_blogs, self.n_topics)),
                rho=np.empty((0, self.n_blogs)),
                events=np.empty((0, self.n_topics, t1), dtype=np.uint8),
                psi=np.empty((0, self.n_topics)),
                theta=np.empty((0, N_THETA)),
            )
        return PosteriorDraws(**{k: np.stack(v) for k, v in kept.items()})
