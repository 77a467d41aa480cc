"""Model and sampler configuration: defaults, key=value files, validation."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace


class ConfigError(ValueError):
    """Unparseable or invalid configuration."""


@dataclass
class ModelConfig:
    """All model hyperparameters and sampler knobs (paper-symbol names).

    `eta` may be a single event probability shared by all topics or one
    value per topic. `prop_sd_theta` has one entry per link coefficient
    (intercept, block similarity, 7-day lag, receiver indegree, sender
    outdegree).
    """

    K: int = 22                    # number of topics
    ell: int = 62                  # sliding-window length (days)
    alpha: float = 0.1             # topic-mixture concentration
    beta: float = 0.1              # token-distribution concentration
    P: float = 50.0                # interest concentration inside a block
    lambda_D: float = 20.0         # mean tokens per post (simulation)
    eta: tuple[float, ...] = (0.01,)   # event probability per topic (or shared)
    E_pi: float = 0.2              # event prior used by the sampler
    lambda_B: float = 25.0         # prior mean number of occupied blocks
    alpha_B: float = 1.0           # block-membership concentration
    a_psi: float = 1.0             # event-boost Gamma shape (simulation)
    b_psi: float = 2.0             # event-boost Gamma rate (simulation)
    a_rho: float = 4.0             # posting-rate Gamma shape (simulation)
    b_rho: float = 1.0             # posting-rate Gamma rate (simulation)
    mu_theta: float = 0.0          # link-coefficient prior mean
    sigma_theta: float = 1000.0    # link-coefficient prior sd
    rho_prior_mean: float = 4.0    # posting-rate prior (truncated normal)
    rho_prior_sd: float = 1000.0
    psi_prior_mean: float = 0.0    # event-boost prior (truncated normal)
    psi_prior_sd: float = 1000.0
    prop_sd_rho: float = 0.5       # random-walk proposal sds
    prop_sd_psi: float = 0.5
    prop_sd_theta: tuple[float, ...] = (1.0, 0.25, 0.25, 0.25, 0.25)
    iters: int = 1000              # Gibbs iterations
    burn_in: int = 100             # discarded iterations
    thin: int = 10                 # keep every thin-th post-burn-in snapshot
    sweeps: int = 10               # topic resampling passes per iteration
    network_updates: int = 10      # link-coefficient passes per iteration
    block_sweeps: int = 10         # block reassignment passes per iteration
    seed: int = 0

    def eta_for(self, n_topics: int):
        """Per-topic event probabilities, broadcasting a shared value."""
        if len(self.eta) == 1:
            return tuple(self.eta) * n_topics
        if len(self.eta) != n_topics:
            raise ConfigError(
                f"eta has {len(self.eta)} entries, expected 1 or {n_topics}"
            )
        return tuple(self.eta)

    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


_TUPLE_FIELDS = {"eta", "prop_sd_theta"}
_INT_FIELDS = {"K", "ell", "iters", "burn_in", "thin", "sweeps",
               "network_updates", "block_sweeps", "seed"}


def parse_config(path) -> ModelConfig:
    """Read a flat key=value file ('#' comments, blank lines ignored)."""
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            overrides[key] = value
    return apply_overrides(ModelConfig(), overrides)


def apply_overrides(cfg: ModelConfig, overrides: dict) -> ModelConfig:
    """Apply string or typed overrides; unknown keys and bad values raise."""
    known = {f.name for f in fields(cfg)}
    parsed = {}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _TUPLE_FIELDS:
                if isinstance(value, str):
                    value = tuple(float(x) for x in value.split(","))
                else:
                    value = tuple(float(x) for x in value)
            elif key in _INT_FIELDS:
                value = int(value)
            else:
                value = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key!r}: {value!r}")
        parsed[key] = value
    return replace(cfg, **parsed)


def write_config(cfg: ModelConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(cfg):
            v = getattr(cfg, f.name)
            if isinstance(v, tuple):
                v = ",".join(format(x, "g") for x in v)
            fh.write(f"{f.name}={v}\n")


def validate_config(cfg: ModelConfig) -> list[str]:
    """Return ALL violations (empty list = valid); does not raise."""
    errs = []

    def positive(name, ok_zero=False):
        v = getattr(cfg, name)
        if ok_zero:
            if v < 0:
                errs.append(f"{name} must be nonnegative, got {v}")
        elif v <= 0:
            errs.append(f"{name} must be positive, got {v}")

    if cfg.K < 1:
        errs.append(f"K must be at least 1, got {cfg.K}")
    if cfg.ell < 1:
        errs.append(f"ell must be at least 1, got {cfg.ell}")
    for name in ("alpha", "beta", "P", "lambda_D", "lambda_B", "alpha_B",
                 "a_psi", "b_psi", "a_rho", "b_rho", "sigma_theta",
                 "rho_prior_sd", "psi_prior_sd", "prop_sd_rho", "prop_sd_psi"):
        positive(name)
    for i, e in enumerate(cfg.eta):
        if not (0.0 <= e <= 1.0):
            errs.append(f"eta[{i}] must be in [0, 1], got {e}")
    if not (0.0 < cfg.E_pi < 1.0):
        errs.append(f"E_pi must be in (0, 1), got {cfg.E_pi}")
    if len(cfg.prop_sd_theta) != 5:
        errs.append(
            f"prop_sd_theta needs 5 entries, got {len(cfg.prop_sd_theta)}"
        )
    for i, s in enumerate(cfg.prop_sd_theta):
        if s <= 0:
            errs.append(f"prop_sd_theta[{i}] must be positive, got {s}")
    if cfg.iters < 1:
        errs.append(f"iters must be at least 1, got {cfg.iters}")
    if cfg.burn_in < 0:
        errs.append(f"burn_in must be nonnegative, got {cfg.burn_in}")
    if cfg.thin < 1:
        errs.append(f"thin must be at least 1, got {cfg.thin}")
    for name in ("sweeps", "network_updates", "block_sweeps"):
        positive(name, ok_zero=True)
    if cfg.burn_in >= cfg.iters:
        errs.append(
            f"burn_in={cfg.burn_in} >= iters={cfg.iters}: nothing retained"
        )
    return errs


def require_valid(cfg: ModelConfig) -> ModelConfig:
    errs = validate_config(cfg)
    if errs:
        raise ConfigError("; ".join(errs))
    return cfg
