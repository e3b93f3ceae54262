"""
Uncertainty-aware INVASE.

Three networks are trained jointly:

* the selector maps a feature vector to per-feature selection probabilities
  and is trained as a policy with the score-function estimator;
* the predictor sees the selected features (zero-filled, with the mask
  appended) and outputs a Gaussian mean ``mu`` and log-variance ``logvar``;
* the baseline sees every feature and regresses the label with an l2 loss.

The selector reward for one sample is::

    R = omega * sigma^2 + (baseline_loss - predictor_loss) - lam * |s|_0

where ``predictor_loss`` is the Gaussian negative log-likelihood (or the l2
loss in vanilla mode). Setting ``omega = 0`` drops the uncertainty preference;
vanilla mode additionally freezes the log-variance head at zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, TrainingDivergence, UsageError
from .nn import DenseNetwork, Layer, Optimizer, network_from_dict, network_to_dict

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
PROB_EPS = 1e-8
MODEL_FORMAT = "uainvase-model/1"
HISTORY_COLUMNS = (
    "iteration",
    "predictor_loss",
    "baseline_loss",
    "mean_reward",
    "mean_mask_size",
    "mean_logvar",
)


@dataclass(frozen=True)
class SelectionMask:
    probabilities: np.ndarray
    mask: np.ndarray

    @property
    def size(self):
        """l0 norm of the mask (per row for a batch)."""
        return self.mask.sum(axis=-1)


@dataclass(frozen=True)
class GaussianPrediction:
    mu: np.ndarray
    logvar: np.ndarray

    @property
    def variance(self):
        return np.exp(self.logvar)


@dataclass
class TrainingConfig:
    lam: float = 0.1
    omega: float = 0.1
    uncertainty_enabled: bool = True
    iterations: int = 1_500
    batch_size: int = 64
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 100
    history_every: int = 100

    def __post_init__(self):
        if self.lam < 0 or self.omega < 0:
            raise ConfigurationError("lam and omega must be non-negative")
        if self.iterations < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigurationError("iterations, batch_size and hidden must be positive")
        if self.history_every < 1:
            raise ConfigurationError("history_every must be positive")

    @property
    def effective_omega(self) -> float:
        return self.omega if self.uncertainty_enabled else 0.0

    @property
    def mode(self) -> str:
        return "uncertainty" if self.uncertainty_enabled else "vanilla"

    def adam(self) -> dict:
        return dict(lr=self.learning_rate, beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown training keys: {sorted(unknown)}")
        return cls(**doc)


class Predictor:
    """Shared trunk with a mean head and a log-variance head.

    ``forward`` returns an ``(n, 2)`` array of ``[mu, logvar]`` with logvar
    clamped to ``[LOGVAR_MIN, LOGVAR_MAX]``. A frozen log-variance head is
    all zeros and is never updated, so it always emits ``logvar == 0``.
    """

    def __init__(self, trunk: DenseNetwork, mean_head: DenseNetwork,
                 logvar_head: DenseNetwork, logvar_frozen: bool = False):
        if mean_head.n_in != trunk.n_out or logvar_head.n_in != trunk.n_out:
            raise ConfigurationError("heads must take the trunk output")
        if mean_head.n_out != 1 or logvar_head.n_out != 1:
            raise ConfigurationError("each head produces one value")
        self.trunk = trunk
        self.mean_head = mean_head
        self.logvar_head = logvar_head
        self.logvar_frozen = logvar_frozen

    @classmethod
    def build(cls, d: int, hidden: int, rng, logvar_frozen: bool = False):
        trunk = DenseNetwork.build([2 * d, hidden, hidden], ["relu", "relu"], rng)
        mean_head = DenseNetwork.build([hidden, 1], ["identity"], rng)
        logvar_head = DenseNetwork.build([hidden, 1], ["identity"], rng)
        if logvar_frozen:
            logvar_head = DenseNetwork([Layer(np.zeros((1, hidden)), np.zeros(1))])
        return cls(trunk, mean_head, logvar_head, logvar_frozen)

    @property
    def n_in(self) -> int:
        return self.trunk.n_in

    def params(self):
        return self.trunk.params() + self.mean_head.params() + self.logvar_head.params()

    def copy(self) -> "Predictor":
        return Predictor(self.trunk.copy(), self.mean_head.copy(),
                         self.logvar_head.copy(), self.logvar_frozen)

    def forward(self, batch):
        h, t_trunk = self.trunk.forward(batch)
        mu, t_mean = self.mean_head.forward(h)
        raw, t_logvar = self.logvar_head.forward(h)
        logvar = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
        inside = (raw >= LOGVAR_MIN) & (raw <= LOGVAR_MAX)
        return np.hstack([mu, logvar]), (t_trunk, t_mean, t_logvar, inside)

    def __call__(self, batch):
        return self.forward(batch)[0]

    def backward(self, tape, output_grad):
        t_trunk, t_mean, t_logvar, inside = tape
        g = np.asarray(output_grad, dtype=np.float64)
        g_mean, dh_mean = self.mean_head.backward(t_mean, g[:, :1])
        g_logvar, dh_logvar = self.logvar_head.backward(t_logvar, g[:, 1:] * inside)
        g_trunk, dx = self.trunk.backward(t_trunk, dh_mean + dh_logvar)
        return g_trunk + g_mean + g_logvar, dx


def suppress(x, s):
    """Predictor input for features ``x`` under mask ``s``: ``[x * s, s]``.

    Unselected coordinates become 0 and the appended mask channel tells the
    predictor which zeros are suppressed rather than measured. Works on a
    single vector or a batch of rows.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if x.shape != s.shape:
        raise UsageError(f"features {x.shape} and mask {s.shape} differ in shape")
    return np.concatenate([x * s, s], axis=-1)


def select_probabilities(selector: DenseNetwork, x_batch):
    pi = selector(x_batch)
    if not np.all(np.isfinite(pi)):
        raise TrainingDivergence("selector produced non-finite probabilities")
    return pi


def sample_mask(pi, rng):
    """Independent Bernoulli(pi) draw per coordinate, as a float 0/1 array."""
    pi = np.asarray(pi, dtype=np.float64)
    return (rng.random(pi.shape) < pi).astype(np.float64)


def threshold_mask(pi):
    return (np.asarray(pi) > 0.5).astype(np.float64)


def gaussian_nll(mu, logvar, y):
    """Per-sample ``0.5 * logvar + (y - mu)^2 / (2 exp(logvar))``.

    The constant ``0.5 * log(2 pi)`` is omitted.
    """
    mu, logvar, y = np.broadcast_arrays(
        np.asarray(mu, dtype=np.float64),
        np.asarray(logvar, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
    )
    with np.errstate(over="ignore", invalid="ignore"):
        loss = 0.5 * logvar + 0.5 * (y - mu) ** 2 * np.exp(-logvar)
    if not np.all(np.isfinite(loss)):
        raise TrainingDivergence("non-finite Gaussian negative log-likelihood")
    return loss


def gaussian_nll_grad(mu, logvar, y):
    """Derivatives of :func:`gaussian_nll` w.r.t. ``mu`` and ``logvar``."""
    inv = np.exp(-logvar)
    r = y - mu
    return -r * inv, 0.5 - 0.5 * r * r * inv


def predictor_loss(mu, logvar, y, mode: str):
    if mode == "uncertainty":
        return gaussian_nll(mu, logvar, y)
    if mode == "vanilla":
        return (np.asarray(y) - np.asarray(mu)) ** 2
    raise ConfigurationError(f"unknown mode {mode!r}")


def advantage(predictor_losses, baseline_losses):
    """Per-sample ``baseline_loss - predictor_loss``; positive favours the subset."""
    return np.asarray(baseline_losses) - np.asarray(predictor_losses)


def loss_estimator(x, y, masks, predictor: Predictor, baseline: DenseNetwork, mode: str):
    """Per-sample advantage of the selected subset over the full-feature baseline."""
    if mode == "uncertainty" and predictor.logvar_frozen:
        raise ConfigurationError("uncertainty mode needs a trainable log-variance head")
    out = predictor(suppress(x, masks))
    base = baseline(x)[:, 0]
    return advantage(predictor_loss(out[:, 0], out[:, 1], y, mode), (y - base) ** 2)


def reward(adv, variance, mask_size, config: TrainingConfig):
    """Selector reward; with ``effective_omega == 0`` this is ``adv - lam * |s|_0``."""
    omega = config.effective_omega
    core = np.asarray(adv, dtype=np.float64)
    if omega != 0.0:
        core = omega * np.asarray(variance) + core
    return core - config.lam * np.asarray(mask_size, dtype=np.float64)


def selector_policy_loss(pi, s, rewards):
    """Score-function loss and its gradient w.r.t. ``pi``.

    ``loss = -(1/n) sum_i R_i sum_j [s_ij log pi_ij + (1 - s_ij) log(1 - pi_ij)]``
    with ``pi`` clamped to ``[1e-8, 1 - 1e-8]`` inside the logs. Rewards are
    constants.
    """
    pi = np.asarray(pi, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if pi.shape != s.shape or pi.ndim != 2 or rewards.shape != (pi.shape[0],):
        raise UsageError(
            f"shapes pi {pi.shape}, s {s.shape}, rewards {rewards.shape} are inconsistent"
        )
    n = pi.shape[0]
    p = np.clip(pi, PROB_EPS, 1.0 - PROB_EPS)
    log_lik = s * np.log(p) + (1.0 - s) * np.log(1.0 - p)
    loss = -float(np.sum(rewards * log_lik.sum(axis=1))) / n
    inside = (pi >= PROB_EPS) & (pi <= 1.0 - PROB_EPS)
    d_pi = -(rewards[:, None] / n) * (s / p - (1.0 - s) / (1.0 - p)) * inside
    return loss, d_pi


@dataclass
class TrainedModel:
    selector: DenseNetwork
    predictor: Predictor
    baseline: DenseNetwork
    config: TrainingConfig
    history: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.selector.n_in

    def snapshot(self) -> "TrainedModel":
        return TrainedModel(self.selector.copy(), self.predictor.copy(),
                            self.baseline.copy(), self.config, list(self.history))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "config": asdict(self.config),
            "selector": network_to_dict(self.selector),
            "predictor": {
                "trunk": network_to_dict(self.predictor.trunk),
                "mean_head": network_to_dict(self.predictor.mean_head),
                "logvar_head": network_to_dict(self.predictor.logvar_head),
                "logvar_frozen": self.predictor.logvar_frozen,
            },
            "baseline": network_to_dict(self.baseline),
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ConfigurationError(f"unsupported model format {doc.get('format')!r}")
        p = doc["predictor"]
        predictor = Predictor(
            network_from_dict(p["trunk"]),
            network_from_dict(p["mean_head"]),
            network_from_dict(p["logvar_head"]),
            p["logvar_frozen"],
        )
        model = cls(
            network_from_dict(doc["selector"]),
            predictor,
            network_from_dict(doc["baseline"]),
            TrainingConfig.from_dict(doc["config"]),
            doc.get("history", []),
        )
        if predictor.n_in != 2 * model.d or model.baseline.n_in != model.d:
            raise ConfigurationError("checkpoint networks disagree on the feature count")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_history_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for row in self.history:
                writer.writerow([row[c] for c in HISTORY_COLUMNS])


def init_model(d: int, config: TrainingConfig, rng) -> TrainedModel:
    h = config.hidden
    selector = DenseNetwork.build([d, h, h, d], ["relu", "relu", "sigmoid"], rng)
    predictor = Predictor.build(d, h, rng, logvar_frozen=not config.uncertainty_enabled)
    baseline = DenseNetwork.build([d, h, h, 1], ["relu", "relu", "identity"], rng)
    return TrainedModel(selector, predictor, baseline, config)


def _batches(n, batch_size, rng):
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield perm[start:start + batch_size]


def train(dataset, config: TrainingConfig, rng=None, callback=None) -> TrainedModel:
    """Jointly train selector, predictor and baseline on standardized data.

    Each iteration draws one minibatch (epoch-wise shuffling) and one mask
    sample per row, then updates the predictor, the baseline and finally the
    selector, whose reward is computed with the freshly updated predictor and
    baseline. ``callback(iteration, info)``, if given, receives the batch,
    masks, rewards and the model right before the selector update.
    """
    rng = np.random.default_rng(config.seed if rng is None else rng)
    x_all, y_all = dataset.features, dataset.labels
    model = init_model(x_all.shape[1], config, rng)
    if config.iterations == 0:
        return model

    pred = model.predictor
    hyper = config.adam()
    opt_trunk = Optimizer(pred.trunk, **hyper)
    opt_mean = Optimizer(pred.mean_head, **hyper)
    opt_logvar = None if pred.logvar_frozen else Optimizer(pred.logvar_head, **hyper)
    opt_base = Optimizer(model.baseline, **hyper)
    opt_sel = Optimizer(model.selector, **hyper)
    mode = config.mode
    last_good = model.snapshot()

    batches = _batches(len(y_all), config.batch_size, rng)
    for it in range(config.iterations):
        try:
            idx = next(batches)
            x, y = x_all[idx], y_all[idx]
            n = len(idx)

            pi, sel_tape = model.selector.forward(x)
            if not np.all(np.isfinite(pi)):
                raise TrainingDivergence("selector produced non-finite probabilities")
            s = sample_mask(pi, rng)
            z = suppress(x, s)

            # predictor (and its log-variance head)
            out, p_tape = pred.forward(z)
            mu, logvar = out[:, 0], out[:, 1]
            if mode == "uncertainty":
                p_loss = gaussian_nll(mu, logvar, y).mean()
                d_mu, d_logvar = gaussian_nll_grad(mu, logvar, y)
            else:
                p_loss = np.mean((y - mu) ** 2)
                d_mu, d_logvar = -2.0 * (y - mu), np.zeros(n)
            grads, _ = pred.backward(p_tape, np.column_stack([d_mu, d_logvar]) / n)
            n_t, n_m = len(pred.trunk.params()), len(pred.mean_head.params())
            opt_trunk.step(grads[:n_t])
            opt_mean.step(grads[n_t:n_t + n_m])
            if opt_logvar is not None:
                opt_logvar.step(grads[n_t + n_m:])

            # baseline
            b, b_tape = model.baseline.forward(x)
            b_loss = np.mean((y - b[:, 0]) ** 2)
            b_grads, _ = model.baseline.backward(b_tape, (-2.0 / n) * (y[:, None] - b))
            opt_base.step(b_grads)

            # selector, scored by the updated critics
            out = pred(z)
            mu, logvar = out[:, 0], out[:, 1]
            base_l2 = (y - model.baseline(x)[:, 0]) ** 2
            adv = advantage(predictor_loss(mu, logvar, y, mode), base_l2)
            rewards = reward(adv, np.exp(logvar), s.sum(axis=1), config)
            if not (np.isfinite(p_loss) and np.isfinite(b_loss) and np.all(np.isfinite(rewards))):
                raise TrainingDivergence("non-finite loss")
            if callback is not None:
                callback(it, dict(index=idx, x=x, y=y, pi=pi, masks=s, mu=mu,
                                  logvar=logvar, advantage=adv, rewards=rewards,
                                  model=model))
            _, d_pi = selector_policy_loss(pi, s, rewards)
            sel_grads, _ = model.selector.backward(sel_tape, d_pi)
            opt_sel.step(sel_grads)
        except TrainingDivergence as exc:
            raise TrainingDivergence(
                f"training diverged at iteration {it}: {exc}",
                iteration=it, layer=exc.layer, last_good=last_good,
            ) from exc

        if it % config.history_every == 0 or it == config.iterations - 1:
            model.history.append({
                "iteration": it,
                "predictor_loss": float(p_loss),
                "baseline_loss": float(b_loss),
                "mean_reward": float(rewards.mean()),
                "mean_mask_size": float(s.sum(axis=1).mean()),
                "mean_logvar": float(logvar.mean()),
            })
            last_good = model.snapshot()
    return model


@dataclass(frozen=True)
class InvasePrediction:
    selection: SelectionMask
    gaussian: GaussianPrediction

    @property
    def score(self):
        return self.gaussian.mu

    @property
    def uncertainty(self):
        return self.gaussian.variance


def predict(model: TrainedModel, x_batch) -> InvasePrediction:
    """Deterministic test-time prediction with the mask ``1[pi > 0.5]``."""
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise UsageError(f"expected rows of width {model.d}, got shape {x.shape}")
    pi = select_probabilities(model.selector, x)
    s = threshold_mask(pi)
    out = model.predictor(suppress(x, s))
    return InvasePrediction(SelectionMask(pi, s), GaussianPrediction(out[:, 0], out[:, 1]))
