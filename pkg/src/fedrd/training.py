"""Party simulation for federated training over relational data.

One iteration: the transaction party and the banks compute embeddings for a
minibatch, share them with the active party through the configured mechanism
(Gaussian perturbation + concatenation, or PBM + secure sum), the active
party updates the fusion model and returns partial derivatives, the
transaction party updates its model, and the banks combine their clipped,
quantized account-model gradients with a secure sum so every replica applies
the same step.

Partials are applied to the clean embeddings' tapes (straight-through past
the sharing mechanism).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mech, nn
from . import rng as rng_mod
from .accountant import BudgetInputs, PrivacyReport, budget_report
from .comms import CommLedger, Reconciliation, ceil_envelopes, closed_form, reconcile
from .data import Batch, RelationalDataset, sample_minibatch, take_batch
from .exceptions import ConfigError, FedRDError, NumericError, ProtocolInvariantError
from .metrics import auprc
from .secagg import RingConfig, message_bits, secure_sum

APPROACHES = ("concatenation", "summation", "none")
UNREACHED = "-"

# evaluation-time stream purposes, disjoint from training purposes
_EVAL_GAUSSIAN = 20
_EVAL_PBM = 21


@dataclass(frozen=True)
class TrainConfig:
    approach: str = "summation"
    fusion: str = "summation"  # fusion arity when approach == "none"
    epochs: int = 10
    batch_size: int = 128
    embedding_size: int = 64
    hidden: tuple[int, ...] = (128, 64)
    fusion_hidden: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    sigma2: float | None = None  # defaults to 4 / (bins * beta**2)
    bins: int = 64
    beta: float = 0.25
    clip: float = 1.0
    grad_bins: int = 1024
    grad_beta: float | None = None  # defaults to beta
    quantize_gradients: bool = True
    active_party: str = "transaction"
    float_bits: int = 32
    alphas: tuple[float, ...] = (2.0,)
    pbm_constant: float = 1.0
    eval_mechanism: bool = True
    max_iterations: int | None = None
    audit: bool = False
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "alphas", tuple(self.alphas))

    @property
    def arity(self) -> str:
        return self.fusion if self.approach == "none" else self.approach

    @property
    def private(self) -> bool:
        return self.approach != "none"

    @property
    def noise_variance(self) -> float:
        return self.sigma2 if self.sigma2 is not None else 4.0 / (self.bins * self.beta**2)

    @property
    def gradient_beta(self) -> float:
        return self.beta if self.grad_beta is None else self.grad_beta

    def validate(self) -> None:
        if self.approach not in APPROACHES:
            raise ConfigError(f"approach must be one of {APPROACHES}")
        if self.fusion not in ("concatenation", "summation"):
            raise ConfigError("fusion must be concatenation or summation")
        if self.epochs < 0 or self.batch_size < 1 or self.embedding_size < 1:
            raise ConfigError("epochs must be >= 0; batch_size and embedding_size >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer must be sgd or adam")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.active_party not in ("transaction", "standalone"):
            raise ConfigError("active_party must be transaction or standalone")
        if self.private:
            try:
                mech.PbmParams(self.bins, self.beta)
                mech.PbmParams(self.grad_bins, self.gradient_beta, bound=self.clip)
            except FedRDError as exc:
                raise ConfigError(str(exc)) from None
            if self.approach == "summation" and self.beta == 0:
                raise ConfigError("summation needs beta > 0")
            if self.quantize_gradients and self.gradient_beta == 0:
                raise ConfigError("gradient quantization needs grad_beta > 0")
            if self.approach == "concatenation":
                if self.sigma2 is None and self.beta == 0:
                    raise ConfigError("beta = 0 leaves the default sigma2 undefined; set sigma2")
                if not self.noise_variance > 0:
                    raise ConfigError("sigma2 must be positive")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if not self.alphas or any(not 1.0 < a <= 2.0 for a in self.alphas):
            raise ConfigError("alphas must be non-empty and lie in (1, 2]")


@dataclass
class ModelBundle:
    theta_T: nn.ParamSet
    theta_F: nn.ParamSet
    banks: list[nn.ParamSet]
    opt_T: nn.Optimizer
    opt_F: nn.Optimizer
    opt_B: nn.Optimizer

    @property
    def theta_B(self) -> nn.ParamSet:
        return self.banks[0]

    def check_replicas(self) -> None:
        ref = self.banks[0].tobytes()
        for i, b in enumerate(self.banks[1:], start=2):
            if b.tobytes() != ref:
                raise ProtocolInvariantError(f"bank {i} account model diverged from bank 1")


def init_bundle(cfg: TrainConfig, d_t: int, d_b: int, n_banks: int) -> ModelBundle:
    p = cfg.embedding_size
    fusion_in = 3 * p if cfg.arity == "concatenation" else p
    theta_T = nn.build_model(nn.embedding_spec(d_t, p, cfg.hidden), cfg.seed * 3 + 0)
    theta_B = nn.build_model(nn.embedding_spec(d_b, p, cfg.hidden), cfg.seed * 3 + 1)
    theta_F = nn.build_model(nn.fusion_spec(fusion_in, cfg.fusion_hidden), cfg.seed * 3 + 2)

    def opt():
        return nn.Optimizer(cfg.optimizer, cfg.learning_rate)

    return ModelBundle(theta_T, theta_F, [theta_B.copy() for _ in range(n_banks)], opt(), opt(), opt())


@dataclass(frozen=True)
class Message:
    """One cross-party transfer (or a batch of same-kind transfers)."""

    iteration: int
    channel: str
    sender: str
    receiver: str
    kind: str
    bits: int
    payload: np.ndarray | None = None


class MessageLog(list):
    def add(self, msg: Message) -> None:
        self.append(msg)

    def kinds(self) -> set[str]:
        return {m.kind for m in self}


PRIVATE_KINDS = {
    "fwd_embeddings": {"gaussian_embedding", "masked_quantized_embedding"},
    "bwd_partials": {"partial"},
    "bank_masked_grads": {"masked_quantized_gradient"},
    "bank_broadcast": {"dequantized_gradient_sum"},
}


@dataclass
class BankForward:
    bank: int
    tape: nn.Tape | None
    sender_pos: np.ndarray
    receiver_pos: np.ndarray


@dataclass
class ForwardResult:
    fusion_input: np.ndarray
    tape_T: nn.Tape
    bank_fwd: list[BankForward]
    e_t: np.ndarray
    e_s: np.ndarray
    e_r: np.ndarray


def _map(pool, fn, items):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def _active_name(cfg: TrainConfig) -> str:
    return "transaction" if cfg.active_party == "transaction" else "active"


def _bank_embeddings(bundle, batch, ds, cfg, pool):
    """Each bank embeds the sender and receiver accounts it holds."""
    b_of_s = ds.bank[batch.sender]
    b_of_r = ds.bank[batch.receiver]
    p = cfg.embedding_size
    e_s = np.empty((len(batch), p))
    e_r = np.empty((len(batch), p))

    def run(i):
        sp = np.flatnonzero(b_of_s == i)
        rp = np.flatnonzero(b_of_r == i)
        if sp.size + rp.size == 0:
            return BankForward(i, None, sp, rp), None
        accts = np.concatenate([batch.sender[sp], batch.receiver[rp]])
        out, tape = nn.forward(bundle.banks[i], ds.X_B[accts])
        return BankForward(i, tape, sp, rp), out

    results = _map(pool, run, range(ds.n_banks))
    for bf, out in results:
        if out is not None:
            e_s[bf.sender_pos] = out[: bf.sender_pos.size]
            e_r[bf.receiver_pos] = out[bf.sender_pos.size :]
    return [bf for bf, _ in results], e_s, e_r


def share_embeddings(e_t, e_s, e_r, bank_s, bank_r, cfg: TrainConfig, iteration: int,
                     ledger: CommLedger | None = None, log: MessageLog | None = None,
                     purposes=(rng_mod.GAUSSIAN, rng_mod.PBM_EMBED), use_mechanism=True,
                     n_banks: int | None = None) -> np.ndarray:
    """Turn per-party embeddings into the fusion input seen by the active party.

    Each party draws its randomness from its own stream keyed by
    ``(purpose, party, iteration)``; party 0 is the transaction party and
    party ``1 + i`` is bank ``i``.
    """
    n, p = e_t.shape
    f = cfg.float_bits
    active = _active_name(cfg)
    n_banks = int(max(bank_s.max(initial=-1), bank_r.max(initial=-1)) + 1) if n_banks is None else n_banks
    record = ledger is not None
    audit = log is not None and cfg.audit

    if not cfg.private or not use_mechanism:
        if record:
            ledger.record("fwd_embeddings", 3 * n * p * f, iteration)
        if log is not None:
            for name, e in (("transaction", e_t), ("sender banks", e_s), ("receiver banks", e_r)):
                log.add(Message(iteration, "fwd_embeddings", name, active, "raw_embedding",
                                n * p * f, e.copy() if audit else None))
        if cfg.arity == "concatenation":
            return np.concatenate([e_t, e_s, e_r], axis=1)
        return e_t + e_s + e_r

    if cfg.approach == "concatenation":
        sigma2 = cfg.noise_variance
        g_t = rng_mod.stream(cfg.seed, purposes[0], 0, iteration)
        n_t = mech.gaussian_perturb(e_t, sigma2, g_t)
        n_s = np.empty_like(e_s)
        n_r = np.empty_like(e_r)
        for i in range(n_banks):
            sp, rp = np.flatnonzero(bank_s == i), np.flatnonzero(bank_r == i)
            if sp.size + rp.size == 0:
                continue
            gen = rng_mod.stream(cfg.seed, purposes[0], 1 + i, iteration)
            both = mech.gaussian_perturb(np.concatenate([e_s[sp], e_r[rp]]), sigma2, gen)
            n_s[sp] = both[: sp.size]
            n_r[rp] = both[sp.size :]
        if record:
            ledger.record("fwd_embeddings", 3 * n * p * f, iteration)
        if log is not None:
            for name, e, clean in (("transaction", n_t, e_t), ("sender banks", n_s, e_s),
                                   ("receiver banks", n_r, e_r)):
                log.add(Message(iteration, "fwd_embeddings", name, active, "gaussian_embedding",
                                n * p * f, e.copy() if audit else None))
        return np.concatenate([n_t, n_s, n_r], axis=1)

    # summation: PBM per party, secure sum per sample, dequantize at the active party
    params = mech.PbmParams(cfg.bins, cfg.beta, bound=1.0, parties=3)
    q_t = mech.pbm_quantize(e_t, params, rng_mod.stream(cfg.seed, purposes[1], 0, iteration))
    q_s = np.empty((n, p), dtype=np.int64)
    q_r = np.empty((n, p), dtype=np.int64)
    for i in range(n_banks):
        sp, rp = np.flatnonzero(bank_s == i), np.flatnonzero(bank_r == i)
        if sp.size + rp.size == 0:
            continue
        gen = rng_mod.stream(cfg.seed, purposes[1], 1 + i, iteration)
        both = mech.pbm_quantize(np.concatenate([e_s[sp], e_r[rp]]), params, gen)
        q_s[sp] = both[: sp.size]
        q_r[rp] = both[sp.size :]

    if not record and log is None:
        # evaluation: the secure sum reveals exactly the plain sum
        return mech.pbm_sum_estimate(q_t + q_s + q_r, params)

    ring = RingConfig.for_max_sum(3 * cfg.bins)
    same = bank_s == bank_r
    q_hat = np.empty((n, p), dtype=np.int64)
    mask_gen = rng_mod.stream(cfg.seed, rng_mod.MASK_EMBED, iteration)
    bits = 0
    cross = np.flatnonzero(~same)
    if cross.size:
        total, trace = secure_sum([q_t[cross], q_s[cross], q_r[cross]], ring, mask_gen,
                                  bounds=cfg.bins)
        q_hat[cross] = total
        bits += sum(message_bits(m, ring) for m in trace)
        if log is not None:
            for name, m in zip(("transaction", "sender banks", "receiver banks"), trace):
                log.add(Message(iteration, "fwd_embeddings", name, active, "masked_quantized_embedding",
                                message_bits(m, ring), m.values if audit else None))
    sb = np.flatnonzero(same)
    if sb.size:
        # a bank holding both endpoints contributes their quantized sum as one input
        total, trace = secure_sum([q_t[sb], q_s[sb] + q_r[sb]], ring, mask_gen,
                                  bounds=[cfg.bins, 2 * cfg.bins])
        q_hat[sb] = total
        bits += sum(message_bits(m, ring) for m in trace)
        if log is not None:
            for name, m in zip(("transaction", "same-bank banks"), trace):
                log.add(Message(iteration, "fwd_embeddings", name, active, "masked_quantized_embedding",
                                message_bits(m, ring), m.values if audit else None))
    ledger.record("fwd_embeddings", bits, iteration)
    return mech.pbm_sum_estimate(q_hat, params)


def forward_phase(bundle: ModelBundle, batch: Batch, ds: RelationalDataset, cfg: TrainConfig,
                  iteration: int, ledger: CommLedger | None = None, log: MessageLog | None = None,
                  pool=None) -> ForwardResult:
    e_t, tape_T = nn.forward(bundle.theta_T, batch.X_T)
    bank_fwd, e_s, e_r = _bank_embeddings(bundle, batch, ds, cfg, pool)
    z = share_embeddings(e_t, e_s, e_r, ds.bank[batch.sender], ds.bank[batch.receiver], cfg,
                         iteration, ledger, log, n_banks=ds.n_banks)
    return ForwardResult(z, tape_T, bank_fwd, e_t, e_s, e_r)


def active_step(fusion_input: np.ndarray, labels: np.ndarray, theta_F: nn.ParamSet,
                opt: nn.Optimizer, arity: str, embedding_size: int):
    """Batch-mean BCE, one fusion update, and per-party partials.

    Returns ``(loss, (d_t, d_s, d_r), theta_F)``; partials are w.r.t. each
    party's shared embedding and already carry the 1/B batch-mean factor.
    """
    pred, tape = nn.forward(theta_F, fusion_input)
    loss, dpred = nn.bce_loss(pred[:, 0], labels)
    loss = float(np.mean(loss))
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss")
    n = len(labels)
    grads, dz = nn.backward(theta_F, tape, (dpred / n)[:, None])
    opt.step(theta_F, grads)
    p = embedding_size
    if arity == "concatenation":
        partials = (dz[:, :p], dz[:, p : 2 * p], dz[:, 2 * p :])
    else:
        partials = (dz, dz, dz)
    return loss, partials, theta_F


def transaction_step(theta_T: nn.ParamSet, tape: nn.Tape, partial: np.ndarray,
                     opt: nn.Optimizer) -> nn.ParamSet:
    grads, _ = nn.backward(theta_T, tape, partial)
    return opt.step(theta_T, grads)


def _flat_grad(params: nn.ParamSet, tape, partial) -> np.ndarray:
    if tape is None:
        return np.zeros(params.size)
    grads, _ = nn.backward(params, tape, partial)
    return grads.flat()


def bank_aggregate_step(bundle: ModelBundle, fwd: ForwardResult, partial_s: np.ndarray,
                        partial_r: np.ndarray, cfg: TrainConfig, iteration: int,
                        ledger: CommLedger | None = None, log: MessageLog | None = None,
                        pool=None) -> np.ndarray:
    """Combine bank gradients and apply the same step to every replica.

    Bank ``i`` scales its summed gradient by K so the average over banks is
    the batch-mean gradient. Returns the flat averaged step fed to the
    optimizer.
    """
    k = len(bundle.banks)
    f = cfg.float_bits
    theta_size = bundle.theta_B.size
    audit = log is not None and cfg.audit

    def local(bf: BankForward):
        part = np.concatenate([partial_s[bf.sender_pos], partial_r[bf.receiver_pos]])
        return k * _flat_grad(bundle.banks[bf.bank], bf.tape, part)

    g = _map(pool, local, fwd.bank_fwd)

    if cfg.private and cfg.quantize_gradients:
        params = mech.PbmParams(cfg.grad_bins, cfg.gradient_beta, bound=cfg.clip, parties=k)
        q = [
            mech.pbm_quantize(mech.clip(g[i], cfg.clip), params,
                              rng_mod.stream(cfg.seed, rng_mod.PBM_GRAD, i, iteration))
            for i in range(k)
        ]
        ring = RingConfig.for_max_sum(k * cfg.grad_bins)
        total, trace = secure_sum(q, ring, rng_mod.stream(cfg.seed, rng_mod.MASK_GRAD, iteration),
                                  bounds=cfg.grad_bins)
        g_sum = mech.pbm_sum_estimate(total, params)
        masked_kind, bcast_kind = "masked_quantized_gradient", "dequantized_gradient_sum"
        masked_bits = [message_bits(m, ring) for m in trace]
        masked_payload = [m.values for m in trace]
    else:
        g_sum = g[0].copy()
        for gi in g[1:]:
            g_sum = g_sum + gi
        masked_kind, bcast_kind = "raw_gradient", "gradient_sum"
        masked_bits = [theta_size * f] * k
        masked_payload = g

    if ledger is not None:
        ledger.record("bank_masked_grads", sum(masked_bits), iteration)
        ledger.record("bank_broadcast", (k - 1) * theta_size * f, iteration)
    if log is not None:
        for i in range(k):
            log.add(Message(iteration, "bank_masked_grads", f"bank{i + 1}", "bank1", masked_kind,
                            masked_bits[i], masked_payload[i] if audit else None))
        for i in range(1, k):
            log.add(Message(iteration, "bank_broadcast", "bank1", f"bank{i + 1}", bcast_kind,
                            theta_size * f, g_sum if audit else None))

    step = g_sum / k
    delta = bundle.opt_B.delta(bundle.theta_B.from_flat(step))
    for replica in bundle.banks:
        nn.apply_delta(replica, delta)
    bundle.check_replicas()
    return step


def train_iteration(bundle: ModelBundle, batch: Batch, ds: RelationalDataset, cfg: TrainConfig,
                    iteration: int, ledger: CommLedger, log: MessageLog | None = None,
                    pool=None) -> float:
    fwd = forward_phase(bundle, batch, ds, cfg, iteration, ledger, log, pool)
    loss, (d_t, d_s, d_r), _ = active_step(fwd.fusion_input, batch.y, bundle.theta_F, bundle.opt_F,
                                           cfg.arity, cfg.embedding_size)
    n, p, f = len(batch), cfg.embedding_size, cfg.float_bits
    ledger.record("bwd_partials", 3 * n * p * f, iteration)
    if log is not None:
        active = _active_name(cfg)
        audit = cfg.audit
        for name, d in (("transaction", d_t), ("sender banks", d_s), ("receiver banks", d_r)):
            log.add(Message(iteration, "bwd_partials", active, name, "partial", n * p * f,
                            d.copy() if audit else None))
    transaction_step(bundle.theta_T, fwd.tape_T, d_t, bundle.opt_T)
    bank_aggregate_step(bundle, fwd, d_s, d_r, cfg, iteration, ledger, log, pool)
    return loss


def predict_scores(bundle: ModelBundle, ds: RelationalDataset, cfg: TrainConfig,
                   epoch: int = 0, chunk: int = 4096) -> np.ndarray:
    """Fusion-model scores for every transaction in ``ds``.

    With ``cfg.eval_mechanism`` the embeddings pass through the same sharing
    mechanism as in training, using evaluation-only streams.
    """
    out = np.empty(ds.n)
    for c, start in enumerate(range(0, ds.n, chunk)):
        idx = np.arange(start, min(start + chunk, ds.n))
        batch = take_batch(ds, idx)
        e_t, _ = nn.forward(bundle.theta_T, batch.X_T)
        e_s, _ = nn.forward(bundle.theta_B, ds.X_B[batch.sender])
        e_r, _ = nn.forward(bundle.theta_B, ds.X_B[batch.receiver])
        z = share_embeddings(
            e_t, e_s, e_r, ds.bank[batch.sender], ds.bank[batch.receiver], cfg,
            iteration=epoch * 100_003 + c, purposes=(_EVAL_GAUSSIAN, _EVAL_PBM),
            use_mechanism=cfg.eval_mechanism, n_banks=ds.n_banks,
        )
        pred, _ = nn.forward(bundle.theta_F, z)
        out[idx] = pred[:, 0]
    return out


@dataclass
class EpochRow:
    epoch: int
    loss: float
    auprc: float
    bits_forward: int
    bits_backward: int
    bits_bankagg: int


@dataclass
class TrainingReport:
    config: dict
    epochs: list[EpochRow]
    initial_auprc: float
    privacy: PrivacyReport | None
    ledger: CommLedger
    reconciliation: list[Reconciliation]
    iterations: int
    wall_clock: float
    log: MessageLog | None = None
    bundle: ModelBundle | None = field(default=None, repr=False)

    @property
    def max_auprc(self) -> float:
        return max([r.auprc for r in self.epochs], default=self.initial_auprc)

    def epochs_to_target(self, target: float):
        for r in self.epochs:
            if r.auprc >= target:
                return r.epoch
        return UNREACHED

    def to_csv(self) -> str:
        lines = ["epoch,loss,auprc,bits_forward,bits_backward,bits_bankagg"]
        for r in self.epochs:
            lines.append(f"{r.epoch},{r.loss!r},{r.auprc!r},{r.bits_forward},{r.bits_backward},{r.bits_bankagg}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = [
            f"approach={self.config['approach']}",
            f"epochs={len(self.epochs)}",
            f"iterations={self.iterations}",
            f"initial_auprc={self.initial_auprc!r}",
            f"max_auprc={self.max_auprc!r}",
            f"total_bits={self.ledger.total()}",
            f"wall_clock_s={self.wall_clock:.3f}",
        ]
        return "\n".join(lines) + "\n"


def budget_inputs(cfg: TrainConfig, train: RelationalDataset, iterations: int,
                  account_model_size: int) -> BudgetInputs | None:
    if not cfg.private:
        return None
    return BudgetInputs(
        iterations=max(iterations, 1),
        n_samples=train.n,
        batch_size=min(cfg.batch_size, train.n),
        embedding_size=cfg.embedding_size,
        max_txn_per_account=max(train.max_txn_per_account, 1),
        n_banks=train.n_banks,
        account_model_size=account_model_size,
        alphas=cfg.alphas,
        sigma2=cfg.noise_variance if cfg.approach == "concatenation" else None,
        bins=cfg.bins,
        beta=cfg.beta,
        grad_bins=cfg.grad_bins,
        grad_beta=cfg.gradient_beta,
        approach=cfg.approach,
        c=cfg.pbm_constant,
    )


def run_training(cfg: TrainConfig, train: RelationalDataset, test: RelationalDataset | None = None,
                 bundle: ModelBundle | None = None) -> TrainingReport:
    """Run the full protocol for ``cfg.epochs`` epochs (or ``max_iterations``)."""
    cfg.validate()
    train.validate()
    if train.n_banks < 2:
        raise ConfigError("at least two banks are required")
    if test is not None and (test.d_t != train.d_t or test.d_b != train.d_b):
        raise ConfigError("train and test feature widths differ")
    start = time.perf_counter()
    bundle = bundle or init_bundle(cfg, train.d_t, train.d_b, train.n_banks)
    ledger = CommLedger(cfg.float_bits)
    log = MessageLog() if cfg.audit else None
    batch_size = min(cfg.batch_size, train.n)

    def evaluate(epoch):
        if test is None or not np.any(test.y == 1):
            return float("nan")
        return auprc(predict_scores(bundle, test, cfg, epoch), test.y)

    initial = evaluate(0)
    rows: list[EpochRow] = []
    iteration = 0
    samples = 0
    pool = ThreadPoolExecutor(cfg.n_jobs) if cfg.n_jobs > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            if cfg.max_iterations is not None and iteration >= cfg.max_iterations:
                break
            first_it = iteration
            losses = []
            gen = rng_mod.stream(cfg.seed, rng_mod.BATCH, epoch)
            for batch in sample_minibatch(train, batch_size, gen):
                if cfg.max_iterations is not None and iteration >= cfg.max_iterations:
                    break
                try:
                    losses.append(train_iteration(bundle, batch, train, cfg, iteration, ledger, log, pool))
                except FedRDError as exc:
                    raise type(exc)(f"epoch {epoch}, iteration {iteration}: {exc}") from exc
                samples += len(batch)
                iteration += 1
            its = range(first_it, iteration)
            rows.append(
                EpochRow(
                    epoch=epoch,
                    loss=float(np.mean(losses)) if losses else float("nan"),
                    auprc=evaluate(epoch),
                    bits_forward=ledger.iterations_total(its, "fwd_embeddings"),
                    bits_backward=ledger.iterations_total(its, "bwd_partials"),
                    bits_bankagg=ledger.iterations_total(its, "bank_masked_grads")
                    + ledger.iterations_total(its, "bank_broadcast"),
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()

    theta_size = bundle.theta_B.size
    binp = budget_inputs(cfg, train, iteration, theta_size)
    privacy = budget_report(binp) if binp is not None else None
    recon = []
    if cfg.private and iteration:
        cf = closed_form(cfg.approach, iteration, batch_size, cfg.embedding_size, cfg.bins,
                         cfg.grad_bins, train.n_banks, theta_size, cfg.float_bits, sample_total=samples)
        recon = reconcile(ledger, cf, ceil_envelopes(cfg.approach, cfg.bins, cfg.grad_bins, train.n_banks))
    return TrainingReport(
        config=config_echo(cfg),
        epochs=rows,
        initial_auprc=initial,
        privacy=privacy,
        ledger=ledger,
        reconciliation=recon,
        iterations=iteration,
        wall_clock=time.perf_counter() - start,
        log=log,
        bundle=bundle,
    )


def config_echo(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    d["alphas"] = list(cfg.alphas)
    return d
