"""Federated gradient descent, with perfect or over-the-air aggregation.

Models are flat parameter vectors with a small architecture tag so the codec
can treat them as plain length-D gradients.
"""
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as B
from . import channel as ch
from . import cs_codec as cs
from . import scheduler as sch
from .errors import NumericError, OBCSAAError, ParameterError, ShapeError
from .seeding import derive_seed

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Architecture:
    """``kind="mlp"`` with ``sizes=(in, hidden, out)`` or ``kind="logistic"``
    with ``sizes=(features, classes)``."""

    kind: str
    sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(x) for x in self.sizes))
        expected = {"mlp": 3, "logistic": 2}.get(self.kind)
        if expected is None or len(self.sizes) != expected or min(self.sizes) < 1:
            raise ParameterError(f"bad architecture {self.kind}{self.sizes}")

    @property
    def n_inputs(self):
        return self.sizes[0]

    @property
    def n_classes(self):
        return self.sizes[-1]

    @property
    def param_count(self):
        if self.kind == "mlp":
            i, h, o = self.sizes
            return i * h + h + h * o + o
        f, c = self.sizes
        return f * c + c

    def unpack(self, w):
        if self.kind == "mlp":
            i, h, o = self.sizes
            a = i * h
            return (w[:a].reshape(i, h), w[a:a + h], w[a + h:a + h + h * o].reshape(h, o), w[a + h + h * o:])
        f, c = self.sizes
        return (w[:f * c].reshape(f, c), w[f * c:])

    def to_record(self):
        return {"kind": self.kind, "sizes": list(self.sizes)}


def mlp(n_in, n_hidden, n_out):
    return Architecture("mlp", (n_in, n_hidden, n_out))


def logistic(n_features, n_classes):
    return Architecture("logistic", (n_features, n_classes))


@dataclass(frozen=True)
class Model:
    weights: np.ndarray
    arch: Architecture

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.arch.param_count,):
            raise ShapeError(f"weights length {w.shape} != D={self.arch.param_count}")
        object.__setattr__(self, "weights", w)

    @property
    def D(self):
        return self.arch.param_count


def init_model(arch, seed):
    """Glorot-uniform weight matrices, zero biases."""
    rng = np.random.default_rng(seed)
    w = np.zeros(arch.param_count)
    for part in arch.unpack(w):
        if part.ndim == 2:
            lim = math.sqrt(6.0 / (part.shape[0] + part.shape[1]))
            part[...] = rng.uniform(-lim, lim, size=part.shape)
    return Model(w, arch)


@dataclass(frozen=True)
class LocalDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ShapeError("features must be (n, f) and labels (n,)")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def size(self):
        return len(self)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(model, x):
    arch = model.arch
    if x.shape[1] != arch.n_inputs:
        raise ShapeError(f"feature dimension {x.shape[1]} != model input {arch.n_inputs}")
    if arch.kind == "mlp":
        w1, b1, w2, b2 = arch.unpack(model.weights)
        z1 = x @ w1 + b1
        a1 = np.maximum(z1, 0.0)
        return a1 @ w2 + b2, (z1, a1)
    w, b = arch.unpack(model.weights)
    return x @ w + b, None


def _cross_entropy(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(y.shape[0]), y]


def local_gradient(model, data):
    """Full-batch mean cross-entropy gradient over ``data``."""
    x, y = data.features, data.labels
    n = len(data)
    if n < 1:
        raise ParameterError("empty dataset")
    with np.errstate(invalid="ignore", over="ignore"):
        logits, cache = _forward(model, x)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite activations in forward pass")
    dz = _softmax(logits)
    dz[np.arange(n), y] -= 1.0
    dz /= n
    grad = np.empty_like(model.weights)
    parts = model.arch.unpack(grad)
    if model.arch.kind == "mlp":
        z1, a1 = cache
        _, _, w2, _ = model.arch.unpack(model.weights)
        parts[2][...] = a1.T @ dz
        parts[3][...] = dz.sum(axis=0)
        da1 = (dz @ w2.T) * (z1 > 0)
        parts[0][...] = x.T @ da1
        parts[1][...] = da1.sum(axis=0)
    else:
        parts[0][...] = x.T @ dz
        parts[1][...] = dz.sum(axis=0)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return grad


def loss(model, data):
    logits, _ = _forward(model, data.features)
    return float(_cross_entropy(logits, data.labels).mean())


def exact_global_gradient(locals_, K):
    """``sum_i K_i g_i / sum_i K_i``."""
    K = np.asarray(K, dtype=np.float64)
    if len(locals_) != K.shape[0] or not locals_:
        raise ShapeError("one sample count per local gradient required")
    stack = np.stack([np.asarray(g, dtype=np.float64) for g in locals_])
    return (K @ stack) / K.sum()


def apply_update(model, g, alpha):
    if not alpha > 0:
        raise ParameterError("learning rate must be positive")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != model.weights.shape:
        raise ShapeError(f"gradient shape {g.shape} != weights {model.weights.shape}")
    return Model(model.weights - alpha * g, model.arch)


def evaluate(model, data):
    """(mean cross-entropy, top-1 accuracy) on ``data``."""
    if len(data) == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    logits, _ = _forward(model, data.features)
    ce = _cross_entropy(logits, data.labels)
    acc = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    return float(ce.mean()), acc


def concat(datasets):
    return LocalDataset(np.concatenate([d.features for d in datasets]), np.concatenate([d.labels for d in datasets]))


# ---------------------------------------------------------------------------
# rounds
# ---------------------------------------------------------------------------

class Mode(str, enum.Enum):
    PERFECT = "perfect"
    OBCSAA = "obcsaa"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a round needs beyond the data and the model.

    ``recovery`` is ``iht_real``, ``biht_sign`` or ``passthrough`` (S = D,
    server uses the post-processed vector directly).  ``magnitude`` decides
    the length of the recovered gradient: ``worker_norm`` rescales the
    recovered direction to the K-weighted mean of the scheduled workers'
    sparse-gradient norms (one scalar of side information per worker),
    ``none`` keeps the recovery output as is.
    """

    kappa: int = 10
    S: int = 1000
    noise_variance: float = 1e-4
    max_power: float = 10.0
    alpha: float = 0.1
    phi: str = "gaussian"
    phi_variance: float = None
    quantize: bool = True
    recovery: str = "iht_real"
    sparsity_budget: int = None
    max_iterations: int = 300
    step_size: float = 1.0
    tolerance: float = 1e-6
    magnitude: str = "worker_norm"
    solver: str = "auto"
    enumeration_cap: int = sch.ENUMERATION_CAP
    admm: dict = field(default_factory=dict)
    L: float = 10.0
    rho1: float = 20.0
    rho2: float = 0.5
    delta: float = 0.2
    strict_rip: bool = True
    G: float = 1.0
    G_running_max: bool = False

    def __post_init__(self):
        if self.recovery not in ("iht_real", "biht_sign", "passthrough"):
            raise ParameterError(f"unknown recovery {self.recovery!r}")
        if self.magnitude not in ("worker_norm", "none"):
            raise ParameterError(f"unknown magnitude rule {self.magnitude!r}")
        if self.phi not in ("gaussian", "identity"):
            raise ParameterError(f"unknown measurement matrix {self.phi!r}")


@dataclass
class RoundMetrics:
    round: int
    train_loss: float
    test_accuracy: float
    grad_error_sq: float = 0.0
    bound_report: B.RoundBoundReport = None
    decision: ch.SchedulingDecision = None
    objective: float = None
    full_grad_sq: float = None
    test_loss: float = None
    recovery_iterations: int = 0


@dataclass
class FLState:
    """Mutable simulation state owned by the round orchestrator."""

    model: Model
    workers: list
    test: LocalDataset
    config: PipelineConfig
    seed: int
    profiles: tuple = None
    phi: cs.MeasurementMatrix = None
    round: int = 0
    G: float = None
    track_full_gradient: bool = False
    history: list = field(default_factory=list)

    def __post_init__(self):
        cfg = self.config
        if self.profiles is None:
            self.profiles = tuple(ch.WorkerProfile(len(d), cfg.max_power) for d in self.workers)
        if self.G is None:
            self.G = cfg.G
        d = self.model.D
        if self.phi is None:
            if cfg.phi == "identity":
                if cfg.S != d:
                    raise ParameterError("identity measurement matrix needs S = D")
                self.phi = cs.MeasurementMatrix.identity(d)
            else:
                self.phi = cs.gen_measurement_matrix(cfg.S, d, derive_seed(self.seed, "phi"), cfg.phi_variance)
        if not 1 <= cfg.kappa <= d:
            raise ParameterError(f"kappa={cfg.kappa} outside [1, D={d}]")
        if self.phi.kind == "gaussian":
            cs.check_rip_regime(cfg.kappa, len(self.workers), self.phi.S, d)

    @property
    def U(self):
        return len(self.workers)

    @property
    def K(self):
        return tuple(p.sample_count for p in self.profiles)

    def train_set(self):
        return concat(self.workers)

    def bound_params(self, G=None):
        cfg = self.config
        return B.BoundParams(
            L=cfg.L, rho1=cfg.rho1, rho2=cfg.rho2, G=G if G is not None else self.G, delta=cfg.delta,
            kappa=cfg.kappa, S=self.phi.S, D=self.model.D, sigma2=cfg.noise_variance, K=self.K,
            alpha=cfg.alpha, strict_rip=cfg.strict_rip,
        )

    def broadcast(self):
        """Read-only weight snapshot handed to every worker."""
        w = self.model.weights.copy()
        w.setflags(write=False)
        return Model(w, self.model.arch)


def run_fl_round(state, mode):
    """Advance ``state`` by one communication round and return its metrics."""
    mode = Mode(mode)
    t = state.round + 1
    try:
        if mode is Mode.PERFECT:
            m = _perfect_round(state, t)
        else:
            m = _obcsaa_round(state, t)
    except OBCSAAError as exc:
        raise type(exc)(f"round {t}: {exc}") from exc
    state.round = t
    state.history.append(m)
    return m


def _full_gradient(state, snapshot):
    return exact_global_gradient([local_gradient(snapshot, d) for d in state.workers], state.K)


def _finish(state, t, new_model, **kw):
    state.model = new_model
    train = state.train_set()
    train_loss, _ = evaluate(new_model, train)
    test_loss, acc = evaluate(new_model, state.test)
    if not math.isfinite(train_loss):
        raise NumericError(f"round {t}: training loss is not finite")
    return RoundMetrics(t, train_loss, acc, test_loss=test_loss, **kw)


def _perfect_round(state, t):
    snapshot = state.broadcast()
    g = _full_gradient(state, snapshot)
    new = apply_update(state.model, g, state.config.alpha)
    return _finish(state, t, new, full_grad_sq=float(g @ g))


def _obcsaa_round(state, t):
    cfg = state.config
    snapshot = state.broadcast()
    full_sq = None
    if state.track_full_gradient:
        g_full = _full_gradient(state, snapshot)
        full_sq = float(g_full @ g_full)

    locals_ = {}
    if cfg.G_running_max:
        # every worker reports its gradient norm before scheduling, so the
        # scheduler and the bound report see the same G for this round
        locals_ = {i: local_gradient(snapshot, d) for i, d in enumerate(state.workers)}
        state.G = max(state.G, max(float(np.linalg.norm(g)) for g in locals_.values()))
    params = state.bound_params()

    chan = ch.draw_channel_gains(state.U, derive_seed(state.seed, "channel"), t, cfg.noise_variance)
    instance = sch.SchedulerInstance(chan.gains, state.profiles, params)
    result = sch.solve(instance, cfg.solver, cap=cfg.enumeration_cap, **cfg.admm)
    decision = result.decision
    sel = np.flatnonzero(decision.selected)

    updates, norms = [None] * state.U, {}
    for i in sel:
        if i not in locals_:
            locals_[i] = local_gradient(snapshot, state.workers[i])
        g_i = locals_[i]
        sparse = cs.top_k_sparsify(g_i, cfg.kappa)
        norms[i] = float(np.linalg.norm(sparse.values))
        if cfg.quantize:
            updates[i] = cs.compress_1bit(sparse, state.phi)
        else:
            updates[i] = state.phi.matvec_sparse(sparse.values, sparse.support)

    y = ch.aggregate_over_air(updates, chan, state.profiles, decision, derive_seed(state.seed, "noise", t))
    y_hat = ch.post_process(y, state.profiles, decision)
    g_hat, iters = _recover(state, y_hat, len(sel))

    k_sel = np.array([state.K[i] for i in sel], dtype=np.float64)
    if cfg.magnitude == "worker_norm":
        nrm = float(np.linalg.norm(g_hat))
        if nrm > 0:
            g_hat = g_hat * (float(k_sel @ np.array([norms[i] for i in sel])) / k_sel.sum() / nrm)

    g_ref = exact_global_gradient([locals_[i] for i in sel], k_sel)
    err = float(np.sum((g_hat - g_ref) ** 2))
    report = B.round_report(params, decision.selected, decision.power_scale)
    new = apply_update(state.model, g_hat, cfg.alpha)
    return _finish(
        state, t, new, grad_error_sq=err, bound_report=report, decision=decision,
        objective=result.objective, full_grad_sq=full_sq, recovery_iterations=iters,
    )


def _recover(state, y_hat, n_sched):
    cfg = state.config
    if cfg.recovery == "passthrough":
        if state.phi.S != state.phi.D:
            raise ParameterError("passthrough recovery needs S = D")
        return state.phi.rmatvec(y_hat), 0
    budget = cfg.sparsity_budget or cs.default_sparsity_budget(cfg.kappa, n_sched, state.phi.S)
    rc = cs.RecoveryConfig(budget, cfg.max_iterations, cfg.step_size, cfg.tolerance, cfg.recovery)
    rec = cs.reconstruct_sparse(y_hat, state.phi, rc)
    return rec.x, rec.iterations

