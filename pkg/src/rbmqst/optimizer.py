"""Augmented-penalty MaxEnt trainer.

Cost: C = -S(rho) + sum_i xi_i * (<O_i> - target_i)^2, entropy in bits.

Analytic gradients use the log-derivative vector F(v) = d log psi / d x
(rbm.log_derivatives). With samples v ~ |psi|^2:

  d<O>     = Re< (F(v)* + F(v')) O_loc(v) >  -  <O> <2 Re F(v)>
  d Tr r^n = Re< W_n(u_1..u_n) sum_k (F(u_k)* + F(w_k)) >
             - Tr r^n < sum_k 2 Re F(u_k) >
  d S2     = -d<SWAP> / (<SWAP> ln 2)        (bits)

where v' is the Pauli-connected partner, w_k the cyclically permuted
replica configuration, and W_n the per-tuple replica term. The exact_sum
mode evaluates the same expressions as full enumerations; for Tr rho^n the
enumeration over n-tuples is collapsed analytically to matrix products of
the amplitude matrix (identical algebra, no tuple blowup).

All of it is verified against central finite differences of the exact
cost (finite_difference_gradient).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EstimationError, NumericalError, ValidationError
from .estimators import (
    EstimateResult,
    LN2,
    _series_error,
    pauli_action,
    replica_permuted,
    vne_bits_from_raw_powers,
    vne_coefficients,
)
from .oracle import DENSE_CAP, PauliString
from .rbm import (
    PARAM_BOUND,
    Partition,
    RbmParams,
    amplitude_matrix,
    log_amplitudes,
    log_derivatives,
    pack_parameters,
    unpack_parameters,
)
from .samplers import SamplerConfig, SampleSet, derive_seed, fit_surrogate, sample_replicas
from .spins import all_configs


@dataclass(frozen=True)
class Constraint:
    obs: PauliString
    target: float
    xi: float

    def __post_init__(self):
        if not -1.0 <= self.target <= 1.0:
            raise ValidationError("Pauli target must lie in [-1, 1]")
        if self.xi <= 0:
            raise ValidationError("penalty weight must be positive")


@dataclass(frozen=True)
class ConstraintSet:
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValidationError("constraint set must be nonempty")
        ids = [c.obs.identifier for c in entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("constraint Pauli identifiers must be unique")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class XiSchedule:
    xi_init: float = 0.1
    growth: float = 1.2
    block: int = 10
    xi_max: float = 100.0

    def __post_init__(self):
        if self.xi_init <= 0 or self.xi_init > self.xi_max:
            raise ValidationError("need 0 < xi_init <= xi_max")
        if self.growth < 1.0 or self.block < 1:
            raise ValidationError("growth must be >= 1 and block >= 1")

    def at(self, xi_init: float, epoch: int) -> float:
        return min(xi_init * self.growth ** (epoch // self.block), self.xi_max)


@dataclass(frozen=True)
class OptimizerConfig:
    epochs: int = 300
    learning_rate: float = 0.01
    method: str = "adaptive-moment"  # or "plain-gradient"
    samples_per_epoch: int = 1024
    entropy_mode: str = "renyi2_then_vne"  # or "renyi2"
    vne_cutoff: int = 4
    seed: int = 0
    grad_clip: float = 10.0
    exact_sum: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.samples_per_epoch < 1:
            raise ValidationError("samples_per_epoch must be >= 1")
        if self.vne_cutoff < 2:
            raise ValidationError("vne_cutoff must be >= 2")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.method not in ("plain-gradient", "adaptive-moment"):
            raise ValidationError("method must be plain-gradient or adaptive-moment")
        if self.entropy_mode not in ("renyi2", "renyi2_then_vne"):
            raise ValidationError("entropy_mode must be renyi2 or renyi2_then_vne")


@dataclass
class TrainingTrace:
    """Per-epoch records plus a final status ("ok" | "diverged")."""

    records: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""
    clip_events: int = 0
    entropy_floor_events: int = 0


def cost(entropy_bits: float, residuals, xis) -> float:
    """C = -entropy + sum_i xi_i * residual_i^2."""
    residuals = np.asarray(residuals, dtype=float)
    xis = np.asarray(xis, dtype=float)
    return float(-entropy_bits + xis @ residuals**2)


# ---------------------------------------------------------------------------
# observable gradient

def _observable_value_and_grad(params: RbmParams, partition: Partition, obs: PauliString,
                               samples=None, exact_sum: bool = False,
                               cap: int = DENSE_CAP) -> tuple[EstimateResult, np.ndarray]:
    if obs.n_qubits != partition.n_sys:
        raise ValidationError("observable must act on exactly the system qubits")
    if exact_sum:
        if partition.n_v > cap:
            raise ValidationError(f"exact_sum above dense cap {cap}")
        configs = all_configs(partition.n_v)
        ln = log_amplitudes(params, configs)
        weights = np.exp(2.0 * (ln.real - ln.real.max()))
        weights /= weights.sum()
        n_chains = chain_len = None
    else:
        if samples is None:
            raise ValidationError("samples required unless exact_sum")
        if isinstance(samples, SampleSet):
            configs, n_chains, chain_len = samples.spins, samples.n_chains, samples.chain_len
        else:
            configs = np.atleast_2d(np.asarray(samples, dtype=float))
            n_chains, chain_len = 1, configs.shape[0]
        weights = np.full(configs.shape[0], 1.0 / configs.shape[0])
    coeff, connected = pauli_action(obs, partition, configs)
    o_loc = coeff * np.exp(log_amplitudes(params, connected) - log_amplitudes(params, configs))
    f = log_derivatives(params, configs)
    f_conn = f if obs.is_diagonal else log_derivatives(params, connected)
    value = float(np.real(weights @ o_loc))
    term1 = (weights * o_loc) @ (f.conj() + f_conn)
    mean_2ref = weights @ (2.0 * f.real)
    grad = np.real(term1) - value * mean_2ref
    if exact_sum:
        est = EstimateResult(value=value, std_error=0.0,
                             n_samples=configs.shape[0], mode="exact_sum")
    else:
        est = EstimateResult(value=value,
                             std_error=_series_error(o_loc.real, n_chains, chain_len),
                             n_samples=configs.shape[0], mode="sampled")
    return est, grad


def grad_observable_term(params: RbmParams, partition: Partition, obs: PauliString,
                         samples=None, exact_sum: bool = False) -> np.ndarray:
    """Gradient of <O> over all packed parameter coordinates."""
    return _observable_value_and_grad(params, partition, obs, samples, exact_sum)[1]


# ---------------------------------------------------------------------------
# replica entropy gradients

def _streams_arrays(replica_samples, n: int):
    if replica_samples is None or len(replica_samples) != n:
        raise ValidationError(f"need exactly {n} replica streams")
    out = []
    meta = None
    for s in replica_samples:
        if isinstance(s, SampleSet):
            out.append(s.spins)
            meta = meta or (s.n_chains, s.chain_len)
        else:
            arr = np.atleast_2d(np.asarray(s, dtype=float))
            out.append(arr)
            meta = meta or (1, arr.shape[0])
    if len({a.shape for a in out}) != 1:
        raise ValidationError("replica streams must have equal shapes")
    return out, meta


def _renyi_value_and_grad_sampled(params: RbmParams, partition: Partition, n: int,
                                  streams: list[np.ndarray]) -> tuple[float, np.ndarray]:
    permuted = replica_permuted(partition, streams)
    log_term = 0.0
    f_sum = 0.0
    ref_sum = 0.0
    for u, w in zip(streams, permuted):
        log_term = log_term + log_amplitudes(params, w) - log_amplitudes(params, u)
        f_u = log_derivatives(params, u)
        f_sum = f_sum + f_u.conj() + log_derivatives(params, w)
        ref_sum = ref_sum + 2.0 * f_u.real
    terms = np.exp(log_term)
    value = float(terms.real.mean())
    term1 = (terms @ f_sum) / terms.size
    grad = np.real(term1) - value * ref_sum.mean(axis=0)
    return value, grad


def _renyi_value_and_grad_exact(params: RbmParams, partition: Partition,
                                n: int) -> tuple[float, np.ndarray]:
    # Tr[(V V+)^n] differentiated in matrix form: with M = V V+ and
    # G = M^{n-1}, dTr[M^n] = n * 2Re sum_v conj(GV)[v] psi[v] F_x(v).
    v, _ = amplitude_matrix(params, partition)
    psi = v.reshape(-1)
    m = v @ v.conj().T
    g = np.linalg.matrix_power(m, n - 1)
    ev = np.clip(np.linalg.eigvalsh(m), 0.0, None)
    z = float(ev.sum())
    value = float((ev**n).sum() / z**n)
    f = log_derivatives(params, all_configs(partition.n_v))
    w_vec = np.conj((g @ v).reshape(-1)) * psi
    d_numer = n * 2.0 * np.real(w_vec @ f)
    d_z = (2.0 * f.real.T) @ (np.abs(psi) ** 2)
    grad = d_numer / z**n - n * value * d_z / z
    return value, grad


def renyi_value_and_grad(params: RbmParams, partition: Partition, n: int,
                         replica_samples=None, exact_sum: bool = False
                         ) -> tuple[float, np.ndarray]:
    """(Tr rho_A^n, its gradient). Sampled mode uses the first n streams."""
    if n < 2:
        raise ValidationError("replica order must be >= 2")
    if exact_sum:
        return _renyi_value_and_grad_exact(params, partition, n)
    streams, _ = _streams_arrays(replica_samples, n)
    return _renyi_value_and_grad_sampled(params, partition, n, streams)


def grad_entropy_term(params: RbmParams, partition: Partition,
                      replica_samples=None, exact_sum: bool = False) -> np.ndarray:
    """Gradient of S2 = -log2 Tr(rho_A^2) in bits."""
    swap, grad_swap = renyi_value_and_grad(params, partition, 2, replica_samples, exact_sum)
    if swap <= 0.0:
        raise EstimationError(f"non-positive <SWAP> estimate {swap:.3e}")
    return -grad_swap / (swap * LN2)


def s2_value_and_grad(params: RbmParams, partition: Partition,
                      replica_samples=None, exact_sum: bool = False
                      ) -> tuple[float, np.ndarray]:
    swap, grad_swap = renyi_value_and_grad(params, partition, 2, replica_samples, exact_sum)
    if swap <= 0.0:
        raise EstimationError(f"non-positive <SWAP> estimate {swap:.3e}")
    return -math.log2(swap), -grad_swap / (swap * LN2)


def vne_value_and_grad(params: RbmParams, partition: Partition, n_c: int,
                       replica_samples=None, exact_sum: bool = False
                       ) -> tuple[float, np.ndarray]:
    """Polynomial von Neumann entropy (bits) and gradient from trace powers
    2..n_c. Sampled mode reuses the first m of the n_c replica streams for
    power m; noisy power estimates are fed to the polynomial unvalidated."""
    alpha = vne_coefficients(n_c)
    if not exact_sum:
        streams, _ = _streams_arrays(replica_samples, n_c)
    powers = np.empty(n_c - 1)
    grad = 0.0
    for m in range(2, n_c + 1):
        if exact_sum:
            val, g = _renyi_value_and_grad_exact(params, partition, m)
        else:
            val, g = _renyi_value_and_grad_sampled(params, partition, m, streams[:m])
        powers[m - 2] = val
        grad = grad + alpha[m - 1] * g
    return vne_bits_from_raw_powers(powers, n_c), -np.asarray(grad) / LN2


# ---------------------------------------------------------------------------
# finite differences and the exact cost

def finite_difference_gradient(cost_fn, params, h: float) -> np.ndarray:
    """Central finite differences of a scalar function, per packed coordinate.

    `params` may be an RbmParams (cost_fn then receives RbmParams) or a
    plain real vector (cost_fn receives vectors).
    """
    if h <= 0:
        raise ValidationError("h must be positive")
    if isinstance(params, RbmParams):
        n_v, m, beta = params.n_v, params.m, params.beta
        x0 = pack_parameters(params)
        fn = lambda x: cost_fn(unpack_parameters(x, n_v, m, beta))
    else:
        x0 = np.asarray(params, dtype=float)
        fn = cost_fn
    grad = np.empty(x0.size)
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = fn(xp), fn(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"non-finite cost at perturbed coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def exact_cost_and_grad(params: RbmParams, partition: Partition,
                        constraints: ConstraintSet, xis,
                        entropy_mode: str = "renyi2", n_c: int = 12
                        ) -> tuple[float, np.ndarray]:
    """Deterministic exact-sum cost and analytic gradient (gradcheck target)."""
    xis = np.asarray(xis, dtype=float)
    if entropy_mode == "renyi2":
        s_bits, grad_s = s2_value_and_grad(params, partition, exact_sum=True)
    else:
        s_bits, grad_s = vne_value_and_grad(params, partition, n_c, exact_sum=True)
    total = -grad_s
    residuals = []
    for c, xi in zip(constraints, xis):
        est, g = _observable_value_and_grad(params, partition, c.obs, exact_sum=True)
        r = est.value - c.target
        residuals.append(r)
        total = total + 2.0 * xi * r * g
    return cost(s_bits, residuals, xis), total


# ---------------------------------------------------------------------------
# training loop

class _Adam:
    def __init__(self, size: int, lr: float, b1: float = 0.9, b2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray, lr: float | None = None) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return x - (self.lr if lr is None else lr) * mhat / (np.sqrt(vhat) + self.eps)


def _clip_params_vector(x: np.ndarray) -> tuple[np.ndarray, int]:
    clipped = np.clip(x, -PARAM_BOUND, PARAM_BOUND)
    return clipped, int((clipped != x).sum())


def train(initial: RbmParams, constraints: ConstraintSet, schedule: XiSchedule,
          opt: OptimizerConfig, sampler: SamplerConfig) -> tuple[RbmParams, TrainingTrace]:
    """Run the MaxEnt training loop; returns final parameters and the trace.

    Per epoch: (optionally) refresh the surrogate, draw replica streams,
    estimate entropy and all constrained observables from them, assemble
    grad C = -grad S + sum_i 2 xi_i r_i grad<O_i>, update (norm-clipped,
    magnitude-clipped), grow xi per schedule, append a trace record.
    With entropy_mode = renyi2_then_vne the entropy term switches to the
    polynomial von Neumann estimate for the final 10% of epochs.

    A non-finite cost halts training, returning the partial trace with
    status "diverged".
    """
    n_sys = constraints.entries[0].obs.n_qubits
    if any(c.obs.n_qubits != n_sys for c in constraints):
        raise ValidationError("constraint observables must share a qubit count")
    if initial.n_v < n_sys:
        raise ValidationError("model has fewer visible units than system qubits")
    partition = Partition(n_sys=n_sys, n_env=initial.n_v - n_sys)

    params = initial
    trace = TrainingTrace()
    x = pack_parameters(params)
    adam = _Adam(x.size, opt.learning_rate) if opt.method == "adaptive-moment" else None
    n_vne = max(1, round(0.1 * opt.epochs)) if opt.entropy_mode == "renyi2_then_vne" else 0
    surrogate_rng = np.random.default_rng(derive_seed(opt.seed, 0xF17))
    fit_batch = None
    if sampler.proposal == "SurrogateTrotter":
        fit_batch = 1.0 - 2.0 * surrogate_rng.integers(
            0, 2, size=(min(256, opt.samples_per_epoch), params.n_v)).astype(float)

    for epoch in range(opt.epochs):
        vne_phase = epoch >= opt.epochs - n_vne
        xis = np.array([schedule.at(c.xi, epoch) for c in constraints])
        surrogate = None
        if sampler.proposal == "SurrogateTrotter":
            surrogate = fit_surrogate(params, fit_batch)

        try:
            if opt.exact_sum:
                streams = None
                obs_samples = None
                acceptance = None
            else:
                k = opt.vne_cutoff if vne_phase else 2
                cfg = replace(sampler, n_samples=opt.samples_per_epoch,
                              seed=derive_seed(opt.seed, 0x45504F43 + epoch))
                streams = sample_replicas(params, cfg, k, surrogate)
                obs_samples = streams[0]
                acceptance = float(np.mean([s.diagnostics["acceptance_rate"] for s in streams]))
                if sampler.proposal == "SurrogateTrotter":
                    fit_batch = streams[0].spins[:min(256, streams[0].n_samples)]
            if vne_phase:
                s_bits, grad_s = vne_value_and_grad(
                    params, partition, opt.vne_cutoff, streams, exact_sum=opt.exact_sum)
            else:
                swap, grad_swap = renyi_value_and_grad(
                    params, partition, 2, streams, exact_sum=opt.exact_sum)
                # No model state can have Tr rho_A^2 below 2^-min(n_sys,
                # n_env); a sampled estimate under half that is estimator
                # noise, so floor it to keep the log finite.
                floor = 0.5 * 2.0 ** (-min(partition.n_sys, partition.n_env))
                if swap < floor:
                    swap = floor
                    trace.entropy_floor_events += 1
                s_bits = -math.log2(swap)
                grad_s = -grad_swap / (swap * LN2)
            residuals = np.empty(len(constraints))
            grad_total = -grad_s
            for i, c in enumerate(constraints):
                est, g = _observable_value_and_grad(
                    params, partition, c.obs, obs_samples, exact_sum=opt.exact_sum)
                residuals[i] = est.value - c.target
                grad_total = grad_total + 2.0 * xis[i] * residuals[i] * g
        except EstimationError as exc:
            trace.status = "diverged"
            trace.message = f"epoch {epoch}: {exc}"
            break

        epoch_cost = cost(s_bits, residuals, xis)
        grad_norm = float(np.linalg.norm(grad_total))
        if not (np.isfinite(epoch_cost) and np.isfinite(grad_norm)):
            trace.status = "diverged"
            trace.message = f"epoch {epoch}: non-finite cost or gradient"
            break
        if grad_norm > opt.grad_clip:
            grad_total = grad_total * (opt.grad_clip / grad_norm)
            trace.clip_events += 1
        # Full learning rate for the first half, cosine-annealed to a 5%
        # floor afterwards: adaptive-moment updates jitter by ~lr at
        # stationarity, which leaves noise-injected coherences of that scale
        # in the state unless the late-stage step shrinks.
        frac = epoch / max(opt.epochs - 1, 1)
        anneal = 1.0 if frac < 0.5 else 0.5 * (1.0 + math.cos(math.pi * (2.0 * frac - 1.0)))
        lr_t = opt.learning_rate * max(0.05, anneal)
        x = adam.step(x, grad_total, lr_t) if adam else x - lr_t * grad_total
        x, n_clipped = _clip_params_vector(x)
        if n_clipped:
            trace.clip_events += 1
        params = unpack_parameters(x, params.n_v, params.m, params.beta)

        trace.records.append({
            "epoch": epoch,
            "cost": epoch_cost,
            "entropy_bits": float(s_bits),
            "residuals": {c.obs.identifier: float(r) for c, r in zip(constraints, residuals)},
            "acceptance_rate": acceptance,
            "xi_values": xis.tolist(),
            "grad_norm": grad_norm,
        })

    return params, trace
