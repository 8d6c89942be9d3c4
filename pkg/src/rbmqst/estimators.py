"""Sampling estimators for observables and Renyi/von Neumann entropies.

Every estimator has two modes: `sampled` (fed by samplers.mh_sample /
sample_replicas output) and `exact_sum` (brute-force enumeration over all
visible configurations, used as the oracle-comparable mode at small sizes).

Pauli local estimator: a Pauli string connects each configuration v to
exactly one partner v' (flip the X/Y support on the system spins); the
matrix element under spin +1 <-> bit 0 is

    <v|P|v'>  =  prod_{Z sites} v_i  *  prod_{Y sites} (-i v_i)

so O_loc(v) = <v|P|v'> * psi(v')/psi(v).

Entropies use the replica trick: Tr rho_A^n is the mean over n independent
sample streams of prod_k psi(w_k)/psi(u_k), where w_k carries the A-region
(system) spins of stream k+1 (cyclic) and the environment spins of stream k.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EstimationError, ValidationError
from .oracle import DENSE_CAP, PauliString
from .rbm import Partition, RbmParams, amplitude_matrix, log_amplitudes
from .samplers import SampleSet, integrated_autocorr_time
from .spins import all_configs

LN2 = math.log(2.0)


@dataclass(frozen=True)
class EstimateResult:
    value: float
    std_error: float
    n_samples: int
    mode: str  # "sampled" | "exact_sum"


@dataclass(frozen=True)
class SwapResult:
    """<SWAP_A> estimate plus the derived second Renyi entropy in bits."""

    swap: EstimateResult
    s2_bits: float
    s2_std_error: float
    imag_mean: float
    clipped: bool


def _resolve_samples(samples) -> tuple[np.ndarray, int, int]:
    if isinstance(samples, SampleSet):
        return samples.spins, samples.n_chains, samples.chain_len
    arr = np.atleast_2d(np.asarray(samples, dtype=float))
    if arr.size == 0:
        raise ValidationError("empty sample set")
    return arr, 1, arr.shape[0]


def _series_error(series: np.ndarray, n_chains: int, chain_len: int) -> float:
    """Standard error of the series mean: the larger of the
    autocorrelation-corrected pooled estimate and the between-chain spread
    (the windowed tau can miss slow modes that independent chains expose)."""
    n = series.size
    if n < 2:
        return 0.0
    chains = series.reshape(n_chains, chain_len)
    tau = integrated_autocorr_time(chains)
    se = float(series.std(ddof=1) / math.sqrt(n / tau))
    if n_chains >= 2 and chain_len >= 2:
        between = float(chains.mean(axis=1).std(ddof=1) / math.sqrt(n_chains))
        se = max(se, between)
    return se


# ---------------------------------------------------------------------------
# observables

def _check_obs(partition: Partition, obs: PauliString) -> None:
    if obs.n_qubits != partition.n_sys:
        raise ValidationError(
            "observable must act on exactly the system qubits "
            f"(got {obs.n_qubits} letters for n_sys={partition.n_sys})")


def pauli_action(obs: PauliString, partition: Partition,
                 configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Connected configurations and matrix elements <v|P (x) I_env|v'>."""
    configs = np.atleast_2d(np.asarray(configs, dtype=float))
    sys = configs[:, :partition.n_sys]
    z = obs.site_mask("Z")
    y = obs.site_mask("Y")
    flip = obs.site_mask("XY")
    coeff = np.prod(sys[:, z], axis=1) * np.prod(-1j * sys[:, y], axis=1)
    connected = configs.copy()
    connected[:, :partition.n_sys][:, flip] *= -1.0
    return np.asarray(coeff, dtype=complex), connected


def _local_estimators(params: RbmParams, partition: Partition, obs: PauliString,
                      configs: np.ndarray) -> np.ndarray:
    coeff, connected = pauli_action(obs, partition, configs)
    if obs.is_diagonal:
        return coeff
    ratio = np.exp(log_amplitudes(params, connected) - log_amplitudes(params, configs))
    return coeff * ratio


def local_estimator(params: RbmParams, partition: Partition, obs: PauliString,
                    v: np.ndarray) -> complex:
    """O_loc(v) = <v|O|v'> psi(v')/psi(v) over the single connected v'."""
    _check_obs(partition, obs)
    return complex(_local_estimators(params, partition, obs, np.asarray(v)[None, :])[0])


def estimate_observable(params: RbmParams, partition: Partition, obs: PauliString,
                        samples=None, exact_sum: bool = False,
                        cap: int = DENSE_CAP) -> EstimateResult:
    """<O> as the |psi|^2-weighted mean of the local estimator."""
    _check_obs(partition, obs)
    if exact_sum:
        configs = all_configs(partition.n_v)
        if partition.n_v > cap:
            raise ValidationError(f"exact_sum above dense cap {cap}")
        ln = log_amplitudes(params, configs)
        p = np.exp(2.0 * (ln.real - ln.real.max()))
        o_loc = _local_estimators(params, partition, obs, configs)
        value = float(np.real(p @ o_loc) / p.sum())
        return EstimateResult(value=value, std_error=0.0,
                              n_samples=configs.shape[0], mode="exact_sum")
    if samples is None:
        raise ValidationError("samples required unless exact_sum")
    spins, n_chains, chain_len = _resolve_samples(samples)
    series = np.real(_local_estimators(params, partition, obs, spins))
    return EstimateResult(value=float(series.mean()),
                          std_error=_series_error(series, n_chains, chain_len),
                          n_samples=series.size, mode="sampled")


# ---------------------------------------------------------------------------
# replica-trick entropies

def replica_permuted(partition: Partition, streams: list[np.ndarray]) -> list[np.ndarray]:
    """w_k = (system spins of stream k+1 mod n, environment spins of stream k)."""
    n = len(streams)
    ns = partition.n_sys
    return [np.concatenate([streams[(k + 1) % n][:, :ns], streams[k][:, ns:]], axis=1)
            for k in range(n)]


def replica_terms(params: RbmParams, partition: Partition,
                  streams: list[np.ndarray]) -> np.ndarray:
    """Per-tuple terms prod_k psi(w_k)/psi(u_k) for aligned sample streams."""
    log_term = 0.0
    for u, w in zip(streams, replica_permuted(partition, streams)):
        log_term = log_term + log_amplitudes(params, w) - log_amplitudes(params, u)
    return np.exp(log_term)


def _resolve_streams(replica_samples, n: int) -> tuple[list[np.ndarray], int, int]:
    if replica_samples is None or len(replica_samples) != n:
        raise ValidationError(f"need exactly {n} replica streams")
    resolved = [_resolve_samples(s) for s in replica_samples]
    arrays = [r[0] for r in resolved]
    if len({a.shape for a in arrays}) != 1:
        raise ValidationError("replica streams must have equal shapes")
    return arrays, resolved[0][1], resolved[0][2]


def _renyi_exact(params: RbmParams, partition: Partition, n: int,
                 cap: int = DENSE_CAP) -> float:
    v, _ = amplitude_matrix(params, partition, cap)
    ev = np.clip(np.linalg.eigvalsh(v @ v.conj().T), 0.0, None)
    return float((ev**n).sum() / ev.sum() ** n)


def _renyi_estimate(params: RbmParams, partition: Partition, n: int,
                    replica_samples, exact_sum: bool) -> tuple[EstimateResult, float]:
    """Shared path for estimate_renyi_n / estimate_swap; also returns the
    imaginary part of the term mean (diagnostic)."""
    if n < 2:
        raise ValidationError("replica order must be >= 2")
    if partition.n_v != params.n_v:
        raise ValidationError("partition does not match parameter shape")
    if exact_sum:
        est = EstimateResult(value=_renyi_exact(params, partition, n), std_error=0.0,
                             n_samples=2**partition.n_v, mode="exact_sum")
        return est, 0.0
    arrays, n_chains, chain_len = _resolve_streams(replica_samples, n)
    terms = replica_terms(params, partition, arrays)
    value = float(terms.real.mean())
    if value <= 0.0:
        raise EstimationError(
            f"non-positive Tr(rho^{n}) estimate {value:.3e}; more samples needed")
    est = EstimateResult(value=value,
                         std_error=_series_error(terms.real, n_chains, chain_len),
                         n_samples=terms.size, mode="sampled")
    return est, float(terms.imag.mean())


def estimate_renyi_n(params: RbmParams, partition: Partition, n: int,
                     replica_samples=None, exact_sum: bool = False) -> EstimateResult:
    """Tr(rho_A^n) with the A region = system qubits."""
    return _renyi_estimate(params, partition, n, replica_samples, exact_sum)[0]


def estimate_swap(params: RbmParams, partition: Partition,
                  replica_samples=None, exact_sum: bool = False) -> SwapResult:
    """<SWAP_A> = Tr(rho_A^2) from paired streams, plus S2 = -log2(value).

    The imaginary part of the term mean is reported as a diagnostic; values
    above 1 are clipped to 1 (flagged) before the log.
    """
    est, imag_mean = _renyi_estimate(params, partition, 2, replica_samples, exact_sum)
    clipped = est.value > 1.0
    swap_val = min(est.value, 1.0)
    s2 = -math.log2(swap_val)
    return SwapResult(swap=est, s2_bits=s2,
                      s2_std_error=est.std_error / (est.value * LN2),
                      imag_mean=imag_mean, clipped=clipped)


# ---------------------------------------------------------------------------
# polynomial von Neumann entropy

VNE_FIT_FLOOR = 0.02
_VNE_FIT_POINTS = 2000


@lru_cache(maxsize=32)
def vne_coefficients(n_c: int) -> np.ndarray:
    """Coefficients alpha_1..alpha_{n_c} with x ln x ~ sum_m alpha_m x^m on
    [VNE_FIT_FLOOR, 1], constrained to vanish exactly at x = 1.

    Least-squares fit on Chebyshev-spaced nodes in the basis (x^m - x),
    m = 2..n_c, which builds the p(1) = 0 constraint in; alpha_1 is the
    negated sum of the rest. Deterministic, cached per cutoff.
    """
    if n_c < 2:
        raise ValidationError("polynomial cutoff must be >= 2")
    t = np.cos(np.linspace(0.0, np.pi, _VNE_FIT_POINTS))
    x = VNE_FIT_FLOOR + (1.0 - VNE_FIT_FLOOR) * (t + 1.0) / 2.0
    powers = np.vander(x, n_c + 1, increasing=True)[:, 1:]  # x^1..x^{n_c}
    basis = powers[:, 1:] - powers[:, [0]]
    sol, *_ = np.linalg.lstsq(basis, x * np.log(x), rcond=None)
    alpha = np.empty(n_c)
    alpha[1:] = sol
    alpha[0] = -sol.sum()
    alpha.setflags(write=False)
    return alpha


def vne_bits_from_raw_powers(tr_powers, n_c: int) -> float:
    """S1 ~ -(1/ln2) sum_m alpha_m (Tr rho^m - 1); no range validation, so
    noisy sampled trace powers are usable (the polynomial needs no log)."""
    tr_powers = np.asarray(tr_powers, dtype=float)
    if tr_powers.shape != (n_c - 1,):
        raise ValidationError(f"expected trace powers 2..{n_c} ({n_c - 1} values)")
    alpha = vne_coefficients(n_c)
    return float(-(alpha[1:] @ (tr_powers - 1.0)) / LN2)


def vne_from_powers(tr_powers, n_c: int) -> float:
    """Polynomial von Neumann entropy (bits) from exact-range trace powers
    Tr rho^2 .. Tr rho^{n_c}. A pure state (all powers 1) gives exactly 0."""
    arr = np.asarray(tr_powers, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ValidationError("trace powers must lie in (0, 1]")
    return vne_bits_from_raw_powers(arr, n_c)


def required_samples(variance: float, epsilon: float) -> int:
    """N_s = ceil(Var/eps^2), at least 1."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if variance < 0:
        raise ValidationError("variance must be nonnegative")
    return max(1, math.ceil(variance / epsilon**2))
