"""Dense statevector / density-matrix oracle.

Small-scale exact engine: gate application, random circuit states, partial
trace, Pauli expectations, entropies, and an exact maximum-entropy Gibbs
solver for commuting observables. Everything here is brute force on dense
arrays and is the ground truth the sampling estimators are tested against.

Capped at DENSE_CAP qubits by default; operations refuse above the cap
rather than attempting anything clever.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DenseCapError,
    InfeasibleTargetsError,
    NonCommutingObservablesError,
    NumericalError,
    ValidationError,
)

DENSE_CAP = 14

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

CNOT = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]], dtype=complex)


def check_cap(qubits: int, cap: int = DENSE_CAP) -> None:
    if qubits > cap:
        raise DenseCapError(f"{qubits} qubits exceeds dense cap {cap}")


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, one letter per system qubit."""

    letters: str

    def __post_init__(self):
        if not self.letters:
            raise ValidationError("empty Pauli string")
        bad = set(self.letters) - set("IXYZ")
        if bad:
            raise ValidationError(f"invalid Pauli letters {sorted(bad)}")

    @property
    def identifier(self) -> str:
        return self.letters

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    @property
    def is_diagonal(self) -> bool:
        return set(self.letters) <= {"I", "Z"}

    def site_mask(self, kinds: str) -> np.ndarray:
        return np.array([c in kinds for c in self.letters], dtype=bool)

    def matrix(self) -> np.ndarray:
        m = np.array([[1.0 + 0j]])
        for c in self.letters:
            m = np.kron(m, PAULI_1Q[c])
        return m


def random_pauli_strings(n_qubits: int, k: int, rng: np.random.Generator) -> list[PauliString]:
    """k distinct non-identity Pauli strings over n_qubits."""
    if k < 1:
        raise ValidationError("observable count must be >= 1")
    if k > 4**n_qubits - 1:
        raise ValidationError("more observables requested than distinct non-identity strings")
    out: list[PauliString] = []
    seen = set()
    while len(out) < k:
        letters = "".join(rng.choice(list("IXYZ"), size=n_qubits))
        if letters in seen or set(letters) == {"I"}:
            continue
        seen.add(letters)
        out.append(PauliString(letters))
    return out


# ---------------------------------------------------------------------------
# statevector engine

def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform unitary: QR of a complex Ginibre matrix with phase fix."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def zero_state(qubits: int) -> np.ndarray:
    check_cap(qubits)
    psi = np.zeros(2**qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def apply_gate(state: np.ndarray, gate: np.ndarray, targets) -> np.ndarray:
    """Apply a 2x2 or 4x4 unitary to the given qubits (qubit 0 = MSB)."""
    state = np.asarray(state, dtype=complex)
    gate = np.asarray(gate, dtype=complex)
    q = int(np.log2(state.size))
    if state.size != 2**q:
        raise ValidationError("state length is not a power of two")
    targets = list(targets)
    k = len(targets)
    if gate.shape != (2**k, 2**k):
        raise ValidationError("gate shape does not match target count")
    if len(set(targets)) != k or any(t < 0 or t >= q for t in targets):
        raise ValidationError("targets must be distinct in-range qubit indices")
    if np.max(np.abs(gate @ gate.conj().T - np.eye(2**k))) > 1e-10:
        raise ValidationError("gate is not unitary")
    psi = state.reshape([2] * q)
    psi = np.moveaxis(psi, targets, range(k))
    shape = psi.shape
    psi = gate @ psi.reshape(2**k, -1)
    psi = np.moveaxis(psi.reshape(shape), range(k), targets)
    return psi.reshape(-1)


@dataclass(frozen=True)
class CircuitSpec:
    """Layered random circuit: per layer, Haar single-qubit gates on every
    qubit followed by a CNOT cascade CNOT(i, i+1), i = 0..q-2."""

    layers: int
    seed: int
    qubit_count: int

    def __post_init__(self):
        if self.layers < 1:
            raise ValidationError("layers must be >= 1")
        if self.qubit_count < 1:
            raise ValidationError("qubit_count must be >= 1")


def random_circuit_state(spec: CircuitSpec) -> np.ndarray:
    check_cap(spec.qubit_count)
    rng = np.random.default_rng(spec.seed)
    psi = zero_state(spec.qubit_count)
    for _ in range(spec.layers):
        for q in range(spec.qubit_count):
            psi = apply_gate(psi, haar_unitary(2, rng), [q])
        for q in range(spec.qubit_count - 1):
            psi = apply_gate(psi, CNOT, [q, q + 1])
    return psi


# ---------------------------------------------------------------------------
# density matrices

def validate_density_matrix(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10:
        raise ValidationError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValidationError("density matrix has a negative eigenvalue")
    return rho


def partial_trace(obj: np.ndarray, keep, total_qubits: int | None = None) -> np.ndarray:
    """Reduce a statevector or density matrix to the kept qubits."""
    obj = np.asarray(obj, dtype=complex)
    keep = list(keep)
    if not keep:
        raise ValidationError("keep set must be nonempty")
    if obj.ndim == 1:
        q = int(np.log2(obj.size))
        if total_qubits is not None and total_qubits != q:
            raise ValidationError("total_qubits does not match state size")
        if sorted(set(keep)) != sorted(keep) or any(t < 0 or t >= q for t in keep):
            raise ValidationError("keep indices must be distinct and in range")
        rest = [i for i in range(q) if i not in keep]
        t = obj.reshape([2] * q).transpose(keep + rest)
        m = t.reshape(2 ** len(keep), -1)
        return m @ m.conj().T
    if obj.ndim == 2:
        q = int(np.log2(obj.shape[0]))
        rest = [i for i in range(q) if i not in keep]
        t = obj.reshape([2] * (2 * q))
        perm = keep + rest + [q + i for i in keep] + [q + i for i in rest]
        t = t.transpose(perm)
        k, r = 2 ** len(keep), 2 ** len(rest)
        t = t.reshape(k, r, k, r)
        return np.einsum("arbr->ab", t)
    raise ValidationError("expected a vector or a square matrix")


def pauli_expectation_exact(rho: np.ndarray, obs: PauliString) -> float:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[0] != 2**obs.n_qubits:
        raise ValidationError("observable/density-matrix dimension mismatch")
    val = np.trace(rho @ obs.matrix())
    if abs(val.imag) > 1e-9:
        raise NumericalError(f"Pauli expectation has imaginary residue {val.imag:.2e}")
    return float(np.clip(val.real, -1.0, 1.0))


def _eigenvalues(rho: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(np.asarray(rho, dtype=complex))
    return np.clip(ev, 0.0, None)


def trace_power(rho: np.ndarray, n: int) -> float:
    return float(np.sum(_eigenvalues(rho) ** n))


def entropy_exact(rho: np.ndarray, order) -> float:
    """Renyi-alpha (integer alpha >= 2) or von Neumann ("vne") entropy in bits."""
    ev = _eigenvalues(rho)
    if isinstance(order, str):
        if order != "vne":
            raise ValidationError(f"unknown entropy order {order!r}")
        pos = ev[ev > 0]
        s = float(-(pos * np.log2(pos)).sum())
    else:
        alpha = int(order)
        if alpha != order or alpha < 2:
            raise ValidationError("Renyi order must be an integer >= 2")
        s = float(np.log2((ev**alpha).sum()) / (1 - alpha))
    return max(s, 0.0) if s > -1e-9 else s


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma))
    return float(0.5 * np.abs(ev).sum())


# ---------------------------------------------------------------------------
# exact MaxEnt (Gibbs) solver for commuting observables

def _common_eigenbasis(mats: list[np.ndarray]) -> np.ndarray:
    """Common eigenbasis of a commuting Hermitian family via a random
    generic combination; retries with fresh weights on degeneracy trouble."""
    rng = np.random.default_rng(1234)
    for _ in range(8):
        w = rng.standard_normal(len(mats))
        _, u = np.linalg.eigh(sum(c * m for c, m in zip(w, mats)))
        if all(np.max(np.abs(u.conj().T @ m @ u - np.diag(np.diagonal(u.conj().T @ m @ u)))) < 1e-8
               for m in mats):
            return u
    raise NumericalError("failed to construct a common eigenbasis")


def gibbs_maxent_solve(
    observables: list[PauliString],
    targets,
    max_iter: int = 500,
    tol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact MaxEnt state rho = exp(-sum_k lambda_k O_k)/Z matching the targets.

    Requires a mutually commuting observable set; solves for the multipliers
    by damped Newton iteration on the convex dual (lambda = 0 start, step
    halved on residual increase, convergence at max-residual < tol).
    Returns (rho, lambdas).
    """
    if not observables:
        raise ValidationError("need at least one observable")
    n = observables[0].n_qubits
    if any(o.n_qubits != n for o in observables):
        raise ValidationError("observables must share a qubit count")
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (len(observables),):
        raise ValidationError("targets/observables length mismatch")
    if np.any(np.abs(targets) > 1):
        raise ValidationError("Pauli targets must lie in [-1, 1]")
    check_cap(n)
    mats = [o.matrix() for o in observables]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            if np.max(np.abs(mats[i] @ mats[j] - mats[j] @ mats[i])) > 1e-10:
                raise NonCommutingObservablesError(
                    f"observables {observables[i].identifier} and "
                    f"{observables[j].identifier} do not commute")
    u = _common_eigenbasis(mats)
    d = np.stack([np.real(np.diagonal(u.conj().T @ m @ u)) for m in mats])  # (k, dim)

    def probs(lam):
        w = -lam @ d
        w = w - w.max()
        p = np.exp(w)
        return p / p.sum()

    def residual(lam):
        return d @ probs(lam) - targets

    lam = np.zeros(len(observables))
    res = residual(lam)
    for _ in range(max_iter):
        if np.max(np.abs(res)) < tol:
            rho = (u * probs(lam)) @ u.conj().T
            return validate_density_matrix(rho), lam
        p = probs(lam)
        mean = d @ p
        cov = (d * p) @ d.T - np.outer(mean, mean)
        try:
            step = np.linalg.solve(cov, res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(cov, res, rcond=None)[0]
        scale = 1.0
        for _ in range(60):
            new = residual(lam + scale * step)
            if np.max(np.abs(new)) <= np.max(np.abs(res)):
                break
            scale *= 0.5
        lam = lam + scale * step
        res = residual(lam)
    raise InfeasibleTargetsError(
        f"no convergence after {max_iter} Newton iterations "
        f"(max residual {np.max(np.abs(res)):.2e}); targets presumed infeasible")
