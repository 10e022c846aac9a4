"""Matrix-valued diffusive quantum trajectories.

The state is a density matrix rho evolving under

    drho = -i[H, rho] dt + sum_kl L[M_kl](rho) dt + gamma L[N](rho) dt
           + sqrt(gamma) D[N](rho) dW

with the dissipator L[O](rho) = O rho O+ - (rho O+O + O+O rho)/2 and the
innovation D[O](rho) = O rho + rho O+ - Tr[(O + O+) rho] rho. N is the
measured (normal) operator, gamma > 0 the measurement strength, and the
M_kl are jump operators between pointer states.

Besides the generic matrix stepper there is a component-wise stepper for
thermal models (diagonal H and N, rank-one jumps), which evolves
populations and phases directly and must agree with the matrix form to
floating-point accuracy; the agreement is part of the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import stream

__all__ = [
    "PositivityError",
    "DensityMatrix",
    "BelavkinModel",
    "ThermalModel",
    "TwoStateReduction",
    "lindblad_dissipator",
    "innovation",
    "em_step_matrix",
    "componentwise_step",
    "thermal_generator",
    "population_step",
    "simulate_belavkin",
    "reduce_two_state",
    "BelavkinTrajectory",
]

PSD_TOL_DEFAULT = 1e-9
TRACE_TOL = 1e-12

# Step-size policy: effective dt never exceeds STEP_BUDGET / gamma.
STEP_BUDGET = 0.01


class PositivityError(RuntimeError):
    """State left the positive cone beyond tolerance.

    Carries the offending minimum eigenvalue and, when raised from a
    simulation driver, the step index. Signals the step size is too
    large for the requested noise strength.
    """

    def __init__(self, min_eigenvalue: float, step: int | None = None):
        self.min_eigenvalue = float(min_eigenvalue)
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"density matrix has eigenvalue {min_eigenvalue:.3e}{where}; "
            "reduce dt or the noise strength"
        )


class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite complex matrix.

    Hermiticity is enforced by construction (the symmetrized part is
    stored, and symmetrization is exact in IEEE arithmetic). Trace and
    positivity are validated: trace must be within 1e-12 of one, and
    eigenvalues must be >= -psd_tol. An infinite psd_tol skips the
    eigenvalue computation entirely (min_eig is then nan).
    """

    __slots__ = ("m", "psd_tol", "min_eig")

    def __init__(self, matrix: np.ndarray, psd_tol: float = PSD_TOL_DEFAULT,
                 validate: bool = True):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        m = 0.5 * (m + m.conj().T)
        self.m = m
        self.psd_tol = float(psd_tol)
        self.min_eig = float("nan")
        if validate:
            tr = m.trace().real
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr!r} not within {TRACE_TOL} of 1")
            if np.isfinite(self.psd_tol):
                w = np.linalg.eigvalsh(m)
                self.min_eig = float(w[0])
                if w[0] < -self.psd_tol:
                    raise PositivityError(w[0])

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    @property
    def populations(self) -> np.ndarray:
        """Real diagonal (pointer-basis occupation probabilities)."""
        return np.diag(self.m).real.copy()

    @classmethod
    def from_populations(cls, q: np.ndarray, **kw) -> "DensityMatrix":
        return cls(np.diag(np.asarray(q, dtype=complex)), **kw)

    @classmethod
    def pointer_state(cls, i: int, dim: int, **kw) -> "DensityMatrix":
        q = np.zeros(dim)
        q[i] = 1.0
        return cls.from_populations(q, **kw)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def lindblad_dissipator(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """L[O](rho) = O rho O+ - (rho O+O + O+O rho) / 2. Traceless."""
    od = op.conj().T
    odo = od @ op
    return op @ rho @ od - 0.5 * (rho @ odo + odo @ rho)


def innovation(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D[O](rho) = O rho + rho O+ - Tr[(O + O+) rho] rho. Traceless."""
    od = op.conj().T
    a = op @ rho + rho @ od
    return a - a.trace() * rho


def _check_normal(n: np.ndarray, tol: float = 1e-12) -> None:
    nd = n.conj().T
    defect = np.abs(n @ nd - nd @ n).max()
    if defect > tol:
        raise ValueError(f"measurement operator is not normal (defect {defect:.3e})")


@dataclass
class BelavkinModel:
    """Generic model: Hamiltonian H, normal measured operator N with
    strength gamma, and a family of jump operators indexed (k, l)."""

    hamiltonian: np.ndarray
    measured: np.ndarray
    gamma: float
    jumps: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        self.measured = np.asarray(self.measured, dtype=complex)
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        h = self.hamiltonian
        if np.abs(h - h.conj().T).max() > 1e-12:
            raise ValueError("Hamiltonian must be Hermitian")
        _check_normal(self.measured)
        self.jumps = {k: np.asarray(m, dtype=complex) for k, m in self.jumps.items()}
        # Stacked jump operators and the summed M^dag M, fixed for the
        # model's lifetime, so the stepper pays one stacked product and
        # one anticommutator instead of several per jump.
        if self.jumps:
            stack = np.stack(list(self.jumps.values()))
        else:
            stack = np.zeros((0,) + self.hamiltonian.shape, dtype=complex)
        self._jump_stack = stack
        self._jump_gram = np.einsum("kji,kjl->il", stack.conj(), stack)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def _raw_step(model: BelavkinModel, rho: np.ndarray, dt: float,
              dW: float) -> np.ndarray:
    """One Euler-Maruyama update, before symmetrization and renormalization."""
    h = model.hamiltonian
    drift = -1j * (h @ rho - rho @ h)
    stack = model._jump_stack
    if stack.size:
        drift = drift + np.einsum("kij,jl,kml->im", stack, rho, stack.conj())
    gram = model._jump_gram
    drift = drift - 0.5 * (gram @ rho + rho @ gram)
    drift = drift + model.gamma * lindblad_dissipator(model.measured, rho)
    noise = np.sqrt(model.gamma) * innovation(model.measured, rho)
    return rho + drift * dt + noise * dW


def em_step_matrix(model: BelavkinModel, rho: DensityMatrix, dt: float,
                   dW: float) -> DensityMatrix:
    """One Euler-Maruyama step of the matrix equation.

    The raw update is symmetrized and divided by its trace before
    validation, so the returned state is exactly Hermitian with unit
    trace. Raises PositivityError if the result has an eigenvalue below
    -psd_tol.
    """
    out = _raw_step(model, rho.m, dt, dW)
    out = 0.5 * (out + out.conj().T)
    out = out / out.trace().real
    return DensityMatrix(out, psd_tol=rho.psd_tol)


@dataclass
class ThermalModel:
    """Weak-coupling thermal model in the pointer basis.

    H = diag(epsilon), N = diag(n_values), and jump operators
    M_kl = Gamma[k, l] |k><l|. Only |Gamma|^2 enters the populations.
    """

    epsilon: np.ndarray
    n_values: np.ndarray
    Gamma: np.ndarray
    gamma: float

    def __post_init__(self):
        self.epsilon = np.asarray(self.epsilon, dtype=float)
        self.n_values = np.asarray(self.n_values, dtype=complex)
        self.Gamma = np.asarray(self.Gamma, dtype=complex)
        n = self.epsilon.shape[0]
        if self.n_values.shape != (n,) or self.Gamma.shape != (n, n):
            raise ValueError("inconsistent dimensions")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def dim(self) -> int:
        return self.epsilon.shape[0]

    def to_belavkin(self) -> BelavkinModel:
        n = self.dim
        jumps: dict[tuple[int, int], np.ndarray] = {}
        for k in range(n):
            for l in range(n):
                if self.Gamma[k, l] != 0:
                    m = np.zeros((n, n), dtype=complex)
                    m[k, l] = self.Gamma[k, l]
                    jumps[(k, l)] = m
        return BelavkinModel(
            hamiltonian=np.diag(self.epsilon.astype(complex)),
            measured=np.diag(self.n_values),
            gamma=self.gamma,
            jumps=jumps,
        )


def componentwise_step(model: ThermalModel, rho: DensityMatrix, dt: float,
                       dW: float) -> DensityMatrix:
    """One EM step in population/phase components.

    Populations gain sum_l |Gamma_il|^2 q_l and lose sum_k |Gamma_ki|^2 q_i;
    phases rotate with the level splitting and decay under both the jump
    and the measurement dissipators. Algebraically identical to
    em_step_matrix on model.to_belavkin(); entries that start at zero
    off-diagonal stay exactly zero because every phase term is
    proportional to the phase itself.
    """
    m = rho.m
    g2 = np.abs(model.Gamma) ** 2           # g2[k, l] multiplies |k><l| jumps
    q = np.diag(m).real
    nvals = model.n_values
    ntilde = 2.0 * nvals.real
    s = float(ntilde @ q)

    eps = model.epsilon
    col = g2.sum(axis=0)                    # loss rates sum_k |Gamma_ki|^2
    absn2 = np.abs(nvals) ** 2

    larmor = -1j * (eps[:, None] - eps[None, :])
    jump_decay = -0.5 * (col[:, None] + col[None, :])
    meas_decay = -0.5 * model.gamma * (
        absn2[:, None] + absn2[None, :] - 2.0 * np.outer(nvals, nvals.conj())
    )
    drift = (larmor + jump_decay + meas_decay) * m
    drift[np.diag_indices_from(drift)] += g2 @ q

    noise = np.sqrt(model.gamma) * (nvals[:, None] + nvals.conj()[None, :] - s) * m

    out = m + drift * dt + noise * dW
    out = 0.5 * (out + out.conj().T)
    out = out / out.trace().real
    return DensityMatrix(out, psd_tol=rho.psd_tol)


def thermal_generator(Gamma: np.ndarray) -> np.ndarray:
    """Classical jump generator on populations: rows sum to zero,
    off-diagonal entries |Gamma_ji|^2 are the i -> j rates."""
    g2 = np.abs(np.asarray(Gamma, dtype=complex)) ** 2
    gen = g2.T.copy()
    gen[np.diag_indices_from(gen)] -= g2.sum(axis=0)
    return gen


def population_step(L: np.ndarray, n_values: np.ndarray, gamma: float,
                    q: np.ndarray, dt: float, dW: float) -> tuple[np.ndarray, int]:
    """One EM step of the closed population SDE.

    dq_i = (L^T q)_i dt + sqrt(gamma) (ntilde_i - <ntilde, q>) q_i dW.

    Both the drift and the noise sum to zero over i, so sum(q) is
    conserved up to floating error. Entries are clamped to [0, 1];
    the clamp count is returned alongside the new vector.
    """
    q = np.asarray(q, dtype=float)
    ntilde = 2.0 * np.asarray(n_values, dtype=complex).real
    s = float(ntilde @ q)
    out = q + (L.T @ q) * dt + np.sqrt(gamma) * (ntilde - s) * q * dW
    clamped = int(np.count_nonzero((out < 0.0) | (out > 1.0)))
    if clamped:
        out = np.clip(out, 0.0, 1.0)
    return out, clamped


@dataclass
class BelavkinTrajectory:
    """Retained samples of a matrix trajectory plus step diagnostics."""

    times: np.ndarray
    states: np.ndarray                     # shape (k, n, n), complex
    max_trace_defect: float                # pre-renormalization |Tr - 1|
    max_hermiticity_defect: float          # post-step, exactly 0 by construction
    dt: float
    min_eigenvalue: float = float("nan")   # over all steps; nan if unchecked


def simulate_belavkin(model: BelavkinModel, rho0: DensityMatrix, dt: float,
                      T: float, seed: int, stride: int = 1,
                      traj_index: int = 0) -> BelavkinTrajectory:
    """Drive em_step_matrix over [0, T] with one Brownian stream.

    The effective step is min(dt, 0.01 / gamma). Increments are
    sqrt(dt) times standard normals from the (seed, traj_index) stream.
    Every stride-th state is retained. PositivityError from a step is
    re-raised with the step index attached.
    """
    dt_eff = min(dt, STEP_BUDGET / model.gamma)
    n_steps = int(round(T / dt_eff))
    rng = stream(seed, traj_index)
    sq = np.sqrt(dt_eff)

    rho = rho0
    kept = [rho.m.copy()]
    kept_t = [0.0]
    max_defect = 0.0
    max_herm = 0.0
    min_eig = rho0.min_eig
    for k in range(n_steps):
        dW = sq * rng.standard_normal()
        raw = _raw_step(model, rho.m, dt_eff, dW)
        defect = abs(raw.trace().real - 1.0)
        if defect > max_defect:
            max_defect = defect
        sym = 0.5 * (raw + raw.conj().T)
        herm = np.abs(sym - sym.conj().T).max()
        if herm > max_herm:
            max_herm = herm
        sym = sym / sym.trace().real
        try:
            rho = DensityMatrix(sym, psd_tol=rho0.psd_tol)
        except PositivityError as e:
            raise PositivityError(e.min_eigenvalue, step=k + 1) from None
        if not rho.min_eig >= min_eig:       # also catches nan
            min_eig = rho.min_eig
        if (k + 1) % stride == 0:
            kept.append(rho.m.copy())
            kept_t.append((k + 1) * dt_eff)

    return BelavkinTrajectory(
        times=np.array(kept_t),
        states=np.array(kept),
        max_trace_defect=max_defect,
        max_hermiticity_defect=max_herm,
        dt=dt_eff,
        min_eigenvalue=min_eig,
    )


def random_thermal_model(dim: int, rng: np.random.Generator,
                         gamma: float) -> ThermalModel:
    """Random diagonal energies, random normal measured operator, and
    random off-diagonal jump amplitudes at scale 1/2. Self-jumps are
    dropped: they cancel in the populations and only dephase."""
    eps = rng.normal(size=dim)
    nv = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    g = 0.5 * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    np.fill_diagonal(g, 0.0)
    return ThermalModel(epsilon=eps, n_values=nv, Gamma=g, gamma=gamma)


@dataclass(frozen=True)
class TwoStateReduction:
    """Scalar-model parameters extracted from a two-level thermal model.

    lam and p parametrize the population equation
    dq = -lam (q - p) dt + sqrt(gamma_model) q (1 - q) dW, where
    gamma_model = 4 gamma_phys absorbs the factor 2 that the physical
    noise coefficient 2 sqrt(gamma_phys) q(1-q) carries. phase_drift is
    the constant c in dp = -c p dt + sqrt(gamma_phys) (1 - 2q) p dW.
    """

    lam: float
    p: float
    gamma_model: float
    gamma_phys: float
    phase_drift: complex


def reduce_two_state(model: ThermalModel, w: float | None = None) -> TwoStateReduction:
    """Map a two-level thermal model onto the scalar population SDE.

    Requires dim 2, N = sigma_z / 2 and purely off-diagonal Gamma. The
    level splitting w defaults to epsilon[0] - epsilon[1].
    """
    if model.dim != 2:
        raise ValueError("two-state reduction needs dim 2")
    if not np.allclose(model.n_values, [0.5, -0.5], atol=1e-12):
        raise ValueError("measured operator must be sigma_z / 2")
    if model.Gamma[0, 0] != 0 or model.Gamma[1, 1] != 0:
        raise ValueError("Gamma must be purely off-diagonal")
    lam_up = abs(model.Gamma[0, 1]) ** 2
    lam_dn = abs(model.Gamma[1, 0]) ** 2
    lam = lam_up + lam_dn
    if lam <= 0:
        raise ValueError("need at least one nonzero jump rate")
    if w is None:
        w = float(model.epsilon[0] - model.epsilon[1])
    g = model.gamma
    return TwoStateReduction(
        lam=lam,
        p=lam_up / lam,
        gamma_model=4.0 * g,
        gamma_phys=g,
        phase_drift=0.5 * (g + lam + 2j * w),
    )
