"""Master-equation assembly, time evolution and steady states.

The composite space is ``8 electronic x N Fock``.  Density matrices are
vectorised row-major, so ``vec(A rho B) = (A kron B.T) vec(rho)``.
"""
from __future__ import annotations

import logging
from collections import OrderedDict, deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse.linalg import splu

from .atom import N_LEVELS, Beam, DecayChannel, Sublevel, beam_couplings
from .motion import MotionalMode, effective_mode_eta, emission_lamb_dicke
from .operators import DensityState, HilbertSpace, Operator, destroy, number

log = logging.getLogger(__name__)

LD_ORDERS = (0, 1, 2, "full")


class FrameError(ValueError):
    """Beams form a closed loop with no common rotating frame."""


class SteadyStateError(RuntimeError):
    pass


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    """Everything needed to build the Liouvillian of one motional mode.

    ``eta`` maps beam name to its Lamb-Dicke parameter on ``mode``;
    ``emission_eta`` maps transition ('397'/'866') to the Lamb-Dicke
    parameter of a photon emitted along the mode axis.  With ``mode=None``
    the motional factor has dimension 1 (purely electronic model).
    """

    sublevels: tuple[Sublevel, ...]
    beams: tuple[Beam, ...]
    channels: tuple[DecayChannel, ...]
    mode: MotionalMode | None = None
    eta: dict = field(default_factory=dict)
    emission_eta: dict = field(default_factory=dict)
    ld_order: int | str = 2
    recoil: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "sublevels", tuple(self.sublevels))
        object.__setattr__(self, "beams", tuple(self.beams))
        object.__setattr__(self, "channels", tuple(self.channels))
        if len(self.sublevels) != N_LEVELS:
            raise ValueError(f"expected {N_LEVELS} sublevels, got {len(self.sublevels)}")
        if self.ld_order not in LD_ORDERS:
            raise ValueError(f"ld_order must be one of {LD_ORDERS}, got {self.ld_order!r}")
        if not 0 <= self.recoil <= 1:
            raise ValueError(f"recoil factor must be in [0, 1], got {self.recoil}")
        names = [b.name for b in self.beams]
        if len(set(names)) != len(names):
            raise ValueError(f"beam names must be unique: {names}")
        unknown = set(self.eta) - set(names)
        if unknown:
            raise ValueError(f"eta table names unknown beams {sorted(unknown)}")

    @classmethod
    def for_mode(cls, sublevels, beams, channels, mode, **kw) -> "SystemConfig":
        """Fill the eta tables from the beam and mode geometry."""
        eta = effective_mode_eta(mode, beams) if mode is not None else {}
        em = {t: emission_lamb_dicke(t, mode) for t in ("397", "866")} if mode is not None else {}
        return cls(sublevels, beams, channels, mode, eta, em, **kw)

    @property
    def fock_dim(self) -> int:
        return 1 if self.mode is None else self.mode.fock_dim

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace((N_LEVELS, self.fock_dim))

    def replace(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class Liouvillian:
    """Hamiltonian plus ``(rate, jump)`` pairs; the superoperator is built lazily."""

    hamiltonian: Operator
    jumps: list[tuple[float, Operator]]
    decay_rates: np.ndarray | None = None  # total outflow per electronic level
    _super: sparse.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        for _, c in self.jumps:
            if c.space != self.hamiltonian.space:
                raise ValueError("jump operator lives on a different space than H")
        if not self.hamiltonian.is_hermitian(1e-10 * max(1.0, abs(self.hamiltonian.matrix).max())):
            raise ValueError("Hamiltonian is not Hermitian")

    @property
    def space(self) -> HilbertSpace:
        return self.hamiltonian.space

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def superoperator(self) -> sparse.csr_matrix:
        if self._super is None:
            n = self.dim
            eye = sparse.identity(n, dtype=complex, format="csr")
            h = self.hamiltonian.matrix
            out = -1j * (sparse.kron(h, eye) - sparse.kron(eye, h.T))
            for rate, c in self.jumps:
                cm = c.matrix
                cdc = (cm.conj().T @ cm).tocsr()
                out = out + rate * (
                    sparse.kron(cm, cm.conj())
                    - 0.5 * sparse.kron(cdc, eye)
                    - 0.5 * sparse.kron(eye, cdc.T)
                )
            out = out.tocsr()
            out.eliminate_zeros()
            self._super = out
        return self._super

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """``L[rho]`` on a dense matrix."""
        h = self.hamiltonian.matrix
        out = -1j * (h @ rho - (h.T @ rho.T).T)
        for rate, c in self.jumps:
            cm = c.matrix
            cdc = cm.conj().T @ cm
            out = out + rate * (
                cm @ (cm.conj() @ rho.T).T - 0.5 * (cdc @ rho) - 0.5 * (cdc.T @ rho.T).T
            )
        return out

    def norm(self) -> float:
        s = self.superoperator()
        return float(abs(s).sum(axis=0).max())


def rotating_frame(sublevels, beams) -> np.ndarray:
    """Frame offsets ``phi`` such that every coupling is time independent.

    Each coupling ``l -> u`` of a beam imposes ``phi[u] - phi[l] = detuning``.
    Levels are visited breadth-first; unconnected levels keep ``phi = 0``.
    """
    edges = []
    for b in beams:
        if b.rabi == 0:
            continue
        for lo, up, _ in beam_couplings(b, sublevels):
            edges.append((lo, up, b.detuning, b.name))
    phi = np.full(len(sublevels), np.nan)
    adj = {i: [] for i in range(len(sublevels))}
    for lo, up, d, name in edges:
        adj[lo].append((up, d, name))
        adj[up].append((lo, -d, name))
    for root in range(len(sublevels)):
        if not np.isnan(phi[root]):
            continue
        phi[root] = 0.0
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for j, d, name in adj[i]:
                if np.isnan(phi[j]):
                    phi[j] = phi[i] + d
                    queue.append(j)
                elif abs(phi[j] - (phi[i] + d)) > 1e-9 * max(1.0, abs(d)):
                    raise FrameError(
                        f"beam {name} closes a loop through {sublevels[i].label}-"
                        f"{sublevels[j].label} with frequency mismatch "
                        f"{(phi[j] - phi[i] - d) / (2 * np.pi):.6g} Hz"
                    )
    return phi


def displacement(eta: float, n: int, order) -> np.ndarray:
    """``exp(i eta (a + a^dag))`` on ``n`` Fock states, expanded to ``order``."""
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    a = destroy(n)
    x = a + a.conj().T
    if order == "full":
        return expm(1j * eta * x)
    out = np.eye(n, dtype=complex)
    if order >= 1:
        out = out + 1j * eta * x
    if order >= 2:
        out = out - 0.5 * eta**2 * (x @ x)
    return out


def build_liouvillian(cfg: SystemConfig) -> Liouvillian:
    """Assemble H and the jump operators in the rotating frame of the beams."""
    space = cfg.space
    n = cfg.fock_dim
    nl = N_LEVELS
    phi = rotating_frame(cfg.sublevels, cfg.beams)
    diag = np.array([s.zeeman_shift for s in cfg.sublevels]) - phi

    h = sparse.kron(sparse.diags(diag), sparse.identity(n), format="csr").astype(complex)
    if cfg.mode is not None:
        h = h + sparse.kron(sparse.identity(nl), cfg.mode.frequency * number(n), format="csr")

    for b in cfg.beams:
        if b.rabi == 0:
            continue
        eta = cfg.eta.get(b.name, 0.0) if cfg.mode is not None else 0.0
        order = cfg.ld_order if eta != 0.0 else 0
        disp = sparse.csr_matrix(displacement(eta, n, order))
        for lo, up, c in beam_couplings(b, cfg.sublevels):
            sigma = sparse.csr_matrix(([1.0], ([up], [lo])), shape=(nl, nl))
            term = 0.5 * c * sparse.kron(sigma, disp, format="csr")
            h = h + term + term.conj().T

    jumps = []
    outflow = np.zeros(nl)
    for ch in cfg.channels:
        up, lo = ch.upper.index, ch.lower.index
        outflow[up] += ch.rate
        sigma = sparse.csr_matrix(([1.0], ([lo], [up])), shape=(nl, nl))
        eta_e = cfg.emission_eta.get(ch.transition, 0.0) if cfg.mode is not None else 0.0
        if cfg.recoil > 0 and eta_e != 0.0 and cfg.ld_order != 0:
            jumps.append((ch.rate * (1 - cfg.recoil), sparse.kron(sigma, sparse.identity(n))))
            for sign in (1, -1):
                disp = sparse.csr_matrix(displacement(sign * eta_e, n, cfg.ld_order))
                jumps.append((ch.rate * cfg.recoil / 2, sparse.kron(sigma, disp)))
        else:
            jumps.append((ch.rate, sparse.kron(sigma, sparse.identity(n))))

    return Liouvillian(
        Operator(space, h),
        [(r, Operator(space, c)) for r, c in jumps if r > 0],
        decay_rates=outflow,
    )


def _product_form(c: Operator) -> tuple[int, int, np.ndarray] | None:
    """Split ``c = |l><u| (x) M``; None when ``c`` is not of that form."""
    nl, n = c.space.factors
    coo = c.matrix.tocoo()
    if coo.nnz == 0:
        return None
    blocks = set(zip((coo.row // n).tolist(), (coo.col // n).tolist()))
    if len(blocks) != 1:
        return None
    l, u = blocks.pop()
    m = np.zeros((n, n), dtype=complex)
    m[coo.row % n, coo.col % n] = coo.data
    return l, u, m


class ShiftedSolver:
    """Direct solver for ``(I - s L) X = B`` on dense density matrices.

    Writes ``L[X] = A X + X A^dag + J[X]`` with ``A = -iH - 1/2 sum r c^dag c``
    and jump feeding ``J``.  The Sylvester part is inverted in the eigenbasis
    of ``A``; ``J`` only reads the diagonal electronic blocks ``X_uu`` of the
    decaying levels, so the coupling is closed by a dense system on those
    blocks alone.  Falls back to sparse LU on the superoperator when a jump is
    not of the product form ``|l><u| (x) M``.
    """

    def __init__(self, liouv: Liouvillian, cache_size: int = 8):
        self.L = liouv
        self.nl, self.n = liouv.space.factors
        self.dim = liouv.dim
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        forms = [_product_form(c) for _, c in liouv.jumps]
        self.structured = all(f is not None for f in forms)
        h = liouv.hamiltonian.toarray()
        cdc = np.zeros((self.dim, self.dim), dtype=complex)
        for r, c in liouv.jumps:
            cdc += r * (c.matrix.conj().T @ c.matrix).toarray()
        self.decay_op = cdc
        self.A = -1j * h - 0.5 * cdc
        self.groups: dict[int, list] = {}
        if self.structured:
            for (r, _), (l, u, m) in zip(liouv.jumps, forms):
                self.groups.setdefault(u, []).append((l, r, m))
            from scipy.linalg import eig, inv

            lam, v = eig(self.A)
            self.lam, self.V, self.Vinv = lam, v, inv(v)
            self.cond = float(np.linalg.cond(v))
            if self.cond > 1e8:
                log.warning("ill-conditioned eigenbasis (cond %.2e); using sparse LU", self.cond)
                self.structured = False
        self.upper = sorted(self.groups)

    # -- Lindblad action -------------------------------------------------
    def _feed(self, blocks: dict[int, np.ndarray]) -> np.ndarray:
        n = self.n
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for u, xb in blocks.items():
            for l, r, m in self.groups[u]:
                sl = slice(l * n, (l + 1) * n)
                out[sl, sl] += r * (m @ xb @ m.conj().T)
        return out

    def _blocks(self, x: np.ndarray) -> dict[int, np.ndarray]:
        n = self.n
        return {u: x[u * n:(u + 1) * n, u * n:(u + 1) * n] for u in self.upper}

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``L[x]``."""
        if not self.structured:
            return (self.L.superoperator() @ x.ravel()).reshape(x.shape)
        return self.A @ x + x @ self.A.conj().T + self._feed(self._blocks(x))

    # -- shifted solves --------------------------------------------------
    def _factor(self, s: float):
        key = float(s)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        if self.structured:
            fac = self._factor_structured(s)
        else:
            m = sparse.identity(self.dim ** 2, dtype=complex, format="csc") - s * self.L.superoperator().tocsc()
            fac = ("lu", splu(m.tocsc()))
        self._cache[key] = fac
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return fac

    def _factor_structured(self, s: float):
        from scipy.linalg import lu_factor

        n, dim = self.n, self.dim
        lam = self.lam
        dm = 1.0 - s * (lam[:, None] + lam.conj()[None, :])
        nb = len(self.upper)
        if nb == 0:
            return ("structured", dm, None)
        k = np.zeros((nb, n, n, nb, n, n), dtype=complex)
        chunk = max(1, int(2e7 // (n * dim * dim)))
        for iu, u in enumerate(self.upper):
            hs = np.array([self.Vinv[:, l * n:(l + 1) * n] @ m for l, _, m in self.groups[u]])
            rates = np.array([r for _, r, _ in self.groups[u]])
            for n0 in range(0, n, chunk):
                n1 = min(n, n0 + chunk)
                t = np.einsum("k,kia,kjb->abij", rates, hs[:, :, n0:n1], hs.conj(), optimize=True)
                t /= dm
                for iv, v in enumerate(self.upper):
                    vv = self.V[v * n:(v + 1) * n, :]
                    blk = np.matmul(np.matmul(vv, t), vv.conj().T)  # (a, b, n, n)
                    k[iv, :, :, iu, n0:n1, :] = blk.transpose(2, 3, 0, 1)
        size = nb * n * n
        mat = np.eye(size, dtype=complex) - s * k.reshape(size, size)
        return ("structured", dm, lu_factor(mat))

    def _sinv(self, y: np.ndarray, dm: np.ndarray) -> np.ndarray:
        z = (self.Vinv @ y @ self.Vinv.conj().T) / dm
        return self.V @ z @ self.V.conj().T

    def solve(self, s: float, b: np.ndarray) -> np.ndarray:
        """Return ``X`` with ``(I - s L) X = b``."""
        fac = self._factor(s)
        if fac[0] == "lu":
            return fac[1].solve(b.ravel()).reshape(b.shape)
        from scipy.linalg import lu_solve

        _, dm, lu = fac
        x0 = self._sinv(b, dm)
        if lu is None:
            return x0
        y0 = np.concatenate([blk.ravel() for blk in self._blocks(x0).values()])
        y = lu_solve(lu, y0)
        nn = self.n * self.n
        yb = {u: y[i * nn:(i + 1) * nn].reshape(self.n, self.n) for i, u in enumerate(self.upper)}
        return self._sinv(b + s * self._feed(yb), dm)

    def jump_rate(self, x: np.ndarray) -> float:
        """Total photon emission rate ``sum_k r_k Tr(c_k^dag c_k x)``."""
        return float(np.real(np.sum(self.decay_op.T * x)))



# -- observables -------------------------------------------------------------

def nbar(rho: DensityState) -> float:
    """Mean motional occupation ``<a^dag a>``."""
    p = rho.fock_populations()
    return float(np.dot(np.arange(p.size), p))


def scattering_rate(liouv: Liouvillian, rho: DensityState) -> float:
    """Photon emission rate: each channel's rate times its upper-level population."""
    if liouv.decay_rates is None:
        return ShiftedSolver(liouv).jump_rate(rho.matrix)
    return float(np.dot(liouv.decay_rates, rho.electronic_populations()))


@dataclass
class CoolingTrajectory:
    times: np.ndarray  # s
    nbar: np.ndarray
    populations: np.ndarray  # (n_times, n_levels)
    scatter_rate: np.ndarray  # photons/s
    final_state: DensityState
    trace_error: np.ndarray  # |Tr rho - 1|
    hermiticity_error: np.ndarray  # before symmetrisation
    min_eigenvalue: np.ndarray
    steps: int = 0
    rejected: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def population_sum_error(self) -> np.ndarray:
        return np.abs(self.populations.sum(axis=1) - 1)

    def trace_drift_per_gamma_t(self, gamma: float) -> float:
        """Largest ``|Tr rho - 1| / (gamma t)`` over the samples after ``t = 0``."""
        t = self.times[1:]
        if t.size == 0:
            return 0.0
        return float(np.max(self.trace_error[1:] / np.maximum(gamma * t, 1.0)))


# -- time evolution ----------------------------------------------------------

_G = 2 - np.sqrt(2)
_D = _G / 2
_W = np.sqrt(2) / 4
_BHAT = ((1 - _W) / 3, (3 * _W + 1) / 3, _D / 3)


def _trbdf2_step(solver, x, f1, h, want_err):
    """One TR-BDF2 step; stage slopes are recovered from the stage equations."""
    dh = _D * h
    y2 = solver.solve(dh, x + dh * f1)
    f2 = (y2 - x) / dh - f1
    y3 = solver.solve(dh, x + _W * h * (f1 + f2))
    f3 = (y3 - x - _W * h * (f1 + f2)) / dh
    err = None
    if want_err:
        err = h * ((_W - _BHAT[0]) * f1 + (_W - _BHAT[1]) * f2 + (_D - _BHAT[2]) * f3)
        err = solver.solve(dh, err)
    return y3, f3, err


def _norm_view(err, error_norm):
    if error_norm == "populations":
        return err.diagonal()
    if error_norm != "full":
        raise ValueError(f"unknown error_norm {error_norm!r}; use 'full' or 'populations'")
    return err


def _record(liouv, rho: np.ndarray, space, herm_raw: float, out: dict):
    st = DensityState(space, rho)
    out["nbar"].append(nbar(st))
    out["pops"].append(st.electronic_populations())
    out["rate"].append(scattering_rate(liouv, st))
    out["trace"].append(abs(st.trace() - 1))
    out["herm"].append(herm_raw)
    out["mineig"].append(st.min_eigenvalue())


def evolve(
    liouv: Liouvillian,
    rho0: DensityState,
    t_final: float,
    sample_dt: float,
    *,
    tol: float = 1e-8,
    method: str = "trbdf2",
    max_halvings: int = 40,
    fixed_step: float | None = None,
    error_norm: str = "full",
    solver: ShiftedSolver | None = None,
) -> CoolingTrajectory:
    """Integrate the master equation from ``rho0`` and sample every ``sample_dt``.

    ``method='trbdf2'`` (default) is an L-stable implicit scheme whose step
    sizes are ``sample_dt / 2**k``; ``k`` adapts so the filtered local error
    estimate stays below ``tol`` (max-norm on the density matrix, or only
    its diagonal with ``error_norm='populations'``).  ``fixed_step``
    switches error control off and settles on the largest ``sample_dt / 2**k``
    not above it; the scheme is second order, so halving it is a
    convergence check.  ``solver`` reuses factorisations across calls.  Explicit
    ``'dop853'`` / ``'rk45'`` go through :func:`scipy.integrate.solve_ivp` and
    are only practical for small or short problems.
    """
    if t_final <= 0:
        raise ValueError(f"t_final must be > 0, got {t_final}")
    if sample_dt <= 0:
        raise ValueError(f"sample_dt must be > 0, got {sample_dt}")
    if rho0.space != liouv.space:
        raise ValueError(f"state space {rho0.space.factors} != Liouvillian space {liouv.space.factors}")
    n_samples = int(round(t_final / sample_dt))
    if abs(n_samples * sample_dt - t_final) > 1e-9 * t_final or n_samples < 1:
        raise ValueError("t_final must be a positive integer multiple of sample_dt")
    solver = solver or ShiftedSolver(liouv)
    rec = {k: [] for k in ("nbar", "pops", "rate", "trace", "herm", "mineig")}
    x = 0.5 * (rho0.matrix + rho0.matrix.conj().T)
    _record(liouv, x, liouv.space, rho0.hermiticity_error(), rec)
    steps = rejected = 0

    if method == "trbdf2":
        # initial level: resolve the fastest coherent time scale
        fast = float(np.max(np.abs(solver.A.diagonal()))) if solver.dim else 1.0
        k = int(np.clip(np.ceil(np.log2(max(sample_dt * fast / 10, 1.0))), 0, max_halvings))
        k_min = 0
        if fixed_step is not None:
            k_min = int(np.clip(np.ceil(np.log2(sample_dt / fixed_step) - 1e-12), 0, max_halvings))
            k = max(k, k_min)
        for _ in range(n_samples):
            pos, span = 0, 2**max_halvings  # position inside the interval in units of the finest step
            f1 = solver.apply(x)
            while pos < span:
                h = sample_dt / 2**k
                y3, f3, err = _trbdf2_step(solver, x, f1, h, fixed_step is None)
                e = 0.0 if err is None else float(np.max(np.abs(_norm_view(err, error_norm)))) / tol
                if e > 1.0:
                    rejected += 1
                    k += 1
                    if k > max_halvings:
                        raise IntegrationError(
                            f"step-size underflow at t = {len(rec['nbar']) * sample_dt:.6e} s: "
                            f"h = {sample_dt / 2**k:.3e} s, error estimate {e * tol:.3e} > tol {tol:.1e}"
                        )
                    continue
                x, f1 = y3, f3
                steps += 1
                pos += 2 ** (max_halvings - k)
                if (fixed_step is not None or e < 0.1) and k > k_min and pos % 2 ** (max_halvings - k + 1) == 0:
                    k -= 1
            herm = float(np.max(np.abs(x - x.conj().T)))
            x = 0.5 * (x + x.conj().T)
            _record(liouv, x, liouv.space, herm, rec)
    elif method in ("dop853", "rk45"):
        shape = x.shape
        fun = lambda t, v: solver.apply(v.reshape(shape)).ravel()  # noqa: E731
        for _ in range(n_samples):
            sol = solve_ivp(fun, (0.0, sample_dt), x.ravel(), method=method.upper(),
                            rtol=1e-10, atol=tol)
            if not sol.success:
                raise IntegrationError(f"{method} failed: {sol.message}")
            steps += sol.t.size - 1
            x = sol.y[:, -1].reshape(shape)
            herm = float(np.max(np.abs(x - x.conj().T)))
            x = 0.5 * (x + x.conj().T)
            _record(liouv, x, liouv.space, herm, rec)
    else:
        raise ValueError(f"unknown method {method!r}; use 'trbdf2', 'dop853' or 'rk45'")

    times = np.arange(n_samples + 1) * sample_dt
    return CoolingTrajectory(
        times=times,
        nbar=np.array(rec["nbar"]),
        populations=np.array(rec["pops"]),
        scatter_rate=np.array(rec["rate"]),
        final_state=DensityState(liouv.space, x),
        trace_error=np.array(rec["trace"]),
        hermiticity_error=np.array(rec["herm"]),
        min_eigenvalue=np.array(rec["mineig"]),
        steps=steps,
        rejected=rejected,
    )


# -- steady state ------------------------------------------------------------

def _normalise(x: np.ndarray) -> np.ndarray:
    x = 0.5 * (x + x.conj().T)
    return x / np.trace(x).real


def steady_state(
    liouv: Liouvillian,
    *,
    shift: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    solver: ShiftedSolver | None = None,
) -> DensityState:
    """Stationary state with ``||L[rho]|| <= tol * ||L||``.

    Small systems use a dense null-space decomposition.  Larger ones use
    shifted inverse iteration ``(I - s L) X_{k+1} = X_k`` from two different
    starting states; if the two limits disagree the null space is degenerate
    and :class:`SteadyStateError` is raised.
    """
    dim = liouv.dim
    space = liouv.space
    lnorm = liouv.norm()
    if dim**2 <= 1024:
        sup = liouv.superoperator().toarray()
        _, sv, vh = np.linalg.svd(sup)
        null = int(np.sum(sv <= 1e-10 * max(lnorm, 1.0)))
        if null != 1:
            raise SteadyStateError(f"stationary state not unique: null space dimension {null}")
        rho = _normalise(vh[-1].conj().reshape(dim, dim))
        return _check_ss(liouv, rho, space, tol, lnorm)

    solver = solver or ShiftedSolver(liouv)
    s = shift if shift is not None else 1e9 / max(lnorm, 1.0)
    starts = [np.eye(dim, dtype=complex) / dim]
    # second start: all weight on the first electronic level, weighted Fock ladder
    nl, n = space.factors
    d = np.zeros(dim)
    d[:n] = np.linspace(2.0, 1.0, n)
    starts.append(np.diag(d / d.sum()).astype(complex))
    limits = []
    for x in starts:
        for it in range(max_iter):
            y = _normalise(solver.solve(s, x))
            delta = float(np.max(np.abs(y - x)))
            x = y
            if delta < 1e-13:
                break
        else:
            log.warning("inverse iteration stopped after %d iterations (last change %.2e)", max_iter, delta)
        limits.append(x)
    gap = float(np.max(np.abs(limits[0] - limits[1])))
    if gap > 1e-6:
        raise SteadyStateError(
            f"stationary state not unique: two starting states converge to states "
            f"differing by {gap:.3e} (max entry)"
        )
    return _check_ss(liouv, limits[0], space, tol, lnorm)


def _check_ss(liouv, rho, space, tol, lnorm) -> DensityState:
    res = float(np.max(np.abs(liouv.superoperator() @ rho.ravel())))
    if res > tol * lnorm:
        raise SteadyStateError(f"steady-state residual {res:.3e} exceeds {tol:.0e} * ||L|| = {tol * lnorm:.3e}")
    return DensityState(space, rho)
