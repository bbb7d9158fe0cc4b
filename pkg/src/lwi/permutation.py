"""Exact steady states of N identical d-level emitters in a lossy cavity.

Every density matrix that is invariant under relabelling the emitters is a
combination of symmetrised operators

    S(n) = sum over distinct assignments of  |k_1><b_1| x ... x |k_N><b_N|

where the multiset of single-atom "superstates" (k_i, b_i) has counts
``n = (n_0, ..., n_{d^2-1})``.  We store one coefficient per class,

    rho = sum_{n,p,q} c(n, p, q) S(n) x |p><q|,

so the trace reads ``sum M(n) c(n, p, p)`` over configurations supported on
diagonal superstates, with ``M(n) = N! / prod(n_i!)``.

A sum over atoms of a single-atom superoperator with matrix ``l`` acts on
the coefficients as ``dc(m) += m_i l_ij c(m - e_i + e_j)``: the factor counts
which of the ``m_i`` atoms now in superstate ``i`` was the one moved.

The Liouvillian commutes with the excitation number ``a^dag a + sum x(k)``
(``x = 1`` on excited levels), so the steady state lives in the zero-charge
sector ``p - q = -sum n_s (x(k_s) - x(b_s))``.  Assembly is done directly in
that sector unless ``sector=False``.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .numerics import BlockPreconditioner, SparseOperator, iterative_nullvector, sparse_nullvector
from .params import ModelParams, Observables

log = logging.getLogger(__name__)

ORDERING_VERSION = 1
DEFAULT_MEMORY_CAP = 8 * 1024 ** 3
TRUNCATION_LIMIT = 1e-3
_DUMP_MAGIC = b"LWISYM\x00\x01"


class DimensionOverflow(MemoryError):
    def __init__(self, dimension: int, estimate_bytes: int, cap: int):
        super().__init__(
            f"Liouvillian of dimension {dimension} needs ~{estimate_bytes / 1e9:.2f} GB "
            f"(cap {cap / 1e9:.2f} GB)")
        self.dimension = dimension
        self.estimate_bytes = estimate_bytes


class TooLarge(ValueError):
    pass


class TruncationWarning(UserWarning):
    """The top Fock level carries more than the truncation limit."""


# ---------------------------------------------------------------------------
# combinatorics

def n_configs(n_atoms: int, n_parts: int) -> int:
    return math.comb(n_atoms + n_parts - 1, n_parts - 1)


def basis_dimension(N: int, levels: int = 3) -> tuple[int, int]:
    """(symmetric, unreduced) Liouville-space dimension of the emitters alone."""
    if N < 1:
        raise ValueError("N must be >= 1")
    m = levels * levels
    return n_configs(N, m), m ** N


def enumerate_configs(n_atoms: int, n_parts: int) -> np.ndarray:
    """All count vectors of length ``n_parts`` summing to ``n_atoms``, lexicographic."""
    rows = []
    for bars in itertools.combinations(range(n_atoms + n_parts - 1), n_parts - 1):
        edges = (-1,) + bars + (n_atoms + n_parts - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n_parts)])
    out = np.array(rows, dtype=np.int64).reshape(-1, n_parts)
    order = np.lexsort(out.T[::-1])
    return out[order]


class ConfigRanker:
    """Lexicographic rank of count vectors via a prefix table.

    ``table[k, r, v]`` is the number of valid configurations whose first
    ``k`` entries are fixed, with ``r`` atoms left, and entry ``k`` smaller
    than ``v``.
    """

    def __init__(self, n_atoms: int, n_parts: int):
        self.n_atoms, self.n_parts = n_atoms, n_parts
        comp = np.zeros((n_parts + 1, n_atoms + 1), dtype=np.int64)
        for parts in range(1, n_parts + 1):
            for total in range(n_atoms + 1):
                comp[parts, total] = math.comb(total + parts - 1, parts - 1)
        table = np.zeros((n_parts, n_atoms + 1, n_atoms + 2), dtype=np.int64)
        for k in range(n_parts):
            rest = n_parts - k - 1
            for r in range(n_atoms + 1):
                acc = 0
                for v in range(r + 1):
                    table[k, r, v] = acc
                    acc += comp[rest, r - v] if rest > 0 else int(v == r)
                table[k, r, r + 1] = acc
        self.table = table

    def rank(self, configs) -> np.ndarray:
        c = np.atleast_2d(np.asarray(configs, dtype=np.int64))
        remaining = np.full(c.shape[0], self.n_atoms, dtype=np.int64)
        out = np.zeros(c.shape[0], dtype=np.int64)
        for k in range(self.n_parts):
            out += self.table[k, remaining, c[:, k]]
            remaining -= c[:, k]
        return out


# ---------------------------------------------------------------------------
# single-atom model description

@dataclass(frozen=True)
class AtomModel:
    """Single-emitter ingredients of the master equation.

    ``hamiltonian`` and ``jumps`` act on one atom; ``raising`` is the operator
    multiplying ``a`` in the light-matter coupling; ``excitation`` is the
    U(1) charge of each level.
    """

    levels: int
    hamiltonian: np.ndarray
    jumps: tuple[tuple[float, np.ndarray], ...]
    raising: np.ndarray
    excitation: np.ndarray


def ket(level: int, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[level] = 1.0
    return v


def proj(k: int, b: int, d: int) -> np.ndarray:
    """|k><b| on a d-level atom."""
    return np.outer(ket(k, d), ket(b, d)).astype(complex)


def three_level_model(params: ModelParams) -> AtomModel:
    """Lambda atom with levels ordered (e, 1, 2)."""
    p = params
    d = 3
    e, l1, l2 = 0, 1, 2
    w = p.Omega * np.exp(1j * p.phi)
    H = (p.omega_e * proj(e, e, d) + p.omega_1 * proj(l1, l1, d) + p.omega_2 * proj(l2, l2, d)
         + w * proj(l2, l1, d) + np.conj(w) * proj(l1, l2, d))
    jumps = ((p.gamma_up, proj(e, l1, d)), (p.gamma_up, proj(e, l2, d)),
             (p.gamma_down, proj(l1, e, d)), (p.gamma_down, proj(l2, e, d)))
    return AtomModel(d, H, jumps, proj(e, l1, d) + proj(e, l2, d), np.array([1, 0, 0]))


def _spre(x: np.ndarray) -> np.ndarray:
    return np.kron(x, np.eye(x.shape[0]))


def _spost(x: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(x.shape[0]), x.T)


def atom_liouvillian(model: AtomModel) -> np.ndarray:
    """d^2 x d^2 generator of the uncoupled atom on row-major vec(rho)."""
    H = model.hamiltonian
    L = -1j * (_spre(H) - _spost(H))
    for rate, c in model.jumps:
        if rate == 0:
            continue
        cdc = c.conj().T @ c
        L = L + rate * (np.kron(c, c.conj()) - 0.5 * _spre(cdc) - 0.5 * _spost(cdc))
    return L


# ---------------------------------------------------------------------------
# basis

@dataclass
class SymmetricBasis:
    """Index layout of (configuration, p, q) coefficients."""

    n_emitters: int
    levels: int
    fock_dim: int
    sector: bool
    configs: np.ndarray = field(repr=False)
    ranker: ConfigRanker = field(repr=False)
    charge: np.ndarray = field(repr=False)       # atomic U(1) charge of each config
    offsets: np.ndarray = field(repr=False)      # first flat index of each config (-1 if none)
    entry_config: np.ndarray = field(repr=False)
    entry_p: np.ndarray = field(repr=False)
    entry_q: np.ndarray = field(repr=False)

    @property
    def n_superstates(self) -> int:
        return self.levels ** 2

    @property
    def dimension(self) -> int:
        return int(self.entry_config.size)

    @property
    def superstates(self) -> list[tuple[int, int]]:
        d = self.levels
        return [(k, b) for k in range(d) for b in range(d)]

    def index(self, rank, p, q) -> np.ndarray:
        """Flat index of (config rank, p, q), or -1 where it is outside the layout."""
        rank = np.asarray(rank)
        p = np.asarray(p)
        q = np.asarray(q)
        P = self.fock_dim
        ok = (p >= 0) & (p < P) & (q >= 0) & (q < P)
        r = np.where(ok, rank, 0)
        if self.sector:
            delta = -self.charge[r]
            ok &= (p - q) == delta
            idx = self.offsets[r] + p - np.maximum(delta, 0)
        else:
            idx = r * P * P + p * P + q
        return np.where(ok, idx, -1)

    def multiplicity(self) -> np.ndarray:
        """M(n) = N!/prod(n_i!) for every configuration."""
        logf = np.array([math.lgamma(k + 1) for k in range(self.n_emitters + 1)])
        return np.exp(logf[self.n_emitters] - logf[self.configs].sum(axis=1))

    def diagonal_configs(self) -> np.ndarray:
        d = self.levels
        diag = [k * d + k for k in range(d)]
        off = [s for s in range(d * d) if s not in diag]
        return np.nonzero(self.configs[:, off].sum(axis=1) == 0)[0]

    def conjugate_map(self) -> np.ndarray:
        """Flat index of the Hermitian partner (n-bar, q, p) of every entry."""
        d = self.levels
        swap = [b * d + k for k in range(d) for b in range(d)]
        bar = self.ranker.rank(self.configs[:, swap])
        return self.index(bar[self.entry_config], self.entry_q, self.entry_p)


def build_basis(n_emitters: int, levels: int, fock_dim: int, excitation, sector: bool = True) -> SymmetricBasis:
    d = levels
    m = d * d
    configs = enumerate_configs(n_emitters, m)
    ranker = ConfigRanker(n_emitters, m)
    x = np.asarray(excitation)
    sup_charge = np.array([x[k] - x[b] for k in range(d) for b in range(d)])
    charge = configs @ sup_charge
    P = fock_dim
    if sector:
        counts = np.where(np.abs(charge) < P, P - np.abs(charge), 0)
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        offsets = np.where(counts > 0, offsets, -1)
        ec = np.repeat(np.arange(len(configs)), counts)
        start = np.repeat(offsets, counts)
        within = np.arange(ec.size) - start
        delta = -charge[ec]
        ep = within + np.maximum(delta, 0)
        eq = ep - delta
    else:
        offsets = np.arange(len(configs)) * P * P
        ec = np.repeat(np.arange(len(configs)), P * P)
        pq = np.tile(np.arange(P * P), len(configs))
        ep, eq = pq // P, pq % P
    return SymmetricBasis(n_emitters, d, P, sector, configs, ranker, charge, offsets, ec, ep, eq)


# ---------------------------------------------------------------------------
# assembly

_CAVITY_KINDS = ("id", "pre_a", "pre_ad", "post_a", "post_ad")


def _cavity_shift(kind: str, p: np.ndarray, q: np.ndarray):
    """Scatter form of a cavity superoperator: (target p, target q, amplitude)."""
    if kind == "id":
        return p, q, np.ones(p.shape)
    if kind == "pre_a":      # a rho
        return p - 1, q, np.sqrt(p)
    if kind == "pre_ad":     # a^dag rho
        return p + 1, q, np.sqrt(p + 1.0)
    if kind == "post_a":     # rho a
        return p, q + 1, np.sqrt(q + 1.0)
    if kind == "post_ad":    # rho a^dag
        return p, q - 1, np.sqrt(q)
    raise ValueError(kind)


def liouvillian_terms(model: AtomModel, params: ModelParams) -> list[tuple[str, complex, np.ndarray]]:
    """(cavity kind, prefactor, single-atom superoperator) products making up L."""
    G = params.g / math.sqrt(params.n_emitters)
    up = model.raising
    down = up.conj().T
    terms = [("id", 1.0, atom_liouvillian(model))]
    if G != 0:
        terms += [
            ("pre_a", -1j * G, _spre(up)),
            ("pre_ad", -1j * G, _spre(down)),
            ("post_a", 1j * G, _spost(up)),
            ("post_ad", 1j * G, _spost(down)),
        ]
    return terms


def _estimate_nnz(basis: SymmetricBasis, terms) -> int:
    per_entry = sum(int(np.count_nonzero(np.abs(l) > 0)) for _, _, l in terms) + 2
    return basis.dimension * per_entry


def assemble_liouvillian(params: ModelParams, model: Optional[AtomModel] = None, *,
                         sector: bool = True, memory_cap: int = DEFAULT_MEMORY_CAP,
                         basis: Optional[SymmetricBasis] = None):
    """Sparse generator on the symmetric basis.  Returns ``(operator, basis)``."""
    if model is None:
        model = three_level_model(params)
    if basis is None:
        basis = build_basis(params.n_emitters, model.levels, params.fock_dim, model.excitation, sector)
    terms = liouvillian_terms(model, params)
    nnz = _estimate_nnz(basis, terms)
    # triplets (2 int64 + complex128) plus CSC copy and LU headroom
    estimate = nnz * 32 * 4
    if estimate > memory_cap:
        raise DimensionOverflow(basis.dimension, estimate, memory_cap)

    op = SparseOperator(basis.dimension)
    src = np.arange(basis.dimension)
    cfg = basis.configs[basis.entry_config]
    ep, eq = basis.entry_p, basis.entry_q
    for kind, pref, ell in terms:
        tp, tq, amp = _cavity_shift(kind, ep, eq)
        cav_ok = (amp != 0) & (tp >= 0) & (tp < basis.fock_dim) & (tq >= 0) & (tq < basis.fock_dim)
        for i, j in zip(*np.nonzero(np.abs(ell) > 0)):
            if i == j:
                ok = cav_ok & (cfg[:, j] > 0)
                target_rank = basis.entry_config
                weight = cfg[:, i]
            else:
                ok = cav_ok & (cfg[:, j] > 0)
                moved = cfg.copy()
                moved[:, j] -= 1
                moved[:, i] += 1
                target_rank = np.zeros(src.size, dtype=np.int64)
                if ok.any():
                    target_rank[ok] = basis.ranker.rank(moved[ok])
                weight = moved[:, i]
            tgt = basis.index(target_rank, tp, tq)
            ok &= tgt >= 0
            op.add(tgt[ok], src[ok], pref * ell[i, j] * weight[ok] * amp[ok])

    # cavity alone: frequency, decay and jump
    nu, kappa = params.nu, params.kappa
    op.add(src, src, -1j * nu * (ep - eq) - 0.5 * kappa * (ep + eq))
    if kappa:
        tgt = basis.index(basis.entry_config, ep - 1, eq - 1)
        ok = tgt >= 0
        op.add(tgt[ok], src[ok], kappa * np.sqrt(ep[ok] * eq[ok]))
    return op.finalize(), basis


# ---------------------------------------------------------------------------
# steady state and observables

@dataclass(frozen=True)
class PhotonStats:
    g2: float
    fano: float
    top_fock_occupation: float
    mean: float = math.nan

    @property
    def truncated(self) -> bool:
        return self.top_fock_occupation > TRUNCATION_LIMIT


def photon_stats(distribution) -> PhotonStats:
    """g2(0), Fano factor and top-level occupation of a photon-number distribution."""
    pn = np.asarray(distribution, dtype=float)
    n = np.arange(pn.size)
    mean = float(pn @ n)
    second = float(pn @ (n * n))
    fact2 = float(pn @ (n * (n - 1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = fact2 / mean ** 2 if mean > 0 else math.nan
        fano = (second - mean ** 2) / mean if mean > 0 else math.nan
    return PhotonStats(float(g2), float(fano), float(pn[-1]), mean)


@dataclass
class SymmetricState:
    basis: SymmetricBasis
    coefficients: np.ndarray

    def trace_weights(self) -> np.ndarray:
        return trace_weights(self.basis)

    def trace(self) -> complex:
        return complex(self.trace_weights() @ self.coefficients)

    def photon_distribution(self) -> np.ndarray:
        b = self.basis
        w = trace_weights(b)
        pn = np.zeros(b.fock_dim)
        np.add.at(pn, b.entry_p, (w * self.coefficients).real)
        return pn

    def reduced_atom(self) -> np.ndarray:
        """Single-atom reduced density matrix (d x d)."""
        b = self.basis
        d, N = b.levels, b.n_emitters
        logf = np.array([math.lgamma(k + 1) for k in range(N + 1)])
        diag = [k * d + k for k in range(d)]
        rho1 = np.zeros((d, d), dtype=complex)
        on_diag = b.entry_p == b.entry_q
        for s, (k, bb) in enumerate(b.superstates):
            rest = b.configs.copy()
            rest[:, s] -= 1
            valid = rest[:, s] >= 0
            off = [t for t in range(d * d) if t not in diag]
            valid &= rest[:, off].sum(axis=1) == 0
            mult = np.where(valid, np.exp(logf[N - 1] - logf[np.maximum(rest, 0)].sum(axis=1)), 0.0)
            w = mult[b.entry_config] * on_diag
            rho1[k, bb] = w @ self.coefficients
        return rho1

    def field_amplitude(self) -> complex:
        """<a> (zero by construction inside the charge-zero sector)."""
        b = self.basis
        mult = b.multiplicity()
        is_diag = np.zeros(len(b.configs), dtype=bool)
        is_diag[b.diagonal_configs()] = True
        # Tr(a rho) = sum_p sqrt(p+1) <p+1|rho|p>
        sel = is_diag[b.entry_config] & (b.entry_p == b.entry_q + 1)
        w = np.where(sel, mult[b.entry_config] * np.sqrt(b.entry_p.astype(float)), 0.0)
        return complex(w @ self.coefficients)

    def dense(self) -> np.ndarray:
        return reconstruct_dense(self)


def trace_weights(basis: SymmetricBasis) -> np.ndarray:
    mult = basis.multiplicity()
    is_diag = np.zeros(len(basis.configs), dtype=bool)
    is_diag[basis.diagonal_configs()] = True
    return np.where(is_diag[basis.entry_config] & (basis.entry_p == basis.entry_q),
                    mult[basis.entry_config], 0.0)


@dataclass
class ExactResult:
    state: SymmetricState
    observables: Observables
    photon_stats: PhotonStats
    reduced_atom: np.ndarray
    residual: float
    preconditioner: Optional[BlockPreconditioner] = field(default=None, repr=False)

    @property
    def truncated(self) -> bool:
        return self.photon_stats.truncated


def _inversion(rho1: np.ndarray, excitation) -> float:
    x = np.asarray(excitation, dtype=bool)
    pops = np.real(np.diag(rho1))
    return float(pops[x].sum() - pops[~x].sum())


def excitation_labels(basis: SymmetricBasis, excitation) -> np.ndarray:
    """Photons in the ket plus atoms whose ket is excited.

    Incoherent jumps change this label by one and every other term keeps
    it, so ordering unknowns by it makes the generator block tridiagonal.
    """
    d = basis.levels
    x = np.asarray(excitation)
    ket_exc = np.array([x[k] for k in range(d) for _ in range(d)])
    return basis.entry_p + (basis.configs @ ket_exc)[basis.entry_config]


def solve_steady(params: ModelParams, model: AtomModel, *, sector: bool = True,
                 memory_cap: int = DEFAULT_MEMORY_CAP, direct_limit: int = 20000,
                 preconditioner: Optional[BlockPreconditioner] = None) -> ExactResult:
    """Steady state by a null-vector solve of the symmetric-basis generator.

    Up to ``direct_limit`` unknowns a sparse LU is used.  Larger systems use
    GMRES with a block Gauss-Seidel preconditioner over
    :func:`excitation_labels`; passing the ``preconditioner`` of a previous
    result at nearby parameters skips its (dominant) construction cost.
    """
    op, basis = assemble_liouvillian(params, model, sector=sector, memory_cap=memory_cap)
    w = trace_weights(basis)
    pre = None
    if basis.dimension > direct_limit or preconditioner is not None:
        v, pre = iterative_nullvector(op, w, excitation_labels(basis, model.excitation),
                                      preconditioner=preconditioner)
    else:
        v = sparse_nullvector(op, w)
    state = SymmetricState(basis, v)
    residual = float(np.linalg.norm(op.matrix @ v) / np.linalg.norm(v))
    pn = state.photon_distribution()
    stats = photon_stats(pn)
    rho1 = state.reduced_atom()
    obs = Observables(inversion=_inversion(rho1, model.excitation),
                      photon_density=stats.mean / params.n_emitters,
                      g2=stats.g2, fano=stats.fano)
    if stats.truncated:
        warnings.warn(f"top Fock level holds {stats.top_fock_occupation:.2e} of the population "
                      f"(N={params.n_emitters}, P={params.fock_dim})", TruncationWarning, stacklevel=2)
    return ExactResult(state, obs, stats, rho1, residual, pre)


def steady_state(params: ModelParams, *, sector: bool = True,
                 memory_cap: int = DEFAULT_MEMORY_CAP,
                 preconditioner: Optional[BlockPreconditioner] = None) -> ExactResult:
    """Exact steady state of the three-level model."""
    return solve_steady(params, three_level_model(params), sector=sector, memory_cap=memory_cap,
                        preconditioner=preconditioner)


# ---------------------------------------------------------------------------
# dense reconstruction and dumps

def reconstruct_dense(state: SymmetricState, max_atoms: int = 3) -> np.ndarray:
    """Full density matrix on (atom_1 x ... x atom_N x cavity), atoms first."""
    b = state.basis
    d, N, P = b.levels, b.n_emitters, b.fock_dim
    if N > max_atoms:
        raise TooLarge(f"dense reconstruction limited to N <= {max_atoms}")
    dim = d ** N * P
    if dim * dim * 16 > 2 * 1024 ** 3:
        raise TooLarge("dense matrix would exceed 2 GB")
    rho = np.zeros((dim, dim), dtype=complex)
    m = d * d
    for assignment in itertools.product(range(m), repeat=N):
        counts = np.bincount(assignment, minlength=m)
        rank = b.ranker.rank(counts)[0]
        kets = [s // d for s in assignment]
        bras = [s % d for s in assignment]
        row_atoms = 0
        col_atoms = 0
        for kk, bb in zip(kets, bras):
            row_atoms = row_atoms * d + kk
            col_atoms = col_atoms * d + bb
        sel = b.entry_config == rank
        for idx in np.nonzero(sel)[0]:
            p, q = b.entry_p[idx], b.entry_q[idx]
            rho[row_atoms * P + p, col_atoms * P + q] = state.coefficients[idx]
    return rho


def dump_state(state: SymmetricState, path) -> None:
    """Write coefficients with a JSON header describing the layout."""
    b = state.basis
    header = json.dumps({
        "n_emitters": b.n_emitters, "levels": b.levels, "fock_dim": b.fock_dim,
        "sector": b.sector, "ordering_version": ORDERING_VERSION,
        "dimension": b.dimension, "dtype": "complex128", "byteorder": "little",
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(np.ascontiguousarray(state.coefficients, dtype="<c16").tobytes())


def load_state(path, excitation) -> SymmetricState:
    raw = Path(path).read_bytes()
    if not raw.startswith(_DUMP_MAGIC):
        raise ValueError("not a symmetric-state dump")
    pos = len(_DUMP_MAGIC)
    n = int.from_bytes(raw[pos:pos + 4], "little")
    header = json.loads(raw[pos + 4:pos + 4 + n])
    if header["ordering_version"] != ORDERING_VERSION:
        raise ValueError(f"unsupported ordering version {header['ordering_version']}")
    coeffs = np.frombuffer(raw[pos + 4 + n:], dtype="<c16").copy()
    basis = build_basis(header["n_emitters"], header["levels"], header["fock_dim"],
                        excitation, header["sector"])
    if coeffs.size != basis.dimension:
        raise ValueError("coefficient count does not match header")
    return SymmetricState(basis, coeffs)


__all__ = [
    "DimensionOverflow", "TooLarge", "TruncationWarning", "AtomModel", "SymmetricBasis",
    "SymmetricState", "PhotonStats", "ExactResult", "basis_dimension", "enumerate_configs",
    "ConfigRanker", "three_level_model", "atom_liouvillian", "build_basis", "assemble_liouvillian",
    "photon_stats", "trace_weights", "solve_steady", "steady_state", "reconstruct_dense",
    "dump_state", "load_state", "excitation_labels", "TRUNCATION_LIMIT",
]
