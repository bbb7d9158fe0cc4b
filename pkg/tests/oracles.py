"""Brute-force references built directly from the master equation.

Everything here works on the full tensor-product space with dense matrices,
so it is only usable for tiny systems.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg


def destroy(P):
    return np.diag(np.sqrt(np.arange(1, P)), 1).astype(complex)


def embed(op, site, dims):
    mats = [np.eye(d, dtype=complex) for d in dims]
    mats[site] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def ketbra(k, b, d):
    m = np.zeros((d, d), dtype=complex)
    m[k, b] = 1.0
    return m


def three_level_ops(p):
    """(H_atom, [(rate, L)], sigma_plus) with level order (e, 1, 2)."""
    e, l1, l2 = 0, 1, 2
    H = (p.omega_e * ketbra(e, e, 3) + p.omega_1 * ketbra(l1, l1, 3) + p.omega_2 * ketbra(l2, l2, 3)
         + p.Omega * np.exp(1j * p.phi) * ketbra(l2, l1, 3)
         + p.Omega * np.exp(-1j * p.phi) * ketbra(l1, l2, 3))
    jumps = [(p.gamma_up, ketbra(e, l1, 3)), (p.gamma_up, ketbra(e, l2, 3)),
             (p.gamma_down, ketbra(l1, e, 3)), (p.gamma_down, ketbra(l2, e, 3))]
    return H, jumps, ketbra(e, l1, 3) + ketbra(e, l2, 3)


def two_level_ops(p):
    H = p.omega_e * ketbra(0, 0, 2)
    jumps = [(p.gamma_up, ketbra(0, 1, 2)), (p.gamma_down, ketbra(1, 0, 2))]
    return H, jumps, ketbra(0, 1, 2)


def dense_system(p, levels=3):
    """Hamiltonian, collapse list and handy operators on atoms x cavity."""
    N, P = p.n_emitters, p.fock_dim
    H1, jumps1, sp1 = (three_level_ops if levels == 3 else two_level_ops)(p)
    dims = [levels] * N + [P]
    a = embed(destroy(P), N, dims)
    H = p.nu * a.conj().T @ a
    c_ops = [np.sqrt(p.kappa) * a]
    G = p.g / np.sqrt(N)
    for i in range(N):
        s = embed(sp1, i, dims)
        H = H + embed(H1, i, dims) + G * (a @ s + a.conj().T @ s.conj().T)
        for rate, L in jumps1:
            c_ops.append(np.sqrt(rate) * embed(L, i, dims))
    return H, c_ops, a, dims


def liouvillian(H, c_ops):
    """Row-major vec convention: vec(A X B) = kron(A, B.T) vec(X)."""
    n = H.shape[0]
    I = np.eye(n)
    L = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for c in c_ops:
        cdc = c.conj().T @ c
        L += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, I) - 0.5 * np.kron(I, cdc.T)
    return L


def steady_density(H, c_ops):
    L = liouvillian(H, c_ops)
    n = H.shape[0]
    w, v = scipy.linalg.eig(L)
    k = np.argmin(np.abs(w))
    rho = v[:, k].reshape(n, n)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T), L


def dense_observables(p, levels=3):
    H, c_ops, a, dims = dense_system(p, levels)
    rho, _ = steady_density(H, c_ops)
    N = p.n_emitters
    n_op = a.conj().T @ a
    n = np.trace(rho @ n_op).real
    n2 = np.trace(rho @ n_op @ n_op).real
    ff = np.trace(rho @ a.conj().T @ a.conj().T @ a @ a).real
    exc = embed(ketbra(0, 0, levels), 0, dims)
    ree = np.trace(rho @ exc).real
    inversion = 2 * ree - 1
    return {
        "rho": rho, "inversion": inversion, "photon_density": n / N,
        "g2": ff / n ** 2, "fano": (n2 - n ** 2) / n, "a": np.trace(rho @ a),
        "top": np.real(np.diag(rho).reshape(-1, p.fock_dim).sum(axis=0))[-1],
    }


def random_mean_field_state(rng):
    pops = rng.dirichlet(np.ones(3))
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    return np.array([pops[0], pops[1], pops[2], 0.3 * z[0], 0.3 * z[1], 0.3 * z[2], z[3]])


def random_symmetric_density(levels, N, P, n_max, rng):
    """Random permutation-symmetric Hermitian unit-trace matrix on atoms x cavity.

    The cavity part is confined to Fock states <= n_max so that products of up
    to P - 1 - n_max ladder operators see no truncation edge.
    """
    import itertools
    dA = levels ** N
    small = dA * (n_max + 1)
    z = rng.normal(size=(small, small)) + 1j * rng.normal(size=(small, small))
    rho_s = z @ z.conj().T
    rho = np.zeros((dA * P, dA * P), dtype=complex)
    idx = (np.arange(dA)[:, None] * P + np.arange(n_max + 1)[None, :]).ravel()
    rho[np.ix_(idx, idx)] = rho_s
    # average over atom permutations
    shape = [levels] * N + [P]
    out = np.zeros_like(rho)
    t = rho.reshape(shape + shape)
    for perm in itertools.permutations(range(N)):
        axes = list(perm) + [N] + [N + 1 + k for k in perm] + [2 * N + 1]
        out += t.transpose(axes).reshape(rho.shape)
    out /= np.trace(out)
    return out


def apply_lindblad(H, c_ops, rho):
    out = -1j * (H @ rho - rho @ H)
    for c in c_ops:
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out
