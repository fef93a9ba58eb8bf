"""Independent reference implementations used only by the test suite.

Each oracle takes a deliberately different algorithmic route than the library
code it checks: recursive Horner evaluation, simplicial-elimination chordality
testing, exhaustive parity-vector enumeration, and a projection-splitting SDP
solver.
"""

from __future__ import annotations

import math

import numpy as np


# -- polynomial evaluation ---------------------------------------------------

def horner_eval(terms: dict[tuple[int, ...], float], point: tuple[float, ...]) -> float:
    """Evaluate a term map at a point by recursive Horner factorization."""
    if not terms:
        return 0.0
    n = len(next(iter(terms)))
    if n == 0:
        return math.fsum(terms.values())
    groups: dict[int, dict[tuple[int, ...], float]] = {}
    for alpha, c in terms.items():
        groups.setdefault(alpha[0], {})[alpha[1:]] = groups.get(alpha[0], {}).get(alpha[1:], 0.0) + c
    rest = point[1:]
    degrees = sorted(groups)
    value = 0.0
    prev_deg = None
    for deg in reversed(degrees):
        if prev_deg is not None:
            value *= point[0] ** (prev_deg - deg)
        value += horner_eval(groups[deg], rest)
        prev_deg = deg
    value *= point[0] ** degrees[0]
    return value


# -- chordality --------------------------------------------------------------

def is_chordal(n: int, edges: set[tuple[int, int]]) -> bool:
    """Chordality by repeated simplicial elimination (exact for any graph)."""
    adj: dict[int, set[int]] = {v: set() for v in range(n)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    alive = set(range(n))
    while alive:
        simplicial = None
        for v in alive:
            nb = adj[v]
            if all(b in adj[a] for a in nb for b in nb if a < b):
                simplicial = v
                break
        if simplicial is None:
            return False
        for u in adj[simplicial]:
            adj[u].discard(simplicial)
        del adj[simplicial]
        alive.discard(simplicial)
    return True


# -- sign symmetries -----------------------------------------------------------

def brute_parity_invariants(dim: int, exponents: set[tuple[int, ...]]) -> set[tuple[int, ...]]:
    """All r in {0,1}^dim with r . alpha even for every alpha, by enumeration."""
    out = set()
    for code in range(2 ** dim):
        r = tuple((code >> i) & 1 for i in range(dim))
        if all(sum(ri * ai for ri, ai in zip(r, alpha)) % 2 == 0 for alpha in exponents):
            out.add(r)
    return out


def brute_system_symmetries(
    dim: int,
    field_supports: list[set[tuple[int, ...]]],
    constraint_supports: list[set[tuple[int, ...]]],
) -> set[tuple[int, ...]]:
    """Sign vectors leaving the vector field equivariant and constraints invariant."""
    out = set()
    for code in range(2 ** dim):
        r = tuple((code >> i) & 1 for i in range(dim))
        ok = True
        for i, supp in enumerate(field_supports):
            for alpha in supp:
                if (sum(ri * ai for ri, ai in zip(r, alpha)) + r[i]) % 2 != 0:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            for supp in constraint_supports:
                for alpha in supp:
                    if sum(ri * ai for ri, ai in zip(r, alpha)) % 2 != 0:
                        ok = False
                        break
                if not ok:
                    break
        if ok:
            out.add(r)
    return out


# -- small dense SDP solver ----------------------------------------------------

def admm_sdp(
    C: np.ndarray,
    A_list: list[np.ndarray],
    b: np.ndarray,
    rho: float = 1.0,
    iters: int = 20000,
    tol: float = 1e-9,
) -> tuple[float, np.ndarray]:
    """Solve min <C,X> s.t. <A_i,X> = b_i, X psd, by alternating projections.

    Splitting: X-update projects onto the affine constraint set, Z-update
    projects onto the psd cone, with a scaled dual variable U.  Returns the
    objective value and the primal matrix.  Only meant for small well
    conditioned instances generated with strictly feasible pairs.
    """
    n = C.shape[0]
    m = len(A_list)
    A = np.stack([Ai.reshape(-1) for Ai in A_list])  # m x n^2
    gram = A @ A.T
    gram_inv = np.linalg.inv(gram)

    def project_affine(Y: np.ndarray) -> np.ndarray:
        resid = A @ Y.reshape(-1) - b
        corr = (A.T @ (gram_inv @ resid)).reshape(n, n)
        return Y - corr

    def project_psd(Y: np.ndarray) -> np.ndarray:
        Ys = 0.5 * (Y + Y.T)
        w, V = np.linalg.eigh(Ys)
        w = np.clip(w, 0.0, None)
        return (V * w) @ V.T

    Z = np.zeros((n, n))
    U = np.zeros((n, n))
    X = Z
    for _ in range(iters):
        X = project_affine(Z - U - C / rho)
        Znew = project_psd(X + U)
        U = U + X - Znew
        shift = np.linalg.norm(Znew - Z)
        Z = Znew
        if shift < tol and np.linalg.norm(X - Z) < tol:
            break
    Xfinal = project_psd(project_affine(Z))
    return float(np.sum(C * Xfinal)), Xfinal
