"""Orthogonal martingale basis and martingale representation on a tree.

On each atom of level ``k`` with ``m`` children the zero-mean functions of the
children form an ``(m - 1)``-dimensional space.  A conditional Gram-Schmidt
pass over the seeds ``1_{c_j} - 1_{c_{j+1}}`` (centred) gives orthogonal
increment vectors; placing the ``i``-th vector of every atom side by side yields
the global martingales ``M^i``.  Any martingale is then ``M_0 + sum_i Z^i . M^i``
with predictable ``Z``.

Arrays
------
``increments``  shape ``(N, d, n)``: row ``k`` holds ``M^i_{k+1} - M^i_k``.
``brackets``    shape ``(N, d, n)``: ``<M^i>_{k+1} - <M^i>_k`` (F_k-measurable).
``densities``   ``brackets / dt`` (bracket mass spread uniformly over the step).
Coefficients ``Z`` share the ``(N, d, n)`` layout; row ``k`` is F_k-measurable.
"""

from __future__ import annotations

import numpy as np

from .filtration import cond_expect
from .processes import increments as _increments


class NotMartingale(ValueError):
    pass


class MartingaleBasis:
    def __init__(self, space, increments, brackets, dims):
        self.space = space
        self.increments = increments
        self.brackets = brackets
        self.densities = brackets / space.dt[:, None, None]
        self.dims = dims  # dims[k][a] = children(a) - 1

    @property
    def d(self):
        return self.increments.shape[1]

    def martingales(self):
        """M^i as an array of shape (d, N + 1, n) with M^i_0 = 0."""
        N, d, n = self.increments.shape
        out = np.zeros((d, N + 1, n))
        out[:, 1:, :] = np.cumsum(self.increments, axis=0).transpose(1, 0, 2)
        return out

    def atom_vectors(self, k, atom):
        """(children probs, vectors of shape (dim, children))."""
        sp = self.space
        kids = sp.children[k][atom]
        q = sp.atom_probs[k + 1][kids] / sp.atom_probs[k][atom]
        rep = [sp.members(k + 1, b)[0] for b in kids]
        dim = self.dims[k][atom]
        return q, self.increments[k, :dim][:, rep]

    def report(self):
        """Human-readable dump of per-atom vectors, brackets and densities."""
        lines = [f"martingale basis: d* = {self.d}, N = {self.space.N}"]
        for k in range(self.space.N):
            for a in range(self.space.n_atoms[k]):
                q, vecs = self.atom_vectors(k, a)
                i0 = self.space.members(k, a)[0]
                lines.append(f"step {k} atom {a}: children probs {np.round(q, 6).tolist()}")
                for i, v in enumerate(vecs):
                    lines.append(
                        f"  M{i + 1}: incr {np.round(v, 6).tolist()} "
                        f"bracket {self.brackets[k, i, i0]:.6g} "
                        f"density {self.densities[k, i, i0]:.6g}")
        return "\n".join(lines)


def _atom_gram_schmidt(q):
    m = q.size
    vecs = []
    for j in range(m - 1):
        s = np.zeros(m)
        s[j], s[j + 1] = 1.0, -1.0
        s -= q @ s
        for v in vecs:
            s -= (q @ (s * v)) / (q @ (v * v)) * v
        vecs.append(s)
    return vecs


def build_basis(space):
    dims = [[len(space.children[k][a]) - 1 for a in range(space.n_atoms[k])]
            for k in range(space.N)]
    d = max((max(row) for row in dims), default=0)
    incr = np.zeros((space.N, d, space.n))
    br = np.zeros((space.N, d, space.n))
    for k in range(space.N):
        for a in range(space.n_atoms[k]):
            kids = space.children[k][a]
            q = space.atom_probs[k + 1][kids] / space.atom_probs[k][a]
            for i, v in enumerate(_atom_gram_schmidt(q)):
                for b, vb in zip(kids, v):
                    incr[k, i, space.members(k + 1, b)] = vb
                br[k, i, space.members(k, a)] = q @ (v * v)
    return MartingaleBasis(space, incr, br, dims)


def coefficients(basis, dM, k):
    """Z_k for a single-step martingale increment dM (shape (n,) or (..., n))."""
    sp = basis.space
    num = cond_expect(sp, dM[..., None, :] * basis.increments[k], k)
    br = basis.brackets[k]
    return np.divide(num, br, out=np.zeros_like(num), where=br > 0)


def represent(space, basis, M, tol=1e-10):
    """Coefficients Z with M = M_0 + sum_i Z^i . M^i."""
    M = np.asarray(M, dtype=float)
    dM = _increments(M)
    scale = 1.0 + np.abs(M).max()
    Z = np.zeros((space.N, basis.d, space.n))
    for k in range(space.N):
        drift = np.abs(cond_expect(space, dM[k], k)).max()
        if drift > tol * scale:
            raise NotMartingale(f"conditional mean of increment {k} is {drift:.3e}")
        Z[k] = coefficients(basis, dM[k], k)
    return Z


def integrate(basis, Z, M0=0.0):
    """M_0 + sum_i int Z^i dM^i as an (N + 1, n) array."""
    dM = np.einsum("kdn,kdn->kn", Z, basis.increments)
    out = np.zeros((Z.shape[0] + 1, basis.space.n))
    out[0] = M0
    out[1:] = out[0] + np.cumsum(dM, axis=0)
    return out


def m_norm_process(basis, Z):
    """||Z_k||_{M_t} per step and outcome, shape (N, n)."""
    return np.sqrt(np.einsum("kdn,kdn->kn", Z ** 2, basis.densities))


def m_norm(space, basis, z, k, atom):
    """sqrt(sum_i |z^i|^2 m^i_k) on one atom of level k."""
    i0 = space.members(k, atom)[0]
    zk = np.asarray(z)[k] if np.ndim(z) == 3 else np.asarray(z)
    if zk.ndim == 2:
        zk = zk[:, i0]
    dens = basis.densities[k, :, i0]
    return float(np.sqrt(np.sum(zk[: dens.size] ** 2 * dens)))


def mp_norm(space, basis, Z, p):
    """E (sum_k sum_i |Z^i_k|^2 d<M^i>_{k+1})^{p/2}."""
    if not 1 <= p <= 2:
        raise ValueError("p must lie in [1, 2]")
    energy = np.einsum("kdn,kdn->n", np.asarray(Z) ** 2, basis.brackets)
    return float(space.expect(energy ** (p / 2)))
