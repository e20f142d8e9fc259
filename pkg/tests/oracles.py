"""Independent oracles the tests compare the package against.

Everything here is built from numpy/scipy primitives only, with no
imports from the package, so an agreement test really runs two routes.
"""

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


def quadrature_circle(f_vals, h, p):
    """Closed-form solve of (Phi[i] - Phi[i-1])/h = f[i] on a circle.

    The flux antiderivative is Phi = c + h cumsum(f); the gradient
    recovers as sign(Phi)|Phi|^(1/(p-1)) and periodicity fixes c because
    the sum of the forward differences of u must vanish.  Returns the
    zero mean solution of the exact discrete equation at eps = 0.
    """
    f = np.asarray(f_vals, dtype=float)
    F = h * np.cumsum(f)

    def residual(c):
        phi = c + F
        return float(np.sum(np.sign(phi) * np.abs(phi) ** (1.0 / (p - 1.0))))

    span = float(np.max(np.abs(F))) + 1.0
    c = brentq(residual, -span, span, xtol=1e-15, rtol=8.882e-16, maxiter=200)
    du = np.sign(c + F) * np.abs(c + F) ** (1.0 / (p - 1.0))
    u = np.concatenate([[0.0], h * np.cumsum(du)[:-1]])
    return u - u.mean()


def circle_laplacian_matrix(n, L):
    """Dense matrix of -(second difference)/h^2 on the n-point circle."""
    h = L / n
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = 2.0
    A[idx, (idx + 1) % n] = -1.0
    A[idx, (idx - 1) % n] = -1.0
    return A / h**2


def dense_lambda1_circle(n, L):
    """Smallest positive eigenvalue of the circle Laplacian, dense route."""
    vals = eigh(circle_laplacian_matrix(n, L), eigvals_only=True)
    return float(vals[1])


def lambda1_circle_closed(n, L):
    h = L / n
    return 4.0 * np.sin(np.pi / n) ** 2 / h**2


def lambda1_torus_closed(d, n, L):
    # lowest nonzero mode excites one axis only
    return lambda1_circle_closed(n, L)


def graph_distances(nv, edges, lengths):
    """All-pairs shortest path lengths via scipy's dijkstra."""
    tails = np.array([e[0] for e in edges])
    heads = np.array([e[1] for e in edges])
    w = np.asarray(lengths, dtype=float)
    mat = csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([tails, heads]), np.concatenate([heads, tails]))),
        shape=(nv, nv),
    )
    return dijkstra(mat, directed=False)


def torus_bruteforce_distance(d, n, L, i, j):
    """Wraparound euclidean distance between two grid vertices."""
    h = L / n
    a = np.array(np.unravel_index(i, (n,) * d))
    b = np.array(np.unravel_index(j, (n,) * d))
    diff = np.abs(a - b)
    diff = np.minimum(diff, n - diff)
    return h * float(np.sqrt(np.sum(diff.astype(float) ** 2)))
