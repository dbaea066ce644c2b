"""Exact clamped-nuclei 1s sigma_g energy of 3D H2+ on a grid of R values.

Separates the electronic problem in prolate spheroidal coordinates. For each R,
the separation constant is found where the angular (Legendre basis) and radial
(Chebyshev collocation) eigenvalues coincide. The total energy is
E = -2 c^2 / R^2 + 1/R.

Writes two columns (R in bohr, E in hartree) with '#' comment lines.

    python tools/h2p_reference_curve.py > crates/core/data/h2p_1s_sigma_g.dat
"""

import sys

import numpy as np
from scipy.linalg import eig, eigh
from scipy.optimize import brentq


def cheb(n):
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.hstack([2, np.ones(n - 1), 2]) * (-1) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(1))
    return D, x


def angular_eigenvalue(c, lmax=40):
    l = np.arange(0, 2 * lmax, 2).astype(float)
    Q = np.diag((2 * l**2 + 2 * l - 1) / ((2 * l - 1) * (2 * l + 3)))
    off = (l[:-1] + 1) * (l[:-1] + 2) / (
        (2 * l[:-1] + 3) * np.sqrt((2 * l[:-1] + 1) * (2 * l[:-1] + 5))
    )
    Q += np.diag(off, 1) + np.diag(off, -1)
    return eigh(np.diag(l * (l + 1)) - c * c * Q, eigvals_only=True)[0]


def radial_eigenvalue(c, R, n=90):
    D, t = cheb(n)
    umax = 45.0 / c
    u = umax * (1 - t) / 2
    Du = -2 / umax * D
    D2 = Du @ Du
    op = (
        np.diag(u * (u + 2)) @ D2
        + np.diag(2 * (1 + u)) @ Du
        + np.diag(2 * R * (1 + u) - c * c * (1 + u) ** 2)
    )
    w = eig(op[:-1, :-1], right=False)
    w = w[np.abs(w.imag) < 1e-8].real
    return w.max()


def energy(R):
    f = lambda c: radial_eigenvalue(c, R) - angular_eigenvalue(c)
    cs = np.linspace(0.3, 0.8 * R + 1.5, 60)
    vals = [f(c) for c in cs]
    for i in range(len(cs) - 1):
        if vals[i] * vals[i + 1] < 0:
            c = brentq(f, cs[i], cs[i + 1], xtol=1e-14)
            return -2 * c * c / R**2 + 1.0 / R
    raise RuntimeError(f"no root bracketed at R = {R}")


def main():
    rows = np.concatenate(
        [
            np.round(np.arange(0.4, 10.0, 0.1), 10),
            np.round(np.arange(10.0, 20.0, 0.5), 10),
            np.arange(20.0, 40.01, 1.0),
        ]
    )
    out = sys.stdout
    out.write("# H2+ 1s sigma_g clamped-nuclei total energy (exact 3D, prolate spheroidal)\n")
    out.write("# columns: R (bohr), E (hartree, includes 1/R)\n")
    for R in rows:
        out.write(f"{R:.4f} {energy(R):.12f}\n")


if __name__ == "__main__":
    main()
