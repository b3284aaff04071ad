"""Closed-form sprays and curvatures as printed for the catalog examples.

Arrays are indexed with the sample axis first; ``X`` and ``Y`` are (S, n).
"""

import numpy as np


def spray_ex1(X, Y):
    x2, x3 = X[:, 1], X[:, 2]
    y1, y2, y3 = Y[:, 0], Y[:, 1], Y[:, 2]
    return np.stack([y1 * (y2 * x3 + x2 * y3) / (2 * x2 * x3), -x3 * y1 ** 2 / 4,
                     -x2 * y1 ** 2 / 4, 0 * y1], axis=1)


def spray_ex2(X, Y, a):
    a = np.asarray(a, dtype=float)
    return -(Y @ a / (1 + X @ a))[:, None] * Y


def spray_ex3(X, Y):
    x1, x2, x3, x4 = X.T
    y1, y2, y3, y4 = Y.T
    return np.stack([y2 * (2 * y1 - y2) / x2, y1 * (2 * y2 - y1) / x1,
                     y4 * (2 * y3 - y4) / x4, y3 * (2 * y4 - y3) / x3], axis=1) / 4


def spray_ex5(X, Y):
    x1, x2 = X[:, 0], X[:, 1]
    y1, y2 = Y[:, 0], Y[:, 1]
    return np.stack([-x2 * y2 ** 4 / (24 * y1 ** 2),
                     y2 * (3 * x1 * y2 + 4 * x2 * y1) / (24 * x1 * x2), 0 * y1], axis=1)


def h_curvature_ex1(X):
    """The eight printed R^h_ijk of Example 1 as {(h, i, j, k): values} (0-based)."""
    x2, x3 = X[:, 1], X[:, 2]
    q = 0.25 + 0 * x2
    return {
        (0, 1, 0, 1): -1 / (4 * x2 ** 2), (0, 2, 0, 1): 1 / (4 * x2 * x3),
        (1, 0, 0, 1): x3 / (4 * x2), (2, 0, 0, 1): -q,
        (0, 1, 0, 2): 1 / (4 * x2 * x3), (0, 2, 0, 2): -1 / (4 * x3 ** 2),
        (1, 0, 0, 2): -q, (2, 0, 0, 2): x2 / (4 * x3),
    }


def curvature_ex3(X, Y):
    """The four printed R^h_ij of Example 3 as {(h, i, j): values}."""
    x1, x2, x3, x4 = X.T
    y1, y2, y3, y4 = Y.T
    return {
        (0, 0, 1): -y2 * (x1 + x2) / (4 * x1 * x2 ** 2),
        (1, 0, 1): y1 * (x1 + x2) / (4 * x1 ** 2 * x2),
        (2, 2, 3): -y4 * (x3 + x4) / (4 * x3 * x4 ** 2),
        (3, 2, 3): y3 * (x3 + x4) / (4 * x3 ** 2 * x4),
    }


def curvature_ex5(X, Y):
    x1, x2 = X[:, 0], X[:, 1]
    y1, y2 = Y[:, 0], Y[:, 1]
    c = x1 * x2 * y2 ** 4 + 10 * y1 ** 4
    return {(0, 0, 1): -x2 * y2 ** 3 * c / (72 * x1 * y1 ** 6),
            (1, 0, 1): c / (72 * x1 ** 2 * y1 ** 3)}


def berwald_ex5(X, Y):
    """Printed G^h_ij and G^h_ijk of Example 5."""
    x1, x2 = X[:, 0], X[:, 1]
    y1, y2 = Y[:, 0], Y[:, 1]
    B = {(0, 0, 0): -x2 * y2 ** 4 / (4 * y1 ** 4), (0, 0, 1): x2 * y2 ** 3 / (3 * y1 ** 3),
         (1, 0, 1): 1 / (6 * x1), (0, 1, 1): -x2 * y2 ** 2 / (2 * y1 ** 2),
         (1, 1, 1): 1 / (4 * x2)}
    B3 = {(0, 0, 0, 0): x2 * y2 ** 4 / y1 ** 5, (0, 0, 0, 1): -x2 * y2 ** 3 / y1 ** 4,
          (0, 0, 1, 1): x2 * y2 ** 2 / y1 ** 3, (0, 1, 1, 1): -x2 * y2 / y1 ** 2}
    return B, B3
