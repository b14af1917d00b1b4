"""Standard gate constructors. Rotations follow ``R_P(theta) = exp(-i theta P / 2)``."""

import numpy as np

from .circuit import Gate

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def rx_matrix(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz_matrix(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rzz_matrix(theta):
    a, b = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    return np.diag([a, b, b, a])


def fsim_matrix(theta, phi):
    c, s = np.cos(theta), -1j * np.sin(theta)
    return np.array(
        [[1, 0, 0, 0], [0, c, s, 0], [0, s, c, 0], [0, 0, 0, np.exp(1j * phi)]], dtype=complex
    )


def controlled(u):
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    out = np.eye(2 * d, dtype=complex)
    out[d:, d:] = u
    return out


def h(q):
    return Gate(H, (q,), "H")


def x(q):
    return Gate(X, (q,), "X")


def z(q):
    return Gate(Z, (q,), "Z")


def rx(theta, q):
    return Gate(rx_matrix(theta), (q,), "RX")


def rz(theta, q):
    return Gate(rz_matrix(theta), (q,), "RZ")


def phase(phi, q):
    return Gate(np.diag([1, np.exp(1j * phi)]), (q,), "P")


def rzz(theta, a, b):
    return Gate(rzz_matrix(theta), (a, b), "RZZ")


def cnot(control, target):
    return Gate(controlled(X), (control, target), "CNOT")


def cz(a, b):
    return Gate(np.diag([1, 1, 1, -1]), (a, b), "CZ")


def iswap(a, b):
    return Gate(
        np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]]), (a, b), "ISWAP"
    )


def fsim(theta, phi, a, b):
    return Gate(fsim_matrix(theta, phi), (a, b), "FSIM")


def crx(theta, control, target):
    return Gate(controlled(rx_matrix(theta)), (control, target), "CRX")


def toffoli(c1, c2, t):
    return Gate(controlled(controlled(X)), (c1, c2, t), "CCX")
