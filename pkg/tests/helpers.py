import numpy as np


def complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_hermitian(rng, n):
    G = complex_gaussian(rng, (n, n))
    return (G + G.conj().T) / 2


def random_unitary(rng, p):
    Q, R = np.linalg.qr(complex_gaussian(rng, (p, p)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))
