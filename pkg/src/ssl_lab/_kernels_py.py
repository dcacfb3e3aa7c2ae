"""Pure-numpy reference kernels.

Same contract as the compiled module ``ssl_lab._kernels``; ``ssl_lab.backend``
picks one of the two at import time. All kernels take C-contiguous float64
2-D arrays (batch rows x features) plus per-feature parameter vectors, and
never validate — callers own the contracts.
"""

import numpy as np

NAME = "python"


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_grad_mask(x):
    return (x > 0.0).astype(np.float64)


def srelu_forward(x, b):
    # sign(x) * max(|x| - b, 0): identical to relu(x - b) - relu(-x - b)
    return np.sign(x) * np.maximum(np.abs(x) - b, 0.0)


def srelu_grad_mask(x, b):
    return (np.abs(x) > b).astype(np.float64)


def row_norms(x):
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def batchnorm_train_forward(y, gamma, beta, eps):
    """Standardize per feature with biased batch variance.

    Returns (out, xhat, inv_std, mean, var); the last four feed the backward
    pass and the running-stat update.
    """
    mean = y.mean(axis=0)
    var = y.var(axis=0)  # biased (divides by n)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (y - mean) * inv_std
    return gamma * xhat + beta, xhat, inv_std, mean, var


def batchnorm_backward(dout, xhat, inv_std, gamma):
    """Gradient of the train-mode forward w.r.t. input, gamma, beta."""
    n = dout.shape[0]
    dgamma = np.einsum("ij,ij->j", dout, xhat)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    dy = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * np.einsum("ij,ij->j", dxhat, xhat))
    return dy, dgamma, dbeta
