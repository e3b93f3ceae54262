"""
Checking backpropagation against finite differences
===================================================

Every network in the package is trained with hand-written gradients, so the
first thing worth seeing is that they agree with central differences.
"""

import numpy as np

from uainvase import DenseNetwork, Predictor, gaussian_nll, gaussian_nll_grad, grad_check

rng = np.random.default_rng(0)

# a plain network with a squared-error loss
net = DenseNetwork.build([4, 8, 2], ["sigmoid", "identity"], rng)
x = rng.normal(size=(5, 4))
target = rng.normal(size=(5, 2))


def mse(out):
    return np.mean((out - target) ** 2), 2 * (out - target) / out.size


print("dense net, squared error:", grad_check(net, mse, x))

# the two-headed predictor, trained on Gaussian negative log-likelihood.
# Its input is the masked features followed by the mask itself.
pred = Predictor.build(4, 8, rng)
z = rng.normal(size=(5, 8))
y = rng.integers(0, 2, 5).astype(float)


def nll(out):
    mu, logvar = out[:, 0], out[:, 1]
    d_mu, d_lv = gaussian_nll_grad(mu, logvar, y)
    return gaussian_nll(mu, logvar, y).mean(), np.column_stack([d_mu, d_lv]) / len(y)


print("predictor, Gaussian NLL:  ", grad_check(pred, nll, z))

# a deliberately wrong gradient is caught immediately
def broken(out):
    loss, grad = mse(out)
    return loss, 1.5 * grad


print("scaled gradient (should be large):", grad_check(net, broken, x))
