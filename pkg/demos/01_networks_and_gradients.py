"""Flat-parameter tanh networks: forward, gradient check, and a small Adam fit."""

import numpy as np

from hiro.nn import AdamState, Mlp, adam_step, backward, forward

rng = np.random.default_rng(0)

# a 1-16-16-1 network; all weights live in net.flat, layers are views into it
net = Mlp.initialized((1, 16, 16, 1), rng)
print("parameters:", net.flat.size, [w.shape for w in net.weights])

# gradient of sum(output * u) w.r.t. one weight, checked by central differences
x, u = np.array([0.3]), np.array([1.0])
grad, _ = backward(net, x, u)
i, eps = 5, 1e-5
bumped = net.copy(); bumped.flat[i] += eps
dipped = net.copy(); dipped.flat[i] -= eps
fd = (forward(bumped, x) - forward(dipped, x))[0] / (2 * eps)
print(f"analytic {grad[i]:.8f}  finite-difference {fd:.8f}")

# fit sin(3x) on [-1, 1]
opt = AdamState.for_params(net, 3e-3)
xs = np.linspace(-1, 1, 128)[:, None]
ys = np.sin(3 * xs)
for step in range(3001):
    err = forward(net, xs) - ys
    g, _ = backward(net, xs, err / len(xs))
    adam_step(opt, net, g)
    if step % 1000 == 0:
        print(f"step {step:5d}  mse {np.mean(err ** 2):.5f}")

# squashed outputs always stay inside their box
actor = Mlp.initialized((3, 8, 2), rng, (np.array([-1.0, 0.0]), np.array([1.0, 5.0])))
out = forward(actor, rng.normal(size=(1000, 3)) * 100)
print("actor output range:", out.min(0), out.max(0))
