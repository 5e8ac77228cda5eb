#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Independent reference values for the C++ unit tests.

Re-implements the SplitMix64 stream, the seeded fills and the recurrences in
numpy/torch (float64) and prints the numbers frozen into tests/*.cpp.
Run: python3 tests/oracle/derive_reference.py
"""
import math

import numpy as np
import torch

torch.set_default_dtype(torch.float64)
MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class Rng:
    def __init__(self, seed):
        self.seed = seed & MASK
        self.counter = 0

    def u64(self):
        self.counter += 1
        return mix64((self.seed + self.counter * GAMMA) & MASK)

    def uniform(self, lo=0.0, hi=1.0):
        u = (self.u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def normal(self):
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def split(self, key):
        return Rng(mix64(self.seed ^ mix64((key + 0x632BE59BD9B4E019) & MASK)))


def uni(rng, shape, s):
    return np.array([rng.uniform(-s, s) for _ in range(int(np.prod(shape)))]).reshape(shape)


def gauss(rng, shape):
    return np.array([rng.normal() for _ in range(int(np.prod(shape)))]).reshape(shape)


def random_params(rng, family, L, n, d, R=0, scale=None, random_h0=False):
    s = scale if scale else 1.0 / math.sqrt(n)
    layers = []
    for l in range(L):
        din = d if l == 0 else n
        p = {"U": np.zeros((n, din)), "V": np.zeros((n, n)), "b": np.zeros(n), "h0": np.zeros(n)}
        if family not in ("birnn", "cpbirnn"):
            p["U"] = uni(rng, (n, din), s)
            p["V"] = uni(rng, (n, n), s)
            p["b"] = uni(rng, (n,), s)
        if family in ("2rnn", "birnn"):
            p["T"] = uni(rng, (n, din, n), s)
        if family in ("cprnn", "cpbirnn"):
            p["A"] = uni(rng, (n, R), s)
            p["B"] = uni(rng, (din, R), s)
            p["C"] = uni(rng, (n, R), s)
        if random_h0:
            p["h0"] = uni(rng, (n,), s)
        layers.append(p)
    return layers


def forward(layers, x, act="identity", placement="recurrent", head=None):
    """x: T x d torch tensor; returns list of top outputs (after head)."""
    sig = {"identity": lambda z: z, "tanh": torch.tanh, "relu": torch.relu}[act]
    h = [p["h0"] for p in layers]
    outs = []
    L = len(layers)
    for t in range(x.shape[0]):
        u = x[t]
        for l, p in enumerate(layers):
            z = p["V"] @ h[l] + p["U"] @ u + p["b"]
            if "T" in p:
                z = z + torch.einsum("ijk,i,j->k", p["T"], h[l], u)
            if "A" in p:
                z = z + p["C"] @ ((p["A"].T @ h[l]) * (p["B"].T @ u))
            if placement == "recurrent":
                h[l] = sig(z)
                u = h[l]
            else:
                h[l] = z
                u = sig(z) if l < L - 1 else z
        outs.append(u if head is None else head[0] @ u + head[1])
    return outs


def to_torch(layers, grad=False):
    out = []
    for p in layers:
        out.append({k: torch.tensor(v, requires_grad=grad) for k, v in p.items()})
    return out


def fmt(a):
    return ", ".join(repr(float(v)) for v in np.asarray(a).ravel())


def main():
    r = Rng(1234567)
    print("rng u64:", [r.u64() for _ in range(3)])
    r = Rng(42)
    print("rng uniform seed42:", fmt([r.uniform() for _ in range(2)]))
    r = Rng(42)
    print("rng normal seed42:", fmt([r.normal() for _ in range(2)]))
    c = Rng(42).split(3)
    print("split(3) of 42 seed, first u64:", c.seed, c.u64())

    # mode-2 slice of a seeded 2x3x2 tensor
    t = uni(Rng(7), (2, 3, 2), 1.0)
    print("tensor seed7 2x3x2 mode2 e2 slice:", fmt(t[:, 1, :]))
    v = np.array([0.5, -2.0])
    print("tensor seed7 mode1 v=(0.5,-2):", fmt(np.einsum("ijk,i->jk", t, v)))
    print("tensor seed7 mode3 v=(0.5,-2):", fmt(np.einsum("ijk,k->ij", t, v)))

    rng = Rng(11)
    A, B, C = uni(rng, (3, 2), 1.0), uni(rng, (2, 2), 1.0), uni(rng, (3, 2), 1.0)
    h = np.array([1.0, -0.5, 2.0])
    print("cp_matrix seed11 n3 d2 R2 h=(1,-.5,2):", fmt(C @ np.diag(A.T @ h) @ B.T))

    # Forward references: tanh 2RNN and CPRNN, recurrent and depth-only.
    for fam, R in (("rnn", 0), ("2rnn", 0), ("cprnn", 2), ("cpbirnn", 2)):
        for placement in ("recurrent", "depth_only"):
            rng = Rng(2024)
            scale = 1.5 if fam == "cpbirnn" else None
            layers = random_params(rng, fam, 2, 3, 2, R, scale=scale, random_h0=True)
            x = gauss(rng, (4, 2))
            out = forward(to_torch(layers), torch.tensor(x), "tanh", placement)
            print(f"forward {fam} {placement} seed2024 L2 n3 d2 T4 top h_4:", fmt(out[-1].numpy()))

    # Gradient reference with a readout head and MSE loss.
    for fam, R in (("rnn", 0), ("2rnn", 0), ("cprnn", 2)):
        rng = Rng(99)
        layers = random_params(rng, fam, 2, 3, 2, R, random_h0=True)
        W = uni(rng, (2, 3), 1 / math.sqrt(3))
        cvec = np.zeros(2)
        xs = [gauss(rng, (3, 2)) for _ in range(2)]
        ys = [gauss(rng, (3, 2)) for _ in range(2)]
        tl = to_torch(layers, grad=True)
        Wt = torch.tensor(W, requires_grad=True)
        ct = torch.tensor(cvec, requires_grad=True)
        loss = 0
        for x, y in zip(xs, ys):
            outs = forward(tl, torch.tensor(x), "tanh", "recurrent", (Wt, ct))
            loss = loss + sum(((o - torch.tensor(y[i])) ** 2).sum() for i, o in enumerate(outs))
        loss = loss / (2 * 3 * 2)
        loss.backward()
        print(f"grad {fam} seed99 loss:", repr(loss.item()))
        print(f"grad {fam} seed99 dV1:", fmt(tl[0]["V"].grad.numpy()))
        print(f"grad {fam} seed99 dh0_2:", fmt(tl[1]["h0"].grad.numpy()))
        print(f"grad {fam} seed99 dW:", fmt(Wt.grad.numpy()))
        if "T" in tl[0]:
            print(f"grad {fam} seed99 dA1[1,0,:]:", fmt(tl[0]["T"].grad.numpy()[1, 0, :]))
        if "A" in tl[0]:
            print(f"grad {fam} seed99 dB1:", fmt(tl[0]["B"].grad.numpy()))

    # Adam against torch.optim.Adam on f(x) = sum(w * x^2).
    x = torch.tensor([1.0, -2.0, 0.5], requires_grad=True)
    w = torch.tensor([1.0, 3.0, -0.5])
    opt = torch.optim.Adam([x], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    for _ in range(5):
        opt.zero_grad()
        (w * x**2).sum().backward()
        opt.step()
    print("adam 5 steps:", fmt(x.detach().numpy()))

    # Copy task, seed 5, d=2, T=4, p=1: first train sample and first test sample.
    root = Rng(5)
    tr = root.split(0)
    x = gauss(tr, (4, 2))
    print("copy seed5 train[0] x:", fmt(x))
    te = root.split(2)
    x = gauss(te, (4, 2))
    print("copy seed5 test[0] x:", fmt(x))

    # Parameter-count references.
    pc = lambda n, L: (2 * L - 1) * n * n + (L + 1) * n
    print("param_count (4,2),(7,1),(5,1),(3,2):", pc(4, 2), pc(7, 1), pc(5, 1), pc(3, 2))
    print("critical_n(2,1):", repr((3 + math.sqrt(13)) / 2))
    for L, Lt in ((3, 1), (3, 2), (5, 4)):
        a = 2 * L * Lt - L - Lt
        roots = np.roots([a, -2 * a - Lt, a - Lt * (3 * Lt - 1)])
        print(f"critical_n({L},{Lt}) via quadratic roots:", repr(max(roots.real)))


if __name__ == "__main__":
    main()
