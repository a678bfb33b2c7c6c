"""Independent autograd re-implementation of the cascade, used only as a test oracle."""
import numpy as np

torch = None


def _torch():
    global torch
    if torch is None:
        import torch as _t

        torch = _t
    return torch


def _conv(x, w, b):
    t = _torch()
    return t.nn.functional.conv2d(x[None], w, b, padding=(w.shape[-1] - 1) // 2)[0]


def _subnet(x, p, blocks):
    t = _torch()
    h = _conv(x, p["lift.w"], p["lift.b"])
    for j in range(blocks):
        q = f"block{j}."
        y = t.relu(_conv(h, p[q + "conv1.w"], p[q + "conv1.b"]))
        y = _conv(y, p[q + "conv2.w"], p[q + "conv2.b"])
        s = y.mean(dim=(1, 2))
        g = t.sigmoid(p[q + "se.fc2.w"] @ t.relu(p[q + "se.fc1.w"] @ s + p[q + "se.fc1.b"]) + p[q + "se.fc2.b"])
        h = h + y * g[:, None, None]
    return _conv(h, p["proj.w"], p["proj.b"]) + x


def _to_ch(z):
    t = _torch()
    return t.stack([z.real, z.imag], dim=1).reshape(-1, *z.shape[1:])


def _to_c(x):
    return x[0::2] + 1j * x[1::2]


def _fft(x):
    t = _torch()
    return t.fft.fftshift(t.fft.fft2(t.fft.ifftshift(x, dim=(-2, -1)), norm="ortho"), dim=(-2, -1))


def _ifft(x):
    t = _torch()
    return t.fft.fftshift(t.fft.ifft2(t.fft.ifftshift(x, dim=(-2, -1)), norm="ortho"), dim=(-2, -1))


def cascade_grads(sample, params, iterations, blocks, cir, lam_i=0.5, lam_k=0.5):
    """Loss and parameter gradients of the cascade, built explicitly per ``cir``."""
    t = _torch()
    tp = {k: t.tensor(v, dtype=t.float64, requires_grad=True) for k, v in params.items()}
    net = lambda name: {k.split("/", 1)[1]: v for k, v in tp.items() if k.startswith(name + "/")}
    ks = t.tensor(sample.k_sparse)
    kt = t.tensor(sample.k_full)
    it = _ifft(kt)
    m = t.tensor(sample.mask.sampled_columns)
    dc = lambda k: t.where(m, ks, k)
    H = lambda z, name: _to_c(_subnet(_to_ch(z), net(name), blocks))
    mse = lambda a, b: (a - b).abs().pow(2).mean()
    total = 0.0
    img_prev = k_prev = None
    for i in range(1, iterations + 1):
        if i == 1:
            img = H(_ifft(ks), "inet1")
            k = dc(H(dc(_fft(img)), "knet1"))
        elif cir:
            img = H(_ifft(k_prev) + img_prev, f"inet{i}")
            k = dc(H(dc(_fft(img) + k_prev), f"knet{i}"))
        else:
            img = H(_ifft(k_prev), f"inet{i}")
            k = dc(H(dc(_fft(img)), f"knet{i}"))
        total = total + lam_i * mse(img, it) + lam_k * mse(k, kt)
        img_prev, k_prev = img, k
    total.backward()
    return total.item(), {k: v.grad.numpy() for k, v in tp.items()}
