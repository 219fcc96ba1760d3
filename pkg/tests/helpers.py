"""Shared oracles for tests."""
import torch


def central_difference(fn, tensor, h=1e-6, indices=None):
    """Central finite differences of scalar ``fn()`` w.r.t. entries of
    ``tensor`` (perturbed in place and restored). Returns a flat tensor."""
    flat = tensor.data.view(-1)
    idx = range(flat.numel()) if indices is None else indices
    out = torch.empty(len(idx), dtype=torch.float64)
    with torch.no_grad():
        for j, i in enumerate(idx):
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(fn())
            flat[i] = orig - h
            down = float(fn())
            flat[i] = orig
            out[j] = (up - down) / (2 * h)
    return out


def relative_error(analytic, numeric):
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||); 0 if both vanish."""
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    denom = max(float(a.norm()), float(n.norm()))
    return 0.0 if denom == 0 else float((a - n).norm()) / denom
