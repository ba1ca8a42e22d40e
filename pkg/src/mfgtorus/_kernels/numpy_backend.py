"""Pure NumPy fallback for the compiled kernels.

Same call signatures and the same per-block seeding interface as the
extension module; results are statistically equivalent but the Gaussian
streams differ (PCG64 here, xoshiro256++ in the compiled core).
"""

import numpy as np

BACKEND_NAME = "numpy"


def standard_normals(seed_seq, count):
    return np.random.Generator(np.random.PCG64(seed_seq)).standard_normal(count)


def em_block_1d(x, bdrift, dt, sqrt2dt, nsteps, burn, hist, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    n = bdrift.shape[0]
    for step in range(nsteps):
        s = x * n
        i0 = s.astype(np.intp)
        np.clip(i0, 0, n - 1, out=i0)
        w = s - i0
        i1 = i0 + 1
        i1[i1 == n] = 0
        b = bdrift[i0] + (bdrift[i1] - bdrift[i0]) * w
        x += dt * b + sqrt2dt * rng.standard_normal(x.shape[0])
        x -= np.floor(x)
        x[x >= 1.0] = 0.0
        if step >= burn:
            bins = (x * n + 0.5).astype(np.intp)
            bins[bins == n] = 0
            hist += np.bincount(bins, minlength=n)


def em_block_2d(x, y, bx, by, dt, sqrt2dt, nsteps, burn, hist, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    n = bx.shape[0]
    npart = x.shape[0]
    for step in range(nsteps):
        sx = x * n
        sy = y * n
        i0 = np.clip(sx.astype(np.intp), 0, n - 1)
        j0 = np.clip(sy.astype(np.intp), 0, n - 1)
        wx = sx - i0
        wy = sy - j0
        i1 = i0 + 1
        j1 = j0 + 1
        i1[i1 == n] = 0
        j1[j1 == n] = 0
        w00 = (1.0 - wx) * (1.0 - wy)
        w10 = wx * (1.0 - wy)
        w01 = (1.0 - wx) * wy
        w11 = wx * wy
        bxv = w00 * bx[i0, j0] + w10 * bx[i1, j0] + w01 * bx[i0, j1] + w11 * bx[i1, j1]
        byv = w00 * by[i0, j0] + w10 * by[i1, j0] + w01 * by[i0, j1] + w11 * by[i1, j1]
        z = rng.standard_normal((npart, 2))
        x += dt * bxv + sqrt2dt * z[:, 0]
        y += dt * byv + sqrt2dt * z[:, 1]
        x -= np.floor(x)
        y -= np.floor(y)
        x[x >= 1.0] = 0.0
        y[y >= 1.0] = 0.0
        if step >= burn:
            ib = (x * n + 0.5).astype(np.intp)
            jb = (y * n + 0.5).astype(np.intp)
            ib[ib == n] = 0
            jb[jb == n] = 0
            hist += np.bincount(ib * n + jb, minlength=n * n)
