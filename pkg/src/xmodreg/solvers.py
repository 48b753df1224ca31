"""Pose solvers: closed-form 3D-3D alignment, 2D-3D resection, and RANSAC.

Every public pose follows the engine convention: the returned ``Pose`` maps
camera-frame coordinates into the point cloud's frame (it is the camera's
pose).  RANSAC is deterministic: the whole sample stream is a pure function
of ``(seed, iteration)``, hypotheses are scored in fixed chunks, and ties in
inlier count break toward the lowest iteration index, so results do not
depend on the worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .depth import DepthMap
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    InsufficientDataError,
    InvalidInputError,
    NonConvergenceError,
)
from .geometry import CameraIntrinsics, Pose, orthonormalize_rotation, unproject_pixel
from .matching import CorrespondenceSet

_CHUNK = 4096  # fixed scoring block; independent of the worker count on purpose


@dataclass(frozen=True)
class SolverConfig:
    """RANSAC parameterization.

    ``rng_seed=None`` means "derive the seed from the correspondence content"
    (the sorted rows are hashed), which also makes the result invariant to
    input permutation.
    """

    iterations: int = 50000
    tolerance: float = 0.2
    sample_size: int = 3
    rng_seed: int | None = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if not (self.tolerance > 0.0):
            raise ConfigurationError("tolerance must be positive")
        if self.sample_size < 3:
            raise ConfigurationError("sample_size must be >= 3")


@dataclass(frozen=True)
class RegistrationResult:
    pose: Pose
    inlier_indices: np.ndarray
    inlier_count: int
    success: bool
    solver_used: str
    seed: int


@dataclass(frozen=True)
class PnPResult:
    pose: Pose  # camera pose in the frame of the 3D points
    reprojection_rms: float
    iterations: int
    converged: bool


# ---------------------------------------------------------------------------
# Kabsch


def kabsch_closed_form(src: np.ndarray, dst: np.ndarray) -> Pose:
    """Least-squares rigid map ``dst ~= R @ src + t`` via the SVD of the
    cross-covariance, with the usual determinant correction."""
    a = np.asarray(src, dtype=np.float64)
    b = np.asarray(dst, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape != b.shape:
        raise InvalidInputError("src and dst must both be (N, 3)")
    if a.shape[0] < 3:
        raise InsufficientDataError("rigid alignment needs at least 3 pairs")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite coordinates")

    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateInputError("point sets are collinear or coincident")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    return Pose(r, t)


def _kabsch_batched(src: np.ndarray, dst: np.ndarray):
    """Vectorized Kabsch over (B, k, 3) sample stacks.

    Returns ``(R, t, valid)`` where degenerate samples are flagged invalid
    instead of raising.
    """
    cs = src.mean(axis=1, keepdims=True)
    cd = dst.mean(axis=1, keepdims=True)
    h = np.matmul((src - cs).transpose(0, 2, 1), dst - cd)
    u, s, vt = np.linalg.svd(h)
    v = vt.transpose(0, 2, 1)
    det = np.linalg.det(np.matmul(v, u.transpose(0, 2, 1)))
    flip = np.ones_like(s)
    flip[:, 2] = np.sign(det)
    r = np.matmul(v * flip[:, None, :], u.transpose(0, 2, 1))
    t = cd[:, 0, :] - np.einsum("bij,bj->bi", r, cs[:, 0, :])
    valid = (s[:, 1] > 1e-12 * np.maximum(s[:, 0], 1e-300)) & (np.abs(det) > 0.5)
    return r, t, valid


# ---------------------------------------------------------------------------
# Minimal 2D-3D pose (3-ray quartic)

# Grunert's reduction: with inter-point distances a=|P2P3|, b=|P1P3|, c=|P1P2|
# and ray cosines ca, cb, cg, the depth ratio v = s3/s1 solves a quartic.


def _grunert_coeffs(a2, b2, c2, ca, cb, cg):
    A = (a2 - c2) / b2
    B = (a2 + c2) / b2
    a4 = (A - 1.0) ** 2 - 4.0 * c2 / b2 * ca * ca
    a3 = 4.0 * (A * (1.0 - A) * cb - (1.0 - B) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb)
    a2c = 2.0 * (
        A * A
        - 1.0
        + 2.0 * A * A * cb * cb
        + 2.0 * (b2 - c2) / b2 * ca * ca
        - 4.0 * B * ca * cb * cg
        + 2.0 * (b2 - a2) / b2 * cg * cg
    )
    a1 = 4.0 * (-A * (1.0 + A) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - B) * ca * cg)
    a0 = (1.0 + A) ** 2 - 4.0 * a2 / b2 * cg * cg
    return a4, a3, a2c, a1, a0


def _p3p_candidates(rays: np.ndarray, pts: np.ndarray):
    """All world-to-camera pose candidates for (B, 3, 3) ray/point triples.

    Returns ``(R, t, valid)`` with a root axis of length 4:
    R (B, 4, 3, 3), t (B, 4, 3), valid (B, 4).
    """
    nb = rays.shape[0]
    a2 = np.sum((pts[:, 1] - pts[:, 2]) ** 2, axis=1)
    b2 = np.sum((pts[:, 0] - pts[:, 2]) ** 2, axis=1)
    c2 = np.sum((pts[:, 0] - pts[:, 1]) ** 2, axis=1)
    ca = np.sum(rays[:, 1] * rays[:, 2], axis=1)
    cb = np.sum(rays[:, 0] * rays[:, 2], axis=1)
    cg = np.sum(rays[:, 0] * rays[:, 1], axis=1)

    ok = (a2 > 1e-18) & (b2 > 1e-18) & (c2 > 1e-18)
    b2s = np.where(ok, b2, 1.0)
    a4, a3, a2c, a1, a0 = _grunert_coeffs(a2, b2s, c2, ca, cb, cg)
    coeffs = np.stack([a4, a3, a2c, a1, a0], axis=1)
    lead_ok = np.abs(a4) > 1e-12 * np.max(np.abs(coeffs), axis=1)
    ok &= lead_ok

    comp = np.zeros((nb, 4, 4))
    safe_a4 = np.where(ok, a4, 1.0)
    comp[:, 0, 0] = -a3 / safe_a4
    comp[:, 0, 1] = -a2c / safe_a4
    comp[:, 0, 2] = -a1 / safe_a4
    comp[:, 0, 3] = -a0 / safe_a4
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    roots = np.linalg.eigvals(comp)  # (B, 4) complex

    v = roots.real
    real = np.abs(roots.imag) <= 1e-6 * (1.0 + np.abs(v))
    good = real & (v > 1e-9) & ok[:, None]

    A = ((a2 - c2) / b2s)[:, None]
    num = (A - 1.0) * v * v - 2.0 * A * cb[:, None] * v + 1.0 + A
    den = 2.0 * (cg[:, None] - v * ca[:, None])
    good &= np.abs(den) > 1e-12
    u = np.where(good, num / np.where(np.abs(den) > 1e-12, den, 1.0), 0.0)

    s1sq_arg = 1.0 + v * v - 2.0 * v * cb[:, None]
    good &= s1sq_arg > 1e-18
    s1 = np.sqrt(b2s)[:, None] / np.sqrt(np.where(s1sq_arg > 1e-18, s1sq_arg, 1.0))
    s2 = u * s1
    s3 = v * s1
    good &= (s1 > 0.0) & (s2 > 0.0) & (s3 > 0.0)

    # camera-frame points per root, then an exact rigid fit world -> camera
    depths = np.stack([s1, s2, s3], axis=2)  # (B, 4, 3)
    cam = depths[:, :, :, None] * rays[:, None, :, :]  # (B, 4, 3, 3)
    world = np.broadcast_to(pts[:, None], cam.shape)
    flat_cam = cam.reshape(-1, 3, 3)
    flat_world = np.ascontiguousarray(world.reshape(-1, 3, 3))
    r, t, fit_ok = _kabsch_batched(flat_world, flat_cam)
    valid = good & fit_ok.reshape(nb, 4)
    return r.reshape(nb, 4, 3, 3), t.reshape(nb, 4, 3), valid


def _pixel_rays(pixels: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    x = (pixels[:, 0] - intr.cx) / intr.fx
    y = (pixels[:, 1] - intr.cy) / intr.fy
    d = np.stack([x, y, np.ones_like(x)], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _reprojection_rms(r, t, pixels, points, intr):
    cam = points @ r.T + t
    z = cam[:, 2]
    if np.any(z <= 1e-12):
        return np.inf
    u = intr.fx * cam[:, 0] / z + intr.cx
    v = intr.fy * cam[:, 1] / z + intr.cy
    return float(np.sqrt(np.mean((u - pixels[:, 0]) ** 2 + (v - pixels[:, 1]) ** 2)))


def _dlt_init(pixels, points, intr):
    """Linear pose from >= 6 correspondences (normalized coordinates)."""
    n = pixels.shape[0]
    xn = (pixels[:, 0] - intr.cx) / intr.fx
    yn = (pixels[:, 1] - intr.cy) / intr.fy

    c = points.mean(axis=0)
    spread = np.mean(np.linalg.norm(points - c, axis=1))
    if spread <= 0.0:
        return None
    sc = np.sqrt(3.0) / spread
    tn = np.eye(4)
    tn[:3, :3] *= sc
    tn[:3, 3] = -sc * c
    xh = np.concatenate([(points - c) * sc, np.ones((n, 1))], axis=1)

    rows = np.zeros((2 * n, 12))
    rows[0::2, 0:4] = xh
    rows[0::2, 8:12] = -xn[:, None] * xh
    rows[1::2, 4:8] = xh
    rows[1::2, 8:12] = -yn[:, None] * xh
    try:
        _, _, vt = np.linalg.svd(rows)
    except np.linalg.LinAlgError:
        return None
    p = (vt[-1].reshape(3, 4)) @ tn

    best = None
    for sgn in (1.0, -1.0):
        m = sgn * p[:, :3]
        u, s, vtm = np.linalg.svd(m)
        if s[2] <= 1e-12 * max(s[0], 1e-300):
            continue
        d = np.sign(np.linalg.det(u @ vtm))
        r = u @ np.diag([1.0, 1.0, d]) @ vtm
        t = sgn * p[:, 3] / s.mean()
        front = np.sum((points @ r.T + t)[:, 2] > 0.0)
        if best is None or front > best[0]:
            best = (front, r, t)
    if best is None or best[0] < n / 2:
        return None
    return best[1], best[2]


def _p3p_init(pixels, points, intr):
    """Pose candidates from a deterministic well-spread 3-point subset."""
    n = pixels.shape[0]
    px = pixels.astype(np.float64)
    i0 = int(np.argmax(np.linalg.norm(px - px.mean(axis=0), axis=1)))
    d0 = np.linalg.norm(px - px[i0], axis=1)
    i1 = int(np.argmax(d0))
    d1 = np.linalg.norm(px - px[i1], axis=1)
    i2 = int(np.argmax(np.minimum(d0, d1)))
    tri = [i0, i1, i2]
    if len(set(tri)) < 3:
        tri = list(range(3)) if n >= 3 else None
    if tri is None:
        return []
    rays = _pixel_rays(px[tri], intr)[None]
    r, t, valid = _p3p_candidates(rays, points[tri][None])
    return [(r[0, j], t[0, j]) for j in range(4) if valid[0, j]]


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def _exp_so3(w: np.ndarray) -> np.ndarray:
    th = np.linalg.norm(w)
    k = _skew(w)
    if th < 1e-12:
        return np.eye(3) + k + 0.5 * (k @ k)
    k = k / th
    return np.eye(3) + np.sin(th) * k + (1.0 - np.cos(th)) * (k @ k)


def pnp_minimal(pixels, points, intr: CameraIntrinsics, max_iterations: int = 100) -> PnPResult:
    """Camera pose from 2D-3D pairs: linear (or 3-ray) initialization plus
    Gauss-Newton refinement of the reprojection error.

    Needs at least 4 pairs in general position.  Raises
    :class:`DegenerateInputError` when no unique pose exists and
    :class:`NonConvergenceError` (with the best iterate attached) when the
    refinement runs out of iterations.
    """
    px = np.asarray(pixels, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    if px.ndim != 2 or px.shape[1] != 2 or pts.shape != (px.shape[0], 3):
        raise InvalidInputError("need aligned (N, 2) pixels and (N, 3) points")
    n = px.shape[0]
    if n < 4:
        raise InsufficientDataError("resection needs at least 4 pairs")
    if not (np.all(np.isfinite(px)) and np.all(np.isfinite(pts))):
        raise InvalidInputError("non-finite input")

    for data, what in ((px, "image points"), (pts, "3D points")):
        _, s, _ = np.linalg.svd(data - data.mean(axis=0))
        if s[1] <= 1e-9 * max(s[0], 1e-300):
            raise DegenerateInputError(f"{what} are (near-)collinear")

    candidates = []
    if n >= 6:
        got = _dlt_init(px, pts, intr)
        if got is not None:
            candidates.append(got)
    candidates.extend(_p3p_init(px, pts, intr))
    scored = [(_reprojection_rms(r, t, px, pts, intr), r, t) for r, t in candidates]
    scored = [c for c in scored if np.isfinite(c[0])]
    if not scored:
        raise DegenerateInputError("no usable pose initialization")
    _, r, t = min(scored, key=lambda c: c[0])

    fx, fy, cx, cy = intr.fx, intr.fy, intr.cx, intr.cy

    def cost_of(rm, tv):
        cam = pts @ rm.T + tv
        z = cam[:, 2]
        if np.any(z <= 1e-12):
            return np.inf, None, None
        u = fx * cam[:, 0] / z + cx
        v = fy * cam[:, 1] / z + cy
        res = np.concatenate([u - px[:, 0], v - px[:, 1]])
        return 0.5 * float(res @ res), res, cam

    cost, res, cam = cost_of(r, t)
    if not np.isfinite(cost):
        raise DegenerateInputError("initialization places points behind the camera")

    best = (cost, r, t)
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        z = cam[:, 2]
        inv_z = 1.0 / z
        # d(u,v)/d(cam point)
        a = np.zeros((n, 2, 3))
        a[:, 0, 0] = fx * inv_z
        a[:, 0, 2] = -fx * cam[:, 0] * inv_z * inv_z
        a[:, 1, 1] = fy * inv_z
        a[:, 1, 2] = -fy * cam[:, 1] * inv_z * inv_z
        # d(cam point)/d(w, t) for a left increment: [-skew(cam) | I]
        dq = np.zeros((n, 3, 6))
        dq[:, 0, 1] = cam[:, 2]
        dq[:, 0, 2] = -cam[:, 1]
        dq[:, 1, 0] = -cam[:, 2]
        dq[:, 1, 2] = cam[:, 0]
        dq[:, 2, 0] = cam[:, 1]
        dq[:, 2, 1] = -cam[:, 0]
        dq[:, :, 3:] = np.eye(3)
        # residual vector is [all u rows, all v rows]; stack the jacobian to match
        ju = np.einsum("nj,njk->nk", a[:, 0, :], dq)
        jv = np.einsum("nj,njk->nk", a[:, 1, :], dq)
        j = np.concatenate([ju, jv], axis=0)
        g = j.T @ res
        h = j.T @ j
        try:
            delta = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateInputError("normal equations are singular") from exc

        lam = 1.0
        improved = False
        while lam >= 2.0 ** -20:
            rm = _exp_so3(lam * delta[:3])
            r_new = orthonormalize_rotation(rm @ r)
            t_new = rm @ t + lam * delta[3:]
            c_new, res_new, cam_new = cost_of(r_new, t_new)
            if c_new < cost:
                improved = True
                break
            lam *= 0.5
        if not improved:
            # H = J^T J is positive semidefinite, so delta is a descent
            # direction; failing to improve even at a 1e-6 step means the
            # cost is at its numerical floor
            converged = True
            break
        step = lam * np.linalg.norm(delta)
        gain = cost - c_new
        cost, res, cam, r, t = c_new, res_new, cam_new, r_new, t_new
        if cost < best[0]:
            best = (cost, r, t)
        if step < 1e-14 or gain <= 1e-12 * max(cost, 1e-30):
            converged = True
            break

    cost, r, t = min((best, (cost, r, t)), key=lambda c: c[0])
    rms = float(np.sqrt(2.0 * cost / n))
    pose = Pose(orthonormalize_rotation(r), t).inverse()
    result = PnPResult(pose, rms, it, converged)
    if not converged:
        raise NonConvergenceError(
            f"no convergence after {max_iterations} Gauss-Newton steps", best=result
        )
    return result


# ---------------------------------------------------------------------------
# RANSAC


def _auto_seed(*arrays) -> int:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def _distinct_samples(rng, iterations: int, k: int, pool: np.ndarray) -> np.ndarray:
    m = pool.size
    idx = rng.integers(0, m, size=(iterations, k))
    while True:
        srt = np.sort(idx, axis=1)
        bad = np.any(srt[:, 1:] == srt[:, :-1], axis=1)
        if not bad.any():
            break
        idx[bad] = rng.integers(0, m, size=(int(bad.sum()), k))
    return pool[idx]


def _score_kabsch_chunk(r, t, src, dst, usable, tol, out):
    pred = np.einsum("bij,nj->bni", r, src) + t[:, None, :]
    res = np.linalg.norm(dst[None, :, :] - pred, axis=2)
    res[:, ~usable] = np.inf
    np.sum(res <= tol, axis=1, out=out)


def _score_pnp_chunk(r, t, q, px, intr, tol, out):
    cam = np.einsum("bij,nj->bni", r, q) + t[:, None, :]
    z = cam[:, :, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, :, 0] / z + intr.cx
        v = intr.fy * cam[:, :, 1] / z + intr.cy
        res = np.hypot(u - px[:, 0], v - px[:, 1])
    res = np.where(z > 1e-12, res, np.inf)
    np.sum(res <= tol, axis=1, out=out)


def ransac(
    corrs: CorrespondenceSet,
    config: SolverConfig,
    kind: str,
    intr: CameraIntrinsics | None = None,
    image_depth: DepthMap | None = None,
    workers: int = 1,
) -> RegistrationResult:
    """Robust registration from putative correspondences.

    ``kind="kabsch"`` lifts image pixels through ``image_depth`` and aligns
    3D-3D with a per-point distance tolerance in meters; ``kind="pnp"``
    resects 2D-3D with a reprojection tolerance in pixels.  Success means the
    final inlier count reached ``sample_size + 1``.
    """
    if kind not in ("kabsch", "pnp"):
        raise ConfigurationError(f"unknown solver kind {kind!r}")
    if intr is None:
        raise InvalidInputError("intrinsics are required")
    k = config.sample_size
    if kind == "pnp" and k < 4:
        raise ConfigurationError("pnp sampling needs sample_size >= 4")
    n = len(corrs)
    if n < k:
        raise InsufficientDataError(f"{n} correspondences, need at least {k}")

    # canonical content order: makes content-hashed seeding permutation-proof
    ip = corrs.img_pixels
    dp = corrs.depth_pixels
    q = corrs.points
    dist = corrs.distances
    order = np.lexsort(
        (dist, q[:, 2], q[:, 1], q[:, 0], dp[:, 1], dp[:, 0], ip[:, 1], ip[:, 0])
    )
    ip, dp, q, dist = ip[order], dp[order], q[order], dist[order]

    seed = config.rng_seed
    if seed is None:
        seed = _auto_seed(ip, dp, q, dist)
    seed = int(seed) & (2**64 - 1)

    px = ip.astype(np.float64)
    if kind == "kabsch":
        if image_depth is None:
            raise InvalidInputError("kabsch needs the image-side depth to lift pixels")
        d = image_depth.at(ip)
        usable = d > 0.0
        src = np.zeros((n, 3))
        if usable.any():
            src[usable] = unproject_pixel(px[usable], d[usable], intr)
    else:
        usable = np.ones(n, dtype=bool)
        src = np.zeros((n, 3))

    pool = np.flatnonzero(usable)
    if pool.size < k:
        raise InsufficientDataError("not enough usable correspondences to sample")

    rng = np.random.default_rng(np.random.Philox(key=seed))
    samples = _distinct_samples(rng, config.iterations, k, pool)

    iters = config.iterations
    r_all = np.zeros((iters, 3, 3))
    t_all = np.zeros((iters, 3))
    valid = np.zeros(iters, dtype=bool)
    if kind == "kabsch":
        for lo in range(0, iters, _CHUNK):
            hi = min(lo + _CHUNK, iters)
            sel = samples[lo:hi]
            r, t, ok = _kabsch_batched(src[sel], q[sel])
            r_all[lo:hi], t_all[lo:hi], valid[lo:hi] = r, t, ok
    else:
        rays = _pixel_rays(px, intr)
        for lo in range(0, iters, _CHUNK):
            hi = min(lo + _CHUNK, iters)
            sel = samples[lo:hi]
            rc, tc, ok = _p3p_candidates(rays[sel[:, :3]], q[sel[:, :3]])
            # pick the root that best explains the held-out 4th sample point
            extra = q[sel[:, 3]]
            cam4 = np.einsum("brij,bj->bri", rc, extra) + tc
            dir4 = rays[sel[:, 3]]
            norm4 = np.linalg.norm(cam4, axis=2)
            align = np.einsum("bri,bi->br", cam4, dir4) / np.maximum(norm4, 1e-300)
            score = np.where(ok & (cam4[:, :, 2] > 0.0), 1.0 - align, np.inf)
            pick = np.argmin(score, axis=1)
            rows = np.arange(sel.shape[0])
            r_all[lo:hi] = rc[rows, pick]
            t_all[lo:hi] = tc[rows, pick]
            valid[lo:hi] = np.isfinite(score[rows, pick])

    counts = np.full(iters, -1, dtype=np.int64)
    ranges = [(lo, min(lo + _CHUNK, iters)) for lo in range(0, iters, _CHUNK)]

    def run_chunk(bounds):
        lo, hi = bounds
        out = counts[lo:hi]
        if kind == "kabsch":
            _score_kabsch_chunk(r_all[lo:hi], t_all[lo:hi], src, q, usable, config.tolerance, out)
        else:
            _score_pnp_chunk(r_all[lo:hi], t_all[lo:hi], q, px, intr, config.tolerance, out)
        out[~valid[lo:hi]] = -1

    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run_chunk, ranges))
    else:
        for bounds in ranges:
            run_chunk(bounds)

    best_it = int(np.argmax(counts))  # first maximum = lowest iteration on ties
    if counts[best_it] < k:
        return RegistrationResult(
            Pose.identity(), np.zeros(0, dtype=np.int64), 0, False, kind, seed
        )

    def residuals(rm, tv):
        if kind == "kabsch":
            res = np.linalg.norm(q - (src @ rm.T + tv), axis=1)
            res[~usable] = np.inf
            return res
        cam = q @ rm.T + tv
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = intr.fx * cam[:, 0] / z + intr.cx
            v = intr.fy * cam[:, 1] / z + intr.cy
            res = np.hypot(u - px[:, 0], v - px[:, 1])
        return np.where(z > 1e-12, res, np.inf)

    r_best, t_best = r_all[best_it], t_all[best_it]
    inl = residuals(r_best, t_best) <= config.tolerance

    if kind == "kabsch":
        try:
            refit = kabsch_closed_form(src[inl], q[inl])
            r_best, t_best = refit.rotation, refit.translation
        except (DegenerateInputError, InsufficientDataError):
            pass
        final_pose = Pose(orthonormalize_rotation(r_best), t_best)
    else:
        if int(inl.sum()) >= 4:
            try:
                refit = pnp_minimal(px[inl], q[inl], intr)
                inv = refit.pose.inverse()
                r_best, t_best = inv.rotation, inv.translation
            except NonConvergenceError as e:
                if e.best is not None:
                    inv = e.best.pose.inverse()
                    r_best, t_best = inv.rotation, inv.translation
            except (DegenerateInputError, InsufficientDataError):
                pass
        final_pose = Pose(orthonormalize_rotation(r_best), t_best).inverse()

    final_inl = residuals(r_best, t_best) <= config.tolerance
    idx = np.sort(order[np.flatnonzero(final_inl)])
    count = int(final_inl.sum())
    return RegistrationResult(
        final_pose, idx, count, count >= k + 1, kind, seed
    )
