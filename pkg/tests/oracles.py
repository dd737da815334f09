"""Independent reference implementations used only to derive expected test
values. Deliberately brute-force and separate from the library code paths."""

import itertools
import math

import numpy as np


def brute_force_hull(points, tol=1e-9):
    """O(n^3) hull: a point is a hull vertex iff some half-plane through it
    contains all points. Returns CCW vertex array."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    hull_idx = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = pts[j] - pts[i]
            if np.linalg.norm(d) < tol:
                continue
            rel = pts - pts[i]
            cr = d[0] * rel[:, 1] - d[1] * rel[:, 0]
            if np.all(cr >= -tol) or np.all(cr <= tol):
                hull_idx.append(i)
                break
    uniq = []
    for i in hull_idx:
        if not any(np.linalg.norm(pts[i] - pts[k]) < tol for k in uniq):
            uniq.append(i)
    hull_pts = pts[uniq]
    c = hull_pts.mean(axis=0)
    ang = np.arctan2(hull_pts[:, 1] - c[1], hull_pts[:, 0] - c[0])
    hull_pts = hull_pts[np.argsort(ang)]
    # Drop collinear interior vertices.
    out = []
    m = len(hull_pts)
    for i in range(m):
        a, b, cc = hull_pts[(i - 1) % m], hull_pts[i], hull_pts[(i + 1) % m]
        u, w = b - a, cc - b
        if abs(u[0] * w[1] - u[1] * w[0]) > tol:
            out.append(b)
    return np.array(out)


def clip_polygon_halfplane(verts, line_point, line_dir, keep_point, tol=1e-12):
    """Edge-parametric clip of a convex polygon by the closed half-plane that
    contains keep_point."""
    line_point = np.asarray(line_point, dtype=float)
    d = np.asarray(line_dir, dtype=float)
    d = d / np.linalg.norm(d)

    def off(p):
        r = np.asarray(p, dtype=float) - line_point
        return d[0] * r[1] - d[1] * r[0]

    sgn = 1.0 if off(keep_point) > 0 else -1.0
    verts = np.asarray(verts, dtype=float)
    n = len(verts)
    out = []
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        oa, ob = sgn * off(a), sgn * off(b)
        if oa >= -tol:
            out.append(a)
        if (oa > tol and ob < -tol) or (oa < -tol and ob > tol):
            t = oa / (oa - ob)
            out.append(a + t * (b - a))
    dedup = []
    for q in out:
        if not dedup or np.linalg.norm(q - dedup[-1]) > 1e-9:
            dedup.append(q)
    if len(dedup) > 1 and np.linalg.norm(dedup[0] - dedup[-1]) <= 1e-9:
        dedup.pop()
    return np.array(dedup)


def weighted_tls_line(points, weights):
    """Weighted total least squares via explicit covariance accumulation and
    numpy's symmetric eigendecomposition. Returns (centroid, direction)."""
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    c = np.zeros(2)
    for wi, p in zip(w, pts):
        c += wi * p
    c /= w.sum()
    cov = np.zeros((2, 2))
    for wi, p in zip(w, pts):
        r = p - c
        cov += wi * np.outer(r, r)
    cov /= w.sum()
    evals, evecs = np.linalg.eigh(cov)
    direction = evecs[:, np.argmax(evals)]
    return c, direction


def shoelace(verts):
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def best_four_vertex_subset_area(verts):
    """Exhaustive search over all 4-vertex subsets (kept in ring order)."""
    v = np.asarray(verts, dtype=float)
    n = len(v)
    best = 0.0
    for idx in itertools.combinations(range(n), 4):
        best = max(best, shoelace(v[list(idx)]))
    return best


def point_in_convex_polygon(verts, p, tol=1e-9):
    v = np.asarray(verts, dtype=float)
    p = np.asarray(p, dtype=float)
    n = len(v)
    if n == 1:
        return np.linalg.norm(p - v[0]) <= tol
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        e = b - a
        if np.linalg.norm(e) < 1e-15:
            continue
        r = p - a
        if e[0] * r[1] - e[1] * r[0] < -tol:
            return False
    return True


def random_convex_polygon(rng, n_target, radius=0.1, center=(0.0, 0.0)):
    """Random convex polygon as the hull of points on a noisy circle."""
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=n_target))
    radii = radius * rng.uniform(0.6, 1.0, size=n_target)
    pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    pts += np.asarray(center, dtype=float)
    return brute_force_hull(pts)


def solve_eq_qp(H, g, E, d):
    """Equality-constrained QP min 0.5 x'Hx + g'x s.t. Ex = d via dense KKT."""
    n = H.shape[0]
    m = E.shape[0] if E is not None and E.size else 0
    if m == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = H
    kkt[:n, n:] = E.T
    kkt[n:, :n] = E
    rhs = np.concatenate([-g, d])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n:]


def enumerate_box_qp(H, g, E, d, lower, upper, tol=1e-9):
    """Exhaustive active-set enumeration for a strictly convex QP with
    equality constraints and (possibly one-sided) box bounds.

    For every subset of bound constraints, clamp those variables, solve the
    reduced KKT system, and return the unique point satisfying primal
    feasibility and dual sign conditions.
    """
    n = H.shape[0]
    bounded = [i for i in range(n) if np.isfinite(lower[i]) or np.isfinite(upper[i])]
    if len(bounded) > 14:
        raise ValueError("too many bounded variables to enumerate")
    m = E.shape[0] if E is not None and E.size else 0

    choices = []
    for i in bounded:
        opts = [None]
        if np.isfinite(lower[i]):
            opts.append((i, "lo"))
        if np.isfinite(upper[i]):
            opts.append((i, "hi"))
        choices.append(opts)

    best = None
    for combo in itertools.product(*choices):
        active = [c for c in combo if c is not None]
        fixed = {i: (lower[i] if side == "lo" else upper[i]) for i, side in active}
        free = [i for i in range(n) if i not in fixed]
        xf = np.zeros(n)
        for i, val in fixed.items():
            xf[i] = val
        nf = len(free)
        Hff = H[np.ix_(free, free)]
        gf = g[free] + H[np.ix_(free, list(fixed))] @ np.array(list(fixed.values())) if fixed else g[free]
        if m:
            Ef = E[:, free]
            df = d - (E[:, list(fixed)] @ np.array(list(fixed.values())) if fixed else 0.0)
        else:
            Ef, df = None, None
        kdim = nf + m
        kkt = np.zeros((kdim, kdim))
        kkt[:nf, :nf] = Hff
        rhs = np.zeros(kdim)
        rhs[:nf] = -gf
        if m:
            # Stationarity convention: H x + g - E' lam = 0.
            kkt[:nf, nf:] = -Ef.T
            kkt[nf:, :nf] = Ef
            rhs[nf:] = df
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        x = xf.copy()
        x[free] = sol[:nf]
        lam = sol[nf:] if m else np.zeros(0)
        if np.any(x < lower - tol) or np.any(x > upper + tol):
            continue
        if m and np.abs(E @ x - d).max() > 1e-7:
            continue
        stat = H @ x + g - (E.T @ lam if m else 0.0)
        if np.abs(stat[free]).max(initial=0.0) > 1e-6:
            continue
        grad = H @ x + g - (E.T @ lam if m else 0.0)
        ok = True
        for i, side in active:
            if side == "lo" and grad[i] < -tol:
                ok = False
                break
            if side == "hi" and grad[i] > tol:
                ok = False
                break
        for i in free:
            if i in bounded and abs(grad[i]) > 1e-6:
                # Free variable must be stationary; handled implicitly by KKT.
                pass
        if ok:
            obj = 0.5 * x @ H @ x + g @ x
            if best is None or obj < best[1] - 1e-12:
                best = (x, obj, lam)
    if best is None:
        return None
    return best[0]
