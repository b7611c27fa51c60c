"""Independent reference implementations shared by module and acceptance tests.

These deliberately use plain loops and breadth-first search so they share no
code path with the library they check.
"""

import numpy as np


def flood_fill_euler(bits):
    """BFS component/hole counting on a 0/1 grid (8-conn fg, 4-conn bg)."""
    h, w = bits.shape
    seen = np.zeros((h, w), dtype=bool)

    def flood(y0, x0, value, neighbors):
        stack = [(y0, x0)]
        seen[y0, x0] = True
        while stack:
            y, x = stack.pop()
            for dy, dx in neighbors:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and bits[ny, nx] == value:
                    seen[ny, nx] = True
                    stack.append((ny, nx))

    eight = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    four = [(-1, 0), (1, 0), (0, -1), (0, 1)]

    components = 0
    for y in range(h):
        for x in range(w):
            if bits[y, x] == 1 and not seen[y, x]:
                components += 1
                flood(y, x, 1, eight)

    seen[:] = False
    # background connected to the border is the outside, not a hole
    for y in range(h):
        for x in range(w):
            if (y in (0, h - 1) or x in (0, w - 1)) and bits[y, x] == 0 and not seen[y, x]:
                flood(y, x, 0, four)
    holes = 0
    for y in range(h):
        for x in range(w):
            if bits[y, x] == 0 and not seen[y, x]:
                holes += 1
                flood(y, x, 0, four)
    return components - holes


def brute_force_eer(genuine, imposter):
    """Sweep every distinct score value, midpoint at min |FAR - FRR|."""
    genuine = np.asarray(genuine, dtype=float)
    imposter = np.asarray(imposter, dtype=float)
    best = None
    for t in np.unique(np.concatenate([genuine, imposter])):
        far = float(np.mean(imposter >= t))
        frr = float(np.mean(genuine < t))
        key = abs(far - frr)
        if best is None or key < best[0] - 1e-15:
            best = (key, (far + frr) / 2.0)
    return best[1]


def planted_problem(seed, n_features=100, n_informative=10, classes=6, per_class=6):
    """Feature-selection benchmark: class structure on a hidden subset."""
    rng = np.random.default_rng(seed)
    informative = np.sort(rng.choice(n_features, size=n_informative, replace=False))
    n = classes * per_class
    X = rng.uniform(60.0, 200.0, size=(n, n_features))
    y = np.repeat(np.arange(classes), per_class)
    for j in informative:
        mu = rng.uniform(60.0, 200.0, size=classes)
        X[:, j] = mu[y] + rng.normal(0.0, 12.0, size=n)
    return X, y, set(int(i) for i in informative)
