"""Shared instance generators and fixed fixtures for the test suite.

Generators keep a safety margin away from classification boundaries so that
tolerance-band flips cannot make equivalence assertions ambiguous.
"""

import numpy as np

from blochdisc.core import MepiEnsemble, WeightedEnsemble


def random_unit(rng):
    d = rng.normal(size=3)
    return d / np.linalg.norm(d)


def random_bloch(rng):
    return random_unit(rng) * rng.random() ** (1.0 / 3.0)


def random_ensemble(rng, n, normalized=True):
    w = rng.random(n) + 0.05
    if normalized:
        w = w / w.sum()
    return WeightedEnsemble.of(
        (float(wi), tuple(random_bloch(rng))) for wi in w)


def random_me_instance(rng, n):
    """Random ensemble, clearly trivial or clearly not (margin 1e-5)."""
    while True:
        if rng.random() < 0.3:
            ens = _trivial_me(rng, n)
        else:
            ens = random_ensemble(rng, n)
        w = ens.weights
        pts = ens.points
        eps = w[0] - w
        lam = np.linalg.norm(pts[0] - pts, axis=1)
        margins = eps - lam
        if np.all(margins >= 1e-6) or np.min(margins) <= -1e-5:
            return ens


def _trivial_me(rng, n):
    """Heaviest state dominant, all weighted points huddled around it."""
    w = np.sort(rng.random(n) + 0.05)[::-1]
    w[0] += 1.0  # clear gap to every other weight
    w = w / w.sum()
    center = random_unit(rng) * 0.2 * w[-1] * rng.random()
    states = [(float(w[0]), tuple(center / w[0]))]
    for i in range(1, n):
        gap = w[0] - w[i]
        room = w[i] - np.linalg.norm(center)
        step = min(0.8 * gap, 0.9 * room) * rng.random()
        point = center + random_unit(rng) * step
        states.append((float(w[i]), tuple(point / w[i])))
    return WeightedEnsemble.of(states)


def _random_pair(rng, total, margin):
    """Two-state subensemble with eps < lam - margin (needs a measurement)."""
    while True:
        w1 = total * (0.5 + 0.45 * rng.random())
        w2 = total - w1
        if w2 <= 0.02 * total:
            continue
        n1 = random_bloch(rng)
        n2 = random_bloch(rng)
        lam = np.linalg.norm(w1 * n1 - w2 * n2)
        if w1 - w2 < lam - margin:
            return [(float(w1), tuple(n1)), (float(w2), tuple(n2))]


def random_strict_2x2(rng, margin=1e-3):
    """2x2 instance where early label information is strictly better."""
    from blochdisc.mepi import _mu_hats
    while True:
        t = 0.2 + 0.6 * rng.random()
        m = MepiEnsemble((WeightedEnsemble.of(_random_pair(rng, t, margin)),
                          WeightedEnsemble.of(_random_pair(rng, 1.0 - t, margin))))
        hats = _mu_hats(m)
        if np.linalg.norm(np.cross(hats[0], hats[1])) > margin:
            return m


def _trivial_pair(rng, total, slack=0.8, boundary=False):
    """Two-state subensemble with eps >= lam by construction."""
    while True:
        w1 = total * (0.6 + 0.3 * rng.random())
        w2 = total - w1
        if w2 <= 0.05 * total:
            continue
        gap = w1 - w2
        center = random_unit(rng) * min(0.4 * w2, 0.4 * w1)
        delta_len = gap if boundary else gap * rng.random() * slack
        point2 = center + random_unit(rng) * delta_len
        if np.linalg.norm(point2) >= w2:
            continue
        return [(float(w1), tuple(center / w1)), (float(w2), tuple(point2 / w2))]


def random_trivial_mepi(rng, shape=(2, 2), boundary=False):
    """Instance where guessing the heaviest state per label is optimal."""
    m = len(shape)
    totals = rng.random(m) + 0.5
    totals = totals / totals.sum()
    subs = []
    for b, nb in enumerate(shape):
        if nb == 2:
            subs.append(WeightedEnsemble.of(
                _trivial_pair(rng, float(totals[b]), boundary=boundary)))
            continue
        # general width: heaviest state plus satellites within the weight gap
        while True:
            w = np.sort(rng.random(nb) + 0.05)[::-1]
            w[0] += 1.0
            w = w / w.sum() * float(totals[b])
            center = random_unit(rng) * 0.3 * w[0]
            states = [(float(w[0]), tuple(center / w[0]))]
            ok = True
            for i in range(1, nb):
                gap = w[0] - w[i]
                point = center + random_unit(rng) * gap * rng.random() * 0.8
                if np.linalg.norm(point) >= w[i]:
                    ok = False
                    break
                states.append((float(w[i]), tuple(point / w[i])))
            if ok:
                subs.append(WeightedEnsemble.of(states))
                break
    return MepiEnsemble(tuple(subs))


def random_mepi_one_violated(rng, margin=1e-3):
    """Trivial everywhere except one subensemble that needs a measurement."""
    t = 0.3 + 0.4 * rng.random()
    violated = _random_pair(rng, t, margin)
    quiet = _trivial_pair(rng, 1.0 - t, slack=0.7)
    subs = [WeightedEnsemble.of(violated), WeightedEnsemble.of(quiet)]
    if rng.random() < 0.5:
        subs.reverse()
    return MepiEnsemble(tuple(subs))


def rotation_matrix(rng):
    """Haar-ish random rotation from QR decomposition."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotate_ensemble(ens, rot):
    return WeightedEnsemble.of(
        (s.weight, tuple(rot @ s.bloch.as_array())) for s in ens.states)


def rotate_mepi(mepi, rot):
    return MepiEnsemble(tuple(rotate_ensemble(sub, rot)
                              for sub in mepi.subensembles))


# -- fixed instances used across modules ------------------------------------

def bb84_instance():
    return MepiEnsemble((
        WeightedEnsemble.of([(0.25, (1, 0, 0)), (0.25, (-1, 0, 0))]),
        WeightedEnsemble.of([(0.25, (0, 0, 1)), (0.25, (0, 0, -1))])))


def edge_instance():
    return MepiEnsemble((
        WeightedEnsemble.of([(0.45, (0, 0, 1)), (0.05, (0, 0, 0.8))]),
        WeightedEnsemble.of([(0.25, (1, 0, 0)), (0.25, (-1, 0, 0))])))


def helstrom_pair():
    return WeightedEnsemble.of([(0.5, (0, 0, 1)), (0.5, (1, 0, 0))])


def tetrahedron_ensemble():
    s = 1.0 / np.sqrt(3.0)
    verts = [(s, s, s), (s, -s, -s), (-s, s, -s), (-s, -s, s)]
    return WeightedEnsemble.of((0.25, v) for v in verts)


def boundary_pair():
    """eps_2 == lam_2 == 0.2 exactly up to rounding: m1=0.5z, m2=0.3z."""
    return WeightedEnsemble.of([(0.6, (0, 0, 0.5 / 0.6)), (0.4, (0, 0, 0.75))])
