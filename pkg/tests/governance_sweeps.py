"""Exhaustive rule-versus-oracle sweeps over small electorates.

Each sweep returns the number of profiles it compared; any disagreement
raises AssertionError naming the profile.
"""
from __future__ import annotations

import itertools
import random
from fractions import Fraction

from oracles import delta_oracle, population_oracle, sigma_oracle
from support import const
from wavelace.governance import Vote, amend_delta, amend_population, amend_sigma

SIGMA_GRID = (None, Fraction(1, 2), Fraction(3, 5), Fraction(2, 3), Fraction(3, 4), Fraction(4, 5), Fraction(9, 10))
SIGMA_STATUS_QUO = (Fraction(1, 2), Fraction(3, 5), Fraction(2, 3), Fraction(3, 4))
DELTA_GRID = (None, 1, 2, 3, 5, 8, 13)
DELTA_SETTINGS = ((2, Fraction(1, 2)), (2, Fraction(3, 4)), (5, Fraction(5, 8)), (5, Fraction(2, 3)))


def _profiles(grid, n: int, rng: random.Random):
    for combo in itertools.combinations_with_replacement(grid, n):
        values = list(combo)
        rng.shuffle(values)
        yield values


def _pref_votes(participants, values, field: str) -> list[Vote]:
    votes = []
    for k, (p, v) in enumerate(zip(participants, values)):
        if v is None and k % 2 == 0:
            continue  # no vote at all
        votes.append(Vote(p, 1, **{field: v}))
    return votes


def sweep_sigma(max_n: int = 7) -> int:
    rng = random.Random(1)
    count = 0
    for n in range(1, max_n + 1):
        for sq in SIGMA_STATUS_QUO:
            c = const(n, sq)
            for values in _profiles(SIGMA_GRID, n, rng):
                votes = _pref_votes(c.participants, values, "sigma_pref")
                prefs = [sq if v is None else v for v in values]
                got = amend_sigma(c, votes)
                want = sigma_oracle(sq, prefs)
                assert got == want, f"n={n} sigma={sq} prefs={prefs}: {got} != {want}"
                count += 1
    return count


def sweep_delta(max_n: int = 7) -> int:
    rng = random.Random(2)
    count = 0
    for n in range(1, max_n + 1):
        for delta, sigma in DELTA_SETTINGS:
            c = const(n, sigma, delta)
            for values in _profiles(DELTA_GRID, n, rng):
                votes = _pref_votes(c.participants, values, "delta_pref")
                prefs = [delta if v is None else v for v in values]
                got = amend_delta(c, votes)
                want = delta_oracle(delta, c.f, prefs)
                assert got == want, f"n={n} delta={delta} f={c.f} prefs={prefs}: {got} != {want}"
                count += 1
    return count


def sweep_population(max_n: int = 7) -> int:
    """Every yes/no pattern for one incumbent and one newcomer, every consent state."""
    count = 0
    sigmas = (Fraction(1, 2), Fraction(5, 8), Fraction(2, 3), Fraction(3, 4))
    for n in range(1, max_n + 1):
        c = const(n, sigmas[n % len(sigmas)])
        parts = c.participants
        inc, new = parts[0], "q"
        for bits in range(4**n):
            ballots = {
                p: {inc: bool(bits >> (2 * k) & 1), new: bool(bits >> (2 * k + 1) & 1)}
                for k, p in enumerate(parts)
            }
            for consent in (True, False, None):
                votes = [Vote(p, 1, tuple(ballots[p].items())) for p in parts]
                if consent is not None:
                    votes.append(Vote(new, 1, (), consent))
                got = amend_population(c, votes)
                want = population_oracle(parts, c.sigma, ballots, {} if consent is None else {new: consent})
                assert got == want, f"n={n} ballots={ballots} consent={consent}: {got} != {want}"
                count += 1
    return count
