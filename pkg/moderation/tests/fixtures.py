"""
Jogos e helpers compartilhados pelos testes.
"""

import numpy as np

from moderation.services.game_core import Game, Mechanism, ProfileIndexing

COUNTEREXAMPLE_LABELS = [["a1", "a2", "a3", "a4"], ["b1", "b2"]]

# Agente 1: pontos (u(a, b1), u(a, b2)) de cada ação a
COUNTEREXAMPLE_U_POINTS = [(0, 8), (3, 6.5), (5, 4.5), (8, 0)]
COUNTEREXAMPLE_V_POINTS = [(0, 8), (2, 7), (6, 3), (8, 0)]

# Agente 2: linhas b1 e b2 sobre as ações do agente 1
OPPONENT_ROWS = [(2, 5, 3, 6), (4, 3, 6, 2)]


def _counterexample(points) -> Game:
    indexing = ProfileIndexing((4, 2))
    first = indexing.from_agent(np.array(points, dtype=float), 0)
    second = indexing.from_agent(np.array(OPPONENT_ROWS, dtype=float), 1)
    return Game(COUNTEREXAMPLE_LABELS, np.stack([first, second]))


def counterexample_u() -> Game:
    return _counterexample(COUNTEREXAMPLE_U_POINTS)


def counterexample_v() -> Game:
    return _counterexample(COUNTEREXAMPLE_V_POINTS)


def dominant_game() -> Game:
    """Dilema do prisioneiro: defect (ação 1) é estritamente dominante."""
    return Game(
        [["cooperate", "defect"], ["cooperate", "defect"]],
        [[3, 0, 5, 1], [3, 5, 0, 1]],
        ["row", "column"],
    )


def constant_game(radices=(2, 2), value=1.0) -> Game:
    indexing = ProfileIndexing(radices)
    labels = [[f"a{i + 1}_{k + 1}" for k in range(m)] for i, m in enumerate(radices)]
    return Game(labels, np.full((len(radices), indexing.size), value))


def random_game(radices, rng, low=1.0, high=10.0) -> Game:
    """Utilidades uniformes, sem exigir genericidade."""
    indexing = ProfileIndexing(tuple(radices))
    labels = [[f"a{i + 1}_{k + 1}" for k in range(m)] for i, m in enumerate(radices)]
    return Game(labels, rng.uniform(low, high, size=(len(radices), indexing.size)))


def random_mechanism(indexing: ProfileIndexing, rng) -> Mechanism:
    return Mechanism(rng.dirichlet(np.ones(indexing.size)), indexing)
