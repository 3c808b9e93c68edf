"""
Agentes simulados: melhor resposta (BR) e resposta quântica (QR).

Produz o feedback que o moderador observa e os oráculos usados pelo
aprendizado (idealizado, por amostragem e de replay).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, List, Optional, Protocol

import numpy as np
from scipy.special import softmax

from .game_core import DEFAULT_TOL, Game, Mechanism, slice_mechanism

logger = logging.getLogger(__name__)

DEFAULT_UTILITY_BOUND = 10.0
MEMBERSHIP_CHUNK = 256
MAX_MEMBERSHIP_CHUNK = 65536

# Fluxos independentes do gerador: respostas por rodada e verificações de pertinência
_ROUND_STREAM = 0
_MEMBERSHIP_STREAM = 1


class BehaviorModel(str, Enum):
    BEST_RESPONSE = "br"
    QUANTAL_RESPONSE = "qr"


def _belief_slice(game: Game, mechanism: Mechanism, agent: int, rec: int) -> Optional[np.ndarray]:
    """x(rec, ·), ou None quando a recomendação tem marginal nula."""
    if game.radices != mechanism.indexing.radices:
        raise ValueError("Mecanismo e jogo com indexações diferentes")
    belief = slice_mechanism(mechanism, agent, rec)
    if not np.any(belief > 0):
        return None
    return belief


def best_response_set(
    game: Game, mechanism: Mechanism, agent: int, rec: int, tie_tol: float = DEFAULT_TOL
) -> FrozenSet[int]:
    belief = _belief_slice(game, mechanism, agent, rec)
    actions = game.radices[agent]
    if belief is None:
        return frozenset(range(actions))
    values = game.utility_matrix(agent) @ belief
    return frozenset(int(a) for a in np.flatnonzero(values >= values.max() - tie_tol))


def _incentives(game: Game, belief: np.ndarray, agent: int, rec: int) -> np.ndarray:
    matrix = game.utility_matrix(agent)
    phi = (matrix - matrix[rec]) @ belief
    phi[rec] = 0.0
    return phi


def quantal_response_set(
    game: Game, mechanism: Mechanism, agent: int, rec: int, tie_tol: float = DEFAULT_TOL
) -> FrozenSet[int]:
    """Desvios com incentivo ≥ 0; sempre contém a própria recomendação."""
    belief = _belief_slice(game, mechanism, agent, rec)
    actions = game.radices[agent]
    if belief is None:
        return frozenset(range(actions))
    phi = _incentives(game, belief, agent, rec)
    return frozenset(int(a) for a in np.flatnonzero(phi >= -tie_tol))


def response_distribution(
    game: Game,
    mechanism: Mechanism,
    agent: int,
    rec: int,
    model: BehaviorModel,
    beta: float = 0.0,
    tie_tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """
    Probabilidade de cada ação realizada dado que rec foi recomendada.

    BR: uniforme sobre o conjunto de melhor resposta.
    QR: ∝ exp(β·φ) sobre o conjunto QR, zero fora dele.
    """
    actions = game.radices[agent]
    probs = np.zeros(actions)
    if BehaviorModel(model) == BehaviorModel.BEST_RESPONSE:
        members = sorted(best_response_set(game, mechanism, agent, rec, tie_tol))
        probs[members] = 1.0 / len(members)
        return probs

    members = sorted(quantal_response_set(game, mechanism, agent, rec, tie_tol))
    belief = _belief_slice(game, mechanism, agent, rec)
    if belief is None:
        probs[members] = 1.0 / len(members)
        return probs
    phi = _incentives(game, belief, agent, rec)
    probs[members] = softmax(beta * phi[members])
    return probs


def membership_sample_budget(actions: int, beta: float, utility_bound: float, delta: float) -> int:
    """⌈m_i · e^{βC} · ln(1/δ)⌉ amostras para decidir pertinência com prob. 1 − δ."""
    if not 0 < delta < 1:
        raise ValueError(f"delta precisa estar em (0, 1): {delta}")
    return math.ceil(actions * math.exp(beta * utility_bound) * math.log(1.0 / delta))


@dataclass(frozen=True)
class FeedbackRecord:
    """Uma rodada: mecanismo, perfil recomendado e perfil realizado."""

    mechanism: Mechanism
    recommended: int
    realized: int
    round: int

    def __post_init__(self):
        self.mechanism.indexing.check_profile(self.recommended)
        self.mechanism.indexing.check_profile(self.realized)


class AgentPopulation:
    """
    População simulada com o jogo verdadeiro (oculto do moderador).

    Cada sorteio usa um gerador derivado de (semente, fluxo, agente, contador),
    então repetir uma rodada não depende da ordem das chamadas anteriores.
    """

    def __init__(
        self,
        game: Game,
        model: BehaviorModel = BehaviorModel.BEST_RESPONSE,
        beta: float = 0.0,
        seed: int = 0,
        utility_bound: float = DEFAULT_UTILITY_BOUND,
        tie_tol: float = DEFAULT_TOL,
    ):
        if not math.isfinite(beta) or beta < 0:
            raise ValueError(f"beta precisa ser finito e não negativo: {beta}")
        if seed < 0:
            raise ValueError(f"Semente precisa ser não negativa: {seed}")
        self.game = game
        self.model = BehaviorModel(model)
        self.beta = float(beta)
        self.seed = int(seed)
        self.utility_bound = float(utility_bound)
        self.tie_tol = tie_tol
        self.samples_drawn = 0
        self._round = 0
        self._checks = 0

    def _rng(self, stream: int, agent: int, counter: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream, agent, counter])

    def response_distribution(self, mechanism: Mechanism, agent: int, rec: int) -> np.ndarray:
        return response_distribution(
            self.game, mechanism, agent, rec, self.model, self.beta, self.tie_tol
        )

    def response_set(self, mechanism: Mechanism, agent: int, rec: int) -> FrozenSet[int]:
        if self.model == BehaviorModel.BEST_RESPONSE:
            return best_response_set(self.game, mechanism, agent, rec, self.tie_tol)
        return quantal_response_set(self.game, mechanism, agent, rec, self.tie_tol)

    def sample_response(self, mechanism: Mechanism, recommended: int, round_index: Optional[int] = None) -> int:
        """Perfil realizado: cada agente responde de forma independente."""
        if round_index is None:
            self._round += 1
            round_index = self._round
        indexing = self.game.indexing
        recommended_actions = indexing.decode(recommended)
        realized = []
        for agent, rec in enumerate(recommended_actions):
            probs = self.response_distribution(mechanism, agent, rec)
            rng = self._rng(_ROUND_STREAM, agent, round_index)
            realized.append(int(rng.choice(probs.size, p=probs)))
        self.samples_drawn += 1
        return indexing.encode(realized)

    def verify_membership(self, mechanism: Mechanism, agent: int, rec: int, dev: int, delta: float) -> bool:
        """
        Recomenda rec repetidamente até observar dev ou esgotar o orçamento.

        Falso negativo com probabilidade ≤ δ quando dev está no conjunto QR.
        """
        if self.model != BehaviorModel.QUANTAL_RESPONSE:
            raise ValueError("Verificação por amostragem só existe no modo QR")
        actions = self.game.radices[agent]
        budget = membership_sample_budget(actions, self.beta, self.utility_bound, delta)
        self.game.indexing.check_action(agent, dev)
        if dev == rec:
            self.samples_drawn += 1
            return True

        probs = self.response_distribution(mechanism, agent, rec)
        rng = self._rng(_MEMBERSHIP_STREAM, agent, self._checks)
        self._checks += 1
        used, found = 0, False
        chunk = MEMBERSHIP_CHUNK
        if probs[dev] == 0:
            # dev fora do conjunto QR: nenhuma amostra o produziria
            used = budget
        while used < budget and not found:
            size = min(chunk, budget - used)
            hits = np.flatnonzero(rng.choice(actions, size=size, p=probs) == dev)
            found = bool(hits.size)
            used += int(hits[0]) + 1 if found else size
            chunk = min(2 * chunk, MAX_MEMBERSHIP_CHUNK)
        self.samples_drawn += used
        logger.debug(
            f"Pertinência agente={agent} rec={rec} dev={dev}: "
            f"{'observado' if found else 'ausente'} após {used}/{budget} amostras"
        )
        return found


class ResponseOracle(Protocol):
    """Interface consumida pelo aprendizado QR."""

    def response_set(self, mechanism: Mechanism, agent: int, rec: int) -> FrozenSet[int]: ...

    def is_member(self, mechanism: Mechanism, agent: int, rec: int, dev: int) -> bool: ...


class IdealizedOracle:
    """Devolve o conjunto exato (sem amostragem)."""

    def __init__(self, game: Game, model: BehaviorModel = BehaviorModel.QUANTAL_RESPONSE, tie_tol: float = DEFAULT_TOL):
        self.population = AgentPopulation(game, model, tie_tol=tie_tol)

    def response_set(self, mechanism: Mechanism, agent: int, rec: int) -> FrozenSet[int]:
        return self.population.response_set(mechanism, agent, rec)

    def is_member(self, mechanism: Mechanism, agent: int, rec: int, dev: int) -> bool:
        return dev in self.response_set(mechanism, agent, rec)


class SampledOracle:
    """Decide pertinência por amostragem repetida (verify_membership)."""

    def __init__(self, population: AgentPopulation, delta: float):
        if not 0 < delta < 1:
            raise ValueError(f"delta precisa estar em (0, 1): {delta}")
        self.population = population
        self.delta = delta

    def response_set(self, mechanism: Mechanism, agent: int, rec: int) -> FrozenSet[int]:
        actions = self.population.game.radices[agent]
        return frozenset(
            a for a in range(actions) if self.is_member(mechanism, agent, rec, a)
        )

    def is_member(self, mechanism: Mechanism, agent: int, rec: int, dev: int) -> bool:
        return self.population.verify_membership(mechanism, agent, rec, dev, self.delta)


def _query_entry(kind: str, mechanism: Mechanism, agent: int, rec: int, dev: Optional[int]) -> dict:
    return {
        "query": kind,
        "agent": agent,
        "rec": rec,
        "dev": dev,
        "mechanism": {"digest": mechanism.digest(), "support": mechanism.support()},
    }


class RecordingOracle:
    """Repassa as consultas a outro oráculo e guarda uma entrada por consulta."""

    def __init__(self, inner: ResponseOracle):
        self.inner = inner
        self.entries: List[dict] = []

    def response_set(self, mechanism: Mechanism, agent: int, rec: int) -> FrozenSet[int]:
        result = self.inner.response_set(mechanism, agent, rec)
        entry = _query_entry("sign", mechanism, agent, rec, None)
        entry["response"] = sorted(result)
        self.entries.append(entry)
        return result

    def is_member(self, mechanism: Mechanism, agent: int, rec: int, dev: int) -> bool:
        result = self.inner.is_member(mechanism, agent, rec, dev)
        entry = _query_entry("ratio", mechanism, agent, rec, dev)
        entry["response"] = bool(result)
        self.entries.append(entry)
        return result


class ReplayOracle:
    """
    Responde a partir de uma transcrição gravada por RecordingOracle.

    As consultas precisam chegar na mesma ordem, com o mesmo mecanismo.
    """

    def __init__(self, entries: List[dict]):
        self.entries = list(entries)
        self._position = 0

    def _next(self, mechanism: Mechanism, agent: int, rec: int, dev: Optional[int]) -> dict:
        if self._position >= len(self.entries):
            raise ValueError("Transcrição esgotada durante o replay")
        entry = self.entries[self._position]
        kind = "sign" if dev is None else "ratio"
        expected = (
            entry["query"],
            entry["mechanism"]["digest"],
            entry["agent"],
            entry["rec"],
            entry.get("dev"),
        )
        received = (kind, mechanism.digest(), agent, rec, dev)
        if expected != received:
            raise ValueError(
                f"Consulta {self._position} diverge da transcrição: {received} != {expected}"
            )
        self._position += 1
        return entry

    @property
    def exhausted(self) -> bool:
        return self._position == len(self.entries)

    def response_set(self, mechanism: Mechanism, agent: int, rec: int) -> FrozenSet[int]:
        return frozenset(self._next(mechanism, agent, rec, None)["response"])

    def is_member(self, mechanism: Mechanism, agent: int, rec: int, dev: int) -> bool:
        return bool(self._next(mechanism, agent, rec, dev)["response"])
