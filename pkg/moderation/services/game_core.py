"""
Núcleo dos jogos em forma normal.

Define a indexação dos perfis de ações (mista, agente 1 mais significativo),
o jogo com suas utilidades, os mecanismos de recomendação e os incentivos a
desviar. Todos os outros serviços usam estas mesmas convenções.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import PreconditionError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
PROB_SUM_TOL = 1e-12


def _readonly(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class ProfileIndexing:
    """
    Indexação mista dos perfis: índice = Σ_j a_j · ∏_{k>j} m_k.

    É exatamente a ordem C do numpy para um tensor de forma (m_1, ..., m_n),
    então os fatiamentos usam reshape/moveaxis em vez de laços.
    """

    radices: Tuple[int, ...]

    def __post_init__(self):
        radices = tuple(int(m) for m in self.radices)
        if not radices:
            raise ValueError("A indexação precisa de pelo menos um agente")
        if any(m < 1 for m in radices):
            raise ValueError(f"Tamanhos de ação inválidos: {radices}")
        object.__setattr__(self, "radices", radices)

    @property
    def agent_count(self) -> int:
        return len(self.radices)

    @property
    def size(self) -> int:
        return math.prod(self.radices)

    def check_agent(self, agent: int):
        if not 0 <= agent < self.agent_count:
            raise IndexError(f"Agente fora do intervalo: {agent}")

    def check_action(self, agent: int, action: int):
        self.check_agent(agent)
        if not 0 <= action < self.radices[agent]:
            raise IndexError(f"Ação {action} fora do intervalo do agente {agent}")

    def check_profile(self, index: int):
        if not 0 <= index < self.size:
            raise IndexError(f"Perfil fora do intervalo: {index}")

    def encode(self, actions: Sequence[int]) -> int:
        if len(actions) != self.agent_count:
            raise ValueError(f"Esperado {self.agent_count} ações, recebido {len(actions)}")
        for agent, action in enumerate(actions):
            self.check_action(agent, action)
        return int(np.ravel_multi_index(tuple(int(a) for a in actions), self.radices))

    def decode(self, index: int) -> Tuple[int, ...]:
        self.check_profile(index)
        return tuple(int(a) for a in np.unravel_index(int(index), self.radices))

    def without(self, agent: int) -> "ProfileIndexing":
        """Indexação de A_{-i}: mesma regra com o agente removido."""
        self.check_agent(agent)
        rest = self.radices[:agent] + self.radices[agent + 1 :]
        return ProfileIndexing(rest or (1,))

    def opponent_count(self, agent: int) -> int:
        self.check_agent(agent)
        return self.size // self.radices[agent]

    def split(self, index: int, agent: int) -> Tuple[int, int]:
        """Perfil -> (ação do agente, índice em A_{-i})."""
        actions = self.decode(index)
        rest = actions[:agent] + actions[agent + 1 :]
        return actions[agent], self.without(agent).encode(rest) if rest else 0

    def join(self, agent: int, action: int, opponent_index: int) -> int:
        rest = self.without(agent).decode(opponent_index)
        if self.agent_count == 1:
            rest = ()
        return self.encode(rest[:agent] + (action,) + rest[agent:])

    def by_agent(self, values: np.ndarray, agent: int) -> np.ndarray:
        """Vetor sobre A -> matriz (m_i, d_i), linha a = valores em (a, ·)."""
        self.check_agent(agent)
        tensor = np.asarray(values).reshape(self.radices)
        return np.moveaxis(tensor, agent, 0).reshape(self.radices[agent], -1)

    def from_agent(self, matrix: np.ndarray, agent: int) -> np.ndarray:
        """Inverso de by_agent."""
        self.check_agent(agent)
        rest = self.radices[:agent] + self.radices[agent + 1 :]
        tensor = np.asarray(matrix).reshape((self.radices[agent],) + rest)
        return np.moveaxis(tensor, 0, agent).reshape(-1)


@dataclass(frozen=True, eq=False)
class Game:
    """
    Jogo finito em forma normal.

    utilities tem forma (n, M): a linha i é u_i(a) na ordem de ProfileIndexing.
    Com generic=True a construção falha se houver ação fracamente dominada.
    """

    action_labels: Tuple[Tuple[str, ...], ...]
    utilities: np.ndarray
    agent_names: Tuple[str, ...] = ()
    generic: bool = False
    indexing: ProfileIndexing = field(init=False, repr=False)

    def __post_init__(self):
        labels = tuple(tuple(str(a) for a in actions) for actions in self.action_labels)
        if len(labels) < 2:
            raise ValueError("Um jogo precisa de pelo menos 2 agentes")
        if any(len(actions) < 2 for actions in labels):
            raise ValueError("Cada agente precisa de pelo menos 2 ações")
        indexing = ProfileIndexing(tuple(len(actions) for actions in labels))

        utilities = np.array(self.utilities, dtype=float)
        if utilities.shape != (len(labels), indexing.size):
            raise ValueError(
                f"Utilidades com forma {utilities.shape}, esperado "
                f"({len(labels)}, {indexing.size})"
            )
        if not np.all(np.isfinite(utilities)):
            raise ValueError("Utilidades precisam ser finitas")

        names = tuple(self.agent_names) or tuple(
            f"agent_{i + 1}" for i in range(len(labels))
        )
        if len(names) != len(labels):
            raise ValueError("Quantidade de nomes difere da quantidade de agentes")

        object.__setattr__(self, "action_labels", labels)
        object.__setattr__(self, "utilities", _readonly(utilities))
        object.__setattr__(self, "agent_names", names)
        object.__setattr__(self, "indexing", indexing)

        if self.generic:
            dominated = detect_weak_dominance(self)
            if dominated:
                raise PreconditionError(
                    f"Jogo marcado como genérico tem ações fracamente dominadas: {dominated}"
                )

    @classmethod
    def from_tensors(
        cls,
        tensors: Sequence[np.ndarray],
        action_labels: Optional[Sequence[Sequence[str]]] = None,
        **kwargs,
    ) -> "Game":
        """Monta o jogo a partir de um tensor de forma (m_1, ..., m_n) por agente."""
        arrays = [np.asarray(t, dtype=float) for t in tensors]
        shape = arrays[0].shape
        if action_labels is None:
            action_labels = [
                [f"a{i + 1}_{k + 1}" for k in range(m)] for i, m in enumerate(shape)
            ]
        return cls(
            action_labels=action_labels,
            utilities=np.stack([a.reshape(-1) for a in arrays]),
            **kwargs,
        )

    @property
    def agent_count(self) -> int:
        return len(self.action_labels)

    @property
    def radices(self) -> Tuple[int, ...]:
        return self.indexing.radices

    @property
    def profile_count(self) -> int:
        return self.indexing.size

    def opponent_count(self, agent: int) -> int:
        return self.indexing.opponent_count(agent)

    def utility_matrix(self, agent: int) -> np.ndarray:
        """Matriz (m_i, d_i) com u_i(a, ·) na linha a."""
        return self.indexing.by_agent(self.utilities[agent], agent)

    def with_utility_matrix(self, agent: int, matrix: np.ndarray) -> "Game":
        utilities = np.array(self.utilities)
        utilities[agent] = self.indexing.from_agent(matrix, agent)
        return Game(self.action_labels, utilities, self.agent_names)

    def scaled(self, factor: float) -> "Game":
        """Mesma escala positiva em todos os agentes (jogo equivalente)."""
        if not factor > 0:
            raise ValueError(f"Fator de escala precisa ser positivo: {factor}")
        return Game(self.action_labels, self.utilities * factor, self.agent_names)


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Distribuição x sobre os perfis de ações."""

    probs: np.ndarray
    indexing: ProfileIndexing

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if probs.size != self.indexing.size:
            raise ValueError(
                f"Mecanismo com {probs.size} entradas, esperado {self.indexing.size}"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("Probabilidades precisam ser finitas e não negativas")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"Probabilidades somam {probs.sum()!r}, esperado 1")
        object.__setattr__(self, "probs", _readonly(probs))

    @classmethod
    def uniform(cls, indexing: ProfileIndexing) -> "Mechanism":
        return cls(np.full(indexing.size, 1.0 / indexing.size), indexing)

    @classmethod
    def point_mass(cls, indexing: ProfileIndexing, profile: int) -> "Mechanism":
        indexing.check_profile(profile)
        probs = np.zeros(indexing.size)
        probs[profile] = 1.0
        return cls(probs, indexing)

    @classmethod
    def from_weights(
        cls, weights: Iterable[float], indexing: ProfileIndexing, clip_tol: float = 1e-9
    ) -> "Mechanism":
        """Normaliza pesos não negativos; negativos minúsculos (ruído de LP) viram 0."""
        weights = np.array(list(weights), dtype=float)
        if np.any(weights < -clip_tol):
            raise ValueError(f"Peso negativo: {weights.min()!r}")
        weights = np.where(weights < PROB_SUM_TOL, 0.0, weights)
        total = weights.sum()
        if not total > 0:
            raise ValueError("Pesos somam zero")
        return cls(weights / total, indexing)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.indexing.size, p=self.probs))

    def marginal(self, agent: int, action: int) -> float:
        self.indexing.check_action(agent, action)
        return float(self.indexing.by_agent(self.probs, agent)[action].sum())

    def support(self) -> List[List[float]]:
        """Pares [índice, probabilidade] das entradas positivas."""
        return [[int(k), float(self.probs[k])] for k in np.flatnonzero(self.probs)]

    def digest(self) -> str:
        return hashlib.sha256(self.probs.tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DifferenceVector:
    """w_i(from, to) = u_i(to, ·) − u_i(from, ·) sobre A_{-i}."""

    agent: int
    from_action: int
    to_action: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.array(self.values, dtype=float)))


@dataclass(frozen=True)
class CEReport:
    is_ce: bool
    max_violation: float
    worst: Optional[Tuple[int, int, int]]


def _check_compatible(game: Game, mechanism: Mechanism):
    if game.radices != mechanism.indexing.radices:
        raise ValueError(
            f"Mecanismo indexado por {mechanism.indexing.radices}, jogo por {game.radices}"
        )


def slice_mechanism(mechanism: Mechanism, agent: int, action: int) -> np.ndarray:
    """x(a_i, ·) na ordem de A_{-i}."""
    mechanism.indexing.check_action(agent, action)
    return mechanism.indexing.by_agent(mechanism.probs, agent)[action].copy()


def difference_vector(game: Game, agent: int, from_action: int, to_action: int) -> DifferenceVector:
    game.indexing.check_action(agent, from_action)
    game.indexing.check_action(agent, to_action)
    if from_action == to_action:
        raise ValueError("Vetor de diferença exige ações distintas")
    matrix = game.utility_matrix(agent)
    return DifferenceVector(agent, from_action, to_action, matrix[to_action] - matrix[from_action])


def incentive(game: Game, mechanism: Mechanism, agent: int, rec: int, dev: int) -> float:
    """φ_i(rec, dev, x) = ⟨x(rec, ·), w_i(rec, dev)⟩."""
    _check_compatible(game, mechanism)
    game.indexing.check_action(agent, rec)
    game.indexing.check_action(agent, dev)
    if rec == dev:
        return 0.0
    return float(
        slice_mechanism(mechanism, agent, rec) @ difference_vector(game, agent, rec, dev).values
    )


def incentive_matrix(game: Game, mechanism: Mechanism, agent: int) -> np.ndarray:
    """Matriz Φ[rec, dev] de todos os incentivos do agente (diagonal = 0)."""
    _check_compatible(game, mechanism)
    slices = mechanism.indexing.by_agent(mechanism.probs, agent)
    utilities = game.utility_matrix(agent)
    values = slices @ utilities.T
    phi = values - np.diag(values)[:, None]
    np.fill_diagonal(phi, 0.0)
    return phi


def is_epsilon_ce(game: Game, mechanism: Mechanism, eps: float) -> CEReport:
    if eps < 0:
        raise ValueError(f"eps precisa ser não negativo: {eps}")
    worst = None
    max_violation = -math.inf
    for agent in range(game.agent_count):
        phi = incentive_matrix(game, mechanism, agent)
        np.fill_diagonal(phi, -math.inf)
        rec, dev = np.unravel_index(int(np.argmax(phi)), phi.shape)
        if phi[rec, dev] > max_violation:
            max_violation = float(phi[rec, dev])
            worst = (agent, int(rec), int(dev))
    return CEReport(max_violation <= eps, max_violation, worst)


def has_mixed_signs(values: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    values = np.asarray(values)
    return bool(np.any(values > tol) and np.any(values < -tol))


def detect_weak_dominance(game: Game, tol: float = DEFAULT_TOL) -> List[Tuple[int, int, int]]:
    """Lista (agente, ação dominada, ação dominante) para todo par ordenado."""
    found = []
    for agent in range(game.agent_count):
        matrix = game.utility_matrix(agent)
        for dominated in range(matrix.shape[0]):
            for dominating in range(matrix.shape[0]):
                if dominated == dominating:
                    continue
                gain = matrix[dominating] - matrix[dominated]
                if np.all(gain >= -tol) and np.any(gain > tol):
                    found.append((agent, dominated, dominating))
    return found


def affine_transform(game: Game, agent: int, scale: float, shift: Optional[Sequence[float]] = None) -> Game:
    """u_i ↦ λ u_i + t_i, com t_i ∈ R^{d_i} somado a todas as ações."""
    if not scale > 0:
        raise ValueError(f"λ precisa ser positivo: {scale}")
    matrix = game.utility_matrix(agent)
    shift = np.zeros(matrix.shape[1]) if shift is None else np.asarray(shift, dtype=float)
    if shift.shape != (matrix.shape[1],):
        raise ValueError(f"Translação com forma {shift.shape}, esperado ({matrix.shape[1]},)")
    return game.with_utility_matrix(agent, scale * matrix + shift)


# Arquivo de jogo (JSON)


def load_game(data: dict) -> Game:
    """Valida e converte o dicionário do arquivo de jogo."""
    if not isinstance(data, dict) or "agents" not in data or "utilities" not in data:
        raise ValueError("Arquivo de jogo precisa das chaves 'agents' e 'utilities'")
    agents = data["agents"]
    if not isinstance(agents, list) or not all(
        isinstance(a, dict) and "actions" in a for a in agents
    ):
        raise ValueError("'agents' precisa ser uma lista de objetos com 'actions'")
    labels = [list(a["actions"]) for a in agents]
    names = [str(a.get("name", f"agent_{i + 1}")) for i, a in enumerate(agents)]
    profile_count = math.prod(len(actions) for actions in labels)

    utilities = data["utilities"]
    if len(utilities) != len(agents):
        raise ValueError(f"Esperado {len(agents)} vetores de utilidade, recebido {len(utilities)}")
    for i, row in enumerate(utilities):
        if len(row) != profile_count:
            raise ValueError(
                f"Utilidade do agente {i} tem {len(row)} valores, esperado {profile_count}"
            )
    values = np.array(utilities, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("Utilidades precisam ser finitas")
    return Game(labels, values, names)


def _encode_json(value) -> str:
    """JSON com chaves ordenadas e floats com 17 dígitos significativos."""
    if isinstance(value, dict):
        items = sorted(value.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode_json(v)}" for k, v in items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode_json(v) for v in value) + "]"
    if isinstance(value, (bool, np.bool_)) or value is None:
        return json.dumps(bool(value) if value is not None else None)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"Valor não finito no JSON: {value}")
        return format(float(value), ".17g")
    return json.dumps(value)


def dump_game(game: Game) -> str:
    data = {
        "agents": [
            {"name": name, "actions": list(actions)}
            for name, actions in zip(game.agent_names, game.action_labels)
        ],
        "utilities": game.utilities.tolist(),
    }
    return _encode_json(data) + "\n"


def read_game_file(path: Path) -> Game:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Arquivo de jogo não encontrado: {path}")
    with open(path, encoding="utf-8") as handle:
        return load_game(json.load(handle))


def write_game_file(game: Game, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_game(game), encoding="utf-8")
    logger.info(f"Jogo salvo: {path}")
    return path
