"""
Equilíbrio correlacionado de um jogo candidato e regret por rodada.

O jogo candidato é dado pelo parâmetro empilhado w: para cada agente i e
cada ação a_i^j (j ≥ 2), o bloco w_i(a_i^1, a_i^j) sobre A_{-i}.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linprog

from .behavior import FeedbackRecord
from .exceptions import CESolverError
from .game_core import DEFAULT_TOL, DifferenceVector, Game, Mechanism, ProfileIndexing, incentive

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-9
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class StackedLayout:
    """Deslocamentos cumulativos dos blocos (agente, ação j ≥ 1) de tamanho d_i."""

    indexing: ProfileIndexing
    offsets: Tuple[Tuple[int, ...], ...] = field(init=False)
    size: int = field(init=False)

    def __post_init__(self):
        offsets = []
        position = 0
        for agent, actions in enumerate(self.indexing.radices):
            width = self.indexing.opponent_count(agent)
            agent_offsets = []
            for _ in range(actions - 1):
                agent_offsets.append(position)
                position += width
            offsets.append(tuple(agent_offsets))
        object.__setattr__(self, "offsets", tuple(offsets))
        object.__setattr__(self, "size", position)

    def block(self, agent: int, action: int) -> slice:
        """Posições de w_i(a^1, a^action); action é 1-indexada a partir da segunda ação."""
        self.indexing.check_action(agent, action)
        if action == 0:
            raise ValueError("A ação de referência não tem bloco próprio")
        start = self.offsets[agent][action - 1]
        return slice(start, start + self.indexing.opponent_count(agent))

    def agent_span(self, agent: int) -> slice:
        first = self.block(agent, 1)
        last = self.block(agent, self.indexing.radices[agent] - 1)
        return slice(first.start, last.stop)


@dataclass(frozen=True, eq=False)
class StackedParameter:
    values: np.ndarray
    layout: StackedLayout

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.layout.size:
            raise ValueError(
                f"Parâmetro com {values.size} entradas, esperado N = {self.layout.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Parâmetro empilhado precisa ser finito")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, layout: StackedLayout) -> "StackedParameter":
        return cls(np.zeros(layout.size), layout)

    @property
    def indexing(self) -> ProfileIndexing:
        return self.layout.indexing

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def normalized(self) -> "StackedParameter":
        norm = self.norm()
        if norm == 0:
            raise ValueError("Não é possível normalizar o parâmetro nulo")
        return StackedParameter(self.values / norm, self.layout)

    def reference_rows(self, agent: int) -> np.ndarray:
        """Matriz (m_i, d_i): linha j = w_i(a^1, a^j), linha 0 nula."""
        actions = self.indexing.radices[agent]
        width = self.indexing.opponent_count(agent)
        rows = np.zeros((actions, width))
        rows[1:] = self.values[self.layout.agent_span(agent)].reshape(actions - 1, width)
        return rows

    def to_game(self, action_labels: Optional[Sequence[Sequence[str]]] = None) -> Game:
        """Representante da classe com u_i(a^1, ·) = 0."""
        radices = self.indexing.radices
        if action_labels is None:
            action_labels = [[f"a{i + 1}_{k + 1}" for k in range(m)] for i, m in enumerate(radices)]
        utilities = np.stack(
            [self.indexing.from_agent(self.reference_rows(i), i) for i in range(len(radices))]
        )
        return Game(action_labels, utilities)


def stack_game(game: Game) -> StackedParameter:
    layout = StackedLayout(game.indexing)
    blocks = []
    for agent in range(game.agent_count):
        matrix = game.utility_matrix(agent)
        blocks.append((matrix[1:] - matrix[0]).reshape(-1))
    return StackedParameter(np.concatenate(blocks), layout)


def expand_pairs(w: StackedParameter) -> Dict[Tuple[int, int, int], DifferenceVector]:
    """Todos os w_i(a', a'') com a' ≠ a'', pela identidade triangular."""
    pairs = {}
    for agent, actions in enumerate(w.indexing.radices):
        rows = w.reference_rows(agent)
        for source in range(actions):
            for target in range(actions):
                if source != target:
                    pairs[(agent, source, target)] = DifferenceVector(
                        agent, source, target, rows[target] - rows[source]
                    )
    return pairs


def ce_constraints(w: StackedParameter) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    """Linhas A tais que x é CE de w sse A x ≤ 0; rótulos (agente, rec, dev)."""
    indexing = w.indexing
    rows = []
    labels = []
    for (agent, rec, dev), diff in expand_pairs(w).items():
        block = np.zeros((indexing.radices[agent], indexing.opponent_count(agent)))
        block[rec] = diff.values
        rows.append(indexing.from_agent(block, agent))
        labels.append((agent, rec, dev))
    return np.array(rows), labels


def _max_min_probability(constraints: np.ndarray, size: int):
    # variáveis (x, t): max t sujeito a A x ≤ 0, t ≤ x_k, Σ x = 1
    objective = np.zeros(size + 1)
    objective[-1] = -1.0
    a_ub = np.vstack(
        [
            np.hstack([constraints, np.zeros((constraints.shape[0], 1))]),
            np.hstack([-np.eye(size), np.ones((size, 1))]),
        ]
    )
    b_ub = np.zeros(a_ub.shape[0])
    a_eq = np.hstack([np.ones((1, size)), np.zeros((1, 1))])
    bounds = [(0, None)] * size + [(0, None)]
    return linprog(
        objective, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=bounds, method="highs", options=_LP_OPTIONS,
    )


def _min_max_violation(constraints: np.ndarray, size: int):
    # variáveis (x, s): min s sujeito a A x − s ≤ 0, Σ x = 1
    objective = np.zeros(size + 1)
    objective[-1] = 1.0
    a_ub = np.hstack([constraints, -np.ones((constraints.shape[0], 1))])
    a_eq = np.hstack([np.ones((1, size)), np.zeros((1, 1))])
    bounds = [(0, None)] * size + [(None, None)]
    return linprog(
        objective, A_ub=a_ub, b_ub=np.zeros(a_ub.shape[0]), A_eq=a_eq, b_eq=[1.0],
        bounds=bounds, method="highs", options=_LP_OPTIONS,
    )


def solve_ce(
    w: StackedParameter, radices: Optional[Sequence[int]] = None, feas_tol: float = FEAS_TOL
) -> Mechanism:
    """
    CE do jogo candidato w.

    Entre os CE, devolve o que maximiza a menor probabilidade de perfil.
    Se esse LP falhar, usa o que minimiza a maior violação.
    """
    indexing = w.indexing
    if radices is not None and tuple(radices) != indexing.radices:
        raise ValueError(f"radices {tuple(radices)} incompatíveis com {indexing.radices}")
    constraints, labels = ce_constraints(w)
    size = indexing.size

    result = _max_min_probability(constraints, size)
    if result.status == 0:
        weights = result.x[:size]
    else:
        logger.warning(f"LP de seleção falhou ({result.message}); usando fase 1")
        result = _min_max_violation(constraints, size)
        if result.status != 0:
            raise CESolverError(f"LP de fase 1 falhou: {result.message}")
        if result.x[-1] > feas_tol:
            raise CESolverError(f"Nenhum CE encontrado: violação mínima {result.x[-1]!r}")
        weights = result.x[:size]

    mechanism = Mechanism.from_weights(weights, indexing, clip_tol=1e-7)
    violation = float(np.max(constraints @ mechanism.probs)) if constraints.size else 0.0
    if violation > feas_tol:
        agent, rec, dev = labels[int(np.argmax(constraints @ mechanism.probs))]
        raise CESolverError(
            f"Mecanismo viola CE em {violation!r} (agente {agent}, {rec} -> {dev})"
        )
    return mechanism


def round_regret(game: Game, feedback: FeedbackRecord) -> float:
    """Σ_i φ_i(rec_i, real_i, x) no jogo verdadeiro."""
    if feedback.realized == feedback.recommended:
        return 0.0
    recommended = game.indexing.decode(feedback.recommended)
    realized = game.indexing.decode(feedback.realized)
    return float(
        sum(
            incentive(game, feedback.mechanism, agent, rec, real)
            for agent, (rec, real) in enumerate(zip(recommended, realized))
        )
    )


class RegretLedger:
    """Regret por rodada; valores em [−tol, 0) são ruído numérico e viram 0."""

    COLUMNS = ["round", "regret", "cumulative_regret"]

    def __init__(self, tol: float = DEFAULT_TOL):
        self.tol = tol
        self._values: List[float] = []

    def record(self, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError(f"Regret não finito: {value}")
        if value < -self.tol:
            raise ValueError(f"Regret negativo na rodada {len(self._values) + 1}: {value!r}")
        value = max(float(value), 0.0)
        self._values.append(value)
        return value

    def __len__(self) -> int:
        return len(self._values)

    @property
    def rounds(self) -> int:
        return len(self._values)

    @property
    def values(self) -> np.ndarray:
        return np.array(self._values)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self._values)

    @property
    def total(self) -> float:
        return float(np.sum(self._values))

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "round": np.arange(1, self.rounds + 1),
                "regret": self.values,
                "cumulative_regret": self.cumulative,
            },
            columns=self.COLUMNS,
        )

    @staticmethod
    def merge(ledgers: Iterable["RegretLedger"]) -> pd.DataFrame:
        """Média e desvio padrão por rodada entre réplicas de mesmo tamanho."""
        ledgers = list(ledgers)
        if not ledgers:
            raise ValueError("Nenhum ledger para combinar")
        lengths = {ledger.rounds for ledger in ledgers}
        if len(lengths) != 1:
            raise ValueError(f"Ledgers com tamanhos diferentes: {sorted(lengths)}")
        regrets = np.vstack([ledger.values for ledger in ledgers])
        cumulative = np.vstack([ledger.cumulative for ledger in ledgers])
        ddof = 1 if len(ledgers) > 1 else 0
        return pd.DataFrame(
            {
                "round": np.arange(1, regrets.shape[1] + 1),
                "mean_regret": regrets.mean(axis=0),
                "sd_regret": regrets.std(axis=0, ddof=ddof),
                "mean_cumulative_regret": cumulative.mean(axis=0),
                "sd_cumulative_regret": cumulative.std(axis=0, ddof=ddof),
            }
        )
