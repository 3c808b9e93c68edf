"""
Aprendizado das utilidades a partir de feedback de resposta quântica.

Etapas por agente: padrões de sinal, razões por busca binária, reconciliação
das escalas entre pares e montagem de um representante da classe de
equivalência. Só são necessários os pares a < b; w(b, a) = −w(a, b).
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from .behavior import RecordingOracle, ResponseOracle
from .exceptions import RatioBracketError, ScaleReconciliationError, UnrecoverablePairError
from .game_core import Game, Mechanism, ProfileIndexing, has_mixed_signs

logger = logging.getLogger(__name__)

LAMBDA_MIN = 1e-8
KACZMARZ_MAX_SWEEPS = 5000
KACZMARZ_TOL = 1e-12

Pair = Tuple[int, int]


@dataclass(frozen=True)
class SignPattern:
    agent: int
    from_action: int
    to_action: int
    positive: FrozenSet[int]
    negative: FrozenSet[int]

    @property
    def recoverable(self) -> bool:
        return bool(self.positive) and bool(self.negative)


@dataclass
class RecoveredPair:
    """ŵ normalizado pelo pivô positivo p (ŵ_p = 1); q é o pivô negativo."""

    pair: Pair
    values: np.ndarray
    positive_pivot: int
    negative_pivot: int
    ratios: Dict[int, float]
    queries: int


@dataclass
class RecoveredDifferences:
    agent: int
    eps: float
    pairs: Dict[Pair, RecoveredPair]
    flagged: List[Tuple[int, int, int]] = field(default_factory=list)


@dataclass
class ScaleReconciliation:
    multipliers: Dict[Pair, float]
    residual: float
    worst_triple: Optional[Tuple[int, int, int]] = None


@dataclass
class AgentEstimate:
    agent: int
    utility_matrix: np.ndarray
    recovered: RecoveredDifferences
    reconciliation: ScaleReconciliation
    queries: int


@dataclass
class LearnedGame:
    game: Game
    agents: List[AgentEstimate]
    queries: int
    transcript: List[dict]


def bisection_steps(eps: float, c_ratio: float) -> int:
    """⌈log2(C_ratio / eps)⌉."""
    if not eps > 0 or not c_ratio > eps:
        raise ValueError(f"Exige 0 < eps < C_ratio: eps={eps}, C_ratio={c_ratio}")
    return math.ceil(math.log2(c_ratio / eps) - 1e-12)


def query_budget(indexing: ProfileIndexing, agent: int, eps: float, c_ratio: float) -> int:
    """Mecanismos emitidos para um agente: d_i + (m_i(m_i−1)/2)(d_i−1)⌈log2(C_ratio/eps)⌉."""
    actions = indexing.radices[agent]
    width = indexing.opponent_count(agent)
    pairs = actions * (actions - 1) // 2
    return width + pairs * (width - 1) * bisection_steps(eps, c_ratio)


def membership_query_count(indexing: ProfileIndexing, eps: float, c_ratio: float) -> int:
    """Consultas de pertinência por amostragem no aprendizado do jogo inteiro."""
    total = 0
    for agent, actions in enumerate(indexing.radices):
        width = indexing.opponent_count(agent)
        pairs = actions * (actions - 1) // 2
        total += width * actions * (actions - 1)
        total += pairs * (width - 1) * bisection_steps(eps, c_ratio)
    return total


def unlearnable_pairs(game: Game, tol: float = 0.0) -> List[Tuple[int, int, int]]:
    """Pares (agente, a, b) cuja diferença não tem sinais mistos (dominância fraca)."""
    found = []
    for agent in range(game.agent_count):
        matrix = game.utility_matrix(agent)
        for a, b in combinations(range(matrix.shape[0]), 2):
            if not has_mixed_signs(matrix[b] - matrix[a], tol):
                found.append((agent, a, b))
    return found


def sign_query_mechanism(indexing: ProfileIndexing, agent: int, column: int) -> Mechanism:
    """Fatia e_k / m_i para toda ação do agente."""
    actions = indexing.radices[agent]
    width = indexing.opponent_count(agent)
    if not 0 <= column < width:
        raise IndexError(f"Coluna fora do intervalo: {column}")
    block = np.zeros((actions, width))
    block[:, column] = 1.0 / actions
    return Mechanism(indexing.from_agent(block, agent), indexing)


def ratio_query_mechanism(
    indexing: ProfileIndexing, agent: int, rec: int, p: int, j: int, tau: float
) -> Mechanism:
    """Massa 1/(1+τ) em (rec, p) e τ/(1+τ) em (rec, j)."""
    if p == j:
        raise ValueError("Índices p e j precisam ser distintos")
    if tau < 0:
        raise ValueError(f"τ precisa ser não negativo: {tau}")
    indexing.check_action(agent, rec)
    block = np.zeros((indexing.radices[agent], indexing.opponent_count(agent)))
    block[rec, p] = 1.0 / (1.0 + tau)
    block[rec, j] = tau / (1.0 + tau)
    probs = indexing.from_agent(block, agent)
    return Mechanism(probs / probs.sum(), indexing)


def learn_sign_patterns(
    oracle: ResponseOracle, indexing: ProfileIndexing, agent: int
) -> Dict[Pair, SignPattern]:
    """Um mecanismo por coluna k; k ∈ P(a, a') sse a' ∈ QR(x^(k), a)."""
    actions = indexing.radices[agent]
    width = indexing.opponent_count(agent)
    positive = {(a, b): set() for a in range(actions) for b in range(actions) if a != b}
    for column in range(width):
        mechanism = sign_query_mechanism(indexing, agent, column)
        for rec in range(actions):
            members = oracle.response_set(mechanism, agent, rec)
            for dev in range(actions):
                if dev != rec and dev in members:
                    positive[(rec, dev)].add(column)

    columns = frozenset(range(width))
    return {
        pair: SignPattern(agent, pair[0], pair[1], frozenset(found), columns - frozenset(found))
        for pair, found in positive.items()
    }


def _ratio_scale(c_ratio: float) -> Tuple[float, Callable[[float], float]]:
    """
    Coordenada z da bissecção e a razão τ(z) correspondente.

    Com C_ratio > 1, τ(z) cobre [1/C_ratio, 1] em escala logarítmica e
    [1, C_ratio] em escala linear; τ(z) é 1-Lipschitz e log τ(z) também,
    então o erro em τ fica abaixo de eps em termos absolutos e relativos.
    """
    if c_ratio <= 1.0:
        return float(c_ratio), float
    knee = math.log(c_ratio)

    def to_ratio(z: float) -> float:
        return math.exp(z - knee) if z < knee else 1.0 + (z - knee)

    return knee + c_ratio - 1.0, to_ratio


def binary_search_ratio(
    oracle: ResponseOracle,
    indexing: ProfileIndexing,
    agent: int,
    pair: Pair,
    p: int,
    j: int,
    eps: float,
    c_ratio: float,
) -> Tuple[float, int]:
    """
    Estima τ* = −w_p / w_j com |τ̂ − τ*| ≤ eps e |τ̂/τ* − 1| ≤ eps.

    Pertinência em τ significa τ ≤ τ*; devolve (τ̂, consultas).
    """
    rec, dev = pair
    steps = bisection_steps(eps, c_ratio)
    length, to_ratio = _ratio_scale(c_ratio)
    low, high = 0.0, length
    raised = lowered = False
    for _ in range(steps):
        middle = (low + high) / 2.0
        mechanism = ratio_query_mechanism(indexing, agent, rec, p, j, to_ratio(middle))
        if oracle.is_member(mechanism, agent, rec, dev):
            low = middle
            raised = True
        else:
            high = middle
            lowered = True
    if not lowered or (c_ratio > 1.0 and not raised):
        bound = f"acima de C_ratio={c_ratio}" if not lowered else f"abaixo de 1/C_ratio={1.0 / c_ratio:.3g}"
        raise RatioBracketError(
            f"Razão {bound} no agente {agent}, par {pair}, índices ({p}, {j})",
            agent=agent,
            pair=pair,
            indices=(p, j),
        )
    return to_ratio((low + high) / 2.0), steps


def recover_pair(
    oracle: ResponseOracle,
    indexing: ProfileIndexing,
    pattern: SignPattern,
    eps: float,
    c_ratio: float,
) -> RecoveredPair:
    """ŵ com ŵ_p = 1, usando d_i − 1 buscas binárias."""
    agent = pattern.agent
    pair = (pattern.from_action, pattern.to_action)
    if not pattern.recoverable:
        raise UnrecoverablePairError(
            f"Par {pair} do agente {agent} sem componente positiva ou negativa",
            agent=agent,
            pair=pair,
        )
    p = min(pattern.positive)
    q = min(pattern.negative)
    values = np.zeros(indexing.opponent_count(agent))
    values[p] = 1.0
    ratios = {}
    queries = 0
    for j in sorted(pattern.negative):
        tau, used = binary_search_ratio(oracle, indexing, agent, pair, p, j, eps, c_ratio)
        ratios[j] = tau
        values[j] = -1.0 / tau
        queries += used
    for k in sorted(pattern.positive - {p}):
        tau, used = binary_search_ratio(oracle, indexing, agent, pair, k, q, eps, c_ratio)
        ratios[k] = tau
        values[k] = -tau * values[q]
        queries += used
    return RecoveredPair(pair, values, p, q, ratios, queries)


def _triple_system(recovered: RecoveredDifferences, pairs: List[Pair]):
    """Linhas λ_ac ŵ(a,c) − λ_ab ŵ(a,b) − λ_bc ŵ(b,c) = 0 por tripla."""
    column = {pair: k for k, pair in enumerate(pairs)}
    actions = max(b for _, b in pairs) + 1
    blocks = []
    triples = list(combinations(range(actions), 3))
    for a, b, c in triples:
        width = recovered.pairs[(a, b)].values.size
        block = np.zeros((width, len(pairs)))
        block[:, column[(a, c)]] = recovered.pairs[(a, c)].values
        block[:, column[(a, b)]] = -recovered.pairs[(a, b)].values
        block[:, column[(b, c)]] = -recovered.pairs[(b, c)].values
        blocks.append(block)
    return np.vstack(blocks), triples


def _kaczmarz(matrix: np.ndarray, target: np.ndarray, seed: int) -> np.ndarray:
    """Kaczmarz aleatorizado, linhas sorteadas com prob. ∝ ‖a_i‖²."""
    norms = np.einsum("ij,ij->i", matrix, matrix)
    active = norms > 0
    matrix, target, norms = matrix[active], target[active], norms[active]
    rng = np.random.default_rng(seed)
    solution = np.zeros(matrix.shape[1])
    rows = matrix.shape[0]
    for _ in range(KACZMARZ_MAX_SWEEPS):
        previous = solution.copy()
        for i in rng.choice(rows, size=rows, p=norms / norms.sum()):
            solution += (target[i] - matrix[i] @ solution) / norms[i] * matrix[i]
        if np.max(np.abs(solution - previous)) < KACZMARZ_TOL:
            break
    return solution


def reconcile_scales(
    recovered: RecoveredDifferences,
    tri_tol: float = 0.05,
    mode: str = "normal",
    lambda_min: float = LAMBDA_MIN,
    seed: int = 0,
) -> ScaleReconciliation:
    """
    Multiplicadores λ por par, com λ_(a^1, a^2) = 1, que fazem valer as
    identidades triangulares em mínimos quadrados.
    """
    pairs = sorted(recovered.pairs)
    if len(pairs) == 1:
        return ScaleReconciliation({pairs[0]: 1.0}, 0.0)

    system, triples = _triple_system(recovered, pairs)
    pinned = pairs.index((0, 1))
    free = [k for k in range(len(pairs)) if k != pinned]
    matrix = system[:, free]
    target = -system[:, pinned]
    if mode == "normal":
        solution = np.linalg.lstsq(matrix, target, rcond=None)[0]
    elif mode == "kaczmarz":
        solution = _kaczmarz(matrix, target, seed)
    else:
        raise ValueError(f"Modo de reconciliação desconhecido: {mode}")

    multipliers = {(0, 1): 1.0}
    for k, value in zip(free, solution):
        multipliers[pairs[k]] = max(float(value), lambda_min)

    residual, worst = 0.0, None
    for a, b, c in triples:
        ab = multipliers[(a, b)] * recovered.pairs[(a, b)].values
        bc = multipliers[(b, c)] * recovered.pairs[(b, c)].values
        ac = multipliers[(a, c)] * recovered.pairs[(a, c)].values
        scale = max(np.abs(ab).max(), np.abs(bc).max(), np.abs(ac).max())
        error = float(np.abs(ac - ab - bc).max() / scale)
        if error > residual:
            residual, worst = error, (a, b, c)

    if residual > tri_tol:
        raise ScaleReconciliationError(
            f"Resíduo triangular {residual:.3g} acima de {tri_tol} no agente "
            f"{recovered.agent}, tripla {worst}",
            agent=recovered.agent,
            triple=worst,
            residual=residual,
        )
    logger.debug(f"Agente {recovered.agent}: escalas reconciliadas, resíduo {residual:.3g}")
    return ScaleReconciliation(multipliers, residual, worst)


def assemble_utilities(
    recovered: RecoveredDifferences, reconciliation: ScaleReconciliation, actions: int
) -> np.ndarray:
    """Matriz (m_i, d_i) com linha 0 nula e linha j = λ_(0,j) ŵ(a^1, a^j)."""
    width = next(iter(recovered.pairs.values())).values.size
    matrix = np.zeros((actions, width))
    for j in range(1, actions):
        matrix[j] = reconciliation.multipliers[(0, j)] * recovered.pairs[(0, j)].values
    return matrix


def learn_agent(
    oracle: ResponseOracle,
    indexing: ProfileIndexing,
    agent: int,
    eps: float,
    c_ratio: float,
    c_floor: float = 1e-6,
    tri_tol: float = 0.05,
    reconcile: str = "normal",
) -> AgentEstimate:
    actions = indexing.radices[agent]
    patterns = learn_sign_patterns(oracle, indexing, agent)
    queries = indexing.opponent_count(agent)

    recovered = RecoveredDifferences(agent=agent, eps=eps, pairs={})
    for a, b in combinations(range(actions), 2):
        estimate = recover_pair(oracle, indexing, patterns[(a, b)], eps, c_ratio)
        recovered.pairs[(a, b)] = estimate
        queries += estimate.queries
        for k in np.flatnonzero(np.abs(estimate.values) < c_floor):
            recovered.flagged.append((a, b, int(k)))
    if recovered.flagged:
        logger.warning(
            f"Agente {agent}: componentes abaixo de c_floor={c_floor}: {recovered.flagged}"
        )

    reconciliation = reconcile_scales(recovered, tri_tol=tri_tol, mode=reconcile, seed=agent)
    matrix = assemble_utilities(recovered, reconciliation, actions)
    return AgentEstimate(agent, matrix, recovered, reconciliation, queries)


def learn_game(
    oracle: ResponseOracle,
    indexing: ProfileIndexing,
    eps: float,
    c_ratio: float,
    c_floor: float = 1e-6,
    tri_tol: float = 0.05,
    reconcile: str = "normal",
    action_labels=None,
) -> LearnedGame:
    """Aprende todos os agentes e devolve o jogo montado com a transcrição das consultas."""
    recorder = RecordingOracle(oracle)
    agents = [
        learn_agent(recorder, indexing, agent, eps, c_ratio, c_floor, tri_tol, reconcile)
        for agent in range(indexing.agent_count)
    ]
    if action_labels is None:
        action_labels = [
            [f"a{i + 1}_{k + 1}" for k in range(m)] for i, m in enumerate(indexing.radices)
        ]
    utilities = np.stack(
        [indexing.from_agent(estimate.utility_matrix, estimate.agent) for estimate in agents]
    )
    queries = sum(estimate.queries for estimate in agents)
    logger.info(f"Jogo aprendido com {queries} mecanismos ({len(recorder.entries)} consultas)")
    return LearnedGame(Game(action_labels, utilities), agents, queries, recorder.entries)


def matrix_alignment_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """min_{λ≥0, t} ‖truth − λ·estimate − 1 tᵀ‖_max, com λ e t por mínimos quadrados."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"Formas diferentes: {estimate.shape} e {truth.shape}")
    centered_estimate = estimate - estimate.mean(axis=0)
    centered_truth = truth - truth.mean(axis=0)
    denominator = float(np.sum(centered_estimate**2))
    scale = float(np.sum(centered_estimate * centered_truth)) / denominator if denominator else 0.0
    scale = max(scale, 0.0)
    shift = (truth - scale * estimate).mean(axis=0)
    return float(np.abs(truth - scale * estimate - shift).max())


def alignment_error(u_hat: Game, u_true: Game, agent: int) -> float:
    return matrix_alignment_error(u_hat.utility_matrix(agent), u_true.utility_matrix(agent))
