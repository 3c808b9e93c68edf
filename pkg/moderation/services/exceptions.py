"""
Exceções de domínio do moderador.

Erros de argumento comuns continuam sendo ValueError/IndexError; as classes
abaixo existem para que o comando e as views consigam distinguir falha de
pré-condição (código de saída 2) de erro interno (código 1).

As que carregam dados extras definem __reduce__ para atravessar o pool de
processos das réplicas.
"""


class PreconditionError(ValueError):
    """Entrada válida sintaticamente, mas fora das hipóteses do algoritmo."""


class RatioBracketError(PreconditionError):
    """A razão procurada na busca binária é maior que C_ratio."""

    def __init__(self, message: str, agent: int, pair: tuple, indices: tuple):
        super().__init__(message)
        self.agent = agent
        self.pair = pair
        self.indices = indices

    def __reduce__(self):
        return (self.__class__, (str(self), self.agent, self.pair, self.indices))


class UnrecoverablePairError(PreconditionError):
    """Par de ações sem componente positiva ou negativa (dominância fraca)."""

    def __init__(self, message: str, agent: int, pair: tuple):
        super().__init__(message)
        self.agent = agent
        self.pair = pair

    def __reduce__(self):
        return (self.__class__, (str(self), self.agent, self.pair))


class ScaleReconciliationError(RuntimeError):
    """Estimativas inconsistentes: resíduo das identidades triangulares alto."""

    def __init__(self, message: str, agent: int, triple: tuple, residual: float):
        super().__init__(message)
        self.agent = agent
        self.triple = triple
        self.residual = residual

    def __reduce__(self):
        return (self.__class__, (str(self), self.agent, self.triple, self.residual))


class CESolverError(RuntimeError):
    """O programa linear do equilíbrio correlacionado falhou numericamente."""


class RunAbortedError(RuntimeError):
    """Execução interrompida; guarda a transcrição parcial."""

    def __init__(self, message: str, transcript: list):
        super().__init__(message)
        self.transcript = transcript

    def __reduce__(self):
        return (self.__class__, (str(self), self.transcript))
