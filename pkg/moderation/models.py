from django.db import models

from .services.game_core import Game


class GameRecord(models.Model):
    """
    Jogo em forma normal salvo no banco.

    As utilidades seguem a ordem mista dos perfis (agente 1 mais significativo).
    """

    name = models.CharField(max_length=200, unique=True, help_text="Nome do jogo")
    description = models.TextField(blank=True, help_text="Descrição livre")
    agent_names = models.JSONField(help_text="Nome de cada agente")
    action_labels = models.JSONField(help_text="Rótulos das ações, uma lista por agente")
    utilities = models.JSONField(help_text="Uma lista de M utilidades por agente")

    # Datas de controle
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ["name"]
        verbose_name = "Jogo"
        verbose_name_plural = "Jogos"

    def __str__(self):
        shape = "x".join(str(len(actions)) for actions in self.action_labels or [])
        return f"{self.name} ({shape})"

    def to_game(self) -> Game:
        return Game(self.action_labels, self.utilities, self.agent_names)

    @classmethod
    def fields_from_game(cls, game: Game) -> dict:
        return {
            "agent_names": list(game.agent_names),
            "action_labels": [list(actions) for actions in game.action_labels],
            "utilities": game.utilities.tolist(),
        }


class ExperimentRun(models.Model):
    """Registro de cada execução disparada pelo comando ou pela API."""

    class Mode(models.TextChoices):
        LEARN_QR = "learn-qr", "Aprendizado QR"
        RECOMMEND = "recommend", "Recomendações de baixo regret"
        CHECK_EQUIV = "check-equiv", "Equivalência"
        CHECK_BR_INDIST = "check-br-indist", "Indistinguibilidade BR"
        SIMULATE = "simulate", "Simulação com mecanismo fixo"
        GEN_GAME = "gen-game", "Geração de jogo"

    class Status(models.TextChoices):
        PENDING = "pending", "Pendente"
        RUNNING = "running", "Executando"
        FINISHED = "finished", "Concluída"
        FAILED = "failed", "Falhou"

    mode = models.CharField(max_length=20, choices=Mode.choices)
    config = models.JSONField(help_text="Configuração validada")
    status = models.CharField(max_length=10, choices=Status.choices, default=Status.PENDING)
    summary = models.JSONField(blank=True, null=True, help_text="Resumo da execução")
    output_dir = models.CharField(max_length=1000, blank=True)
    error = models.TextField(blank=True, help_text="Mensagem de erro, se houver")

    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    class Meta:
        ordering = ["-created_at", "-id"]
        verbose_name = "Execução"
        verbose_name_plural = "Execuções"

    def __str__(self):
        return f"#{self.pk} {self.mode} [{self.status}]"
