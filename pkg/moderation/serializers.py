"""
Serializers da API do moderador.
Validam a configuração das execuções e convertem jogos e execuções em JSON.
"""

from django.conf import settings
from rest_framework import serializers

from .models import ExperimentRun, GameRecord
from .services.game_core import load_game

MODES = [choice for choice, _ in ExperimentRun.Mode.choices]
LAUNCH_MODES = ["learn-qr", "recommend", "simulate"]

_DEFAULTS = settings.MODERATOR


class ExperimentConfigSerializer(serializers.Serializer):
    """
    Configuração de uma execução (arquivo JSON, flags do comando ou corpo HTTP).
    Chaves desconhecidas são rejeitadas.
    """

    mode = serializers.ChoiceField(choices=MODES)
    game = serializers.CharField(required=False, allow_null=True, default=None)
    game_b = serializers.CharField(required=False, allow_null=True, default=None)

    # Gerador de jogos aleatórios
    agents = serializers.IntegerField(min_value=2, default=2)
    actions = serializers.ListField(
        child=serializers.IntegerField(min_value=2), required=False, allow_empty=False
    )
    utility_low = serializers.FloatField(default=_DEFAULTS["UTILITY_LOW"])
    utility_high = serializers.FloatField(default=_DEFAULTS["UTILITY_HIGH"])
    min_gap = serializers.FloatField(min_value=0.0, default=_DEFAULTS["MIN_GAP"])
    generator_retries = serializers.IntegerField(min_value=1, default=_DEFAULTS["GENERATOR_RETRIES"])

    # Comportamento dos agentes
    feedback = serializers.ChoiceField(choices=["br", "qr"], default="qr")
    beta = serializers.FloatField(min_value=0.0, default=1.0)
    utility_bound = serializers.FloatField(default=_DEFAULTS["UTILITY_BOUND"])
    oracle = serializers.ChoiceField(choices=["idealized", "sampled"], default="idealized")
    tie_tol = serializers.FloatField(min_value=0.0, default=_DEFAULTS["TIE_TOL"])

    # Aprendizado QR
    eps = serializers.FloatField(default=_DEFAULTS["EPS"])
    c_ratio = serializers.FloatField(default=_DEFAULTS["C_RATIO"])
    delta = serializers.FloatField(default=_DEFAULTS["DELTA"])
    c_floor = serializers.FloatField(min_value=0.0, default=_DEFAULTS["C_FLOOR"])
    tri_tol = serializers.FloatField(default=_DEFAULTS["TRI_TOL"])
    reconcile = serializers.ChoiceField(choices=["normal", "kaczmarz"], default="normal")

    # Recomendações
    horizon = serializers.IntegerField(min_value=1, default=1000)
    sampler_budget = serializers.IntegerField(min_value=1000, default=_DEFAULTS["SAMPLER_BUDGET"])
    sampler_chains = serializers.IntegerField(min_value=2, default=_DEFAULTS["SAMPLER_CHAINS"])
    feas_tol = serializers.FloatField(min_value=0.0, default=_DEFAULTS["FEAS_TOL"])

    # Verificações
    check_mode = serializers.ChoiceField(choices=["exact2d", "montecarlo"], default="exact2d")
    check_samples = serializers.IntegerField(min_value=1, default=100_000)

    # Execução
    seed = serializers.IntegerField(min_value=0, default=0)
    replicates = serializers.IntegerField(min_value=1, default=1)
    workers = serializers.IntegerField(min_value=1, default=1)
    output_dir = serializers.CharField(required=False, allow_null=True, default=None)

    def to_internal_value(self, data):
        if hasattr(data, "keys"):
            unknown = sorted(set(data.keys()) - set(self.fields))
            if unknown:
                raise serializers.ValidationError(
                    {key: ["Chave desconhecida."] for key in unknown}
                )
        return super().to_internal_value(data)

    def validate(self, data):
        errors = {}
        if data["utility_low"] >= data["utility_high"]:
            errors["utility_high"] = "Precisa ser maior que utility_low."
        if data["utility_bound"] <= 0:
            errors["utility_bound"] = "Precisa ser positivo."
        if data["eps"] <= 0:
            errors["eps"] = "Precisa ser positivo."
        elif data["c_ratio"] <= data["eps"]:
            errors["c_ratio"] = "Precisa ser maior que eps."
        if not 0 < data["delta"] < 1:
            errors["delta"] = "Precisa estar em (0, 1)."
        if data["tri_tol"] <= 0:
            errors["tri_tol"] = "Precisa ser positivo."

        actions = data.get("actions") or [2] * data["agents"]
        if len(actions) != data["agents"]:
            errors["actions"] = f"Esperado {data['agents']} tamanhos de ação."
        data["actions"] = actions

        if data["mode"] == "learn-qr" and data["feedback"] != "qr":
            errors["feedback"] = "learn-qr exige feedback QR."
        if errors:
            raise serializers.ValidationError(errors)
        return data


class GameRecordSerializer(serializers.ModelSerializer):
    """
    Serializer completo do jogo.
    A validação monta o Game para conferir formas e valores.
    """

    class Meta:
        model = GameRecord
        fields = [
            "id",
            "name",
            "description",
            "agent_names",
            "action_labels",
            "utilities",
            "created_at",
            "updated_at",
        ]
        read_only_fields = ["id", "created_at", "updated_at"]

    def validate(self, data):
        merged = {
            field: data.get(field, getattr(self.instance, field, None))
            for field in ("agent_names", "action_labels", "utilities")
        }
        names = merged["agent_names"] or [f"agent_{i + 1}" for i in range(len(merged["action_labels"] or []))]
        try:
            game = load_game(
                {
                    "agents": [
                        {"name": name, "actions": actions}
                        for name, actions in zip(names, merged["action_labels"] or [])
                    ],
                    "utilities": merged["utilities"] or [],
                }
            )
        except (TypeError, ValueError) as e:
            raise serializers.ValidationError({"utilities": str(e)})
        if len(names) != game.agent_count:
            raise serializers.ValidationError(
                {"agent_names": "Quantidade de nomes difere da quantidade de agentes."}
            )
        data["agent_names"] = list(game.agent_names)
        return data


class GameListSerializer(serializers.ModelSerializer):
    """
    Serializer simplificado para listagem.
    Só nome e formato, sem as utilidades.
    """

    shape = serializers.SerializerMethodField()

    class Meta:
        model = GameRecord
        fields = ["id", "name", "agent_names", "shape", "created_at"]

    def get_shape(self, obj):
        return [len(actions) for actions in obj.action_labels]


class GameGenerateSerializer(serializers.Serializer):
    """Parâmetros do gerador de jogos genéricos."""

    name = serializers.CharField(max_length=200)
    actions = serializers.ListField(
        child=serializers.IntegerField(min_value=2), min_length=2
    )
    seed = serializers.IntegerField(min_value=0, default=0)
    utility_low = serializers.FloatField(default=_DEFAULTS["UTILITY_LOW"])
    utility_high = serializers.FloatField(default=_DEFAULTS["UTILITY_HIGH"])
    min_gap = serializers.FloatField(min_value=0.0, default=_DEFAULTS["MIN_GAP"])

    def validate_name(self, value):
        if GameRecord.objects.filter(name=value).exists():
            raise serializers.ValidationError(f"Já existe um jogo com o nome '{value}'.")
        return value

    def validate(self, data):
        if data["utility_low"] >= data["utility_high"]:
            raise serializers.ValidationError({"utility_high": "Precisa ser maior que utility_low."})
        return data


class GameCheckSerializer(serializers.Serializer):
    """Dois jogos salvos a comparar."""

    game = serializers.PrimaryKeyRelatedField(queryset=GameRecord.objects.all())
    game_b = serializers.PrimaryKeyRelatedField(queryset=GameRecord.objects.all())
    check_mode = serializers.ChoiceField(choices=["exact2d", "montecarlo"], default="exact2d")
    check_samples = serializers.IntegerField(min_value=1, default=100_000)
    seed = serializers.IntegerField(min_value=0, default=0)


class RunLaunchSerializer(ExperimentConfigSerializer):
    """Configuração de execução pela API; o jogo pode vir do banco."""

    mode = serializers.ChoiceField(choices=LAUNCH_MODES)
    game_id = serializers.PrimaryKeyRelatedField(
        queryset=GameRecord.objects.all(), required=False, allow_null=True, default=None
    )


class ExperimentRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = [
            "id",
            "mode",
            "config",
            "status",
            "summary",
            "output_dir",
            "error",
            "created_at",
            "finished_at",
        ]
        read_only_fields = fields


class ExperimentRunListSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = ["id", "mode", "status", "created_at", "finished_at"]
