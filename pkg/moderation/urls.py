"""
Rotas da API do moderador.
"""

from django.urls import include, path
from rest_framework.routers import DefaultRouter

from .views import ExperimentRunViewSet, GameViewSet

router = DefaultRouter()
router.register(r"games", GameViewSet, basename="game")
router.register(r"runs", ExperimentRunViewSet, basename="run")

urlpatterns = [
    path("", include(router.urls)),
]
