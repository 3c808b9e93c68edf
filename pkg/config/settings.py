"""
Configurações do Django para o projeto CE Moderator.
Documentação: https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Diretório base do projeto
BASE_DIR = Path(__file__).resolve().parent.parent


# Chave secreta - em produção, usar variável de ambiente!
SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY",
    "django-insecure-0c7p$1r9vq%w_moderator-local-dev-only-k2x8#e4t!h",
)

# Modo debug - lembrar de desativar em produção
DEBUG = os.environ.get("DJANGO_DEBUG", "1") == "1"

ALLOWED_HOSTS = []


# Apps instalados
INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    # Bibliotecas de terceiros
    "rest_framework",
    "drf_yasg",
    # App do projeto
    "moderation",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "config.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "config.wsgi.application"


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}


# Internacionalização
LANGUAGE_CODE = "pt-br"

TIME_ZONE = "America/Sao_Paulo"

USE_I18N = True

USE_TZ = True


# Arquivos estáticos
STATIC_URL = "static/"

# Tipo padrão de chave primária
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Configurações do Django REST Framework
REST_FRAMEWORK = {
    "DEFAULT_PAGINATION_CLASS": "rest_framework.pagination.PageNumberPagination",
    "PAGE_SIZE": 20,
}

# Configurações do Swagger
SWAGGER_SETTINGS = {
    "SECURITY_DEFINITIONS": {},
    "USE_SESSION_AUTH": False,
}

# Logs: os serviços usam logging.getLogger(__name__)
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {"format": "{asctime} {levelname} {name}: {message}", "style": "{"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "simple"},
    },
    "root": {"handlers": ["console"], "level": "WARNING"},
    "loggers": {
        "moderation": {
            "handlers": ["console"],
            "level": os.environ.get("MODERATOR_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}

# Caminhos dos arquivos de dados
DATA_DIR = BASE_DIR / "data"
GAMES_DIR = DATA_DIR / "games"
MODERATOR_OUTPUT_ROOT = Path(
    os.environ.get("MODERATOR_OUTPUT_ROOT", DATA_DIR / "output")
)

# Parâmetros numéricos padrão do moderador
MODERATOR = {
    # Tolerâncias
    "TIE_TOL": 1e-9,
    "FEAS_TOL": 1e-9,
    "TRI_TOL": 0.05,
    "C_FLOOR": 1e-6,
    # Limite C das diferenças de utilidade (amostragem QR)
    "UTILITY_BOUND": 10.0,
    # Aprendizado QR
    "EPS": 1e-3,
    "C_RATIO": 100.0,
    "DELTA": 0.05,
    "QUERY_CONSTANT": 4.0,
    # Amostrador do centroide
    "SAMPLER_BUDGET": 1000,
    "SAMPLER_CHAINS": 32,
    # Gerador de jogos aleatórios
    "UTILITY_LOW": 1.0,
    "UTILITY_HIGH": 10.0,
    "MIN_GAP": 0.1,
    "GENERATOR_RETRIES": 1000,
}
