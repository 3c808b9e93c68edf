"""
Configuração WSGI do projeto CE Moderator.

Expõe a aplicação em 'application'; as execuções longas (recommend com
horizonte grande) rodam dentro da requisição, então ajuste o timeout do
servidor.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")

application = get_wsgi_application()
