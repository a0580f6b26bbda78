"""
Configuração do pytest
Marcador 'slow' para os treinos de fumaça (rodam só com GZK_RUN_SLOW=1)
"""
import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: treino completo em escala de bancada (GZK_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GZK_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="defina GZK_RUN_SLOW=1 para rodar")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
