"""
Общие настройки pytest
Пути импорта как у точки входа src/secrecy.py
"""

import sys
from pathlib import Path

import pytest
import yaml

ROOT = Path(__file__).parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(1, str(ROOT))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: длинная перекрёстная проверка Монте-Карло")


@pytest.fixture
def settings_file(tmp_path):
    """Файл настроек с логами во временном каталоге и без вывода в консоль"""
    with open(ROOT / "config" / "config.yaml", "r", encoding="utf-8") as f:
        settings = yaml.safe_load(f)
    settings["logging"]["file"] = str(tmp_path / "logs" / "secrecy.log")
    settings["logging"]["console_output"] = False
    path = tmp_path / "settings.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(settings, f)
    return path
