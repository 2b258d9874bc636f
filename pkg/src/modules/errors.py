"""
Error hierarchy
Иерархия исключений библиотеки и коды завершения CLI
"""


class SecrecyError(Exception):
    """Базовое исключение библиотеки"""

    exit_code = 1


class ValidationError(SecrecyError, ValueError):
    """Некорректная конфигурация или аргументы"""

    exit_code = 2


class NumericalError(SecrecyError, ArithmeticError):
    """Численная ошибка (потеря точности, выход за [0, 1])"""

    exit_code = 3


class QuadratureError(NumericalError):
    """Квадратура не сошлась за отведённый бюджет"""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self):
        if not self.diagnostics:
            return super().__str__()
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
        return f"{super().__str__()} ({details})"


class CapacityError(NumericalError):
    """Превышен лимит перебора подмножеств"""


class OutputError(SecrecyError, OSError):
    """Ошибка записи результатов"""

    exit_code = 4
