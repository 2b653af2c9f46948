class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class UsageError(ValueError):
    """A caller violated an operation's precondition."""


class ParseError(ValueError):
    """Malformed input text; ``line`` (1-based) and ``source`` locate it when known."""

    def __init__(self, message, line=None, source=None):
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.source = source


class NonFiniteError(ArithmeticError):
    """An operation produced or received NaN/Inf."""


class TrainingError(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")
        self.epoch = epoch


class SearchError(TrainingError):
    def __init__(self, message, epoch=None, step=None):
        prefix = f"{step}-step: " if step else ""
        super().__init__(prefix + message, epoch)
        self.step = step
