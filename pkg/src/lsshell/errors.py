"""Exception hierarchy. Each category maps to a distinct CLI exit code."""


class LSShellError(Exception):
    exit_code = 1


class ConfigError(LSShellError):
    exit_code = 2


class NumericalError(LSShellError):
    exit_code = 3


class SingularSystemError(NumericalError):
    def __init__(self, msg, null_dim=None):
        super().__init__(msg)
        self.null_dim = null_dim


class ElementError(NumericalError):
    def __init__(self, msg, element=None):
        super().__init__(msg)
        self.element = element


class InfeasibleIterateError(NumericalError):
    pass


class StructureVanishedError(LSShellError):
    exit_code = 4
