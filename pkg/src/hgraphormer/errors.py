"""Exception types raised across the package.

Data problems (bad files, malformed hypergraphs) derive from ``DataError``;
numerical failures derive from ``NumericError``. The CLI maps the two
families onto distinct exit codes.
"""


class HGraphormerError(Exception):
    pass


class DataError(HGraphormerError, ValueError):
    pass


class NumericError(HGraphormerError, ArithmeticError):
    pass


# hypergraph construction
class EdgeTooSmall(DataError):
    pass


class NodeIdOutOfRange(DataError, IndexError):
    pass


class NonPositiveWeight(DataError):
    pass


class DuplicateNodeId(DataError):
    pass


class IsolatedNode(DataError):
    pass


# tensors / model
class ShapeMismatch(DataError):
    pass


class NonFiniteInput(NumericError):
    pass


class InvalidProbability(HGraphormerError, ValueError):
    pass


class EmptyMask(HGraphormerError, ValueError):
    pass


class LabelOutOfRange(DataError):
    pass


class NotAScalar(HGraphormerError, ValueError):
    pass


class MissingGradient(HGraphormerError, RuntimeError):
    pass


class GammaOutOfRange(HGraphormerError, ValueError):
    pass


class NegativeFeatureWithFractionalPower(NumericError):
    pass


# training / data
class TooFewClasses(DataError):
    pass


class UnknownParameter(HGraphormerError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvalidParameters(HGraphormerError, ValueError):
    pass


class NonFiniteLoss(NumericError):
    pass


class MalformedLine(DataError):
    def __init__(self, path, lineno, reason):
        self.path = str(path)
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"{path}:{lineno}: {reason}")


class IsolatedNodeWarning(UserWarning):
    pass


class StratificationWarning(UserWarning):
    pass
