"""Exception hierarchy shared by every subpackage."""


class AlchemloopError(Exception):
    """Base class for all errors raised by alchemloop."""


# molgraph
class SmilesSyntaxError(AlchemloopError, ValueError):
    """Malformed SMILES text (unbalanced branch, unclosed ring, stray token)."""


class UnsupportedFeature(AlchemloopError, ValueError):
    """Token or construct outside the supported SMILES/SELFIES subset."""


class ValenceError(AlchemloopError, ValueError):
    """No implicit-hydrogen assignment satisfies the valence table."""


class InvalidMolecule(AlchemloopError, ValueError):
    """Graph violates a structural invariant (connectivity, indices, loops)."""


# selfies
class UnknownToken(AlchemloopError, ValueError):
    """SELFIES symbol not in the closed alphabet."""


class Inexpressible(AlchemloopError, ValueError):
    """Molecule cannot be written with the alphabet's index operands."""


# surrogate
class InsufficientData(AlchemloopError, ValueError):
    pass


class DegenerateTargets(AlchemloopError, ValueError):
    pass


class DimensionMismatch(AlchemloopError, ValueError):
    pass


class EmptyTestSet(AlchemloopError, ValueError):
    pass


# oracle
class RankDeficient(AlchemloopError, ValueError):
    pass


class OracleFailure(AlchemloopError, RuntimeError):
    """The ground-truth evaluator could not produce a verdict."""


# scoring
class NonpositiveStd(AlchemloopError, ValueError):
    pass


# generator
class EmptySeed(AlchemloopError, ValueError):
    pass


# metrics
class EmptyTrainSet(AlchemloopError, ValueError):
    pass


class IncompleteState(AlchemloopError, ValueError):
    pass


# cli
class ConfigError(AlchemloopError, ValueError):
    pass


class CorruptLog(AlchemloopError, ValueError):
    """A run log line is not a JSON event object."""
