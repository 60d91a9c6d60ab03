"""Exception hierarchy.

Every error carries a short ``code`` string so the CLI can report the failing
condition by name and map it onto an exit status.
"""


class SLDFError(Exception):
    code = "ERROR"


class GridMismatchError(SLDFError, ValueError):
    code = "GRID_MISMATCH"


class BadDimsError(SLDFError, ValueError):
    code = "BAD_DIMS"


class ImagResidueError(SLDFError, ArithmeticError):
    code = "IMAG_RESIDUE"


class GridTooCoarseError(SLDFError, ValueError):
    code = "GRID_TOO_COARSE"


class NotDarkFieldError(SLDFError, ValueError):
    code = "NOT_DARKFIELD"


class BadMagnificationError(SLDFError, ValueError):
    code = "BAD_MAGNIFICATION"


class FreqAliasedError(SLDFError, ValueError):
    code = "FREQ_ALIASED"


class PatternError(SLDFError, ValueError):
    code = "BAD_PATTERN"


class UnprojectableError(PatternError):
    code = "NOT_PROJECTABLE"


class SingularPhasesError(SLDFError, ArithmeticError):
    code = "SINGULAR_PHASES"


class NoPeakError(SLDFError, ArithmeticError):
    code = "NO_PEAK"


class SupportOverflowError(SLDFError, ValueError):
    code = "SUPPORT_OVERFLOW"


class PartialProtocolError(SLDFError, ValueError):
    code = "PARTIAL_PROTOCOL"


class LayoutOverflowError(SLDFError, ValueError):
    code = "LAYOUT_OVERFLOW"


class OutOfBoundsError(SLDFError, ValueError):
    code = "OUT_OF_BOUNDS"


class FormatError(SLDFError, ValueError):
    code = "BAD_FORMAT"
