"""
Exception hierarchy shared by the numerical modules and the CLI.
Each error carries the exit code the CLI reports for it.
"""


class BreatherLabError(Exception):
    """Base class for all lab errors."""
    exit_code = 1


class ScenarioError(BreatherLabError):
    """Scenario file or override could not be parsed or validated."""
    exit_code = 2

    def __init__(self, message: str, line: int = None, field: str = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class GridMismatch(BreatherLabError):
    """Field and basis live on incompatible grids."""
    exit_code = 2


class MissingArtifacts(BreatherLabError):
    """A comparison was requested before predict/simulate outputs exist."""
    exit_code = 2


class SingularSystem(BreatherLabError):
    """The dressing system is numerically singular."""
    exit_code = 3


class NotImaginarySpectrum(BreatherLabError):
    """Some spectral point has a nonzero real part."""
    exit_code = 3


class RankDeficient(BreatherLabError):
    """The bound-state Gram matrix is numerically rank deficient."""
    exit_code = 3


class NearZeroResonance(BreatherLabError):
    """A resonance sits at the continuum edge in the even channel."""
    exit_code = 3

    REMARK = (
        "A resonance at zero energy in the even channel meets the zero-energy "
        "resonance of the unperturbed operator; the complex frequency "
        "Lambda + i Gamma is potentially large and the golden-rule formulas "
        "do not apply. Use --drop-zero-resonance to drop that term."
    )


class QuadratureDivergence(BreatherLabError):
    """The spatial quadrature tail is not negligible."""
    exit_code = 3


class AliasingSuspected(BreatherLabError):
    """Temporal sampling too coarse for the retained harmonics."""
    exit_code = 3


class InsufficientLambdaResolution(BreatherLabError):
    """The spectral cutoff truncates a non-negligible part of the field."""
    exit_code = 3


class StepRejected(BreatherLabError):
    """Step-doubling error estimate exceeded tolerance after all retries."""
    exit_code = 3


class ConvergenceGateFailure(BreatherLabError):
    """A convergence or oracle-agreement gate failed."""
    exit_code = 4
