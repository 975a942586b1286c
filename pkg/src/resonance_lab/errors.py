"""Exception hierarchy.

Every exception carries a short module-qualified ``code`` (e.g.
``"model.singular-self-energy"``) that the CLI surfaces verbatim, so scripted
consumers can match on stable strings instead of Python class names.
"""


class ResonanceLabError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InvalidInputError(ResonanceLabError):
    """Caller passed a value outside an operation's domain."""

    code = "invalid-input"


class ModelFormatError(InvalidInputError):
    """Model-definition file could not be parsed.

    ``line``/``column`` are 1-based positions of the offending token when
    known (column may be None for whole-line problems).
    """

    code = "model.format"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "")
            loc = f" ({loc})"
        super().__init__(f"{message}{loc}")


class SingularSelfEnergyError(ResonanceLabError):
    """Evaluation energy sits exactly on a sharp band edge where the
    principal-value shift diverges logarithmically."""

    code = "model.singular-self-energy"


class NumericalFailureError(ResonanceLabError):
    """The dense eigensolver did not converge; carries condition diagnostics."""

    code = "spectral.numerical-failure"

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class BranchAmbiguityError(ResonanceLabError):
    """Two eigenvector-overlap candidates are indistinguishable, so a branch
    cannot be followed uniquely."""

    code = "spectral.branch-ambiguity"


class DefectiveSpectrumError(ResonanceLabError):
    """Requested quantity is undefined on a defective (exceptional-point
    proximal) spectrum; perturb the energy or parameter and retry."""

    code = "spectral.defective"


class ClosedChannelError(ResonanceLabError):
    """Channel is evanescent (closed) at the requested energy."""

    code = "scattering.closed-channel"


class UndefinedRigidityError(ResonanceLabError):
    """Phase rigidity of a zero vector is undefined."""

    code = "scattering.undefined-rigidity"


class InternalConsistencyError(ResonanceLabError):
    """A mathematically guaranteed identity failed beyond tolerance.

    This signals a bug in the library (or a corrupted input matrix), not a
    user error; unitarity of the full S matrix is the canonical example.
    """

    code = "internal-consistency"
