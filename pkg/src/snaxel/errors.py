"""Exception types shared across the package."""


class SnaxelError(Exception):
    """Base class for all errors raised by this package."""


class ObjParseError(SnaxelError):
    """Malformed OBJ input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyMeshError(SnaxelError):
    """Mesh with no vertices or no faces."""


class TopologyError(SnaxelError):
    """Non-manifold or inconsistently oriented connectivity."""


class DegenerateNormalError(SnaxelError):
    """A vertex whose incident faces span zero total area."""

    def __init__(self, vertex):
        super().__init__(f"vertex {vertex} has a zero-area 1-ring, no normal defined")
        self.vertex = vertex


class DegenerateInterpolationError(SnaxelError):
    """Antipodal endpoint normals cannot be interpolated."""


class FieldConfigError(SnaxelError):
    """Contour field referencing a missing light or out-of-range isovalue."""


class SceneError(SnaxelError):
    """Invalid scene or style configuration."""


class ConvergenceError(SnaxelError):
    """Evolution hit the iteration cap before meeting the stop criteria."""

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or []


class RefinementError(SnaxelError):
    """Classification refinement failed to reach a fixpoint."""

    def __init__(self, message, bad_vertices=None):
        super().__init__(message)
        self.bad_vertices = list(bad_vertices or [])
