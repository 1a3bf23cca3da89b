"""Virtual beam elements, planar frame analysis and a neural displacement surrogate."""

from .element import (
    ElementDofVector,
    ElementSpec,
    LoadSpec,
    MaterialParams,
    ProjectionSystem,
    axial_stiffness,
    build_projection,
    element_load,
    element_stiffness,
    projected_polynomial,
)
from .evaluation import EvaluationReport, evaluate_surrogate
from .fields import AnalyticMemberField, ErrorReport, VemDisplacementField, h1_error
from .frame import (
    FrameModel,
    GlobalSolution,
    Member,
    Mesh,
    PointLoad,
    SingularModelError,
    SolveAccuracyError,
    Support,
    assemble_and_solve,
    build_portico,
    discretize,
    transform_element,
)
from .surrogate import NormalizationStats, SurrogateField, SurrogateModel
from .training import SobolevConfig, TaskWeights, TrainingConfig, train

__version__ = "0.1.0"

__all__ = [
    "AnalyticMemberField",
    "ElementDofVector",
    "ElementSpec",
    "ErrorReport",
    "EvaluationReport",
    "evaluate_surrogate",
    "FrameModel",
    "GlobalSolution",
    "LoadSpec",
    "MaterialParams",
    "Member",
    "Mesh",
    "NormalizationStats",
    "PointLoad",
    "ProjectionSystem",
    "SingularModelError",
    "SobolevConfig",
    "SolveAccuracyError",
    "Support",
    "SurrogateField",
    "SurrogateModel",
    "TaskWeights",
    "TrainingConfig",
    "VemDisplacementField",
    "assemble_and_solve",
    "axial_stiffness",
    "build_portico",
    "build_projection",
    "discretize",
    "element_load",
    "element_stiffness",
    "h1_error",
    "projected_polynomial",
    "train",
    "transform_element",
]
