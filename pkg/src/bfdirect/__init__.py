"""Fast direct solver for 2D TM scattering built on butterfly-compressed
hierarchical factorizations."""

from .butterfly import ButterflyMatrix, compress_block, recompress
from .efie import Excitation, ImpedanceKernel, assemble_rhs, rcs
from .factorization import FactoredOperator, factorize, invert_ipb
from .geometry import CurveSpec, build_mesh
from .oracle import dense_solve, mie_rcs_circle
from .partition import auto_levels, build_tree
from .randomized import RankOverflowError, SketchConfig, reconstruct
from .zoperator import CompressedImpedance, compress_impedance

__version__ = "0.1.0"
